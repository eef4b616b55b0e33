// Mutual information, SSD, atlas ranking and semi-global weights.

#include <cmath>
#include <map>
#include <random>
#include <vector>

#include "doctest.h"
#include "mafuse/similarity.hpp"
#include "test_util.hpp"

using namespace mafuse;
using namespace mafuse::test;

namespace {

/// Joint-histogram MI with the documented binning, written out directly.
double mi_oracle(const Volume& a, const Volume& b, int bins) {
    auto bin_of = [bins](const Volume& v) {
        double lo = v[0], hi = v[0];
        for (double x : v.data()) {
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
        std::vector<int> out(v.size(), 0);
        if (hi > lo)
            for (std::size_t i = 0; i < v.size(); ++i)
                out[i] = std::min(bins - 1, static_cast<int>((v[i] - lo) / (hi - lo) * bins));
        return out;
    };
    const auto ba = bin_of(a), bb = bin_of(b);
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> pa, pb;
    const double n = static_cast<double>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[{ba[i], bb[i]}] += 1.0 / n;
        pa[ba[i]] += 1.0 / n;
        pb[bb[i]] += 1.0 / n;
    }
    double mi = 0.0;
    for (const auto& [k, p] : joint)
        mi += p * std::log(p / (pa[k.first] * pb[k.second]));
    return mi;
}

}  // namespace

TEST_SUITE("similarity") {

TEST_CASE("mutual information: self, independence, constant") {
    std::mt19937_64 rng(21);
    const Geometry g = make_geometry({32, 32, 32});
    const Volume a = random_volume(g, rng);
    const Volume b = random_volume(g, rng);
    CHECK(mutual_information(a, a) == doctest::Approx(binned_entropy(a)).epsilon(1e-12));
    CHECK(mutual_information(a, b) < 0.05);
    CHECK(mutual_information(a, b) >= 0.0);
    CHECK(mutual_information(a, Volume(g, 3.0)) == 0.0);
}

TEST_CASE("mutual information matches a direct histogram oracle") {
    std::mt19937_64 rng(22);
    const Geometry g = make_geometry({10, 9, 8});
    for (int trial = 0; trial < 5; ++trial) {
        const Volume a = random_volume(g, rng);
        Volume b = random_volume(g, rng);
        for (std::size_t i = 0; i < b.size(); ++i)
            b[i] = 0.6 * a[i] * a[i] + 0.4 * b[i];
        for (int bins : {4, 16, 32})
            CHECK(mutual_information(a, b, nullptr, bins) == doctest::Approx(mi_oracle(a, b, bins)).epsilon(1e-10));
    }
}

TEST_CASE("mutual information honours the mask") {
    std::mt19937_64 rng(23);
    const Geometry g = make_geometry({8, 8, 8});
    const Volume a = random_volume(g, rng);
    Volume b = random_volume(g, rng);
    LabelMap mask(g);
    for (std::size_t i = 0; i < g.size(); i += 2) {
        mask[i] = 1;
        b[i] = a[i];
    }
    CHECK(mutual_information(a, b, &mask) == doctest::Approx(binned_entropy(a, &mask)).epsilon(1e-12));
}

TEST_CASE("ssd: examples and summation oracle") {
    std::mt19937_64 rng(24);
    const Geometry g = make_geometry({5, 4, 3});
    const Volume a = random_volume(g, rng);
    CHECK(ssd(a, a) == 0.0);
    Volume b = a;
    b[7] += 3.0;
    LabelMap one(g);
    one[7] = 1;
    CHECK(ssd(a, b, &one) == doctest::Approx(9.0));
    const Volume c = random_volume(g, rng);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        s += (a[i] - c[i]) * (a[i] - c[i]);
    CHECK(ssd(a, c) == doctest::Approx(s).epsilon(1e-12));
}

TEST_CASE("ranking: exact copy first, low noise before high noise") {
    std::mt19937_64 rng(25);
    const Geometry g = make_geometry({24, 24, 24});
    Volume target(g);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Index3 p = g.coords(i);
        target[i] = 100.0 * std::sin(p[0] * 0.3) * std::cos(p[1] * 0.2) + 40.0 * p[2] / 24.0;
    }
    std::normal_distribution<double> n(0.0, 1.0);
    Volume low = target, high = target;
    for (std::size_t i = 0; i < g.size(); ++i) {
        low[i] += n(rng);
        high[i] += 10.0 * n(rng);
    }
    const Volume copy = target;
    const std::vector<AtlasRef> atlases{{"high", &high}, {"copy", &copy}, {"low", &low}};
    for (auto metric : {SimilarityMetric::mutual_information, SimilarityMetric::ssd}) {
        const auto r = rank_atlases(target, atlases, metric);
        REQUIRE(r.size() == 3);
        CHECK(r[0].id == "copy");
        CHECK(r[1].id == "low");
        CHECK(r[2].id == "high");
    }
}

TEST_CASE("ranking ties resolve by id") {
    std::mt19937_64 rng(26);
    const Geometry g = make_geometry({6, 6, 6});
    const Volume t = random_volume(g, rng);
    const Volume x = random_volume(g, rng);
    const std::vector<AtlasRef> atlases{{"b", &x}, {"a", &x}, {"c", &x}};
    const auto r = rank_atlases(t, atlases, SimilarityMetric::ssd);
    CHECK(r[0].id == "a");
    CHECK(r[1].id == "b");
    CHECK(r[2].id == "c");
}

TEST_CASE("semi-global weight: self is maximal, constant is zero") {
    std::mt19937_64 rng(27);
    const Geometry g = make_geometry({12, 12, 12});
    const Volume t = random_volume(g, rng);
    LabelMap mask(g, 1);
    const double self = semi_global_weight(t, t, mask);
    for (int i = 0; i < 5; ++i) {
        Volume o = random_volume(g, rng);
        for (std::size_t v = 0; v < g.size(); ++v)
            o[v] = 0.5 * o[v] + t[v];
        CHECK(semi_global_weight(t, o, mask) <= self);
    }
    CHECK(semi_global_weight(t, Volume(g, 7.0), mask) == 0.0);
}

}  // TEST_SUITE

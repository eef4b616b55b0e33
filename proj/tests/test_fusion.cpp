// Majority vote, weighted prior, STAPLE, max-flow and the CRF energy.

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "doctest.h"
#include "mafuse/crf.hpp"
#include "mafuse/global_fusion.hpp"
#include "mafuse/labels.hpp"
#include "mafuse/maxflow.hpp"
#include "test_util.hpp"

using namespace mafuse;
using namespace mafuse::test;

namespace {

LabelMap from_bits(const Geometry& g, std::initializer_list<int> bits) {
    LabelMap m(g);
    std::size_t i = 0;
    for (int b : bits)
        m[i++] = static_cast<std::uint8_t>(b);
    return m;
}

struct RandomGraph {
    int n = 0;
    std::vector<std::array<double, 2>> terminal;  // source, sink
    struct E {
        int i, j;
        double cap, rev;
    };
    std::vector<E> edges;
};

/// Minimum s-t cut value over every partition of the inner nodes.
double brute_min_cut(const RandomGraph& g) {
    double best = std::numeric_limits<double>::infinity();
    for (unsigned mask = 0; mask < (1u << g.n); ++mask) {
        auto src = [&](int i) { return (mask >> i) & 1u; };
        double c = 0.0;
        for (int i = 0; i < g.n; ++i)
            c += src(i) ? g.terminal[i][1] : g.terminal[i][0];
        for (const auto& e : g.edges) {
            if (src(e.i) && !src(e.j))
                c += e.cap;
            if (src(e.j) && !src(e.i))
                c += e.rev;
        }
        best = std::min(best, c);
    }
    return best;
}

/// Every node of a random lattice is uncertain.
CrfModel random_model(std::mt19937_64& rng, const Index3& dims, double lambda) {
    const Geometry g = make_geometry(dims);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    Volume psi0(g), psi1(g), img(g);
    for (std::size_t v = 0; v < g.size(); ++v) {
        psi0[v] = u(rng);
        psi1[v] = u(rng);
        img[v] = 20.0 * u(rng);
    }
    const Volume grad = gradient_magnitude(img, 1.0);
    ContrastParams p;
    p.c = 0.6;
    p.sigma = robust_scale(img);
    p.sigma_g = mean_gradient(grad);
    return build_energy(psi0, psi1, img, grad, LabelMap(g, 1), LabelMap(g, 0), lambda, p);
}

double exhaustive_minimum(const CrfModel& m) {
    const std::size_t n = m.node_count();
    std::vector<std::uint8_t> s(n);
    double best = std::numeric_limits<double>::infinity();
    for (unsigned long mask = 0; mask < (1ul << n); ++mask) {
        for (std::size_t i = 0; i < n; ++i)
            s[i] = static_cast<std::uint8_t>((mask >> i) & 1ul);
        best = std::min(best, m.energy(s));
    }
    return best;
}

}  // namespace

TEST_SUITE("fusion") {

TEST_CASE("majority vote: examples, ties and counting oracle") {
    const Geometry g = make_geometry({1, 1, 1});
    const std::vector<LabelMap> three{LabelMap(g, 1), LabelMap(g, 1), LabelMap(g, 0)};
    CHECK(majority_vote(three)[0] == 1);
    const std::vector<LabelMap> tie{LabelMap(g, 1), LabelMap(g, 0)};
    CHECK(majority_vote(tie)[0] == 0);

    std::mt19937_64 rng(41);
    const Geometry h = make_geometry({7, 6, 5});
    std::vector<LabelMap> maps;
    for (int i = 0; i < 15; ++i)
        maps.push_back(random_labels(h, rng, 0.5));
    const LabelMap mv = majority_vote(maps);
    for (std::size_t v = 0; v < h.size(); ++v) {
        int n = 0;
        for (const auto& m : maps)
            n += m[v];
        CHECK(mv[v] == (2 * n > 15 ? 1 : 0));
    }
}

TEST_CASE("label prior: weighted examples") {
    const Geometry g = make_geometry({1, 1, 1});
    const std::vector<LabelMap> labs{LabelMap(g, 1), LabelMap(g, 0)};
    const std::vector<double> w{0.8, 0.2};
    CHECK(label_prior(labs, w, 1.0)[0] == doctest::Approx(0.8).epsilon(1e-12));
    const double q4 = label_prior(labs, w, 4.0)[0];
    const double expect = 0.4096 / 0.4112;
    CHECK(std::abs(q4 - expect) <= 1e-9 * expect);
    CHECK(q4 == doctest::Approx(0.99611).epsilon(1e-5));
    const std::vector<LabelMap> agree{LabelMap(g, 1), LabelMap(g, 1)};
    CHECK(label_prior(agree, w, 4.0)[0] == 1.0);
    const std::vector<double> zero{0.0, 0.0};
    CHECK(label_prior(labs, zero, 4.0)[0] == 0.5);
}

TEST_CASE("staple: identical raters") {
    std::mt19937_64 rng(42);
    const Geometry g = make_geometry({6, 6, 2});
    const LabelMap m = random_labels(g, rng, 0.4);
    const std::vector<LabelMap> raters{m, m, m};
    const StapleResult r = staple_em(raters);
    CHECK(r.segmentation == m);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(r.sensitivity[i] == doctest::Approx(0.99));
        CHECK(r.specificity[i] == doctest::Approx(0.99));
    }
}

TEST_CASE("staple: three truthful raters and one complement") {
    std::mt19937_64 rng(43);
    const Geometry g = make_geometry({4, 4, 1});
    const LabelMap truth = random_labels(g, rng, 0.5);
    LabelMap inv(g);
    for (std::size_t v = 0; v < g.size(); ++v)
        inv[v] = 1 - truth[v];
    const std::vector<LabelMap> raters{truth, truth, inv, truth};
    const StapleResult r = staple_em(raters);
    CHECK(r.segmentation == truth);
    for (std::size_t i : {0u, 1u, 3u}) {
        CHECK(r.sensitivity[i] >= 0.95);
        CHECK(r.specificity[i] >= 0.95);
    }
    CHECK(r.sensitivity[2] <= 0.05);
    for (std::size_t it = 1; it < r.log_likelihood.size(); ++it)
        CHECK(r.log_likelihood[it] >= r.log_likelihood[it - 1] - 1e-12);
}

TEST_CASE("staple: single disagreement follows the reliable majority") {
    const Geometry g = make_geometry({4, 4, 1});
    std::mt19937_64 rng(44);
    const LabelMap base = random_labels(g, rng, 0.5);
    std::vector<LabelMap> raters(5, base);
    raters[4][5] = 1 - base[5];
    const StapleResult r = staple_em(raters);
    CHECK(r.segmentation == base);
    CHECK((r.posterior[5] >= 0.5) == (base[5] == 1));
    for (std::size_t it = 1; it < r.log_likelihood.size(); ++it)
        CHECK(r.log_likelihood[it] >= r.log_likelihood[it - 1] - 1e-12);
}

TEST_CASE("staple: log-likelihood never decreases on noisy raters") {
    std::mt19937_64 rng(45);
    const Geometry g = make_geometry({12, 10, 6});
    const LabelMap truth = ball(g, {6, 5, 3}, 3.5);
    std::vector<LabelMap> raters;
    for (int r = 0; r < 6; ++r) {
        LabelMap m = truth;
        std::bernoulli_distribution flip(0.05 + 0.04 * r);
        for (auto& x : m.storage())
            if (flip(rng))
                x = 1 - x;
        raters.push_back(m);
    }
    const StapleResult s = staple_em(raters);
    REQUIRE(s.log_likelihood.size() >= 2);
    for (std::size_t it = 1; it < s.log_likelihood.size(); ++it)
        CHECK(s.log_likelihood[it] >= s.log_likelihood[it - 1] - 1e-9);
    CHECK(dice(s.segmentation, truth) > dice(raters.back(), truth));
}

TEST_CASE("max-flow: textbook network") {
    // s->a 3, s->b 2, a->b 1, a->t 2, b->t 3: max flow 5
    MaxFlowGraph g(2);
    g.add_terminal(0, 3.0, 2.0);
    g.add_terminal(1, 2.0, 3.0);
    g.add_edge(0, 1, 1.0, 0.0);
    CHECK(g.solve() == doctest::Approx(5.0));
    CHECK_THROWS(g.add_terminal(0, -1.0, 0.0));
}

TEST_CASE("max-flow equals exhaustive minimum cut on random graphs") {
    std::mt19937_64 rng(46);
    std::uniform_real_distribution<double> cap(0.0, 5.0);
    std::bernoulli_distribution present(0.4);
    for (int trial = 0; trial < 150; ++trial) {
        RandomGraph rg;
        rg.n = 2 + trial % 9;
        for (int i = 0; i < rg.n; ++i)
            rg.terminal.push_back({present(rng) ? cap(rng) : 0.0, present(rng) ? cap(rng) : 0.0});
        for (int i = 0; i < rg.n; ++i)
            for (int j = i + 1; j < rg.n; ++j)
                if (present(rng))
                    rg.edges.push_back({i, j, cap(rng), present(rng) ? cap(rng) : 0.0});
        MaxFlowGraph g(rg.n);
        for (int i = 0; i < rg.n; ++i)
            g.add_terminal(i, rg.terminal[i][0], rg.terminal[i][1]);
        for (const auto& e : rg.edges)
            g.add_edge(e.i, e.j, e.cap, e.rev);
        const double flow = g.solve();
        const double cut = brute_min_cut(rg);
        REQUIRE(flow == doctest::Approx(cut).epsilon(1e-12));
        // the reported partition achieves the cut value
        double c = 0.0;
        for (int i = 0; i < rg.n; ++i)
            c += g.on_source_side(i) ? rg.terminal[i][1] : rg.terminal[i][0];
        for (const auto& e : rg.edges) {
            if (g.on_source_side(e.i) && !g.on_source_side(e.j))
                c += e.cap;
            if (g.on_source_side(e.j) && !g.on_source_side(e.i))
                c += e.rev;
        }
        REQUIRE(c == doctest::Approx(cut).epsilon(1e-12));
    }
}

TEST_CASE("unary potentials: worked example and limits") {
    const auto u = unary_potentials({0.0132, 0.9868}, 0.8);
    CHECK(u[1] == doctest::Approx(-std::log(0.9868) - std::log(0.8)).epsilon(1e-12));
    CHECK(u[0] == doctest::Approx(-std::log(0.0132) - std::log(0.2)).epsilon(1e-12));
    CHECK(u[1] == doctest::Approx(0.2364).epsilon(1e-3));
    CHECK(u[0] == doctest::Approx(5.937).epsilon(1e-3));
    const auto sym = unary_potentials({0.5, 0.5}, 0.5);
    CHECK(sym[0] == sym[1]);
    const auto dom = unary_potentials({0.9, 0.1}, 1.0 - 1e-12);
    CHECK(dom[1] < dom[0]);
}

TEST_CASE("pairwise beta: worked examples") {
    const Geometry g = make_geometry({3, 1, 1});
    const double sigma = 2.0, sigma_g = 1.5;
    {
        Volume img(g, 7.0);
        ContrastParams p{0.6, sigma, sigma_g};
        CHECK(pairwise_beta(img, Volume(g, 0.0), {0, 0, 0}, {1, 0, 0}, p) == doctest::Approx(0.6).epsilon(1e-12));
    }
    {
        Volume img(g, 0.0);
        img[1] = std::sqrt(2.0) * sigma;  // squared difference 2σ²
        ContrastParams p{1.0, sigma, sigma_g};
        const double b = pairwise_beta(img, Volume(g, 0.0), {0, 0, 0}, {1, 0, 0}, p);
        CHECK(std::abs(b - (1.0 + std::log(2.0))) <= 1e-9 * (1.0 + std::log(2.0)));
    }
    {
        Volume grad(g, 0.0);
        grad[0] = sigma_g;
        ContrastParams p{0.0, sigma, sigma_g};
        const double b = pairwise_beta(Volume(g, 1.0), grad, {0, 0, 0}, {1, 0, 0}, p);
        CHECK(std::abs(b - (1.0 - std::exp(-1.0))) <= 1e-9 * (1.0 - std::exp(-1.0)));
    }
}

TEST_CASE("bresenham line endpoints and length") {
    const auto l = bresenham_line({0, 0, 0}, {3, 1, -2});
    CHECK(l.front() == Index3{0, 0, 0});
    CHECK(l.back() == Index3{3, 1, -2});
    CHECK(l.size() == 4);
    CHECK(bresenham_line({1, 1, 1}, {1, 1, 1}).size() == 1);
    CHECK(forward_neighbors().size() == 13);
}

TEST_CASE("crf energy: two-voxel table") {
    const Geometry g = make_geometry({2, 1, 1});
    Volume psi0(g), psi1(g);
    psi0[0] = 1.0;
    psi0[1] = 3.0;
    psi1[0] = 2.0;
    psi1[1] = 0.5;
    const Volume img(g, 4.0);
    ContrastParams p{1.0, 1.0, 1.0};  // equal intensities: β = 1
    const CrfModel m = build_energy(psi0, psi1, img, Volume(g, 0.0), LabelMap(g, 1), LabelMap(g, 0), 0.2, p);
    REQUIRE(m.node_count() == 2);
    REQUIRE(m.edges.size() == 1);
    CHECK(m.edges[0].beta == doctest::Approx(1.0));
    auto e = [&](int a, int b) {
        std::vector<std::uint8_t> s(2);
        s[m.voxels[0] == 0 ? 0 : 1] = static_cast<std::uint8_t>(a);
        s[m.voxels[0] == 0 ? 1 : 0] = static_cast<std::uint8_t>(b);
        return m.energy(s);
    };
    CHECK(e(0, 0) == doctest::Approx(4.0));
    CHECK(e(0, 1) == doctest::Approx(1.7));
    CHECK(e(1, 0) == doctest::Approx(5.2));
    CHECK(e(1, 1) == doctest::Approx(2.5));
    const CrfSolution s = min_cut(m);
    CHECK(s.energy == doctest::Approx(1.7));
    CHECK(s.labels[0] == 0);
    CHECK(s.labels[1] == 1);
}

TEST_CASE("crf: empty mask keeps the fixed labels") {
    std::mt19937_64 rng(47);
    const Geometry g = make_geometry({4, 4, 4});
    const LabelMap fixed = random_labels(g, rng);
    const CrfModel m = build_energy(Volume(g), Volume(g), Volume(g), Volume(g), LabelMap(g, 0), fixed, 0.2, {});
    CHECK(m.node_count() == 0);
    CHECK(min_cut(m).labels == fixed);
}

TEST_CASE("crf: single uncertain voxel takes the effective argmin") {
    const Geometry g = make_geometry({3, 1, 1});
    Volume psi0(g), psi1(g);
    psi0[1] = 1.0;
    psi1[1] = 1.1;
    LabelMap mask(g), fixed(g, 1);
    mask[1] = 1;
    ContrastParams p{1.0, 1.0, 1.0};
    // both neighbours fixed to 1: label 0 pays 2 λ β = 0.4 on top of 1.0
    const CrfModel m = build_energy(psi0, psi1, Volume(g, 2.0), Volume(g, 0.0), mask, fixed, 0.2, p);
    REQUIRE(m.node_count() == 1);
    CHECK(m.unary[0][0] == doctest::Approx(1.4));
    CHECK(m.unary[0][1] == doctest::Approx(1.1));
    CHECK(min_cut(m).labels[1] == 1);
    const CrfModel loose = build_energy(psi0, psi1, Volume(g, 2.0), Volume(g, 0.0), mask, fixed, 0.0, p);
    CHECK(min_cut(loose).labels[1] == 0);
}

TEST_CASE("crf: λ = 0 decouples, large λ gives a constant labelling") {
    std::mt19937_64 rng(48);
    for (int trial = 0; trial < 10; ++trial) {
        const CrfModel m0 = random_model(rng, {3, 3, 2}, 0.0);
        const CrfSolution s0 = min_cut(m0);
        for (std::size_t i = 0; i < m0.node_count(); ++i)
            CHECK(s0.node_labels[i] == (m0.unary[i][1] < m0.unary[i][0] ? 1 : 0));
        CrfModel big = m0;
        big.lambda = 1e6;
        const CrfSolution sb = min_cut(big);
        double all0 = 0.0, all1 = 0.0;
        for (const auto& u : big.unary) {
            all0 += u[0];
            all1 += u[1];
        }
        for (auto l : sb.node_labels)
            CHECK(l == (all1 < all0 ? 1 : 0));
    }
}

TEST_CASE("crf: min-cut energy equals exhaustive minimum") {
    std::mt19937_64 rng(49);
    std::uniform_real_distribution<double> lam(0.0, 2.0);
    for (int trial = 0; trial < 40; ++trial) {
        const CrfModel m = random_model(rng, {2, 2, 3}, lam(rng));
        const CrfSolution s = min_cut(m);
        const double best = exhaustive_minimum(m);
        REQUIRE(std::abs(s.energy - best) <= 1e-12 * std::max(1.0, std::abs(best)));
        REQUIRE(m.energy(s.node_labels) == s.energy);
    }
}

TEST_CASE("crf: boundary length never grows with λ") {
    std::mt19937_64 rng(50);
    for (int trial = 0; trial < 10; ++trial) {
        CrfModel m = random_model(rng, {5, 4, 3}, 0.0);
        double prev = std::numeric_limits<double>::infinity();
        for (double lambda : {0.01, 0.1, 0.2, 0.5, 1.0, 3.0}) {
            m.lambda = lambda;
            const CrfSolution s = min_cut(m);
            const double boundary = m.pairwise_energy(s.node_labels) / lambda;
            CHECK(boundary <= prev + 1e-9);
            prev = boundary;
        }
    }
}

}  // TEST_SUITE

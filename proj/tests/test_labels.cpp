// Geometry, resampling, label transfer, masks, Dice, cropping and
// histogram matching.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "doctest.h"
#include "mafuse/intensity.hpp"
#include "mafuse/labels.hpp"
#include "mafuse/resample.hpp"
#include "test_util.hpp"

using namespace mafuse;
using namespace mafuse::test;

namespace {

/// Squared distance to the nearest voxel holding `value`, by exhaustive search.
Volume brute_squared_distance(const LabelMap& lab, std::uint8_t value) {
    const Geometry& g = lab.geometry();
    Volume out(g, std::numeric_limits<double>::infinity());
    for (std::size_t v = 0; v < g.size(); ++v) {
        const Index3 a = g.coords(v);
        for (std::size_t w = 0; w < g.size(); ++w) {
            if (lab[w] != value)
                continue;
            const Index3 b = g.coords(w);
            double d2 = 0.0;
            for (int ax = 0; ax < 3; ++ax) {
                const double d = (a[ax] - b[ax]) * g.spacing[ax];
                d2 += d * d;
            }
            out[v] = std::min(out[v], d2);
        }
    }
    return out;
}

}  // namespace

TEST_SUITE("labels") {

TEST_CASE("geometry indexing round-trips") {
    const Geometry g = make_geometry({4, 3, 5});
    for (std::size_t v = 0; v < g.size(); ++v)
        CHECK(g.index(g.coords(v)) == v);
    CHECK(g.index(1, 0, 0) == 1);
    CHECK(g.index(0, 1, 0) == 4);
    CHECK(g.index(0, 0, 1) == 12);
    Geometry bad = g;
    bad.spacing[1] = 0.0;
    CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("affine inverse and composition") {
    AffineTransform a({2, 0, 0, 1, 0, 3, 0, -2, 0, 0, 0.5, 4, 0, 0, 0, 1});
    const AffineTransform id = a.compose(a.inverse());
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
            CHECK(id(r, c) == doctest::Approx(r == c ? 1.0 : 0.0));
    AffineTransform singular({1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
    CHECK_THROWS_AS(singular.inverse(), std::domain_error);
}

TEST_CASE("resample: identity is bitwise equal") {
    std::mt19937_64 rng(3);
    const Volume v = random_volume(make_geometry({6, 5, 4}, {1.0, 2.0, 0.5}), rng);
    const Volume out = resample(v, AffineTransform::identity(), v.geometry());
    CHECK(out == v);
}

TEST_CASE("resample: one-voxel shift along x") {
    std::mt19937_64 rng(4);
    const Geometry g = make_geometry({8, 4, 4}, {1.5, 1.0, 1.0});
    const Volume v = random_volume(g, rng);
    const Volume out = resample(v, AffineTransform::translation({1.5, 0.0, 0.0}), g);
    for (int k = 0; k < 4; ++k)
        for (int j = 0; j < 4; ++j)
            for (int i = 0; i < 7; ++i)
                CHECK(out.at(i, j, k) == doctest::Approx(v.at(i + 1, j, k)).epsilon(1e-12));
}

TEST_CASE("resample: half-voxel shift of a ramp") {
    const Geometry g = make_geometry({10, 3, 3});
    Volume v(g);
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = g.coords(i)[0];
    const Volume out = resample(v, AffineTransform::translation({0.5, 0.0, 0.0}), g);
    for (int i = 0; i < 9; ++i)
        CHECK(out.at(i, 1, 1) == doctest::Approx(i + 0.5).epsilon(1e-12));
}

TEST_CASE("resample: singular affine is rejected") {
    const Geometry g = make_geometry({3, 3, 3});
    AffineTransform singular({0, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1});
    CHECK_THROWS_AS(resample(Volume(g), singular, g), std::domain_error);
}

TEST_CASE("resample: displacement field equals the matching translation") {
    std::mt19937_64 rng(5);
    const Geometry g = make_geometry({7, 6, 5});
    const Volume v = random_volume(g, rng);
    DisplacementField f(g);
    for (auto& d : f.displacement)
        d = {0.25, -0.5, 1.0};
    const Volume a = resample(v, f, g);
    const Volume b = resample(v, AffineTransform::translation({0.25, -0.5, 1.0}), g);
    for (std::size_t i = 0; i < a.size(); ++i)
        CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-12));
}

TEST_CASE("exact distance transform matches exhaustive search") {
    std::mt19937_64 rng(11);
    const Vec3 spacings[] = {{1.0, 1.0, 1.0}, {0.9375, 1.5, 0.9375}, {2.0, 0.5, 1.25}};
    for (int trial = 0; trial < 12; ++trial) {
        std::uniform_int_distribution<int> d(1, 8);
        const Geometry g = make_geometry({d(rng), d(rng), d(rng)}, spacings[trial % 3]);
        LabelMap lab = random_labels(g, rng, 0.15);
        lab[0] = 1;
        for (std::uint8_t value : {std::uint8_t{0}, std::uint8_t{1}}) {
            if (std::none_of(lab.storage().begin(), lab.storage().end(), [&](auto x) { return x == value; }))
                continue;
            const Volume fast = squared_distance_to(lab, value);
            const Volume slow = brute_squared_distance(lab, value);
            for (std::size_t v = 0; v < g.size(); ++v)
                REQUIRE(fast[v] == doctest::Approx(slow[v]).epsilon(1e-12));
        }
    }
}

TEST_CASE("signed distance: single voxel, isotropic and anisotropic") {
    LabelMap lab(make_geometry({5, 5, 5}));
    lab.at(2, 2, 2) = 1;
    const Volume sd = signed_distance(lab).field;
    CHECK(sd.at(1, 2, 2) == doctest::Approx(-1.0));
    CHECK(sd.at(3, 2, 2) == doctest::Approx(-1.0));
    CHECK(sd.at(2, 1, 2) == doctest::Approx(-1.0));
    CHECK(sd.at(2, 3, 2) == doctest::Approx(-1.0));
    CHECK(sd.at(2, 2, 1) == doctest::Approx(-1.0));
    CHECK(sd.at(2, 2, 3) == doctest::Approx(-1.0));
    CHECK(sd.at(2, 2, 2) >= 0.0);

    LabelMap an(make_geometry({5, 5, 5}, {1.0, 2.0, 1.0}));
    an.at(2, 2, 2) = 1;
    const Volume sa = signed_distance(an).field;
    CHECK(sa.at(2, 1, 2) == doctest::Approx(-2.0));
    CHECK(sa.at(2, 3, 2) == doctest::Approx(-2.0));
    CHECK(sa.at(1, 2, 2) == doctest::Approx(-1.0));
}

TEST_CASE("signed distance: sign convention and errors") {
    std::mt19937_64 rng(12);
    const Geometry g = make_geometry({6, 5, 4}, {1.0, 1.5, 0.75});
    LabelMap lab = random_labels(g, rng, 0.4);
    lab[0] = 1;
    lab[1] = 0;
    const Volume sd = signed_distance(lab).field;
    for (std::size_t v = 0; v < g.size(); ++v)
        CHECK((sd[v] >= 0.0) == (lab[v] == 1));
    CHECK_THROWS_AS(signed_distance(LabelMap(g, 0)), std::invalid_argument);
    CHECK_THROWS_AS(signed_distance(LabelMap(g, 1)), std::invalid_argument);
}

TEST_CASE("label transfer: identity round trip") {
    std::mt19937_64 rng(13);
    const Geometry g = make_geometry({9, 8, 7}, {1.0, 1.2, 0.8});
    LabelMap lab = random_labels(g, rng, 0.3);
    lab[0] = 1;
    const LabelMap out = transfer_labels_logodds(signed_distance(lab), AffineTransform::identity(), g);
    CHECK(out == lab);
}

TEST_CASE("label transfer: half-voxel shift of a flat boundary") {
    // foreground for x < 5; inside value at x=4 is 0.5, outside at x=5 is -1
    const Geometry g = make_geometry({10, 3, 3});
    LabelMap lab(g);
    for (std::size_t v = 0; v < g.size(); ++v)
        lab[v] = g.coords(v)[0] < 5 ? 1 : 0;
    const SignedDistanceMap sdm = signed_distance(lab);
    // sampling at x+0.5: x=4 sees (0.5-1)/2 < 0, so the boundary moves in
    const LabelMap fwd = transfer_labels_logodds(sdm, AffineTransform::translation({0.5, 0.0, 0.0}), g);
    // sampling at x-0.5: x=5 sees (0.5-1)/2 < 0, the boundary stays
    const LabelMap back = transfer_labels_logodds(sdm, AffineTransform::translation({-0.5, 0.0, 0.0}), g);
    for (int i = 1; i < 9; ++i) {
        CHECK(fwd.at(i, 1, 1) == (i < 4 ? 1 : 0));
        CHECK(back.at(i, 1, 1) == (i < 5 ? 1 : 0));
    }
}

TEST_CASE("label transfer: out of bounds is background") {
    std::mt19937_64 rng(14);
    const Geometry g = make_geometry({5, 5, 5});
    LabelMap lab = random_labels(g, rng, 0.9);
    lab[0] = 0;
    const LabelMap out = transfer_labels_logodds(signed_distance(lab), AffineTransform::translation({100, 0, 0}), g);
    CHECK(count_foreground(out) == 0);
}

TEST_CASE("union and uncertainty: examples") {
    const Geometry g = make_geometry({4, 4, 1});
    LabelMap a(g), b(g);
    a[3] = 1;
    b[9] = 1;
    const std::vector<LabelMap> one{a};
    CHECK(union_support(one) == a);
    const std::vector<LabelMap> pair{a, b};
    CHECK(count_foreground(union_support(pair)) == 2);
    const std::vector<LabelMap> same{a, a, a};
    CHECK(count_foreground(uncertainty_mask(same)) == 0);
    LabelMap c = a;
    c[7] = 1;
    const std::vector<LabelMap> differ{a, c};
    const LabelMap u = uncertainty_mask(differ);
    CHECK(count_foreground(u) == 1);
    CHECK(u[7] == 1);
}

TEST_CASE("union and uncertainty: vote-count oracle on 15 maps") {
    std::mt19937_64 rng(15);
    const Geometry g = make_geometry({9, 7, 6});
    std::vector<LabelMap> maps;
    for (int i = 0; i < 15; ++i)
        maps.push_back(random_labels(g, rng, 0.85));
    const LabelMap un = union_support(maps);
    const LabelMap unc = uncertainty_mask(maps);
    const std::vector<int> votes = vote_counts(maps);
    std::size_t any = 0;
    for (std::size_t v = 0; v < g.size(); ++v) {
        int n = 0;
        for (const auto& m : maps)
            n += m[v];
        CHECK(votes[v] == n);
        CHECK(un[v] == (n >= 1 ? 1 : 0));
        CHECK(unc[v] == (n >= 1 && n < 15 ? 1 : 0));
        any += n >= 1 ? 1 : 0;
    }
    CHECK(count_foreground(un) == any);
}

TEST_CASE("dice: examples and errors") {
    const Geometry g = make_geometry({4, 4, 1});
    LabelMap x(g), y(g);
    for (int i : {0, 1, 2, 3})
        x[i] = 1;
    for (int i : {2, 3, 4, 5})
        y[i] = 1;
    CHECK(dice(x, x) == 1.0);
    CHECK(dice(x, y) == doctest::Approx(0.5));
    LabelMap z(g);
    z[15] = 1;
    CHECK(dice(x, z) == 0.0);
    CHECK_THROWS_AS(dice(LabelMap(g), LabelMap(g)), std::invalid_argument);
}

TEST_CASE("crop: full extent, single voxel, grown bounding box") {
    std::mt19937_64 rng(16);
    const Geometry g = make_geometry({12, 10, 8}, {1.0, 2.0, 0.5}, {3.0, -1.0, 2.0});
    const Volume v = random_volume(g, rng);
    const RegionOfInterest full{{0, 0, 0}, {11, 9, 7}};
    CHECK(crop(v, full) == v);
    const RegionOfInterest one{{4, 5, 6}, {4, 5, 6}};
    const Volume c1 = crop(v, one);
    CHECK(c1.dims() == Index3{1, 1, 1});
    CHECK(c1[0] == v.at(4, 5, 6));
    CHECK(c1.geometry().physical(0, 0, 0) == g.physical(4, 5, 6));

    LabelMap cube(g);
    for (int k = 3; k <= 4; ++k)
        for (int j = 4; j <= 6; ++j)
            for (int i = 5; i <= 7; ++i)
                cube.at(i, j, k) = 1;
    const std::vector<LabelMap> maps{cube};
    const RegionOfInterest roi = bounding_roi(maps, 3);
    CHECK(roi.lo == Index3{2, 1, 0});
    CHECK(roi.hi == Index3{10, 9, 7});
    CHECK(crop(cube, roi).dims() == Index3{9, 9, 8});

    const Volume back = uncrop(Volume(g, -1.0), crop(v, roi), roi);
    for (int k = 0; k < 8; ++k)
        for (int j = 0; j < 10; ++j)
            for (int i = 0; i < 12; ++i) {
                const bool in = i >= 2 && i <= 10 && j >= 1 && k >= 0;
                CHECK(back.at(i, j, k) == (in ? v.at(i, j, k) : -1.0));
            }
}

TEST_CASE("threshold and dilation") {
    const Geometry g = make_geometry({5, 5, 5});
    Volume p(g, 0.5);
    CHECK(count_foreground(threshold(p, 0.5)) == g.size());
    CHECK(count_foreground(threshold(p, 0.5, true)) == 0);
    LabelMap m(g);
    m.at(2, 2, 2) = 1;
    CHECK(count_foreground(dilate(m)) == 27);
    LabelMap corner(g);
    corner.at(0, 0, 0) = 1;
    CHECK(count_foreground(dilate(corner)) == 8);
}

TEST_CASE("histogram match: identity, offset and scaling") {
    std::mt19937_64 rng(17);
    const Geometry g = make_geometry({4, 4, 2});  // 32 voxels
    const Volume ref = random_volume(g, rng, 10.0, 50.0);
    double lo = ref[0], hi = ref[0];
    for (double x : ref.data()) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    const int levels = 256;
    const double tol = (hi - lo) / levels;

    const Volume same = histogram_match(ref, ref, levels);
    Volume shifted = ref, scaled = ref;
    for (auto& x : shifted.storage())
        x += 100.0;
    for (auto& x : scaled.storage())
        x *= 2.0;
    const Volume from_shift = histogram_match(shifted, ref, levels);
    const Volume from_scale = histogram_match(scaled, ref, levels);
    for (std::size_t v = 0; v < g.size(); ++v) {
        CHECK(std::abs(same[v] - ref[v]) <= tol);
        CHECK(std::abs(from_shift[v] - ref[v]) <= tol);
        CHECK(std::abs(from_scale[v] - ref[v]) <= tol);
    }
    CHECK_THROWS_AS(histogram_match(Volume(g, 1.0), ref), std::invalid_argument);
    CHECK_THROWS_AS(histogram_match(ref, Volume(g, 1.0)), std::invalid_argument);
}

TEST_CASE("histogram match: output is monotone in the source") {
    std::mt19937_64 rng(18);
    const Geometry g = make_geometry({10, 10, 3});
    const Volume src = random_volume(g, rng, -5.0, 5.0);
    Volume ref = random_volume(g, rng, 0.0, 1.0);
    for (auto& x : ref.storage())
        x = x * x * 300.0;
    const Volume out = histogram_match(src, ref, 64);
    for (std::size_t a = 0; a < g.size(); ++a)
        for (std::size_t b = 0; b < g.size(); ++b)
            if (src[a] < src[b])
                REQUIRE(out[a] <= out[b]);
}

}  // TEST_SUITE

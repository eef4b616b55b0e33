#include "mafuse/labels.hpp"

#include <algorithm>
#include <limits>

#include "mafuse/resample.hpp"

namespace mafuse {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Lower envelope of parabolas along one line (Felzenszwalb & Huttenlocher),
// sample positions at multiples of `h`.
void edt_line(std::span<double> f, double h, std::vector<double>& d, std::vector<int>& v, std::vector<double>& z) {
    const int n = static_cast<int>(f.size());
    d.resize(n);
    v.resize(n);
    z.resize(n + 1);
    const double h2 = h * h;
    int k = -1;
    for (int q = 0; q < n; ++q) {
        if (f[q] == kInf)
            continue;
        if (k < 0) {
            k = 0;
            v[0] = q;
            z[0] = -kInf;
            z[1] = kInf;
            continue;
        }
        double s = 0.0;
        for (;;) {
            const int p = v[k];
            s = ((f[q] + h2 * q * q) - (f[p] + h2 * p * p)) / (2.0 * h2 * (q - p));
            if (s > z[k])
                break;
            --k;  // z[0] is -inf, so k never drops below 0
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    if (k < 0) {
        std::fill(d.begin(), d.end(), kInf);
    } else {
        int j = 0;
        for (int q = 0; q < n; ++q) {
            while (z[j + 1] < q)
                ++j;
            const double dq = h * (q - v[j]);
            d[q] = dq * dq + f[v[j]];
        }
    }
    std::copy(d.begin(), d.end(), f.begin());
}

}  // namespace

Volume squared_distance_to(const LabelMap& lab, std::uint8_t value) {
    const Geometry& g = lab.geometry();
    Volume dist(g, kInf);
    for (std::size_t i = 0; i < lab.size(); ++i)
        if ((lab[i] != 0) == (value != 0))
            dist[i] = 0.0;

    std::vector<double> line, d, z;
    std::vector<int> v;
    const Index3 n = g.dims;
    for (int axis = 0; axis < 3; ++axis) {
        const int len = n[axis];
        const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
        line.resize(len);
        for (int u = 0; u < n[a2]; ++u)
            for (int w = 0; w < n[a1]; ++w) {
                Index3 p{};
                p[a1] = w;
                p[a2] = u;
                for (int t = 0; t < len; ++t) {
                    p[axis] = t;
                    line[t] = dist[g.index(p)];
                }
                edt_line(line, g.spacing[axis], d, v, z);
                for (int t = 0; t < len; ++t) {
                    p[axis] = t;
                    dist[g.index(p)] = line[t];
                }
            }
    }
    return dist;
}

SignedDistanceMap signed_distance(const LabelMap& lab) {
    const std::size_t fg = count_foreground(lab);
    if (fg == 0 || fg == lab.size())
        throw std::invalid_argument("signed_distance: label map needs both foreground and background voxels");
    const Geometry& g = lab.geometry();
    const double half = 0.5 * std::min({g.spacing[0], g.spacing[1], g.spacing[2]});
    const Volume to_bg = squared_distance_to(lab, 0);
    const Volume to_fg = squared_distance_to(lab, 1);
    Volume out(g);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = lab[i] ? std::sqrt(to_bg[i]) - half : -std::sqrt(to_fg[i]);
    return {std::move(out)};
}

LabelMap transfer_labels_logodds(const SignedDistanceMap& sdm, const Transform& xform, const Geometry& target) {
    const Volume r = resample(sdm.field, xform, target, Interpolation::trilinear, kOutsideDistance);
    return threshold(r, 0.0);
}

LabelMap union_support(std::span<const LabelMap> labels) {
    if (labels.empty())
        throw std::invalid_argument("union_support: empty list");
    LabelMap out(labels.front().geometry(), 0);
    for (const auto& m : labels) {
        require_same_geometry(m.geometry(), out.geometry(), "union_support");
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = out[i] | (m[i] != 0 ? 1 : 0);
    }
    return out;
}

std::vector<int> vote_counts(std::span<const LabelMap> labels) {
    if (labels.empty())
        throw std::invalid_argument("vote_counts: empty list");
    std::vector<int> votes(labels.front().size(), 0);
    for (const auto& m : labels) {
        require_same_geometry(m.geometry(), labels.front().geometry(), "vote_counts");
        for (std::size_t i = 0; i < votes.size(); ++i)
            votes[i] += m[i] != 0;
    }
    return votes;
}

LabelMap uncertainty_mask(std::span<const LabelMap> labels) {
    const auto votes = vote_counts(labels);
    const int n = static_cast<int>(labels.size());
    LabelMap out(labels.front().geometry(), 0);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = votes[i] > 0 && votes[i] < n;
    return out;
}

double dice(const LabelMap& a, const LabelMap& b) {
    require_same_geometry(a.geometry(), b.geometry(), "dice");
    std::size_t na = 0, nb = 0, both = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool x = a[i] != 0, y = b[i] != 0;
        na += x;
        nb += y;
        both += x && y;
    }
    if (na + nb == 0)
        throw std::invalid_argument("dice: both label maps are empty");
    return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

DisplacementField crop(const DisplacementField& f, const RegionOfInterest& roi) {
    roi.validate_within(f.geometry);
    DisplacementField out;
    out.geometry = f.geometry;
    out.geometry.dims = roi.extent();
    for (int a = 0; a < 3; ++a)
        out.geometry.origin[a] = f.geometry.origin[a] + roi.lo[a] * f.geometry.spacing[a];
    out.displacement.resize(out.geometry.size());
    const Index3 e = roi.extent();
    for (int k = 0; k < e[2]; ++k)
        for (int j = 0; j < e[1]; ++j)
            for (int i = 0; i < e[0]; ++i)
                out.displacement[out.geometry.index(i, j, k)] =
                    f.displacement[f.geometry.index(i + roi.lo[0], j + roi.lo[1], k + roi.lo[2])];
    return out;
}

RegionOfInterest bounding_roi(std::span<const LabelMap> labels, int margin) {
    if (labels.empty())
        throw std::invalid_argument("bounding_roi: empty list");
    const Geometry& g = labels.front().geometry();
    Index3 lo{g.dims[0], g.dims[1], g.dims[2]};
    Index3 hi{-1, -1, -1};
    for (const auto& m : labels) {
        require_same_geometry(m.geometry(), g, "bounding_roi");
        for (int k = 0; k < g.dims[2]; ++k)
            for (int j = 0; j < g.dims[1]; ++j)
                for (int i = 0; i < g.dims[0]; ++i)
                    if (m.at(i, j, k)) {
                        const Index3 p{i, j, k};
                        for (int a = 0; a < 3; ++a) {
                            lo[a] = std::min(lo[a], p[a]);
                            hi[a] = std::max(hi[a], p[a]);
                        }
                    }
    }
    if (hi[0] < 0)
        throw std::invalid_argument("bounding_roi: no foreground voxels");
    RegionOfInterest roi;
    for (int a = 0; a < 3; ++a) {
        roi.lo[a] = std::max(0, lo[a] - margin);
        roi.hi[a] = std::min(g.dims[a] - 1, hi[a] + margin);
    }
    return roi;
}

LabelMap threshold(const Volume& prob, double t, bool strict) {
    LabelMap out(prob.geometry(), 0);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = strict ? prob[i] > t : prob[i] >= t;
    return out;
}

LabelMap dilate(const LabelMap& m) {
    const Geometry& g = m.geometry();
    LabelMap out(g, 0);
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) {
                if (!m.at(i, j, k))
                    continue;
                for (int dk = -1; dk <= 1; ++dk)
                    for (int dj = -1; dj <= 1; ++dj)
                        for (int di = -1; di <= 1; ++di)
                            if (g.contains(i + di, j + dj, k + dk))
                                out.at(i + di, j + dj, k + dk) = 1;
            }
    return out;
}

}  // namespace mafuse

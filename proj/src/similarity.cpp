#include "mafuse/similarity.hpp"

#include <algorithm>
#include <set>

namespace mafuse {

namespace {

std::vector<int> bin_indices(const Volume& v, const LabelMap* mask, int bins) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (std::size_t i = 0; i < v.size(); ++i)
        if (!mask || (*mask)[i]) {
            lo = std::min(lo, v[i]);
            hi = std::max(hi, v[i]);
        }
    std::vector<int> out;
    out.reserve(v.size());
    const double range = hi - lo;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (mask && !(*mask)[i])
            continue;
        int b = 0;
        if (range > 0.0)
            b = std::min(bins - 1, static_cast<int>((v[i] - lo) / range * bins));
        out.push_back(b);
    }
    return out;
}

std::size_t check_inputs(const Volume& a, const Volume& b, const LabelMap* mask, int bins) {
    require_same_geometry(a.geometry(), b.geometry(), "mutual_information");
    if (bins < 2)
        throw std::invalid_argument("mutual_information: bins must be >= 2");
    std::size_t n = a.size();
    if (mask) {
        require_same_geometry(a.geometry(), mask->geometry(), "mutual_information mask");
        n = count_foreground(*mask);
    }
    if (n < static_cast<std::size_t>(bins))
        throw std::invalid_argument("mutual_information: fewer masked voxels than bins");
    return n;
}

}  // namespace

double mutual_information(const Volume& a, const Volume& b, const LabelMap* mask, int bins) {
    const std::size_t n = check_inputs(a, b, mask, bins);
    const auto ba = bin_indices(a, mask, bins);
    const auto bb = bin_indices(b, mask, bins);
    std::vector<double> joint(static_cast<std::size_t>(bins) * bins, 0.0);
    std::vector<double> pa(bins, 0.0), pb(bins, 0.0);
    for (std::size_t i = 0; i < ba.size(); ++i) {
        joint[static_cast<std::size_t>(ba[i]) * bins + bb[i]] += 1.0;
        pa[ba[i]] += 1.0;
        pb[bb[i]] += 1.0;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    // I(A;B) = H(A) + H(B) - H(A,B); every term is order independent under
    // transposition, which keeps MI(a,b) == MI(b,a).
    auto entropy = [&](const std::vector<double>& counts) {
        double h = 0.0;
        for (double c : counts)
            if (c > 0.0) {
                const double p = c * inv_n;
                h -= p * std::log(p);
            }
        return h;
    };
    std::vector<double> sorted_joint = joint;
    std::sort(sorted_joint.begin(), sorted_joint.end());
    std::vector<double> sorted_a = pa, sorted_b = pb;
    std::sort(sorted_a.begin(), sorted_a.end());
    std::sort(sorted_b.begin(), sorted_b.end());
    const double ha = entropy(sorted_a), hb = entropy(sorted_b), hab = entropy(sorted_joint);
    // add the marginals in a fixed order so swapping a and b is bit-symmetric
    const double hsum = ha < hb ? ha + hb : hb + ha;
    return std::max(0.0, hsum - hab);
}

double binned_entropy(const Volume& a, const LabelMap* mask, int bins) {
    const std::size_t n = check_inputs(a, a, mask, bins);
    const auto ba = bin_indices(a, mask, bins);
    std::vector<double> pa(bins, 0.0);
    for (int b : ba)
        pa[b] += 1.0;
    double h = 0.0;
    for (double c : pa)
        if (c > 0.0) {
            const double p = c / static_cast<double>(n);
            h -= p * std::log(p);
        }
    return h;
}

double ssd(const Volume& a, const Volume& b, const LabelMap* mask) {
    require_same_geometry(a.geometry(), b.geometry(), "ssd");
    if (mask)
        require_same_geometry(a.geometry(), mask->geometry(), "ssd mask");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!mask || (*mask)[i]) {
            const double d = a[i] - b[i];
            s += d * d;
        }
    return s;
}

std::vector<RankedAtlas> rank_atlases(const Volume& target, std::span<const AtlasRef> atlases, SimilarityMetric metric,
                                      const LabelMap* mask, int bins) {
    std::set<std::string> seen;
    std::vector<RankedAtlas> out;
    out.reserve(atlases.size());
    for (const auto& a : atlases) {
        if (!a.image)
            throw std::invalid_argument("rank_atlases: null atlas image");
        if (!seen.insert(a.id).second)
            throw std::invalid_argument("rank_atlases: duplicate atlas id '" + a.id + "'");
        const double score = metric == SimilarityMetric::mutual_information
                                 ? mutual_information(target, *a.image, mask, bins)
                                 : ssd(target, *a.image, mask);
        out.push_back({a.id, score});
    }
    const bool larger_better = metric == SimilarityMetric::mutual_information;
    std::sort(out.begin(), out.end(), [&](const RankedAtlas& x, const RankedAtlas& y) {
        if (x.score != y.score)
            return larger_better ? x.score > y.score : x.score < y.score;
        return x.id < y.id;
    });
    return out;
}

double semi_global_weight(const Volume& target, const Volume& warped_atlas, const LabelMap& mask, int bins) {
    return mutual_information(target, warped_atlas, &mask, bins);
}

}  // namespace mafuse

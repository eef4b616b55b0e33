#include "mafuse/intensity.hpp"

#include <algorithm>
#include <vector>

namespace mafuse {

double sorted_quantile(std::span<const double> sorted, double q) {
    if (sorted.empty())
        throw std::invalid_argument("quantile of empty sample");
    const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double t = pos - static_cast<double>(lo);
    return t == 0.0 ? sorted[lo] : sorted[lo] * (1.0 - t) + sorted[hi] * t;
}

Volume histogram_match(const Volume& src, const Volume& ref, int n_levels) {
    if (n_levels < 1)
        throw std::invalid_argument("histogram_match: n_levels must be >= 1");
    std::vector<double> s(src.data().begin(), src.data().end());
    std::vector<double> r(ref.data().begin(), ref.data().end());
    std::sort(s.begin(), s.end());
    std::sort(r.begin(), r.end());
    if (s.empty() || r.empty() || s.front() == s.back() || r.front() == r.back())
        throw std::invalid_argument("histogram_match: constant source or reference volume");

    std::vector<double> sq(n_levels + 1), rq(n_levels + 1);
    for (int l = 0; l <= n_levels; ++l) {
        const double q = static_cast<double>(l) / n_levels;
        sq[l] = sorted_quantile(s, q);
        rq[l] = sorted_quantile(r, q);
    }

    Volume out(src.geometry());
    for (std::size_t i = 0; i < src.size(); ++i) {
        const double v = src[i];
        // last knot whose source quantile is <= v
        auto it = std::upper_bound(sq.begin(), sq.end(), v);
        std::size_t l = it == sq.begin() ? 0 : static_cast<std::size_t>(it - sq.begin()) - 1;
        if (l >= static_cast<std::size_t>(n_levels)) {
            out[i] = rq.back();
            continue;
        }
        // collapse plateaus of equal source quantiles onto their first knot
        std::size_t first = l;
        while (first > 0 && sq[first - 1] == sq[l])
            --first;
        const double width = sq[l + 1] - sq[l];
        if (v <= sq[l] || width <= 0.0) {
            out[i] = v == sq[l] ? 0.5 * (rq[first] + rq[l]) : rq[l];
            continue;
        }
        const double t = (v - sq[l]) / width;
        out[i] = rq[l] + t * (rq[l + 1] - rq[l]);
    }
    return out;
}

}  // namespace mafuse

#include "mafuse/global_fusion.hpp"

#include <algorithm>
#include <cmath>

#include "mafuse/labels.hpp"

namespace mafuse {

LabelMap majority_vote(std::span<const LabelMap> labels) {
    const auto votes = vote_counts(labels);
    const int n = static_cast<int>(labels.size());
    LabelMap out(labels.front().geometry(), 0);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = 2 * votes[i] > n;
    return out;
}

PriorField label_prior(std::span<const LabelMap> labels, std::span<const double> weights, double q) {
    if (labels.empty())
        throw std::invalid_argument("label_prior: empty atlas list");
    if (weights.size() != labels.size())
        throw std::invalid_argument("label_prior: one weight per atlas required");
    std::vector<double> gain(weights.size());
    for (std::size_t a = 0; a < weights.size(); ++a) {
        if (!(weights[a] >= 0.0) || !std::isfinite(weights[a]))
            throw std::invalid_argument("label_prior: weights must be finite and >= 0");
        gain[a] = std::pow(weights[a], q);
    }
    const Geometry& g = labels.front().geometry();
    for (const auto& m : labels)
        require_same_geometry(m.geometry(), g, "label_prior");
    PriorField out(g, 0.5);
    for (std::size_t v = 0; v < out.size(); ++v) {
        double u0 = 0.0, u1 = 0.0;
        for (std::size_t a = 0; a < labels.size(); ++a)
            (labels[a][v] ? u1 : u0) += gain[a];
        const double z = u0 + u1;
        out[v] = z > 0.0 ? u1 / z : 0.5;
    }
    return out;
}

namespace {

double log_sum_exp(double a, double b) {
    const double m = std::max(a, b);
    if (m == -std::numeric_limits<double>::infinity())
        return m;
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

StapleResult staple_em(std::span<const LabelMap> labels, const StapleParams& params) {
    const std::size_t raters = labels.size();
    if (raters < 2)
        throw std::invalid_argument("staple_em: at least two raters required");
    const auto votes = vote_counts(labels);
    const Geometry& g = labels.front().geometry();
    const std::size_t n = g.size();

    std::size_t total_votes = 0;
    for (int v : votes)
        total_votes += static_cast<std::size_t>(v);
    if (total_votes == 0 || total_votes == n * raters)
        throw std::invalid_argument("staple_em: votes contain only one class");

    StapleResult res;
    res.prevalence = params.prevalence >= 0.0 ? params.prevalence
                                              : static_cast<double>(total_votes) / static_cast<double>(n * raters);
    res.prevalence = std::clamp(res.prevalence, 1e-12, 1.0 - 1e-12);
    const double log_f1 = std::log(res.prevalence), log_f0 = std::log1p(-res.prevalence);
    res.sensitivity.assign(raters, params.initial_sensitivity);
    res.specificity.assign(raters, params.initial_specificity);
    res.posterior = PriorField(g, 0.0);

    std::vector<double> log_a(n), log_b(n);
    // E-step: posterior W_j and the observed log-likelihood.
    auto expectation = [&]() {
        std::vector<double> lp(raters), l1p(raters), lq(raters), l1q(raters);
        for (std::size_t r = 0; r < raters; ++r) {
            lp[r] = std::log(res.sensitivity[r]);
            l1p[r] = std::log1p(-res.sensitivity[r]);
            lq[r] = std::log(res.specificity[r]);
            l1q[r] = std::log1p(-res.specificity[r]);
        }
        double ll = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            double a = log_f1, b = log_f0;
            for (std::size_t r = 0; r < raters; ++r) {
                if (labels[r][j]) {
                    a += lp[r];
                    b += l1q[r];
                } else {
                    a += l1p[r];
                    b += lq[r];
                }
            }
            const double z = log_sum_exp(a, b);
            res.posterior[j] = std::exp(a - z);
            ll += z;
        }
        return ll;
    };

    res.log_likelihood.push_back(expectation());
    for (int it = 0; it < params.max_iterations; ++it) {
        double max_change = 0.0;
        double sum_w = 0.0, sum_nw = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            sum_w += res.posterior[j];
            sum_nw += 1.0 - res.posterior[j];
        }
        for (std::size_t r = 0; r < raters; ++r) {
            double tp = 0.0, tn = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (labels[r][j])
                    tp += res.posterior[j];
                else
                    tn += 1.0 - res.posterior[j];
            }
            const double p = std::clamp(sum_w > 0.0 ? tp / sum_w : params.clamp_hi, params.clamp_lo, params.clamp_hi);
            const double q = std::clamp(sum_nw > 0.0 ? tn / sum_nw : params.clamp_hi, params.clamp_lo, params.clamp_hi);
            max_change = std::max({max_change, std::abs(p - res.sensitivity[r]), std::abs(q - res.specificity[r])});
            res.sensitivity[r] = p;
            res.specificity[r] = q;
        }
        res.log_likelihood.push_back(expectation());
        res.iterations = it + 1;
        if (max_change < params.tolerance)
            break;
    }
    res.segmentation = threshold(res.posterior, 0.5, /*strict=*/true);
    return res;
}

}  // namespace mafuse

#pragma once

#include <span>
#include <vector>

#include "mafuse/volume.hpp"

namespace mafuse {

/// Per-voxel p(S=1) over a label lattice.
using PriorField = Volume;

/// Foreground where more than half of the maps vote foreground; ties are
/// background.
LabelMap majority_vote(std::span<const LabelMap> labels);

/// Weighted-voting prior: p(1) = u1/(u0+u1) with u_l the sum of w_i^q over
/// atlases voting l; 0.5 where every weight is zero.
PriorField label_prior(std::span<const LabelMap> labels, std::span<const double> weights, double q = 4.0);

struct StapleParams {
    double initial_sensitivity = 0.99;
    double initial_specificity = 0.99;
    double tolerance = 1e-6;
    int max_iterations = 100;
    /// Prior probability of foreground; negative selects the mean vote fraction.
    double prevalence = -1.0;
    double clamp_lo = 0.01;
    double clamp_hi = 0.99;
};

struct StapleResult {
    PriorField posterior;
    LabelMap segmentation;
    std::vector<double> sensitivity;
    std::vector<double> specificity;
    double prevalence = 0.0;
    int iterations = 0;
    /// Observed-data log-likelihood after each M-step, starting with the
    /// initial parameters.
    std::vector<double> log_likelihood;
};

/// Binary STAPLE by expectation-maximisation. Rater parameters are kept in
/// [clamp_lo, clamp_hi]; the segmentation thresholds the posterior at 0.5.
StapleResult staple_em(std::span<const LabelMap> labels, const StapleParams& params = {});

}  // namespace mafuse

#pragma once

#include "mafuse/volume.hpp"

namespace mafuse {

/// Monotone remap of `src` so that its quantile function agrees with `ref`
/// at `n_levels`+1 evenly spaced quantiles, piecewise linear in between.
/// The output range lies within the range of `ref`. Throws
/// std::invalid_argument when either input is constant.
Volume histogram_match(const Volume& src, const Volume& ref, int n_levels = 256);

/// Linearly interpolated quantile of an ascending sample, q in [0,1].
double sorted_quantile(std::span<const double> sorted, double q);

}  // namespace mafuse

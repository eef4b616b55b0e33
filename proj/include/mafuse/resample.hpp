#pragma once

#include "mafuse/volume.hpp"

namespace mafuse {

enum class Interpolation { trilinear, nearest };

/// Samples `src` on `target` through `xform` (target physical -> source
/// physical). Samples that fall outside the source lattice take `fill`.
/// Throws std::domain_error for a singular affine.
Volume resample(const Volume& src, const Transform& xform, const Geometry& target,
                Interpolation mode = Interpolation::trilinear, double fill = 0.0);

/// Nearest-neighbour resampling of a label map; out-of-bounds is background.
LabelMap resample_labels(const LabelMap& src, const Transform& xform, const Geometry& target);

/// Physical position in source space of target voxel (i,j,k).
Vec3 map_voxel(const Transform& xform, const Geometry& target, int i, int j, int k);

}  // namespace mafuse

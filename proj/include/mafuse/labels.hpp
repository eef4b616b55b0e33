#pragma once

#include <span>
#include <vector>

#include "mafuse/volume.hpp"

namespace mafuse {

/// Fill used for signed distances sampled outside the source lattice.
inline constexpr double kOutsideDistance = -1.0e9;

/// Squared Euclidean distance (mm^2) from every voxel centre to the nearest
/// voxel whose label equals `value`. Exact separable transform honouring
/// anisotropic spacing. Voxels carrying `value` are 0.
Volume squared_distance_to(const LabelMap& lab, std::uint8_t value);

/// LogOdds-style representation of a binary map. Inside voxels hold the
/// distance to the nearest background centre minus half the smallest
/// spacing (so >= 0); outside voxels hold minus the distance to the nearest
/// foreground centre. Throws std::invalid_argument if only one class exists.
SignedDistanceMap signed_distance(const LabelMap& lab);

/// Resample a signed-distance map trilinearly and keep the >= 0 level set.
LabelMap transfer_labels_logodds(const SignedDistanceMap& sdm, const Transform& xform, const Geometry& target);

/// Voxelwise OR (the support union).
LabelMap union_support(std::span<const LabelMap> labels);

/// Foreground where the maps are not unanimous.
LabelMap uncertainty_mask(std::span<const LabelMap> labels);

/// Per-voxel count of foreground votes.
std::vector<int> vote_counts(std::span<const LabelMap> labels);

/// 2|A∩B| / (|A|+|B|). Throws std::invalid_argument when both are empty.
double dice(const LabelMap& a, const LabelMap& b);

template <typename T>
Grid<T> crop(const Grid<T>& vol, const RegionOfInterest& roi) {
    const Geometry& g = vol.geometry();
    roi.validate_within(g);
    Geometry out_g = g;
    out_g.dims = roi.extent();
    for (int a = 0; a < 3; ++a)
        out_g.origin[a] = g.origin[a] + roi.lo[a] * g.spacing[a];
    Grid<T> out(out_g);
    for (int k = 0; k < out_g.dims[2]; ++k)
        for (int j = 0; j < out_g.dims[1]; ++j)
            for (int i = 0; i < out_g.dims[0]; ++i)
                out.at(i, j, k) = vol.at(i + roi.lo[0], j + roi.lo[1], k + roi.lo[2]);
    return out;
}

/// Writes `part` (a crop of `full` at `roi`) back into a copy of `full`.
template <typename T>
Grid<T> uncrop(const Grid<T>& full, const Grid<T>& part, const RegionOfInterest& roi) {
    roi.validate_within(full.geometry());
    Grid<T> out = full;
    const Index3 e = roi.extent();
    if (part.dims() != e)
        throw std::invalid_argument("uncrop: part extent does not match roi");
    for (int k = 0; k < e[2]; ++k)
        for (int j = 0; j < e[1]; ++j)
            for (int i = 0; i < e[0]; ++i)
                out.at(i + roi.lo[0], j + roi.lo[1], k + roi.lo[2]) = part.at(i, j, k);
    return out;
}

DisplacementField crop(const DisplacementField& f, const RegionOfInterest& roi);

/// Bounding box of every foreground voxel across `labels`, grown by
/// `margin` voxels per side and clamped to the lattice.
RegionOfInterest bounding_roi(std::span<const LabelMap> labels, int margin = 3);

/// Foreground where `prob` >= threshold (or > threshold when strict).
LabelMap threshold(const Volume& prob, double t, bool strict = false);

/// 26-connected binary dilation by one voxel.
LabelMap dilate(const LabelMap& m);

}  // namespace mafuse

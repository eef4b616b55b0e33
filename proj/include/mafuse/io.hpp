#pragma once

#include <filesystem>

#include "mafuse/volume.hpp"

namespace mafuse::io {

// Format is chosen from the extension: ".nii" is single-file uncompressed
// NIfTI-1, ".mvol" is the plain MVOL1 container. Errors throw
// std::runtime_error.

Volume read_volume(const std::filesystem::path& path);
/// Any nonzero voxel becomes foreground.
LabelMap read_labels(const std::filesystem::path& path);

/// Intensities are stored as float32.
void write_volume(const std::filesystem::path& path, const Volume& vol);
/// Labels are stored as uint8.
void write_labels(const std::filesystem::path& path, const LabelMap& lab);

/// Four lines of four whitespace-separated numbers, row-major.
AffineTransform read_affine(const std::filesystem::path& path);
void write_affine(const std::filesystem::path& path, const AffineTransform& xform);

/// A ".nii" path holds a 5-D NIfTI with three components; any other path
/// is a prefix for the MVOL triple "<path>.dx", "<path>.dy", "<path>.dz".
DisplacementField read_displacement(const std::filesystem::path& path);
void write_displacement(const std::filesystem::path& path, const DisplacementField& field);

}  // namespace mafuse::io

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mafuse/pipeline.hpp"
#include "mafuse/volume.hpp"

namespace mafuse {

/// Synthetic cohort parameters. Lengths are in mm.
struct PhantomSpec {
    Index3 dims{64, 48, 64};
    Vec3 spacing{1.0, 1.0, 1.0};
    // curved superellipsoid standing in for the structure of interest
    Vec3 shape_axes{14.0, 6.0, 7.0};
    double shape_exponent = 2.5;
    double bend = 0.02;  // y offset per mm² along x
    // unlabelled neighbour with structure-like intensity
    Vec3 distractor_axes{8.0, 7.0, 7.0};
    Vec3 distractor_offset{17.0, 1.0, 0.0};
    double distractor_mean = 100.0;
    // per-subject smooth warps
    double deformation_mm = 2.0;     // RMS displacement
    double deformation_wavelength_mm = 48.0;
    // registration residual added to the true inter-subject fields
    double residual_mm = 1.5;        // RMS
    double residual_wavelength_mm = 24.0;
    // intensities
    double foreground_mean = 100.0;
    double background_mean = 80.0;
    double texture_amplitude = 8.0;
    double texture_wavelength_mm = 7.0;
    double noise_sigma = 8.0;
    double bias_amplitude = 0.10;
    std::uint64_t seed = 1;

    void validate() const;
    Geometry geometry() const;
};

void set_phantom_value(PhantomSpec& spec, const std::string& key, const std::string& value);
/// Flat `key = value` file; vector fields take three whitespace-separated numbers.
PhantomSpec read_phantom_spec(const std::filesystem::path& path, PhantomSpec base = {});

/// Sum of sinusoids per axis, up to three harmonics of a base wavelength.
struct SmoothField {
    struct Wave {
        Vec3 k{};  // rad/mm
        double phase = 0.0;
        Vec3 amplitude{};  // mm per axis
    };
    std::vector<Wave> waves;

    Vec3 operator()(const Vec3& p) const;
};

struct PhantomSubject {
    Volume image;
    LabelMap labels;
    AffineTransform affine;  // common space -> subject space
    SmoothField warp;        // subject position p corresponds to base position p + warp(p)
};

class Cohort {
public:
    PhantomSpec spec;
    std::vector<PhantomSubject> subjects;
    /// Lattice the inter-subject fields are sampled on: every subject's
    /// structure with a margin, clamped to the grid.
    Geometry field_geometry;

    std::size_t size() const { return subjects.size(); }
    /// Displacement taking target positions to atlas positions: the exact
    /// composition of the generating warps plus the residual for this pair.
    DisplacementField field(std::size_t target, std::size_t atlas) const;
    /// The same field without the residual.
    DisplacementField exact_field(std::size_t target, std::size_t atlas) const;

private:
    DisplacementField make_field(std::size_t target, std::size_t atlas, bool with_residual) const;
};

/// Whether a base-space point lies in the structure.
bool phantom_inside(const PhantomSpec& spec, const Vec3& base_point);

/// n >= 3 subjects; identical seeds give bit-identical cohorts.
Cohort generate_cohort(const PhantomSpec& spec, int n);

/// In-memory atlas library for one fold: every subject except `target`,
/// each with its field towards the target.
AtlasLibrary fold_library(const Cohort& cohort, std::size_t target);

struct LooResult {
    std::vector<FusionMethod> methods;
    /// dice[fold][method]
    std::vector<std::vector<double>> dice;
    std::vector<PipelineResult> folds;  // kept when requested

    double mean(std::size_t method) const;
    double stddev(std::size_t method) const;  // population
};

/// Each subject in turn is the target and the rest form the library.
/// Folds run on `threads` workers (0: one per hardware thread); results do
/// not depend on the thread count.
LooResult leave_one_out(const Cohort& cohort, const PipelineConfig& cfg, std::span<const FusionMethod> methods,
                        bool keep_folds = false, unsigned threads = 0);

/// `method,mean_dice,std_dice,folds` rows.
std::string loo_summary_csv(const LooResult& r);
/// `fold,method,dice` rows.
std::string loo_folds_csv(const LooResult& r);

/// Writes subject images, labels and affines plus the fields towards
/// `target`, and a manifest of every other subject.
void write_cohort(const Cohort& cohort, std::size_t target, const std::filesystem::path& dir);

}  // namespace mafuse

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mafuse/volume.hpp"

namespace mafuse {

enum class PatchMode { conventional, combined };

std::string to_string(PatchMode m);

struct PatchConfig {
    double patch_radius_mm = 1.5;
    double search_radius_mm = 4.0;
    double epsilon = 0.85;  // pre-selection threshold (squared in combined mode)
    double beta_i = 0.5;
    double beta_s = 1.0;
    double eps_i = 1e-6;
    double eps_s = 1e-6;
    PatchMode mode = PatchMode::combined;

    void validate() const;
};

/// ceil(r / spacing) per axis, with a 1e-9 guard against round-off above
/// an exact multiple.
Index3 patch_half_size(double radius_mm, const Vec3& spacing);
/// 2 * ceil(r / spacing) + 1 per axis.
Index3 patch_geometry(double radius_mm, const Vec3& spacing);

struct PatchStats {
    double mean = 0.0;
    double stddev = 0.0;  // population
    bool constant = true;
};

PatchStats patch_stats(std::span<const double> values);

/// One factor of the structural similarity:
/// 4 μ μ' σ σ' / ((μ² + μ'²)(σ² + σ'²)) with σ regularised by 1e-6.
/// Two constant patches score 2μμ'/(μ²+μ'²) (1 when equal, 1 when both
/// zero); a constant patch against a non-constant one scores 0.
double similarity_factor(const PatchStats& x, const PatchStats& y);

/// A cuboid neighbourhood, x-fastest, mirror-padded at the lattice border.
struct Patch {
    Index3 center{0, 0, 0};
    Index3 half{0, 0, 0};
    std::vector<double> values;
    PatchStats stats;
};

template <typename T>
Patch extract_patch(const Grid<T>& vol, const Index3& center, const Index3& half);

/// Intensity factor times labelling factor.
double structural_similarity(const Patch& intensity_x, const Patch& labels_x, const Patch& intensity_y,
                             const Patch& labels_y);

double squared_distance(const Patch& a, const Patch& b);

struct Bandwidths {
    double h_i2 = 0.0;
    double h_s2 = 0.0;
};

/// h² = β · min d² + ε for intensities and labellings. `label_d2` may be
/// empty in conventional mode.
Bandwidths bandwidths(std::span<const double> intensity_d2, std::span<const double> label_d2, const PatchConfig& cfg);

/// exp(-dI²/h_I²), times exp(-dS²/h_S²) in combined mode.
double patch_weight(double intensity_d2, double label_d2, const Bandwidths& bw, PatchMode mode);

/// Weighted mean of label patches: Σ ω P / Σ ω. Throws when Σ ω is 0.
std::vector<double> multipoint_estimate(std::span<const double> weights,
                                        std::span<const std::vector<double>> label_patches);

/// Per-voxel votes cast by overlapping label-patch estimates.
class LabelPatchEstimate {
public:
    explicit LabelPatchEstimate(const Geometry& g)
        : geometry_(g), value_sum_(g.size(), 0.0), fg_votes_(g.size(), 0), votes_(g.size(), 0) {}

    /// Scatters an estimate patch centred at `center` onto lattice voxels
    /// inside `domain` (all voxels when null).
    void scatter(const Index3& center, const Index3& half, std::span<const double> estimate,
                 const LabelMap* domain = nullptr);

    const Geometry& geometry() const { return geometry_; }
    int votes(std::size_t v) const { return votes_[v]; }
    int foreground_votes(std::size_t v) const { return fg_votes_[v]; }
    /// Mean of the accumulated estimates at a voxel, 0 when uncovered.
    double mean_value(std::size_t v) const { return votes_[v] ? value_sum_[v] / votes_[v] : 0.0; }

private:
    Geometry geometry_;
    std::vector<double> value_sum_;
    std::vector<int> fg_votes_;
    std::vector<int> votes_;
};

/// Majority vote of the covering estimates (> 0.5 counts as foreground,
/// ties are background) inside `domain`; `fallback` everywhere else and at
/// uncovered domain voxels.
LabelMap aggregate(const LabelPatchEstimate& est, const LabelMap& domain, const LabelMap& fallback);

struct PatchCandidate {
    int atlas = 0;
    std::size_t voxel = 0;
    double intensity_d2 = 0.0;
    double label_d2 = 0.0;
    double similarity = 0.0;
    double weight = 0.0;
};

struct CandidateSet {
    std::vector<PatchCandidate> candidates;  // pre-selected only
    Bandwidths bandwidths;
    std::size_t window_size = 0;  // patches examined over all atlases
};

/// Atlas patch library on the target lattice plus the target patches; all
/// inputs share one geometry. Patches reaching past the lattice are
/// mirror padded.
class PatchLibrary {
public:
    /// `target_labels` is required in combined mode and ignored otherwise.
    PatchLibrary(const Volume& target, const LabelMap* target_labels, std::span<const Volume> atlas_images,
                 std::span<const LabelMap> atlas_labels, const PatchConfig& cfg);
    /// Explicit half sizes in voxels (0 allowed), bypassing the mm radii.
    PatchLibrary(const Volume& target, const LabelMap* target_labels, std::span<const Volume> atlas_images,
                 std::span<const LabelMap> atlas_labels, const PatchConfig& cfg, const Index3& patch_half,
                 const Index3& search_half);

    const Geometry& geometry() const { return geom_; }
    const Index3& patch_half() const { return patch_half_; }
    const Index3& search_half() const { return search_half_; }
    std::size_t atlas_count() const { return atlas_img_.size(); }

    /// Pre-selects window patches of every atlas around x, computes the
    /// bandwidths over the whole windows and weights the survivors.
    CandidateSet candidates(const Index3& x) const;

    /// Label patch of atlas `atlas` centred at lattice voxel `voxel`.
    std::vector<double> label_patch(int atlas, std::size_t voxel) const;
    /// acc += weight * label_patch(atlas, voxel)
    void add_label_patch(int atlas, std::size_t voxel, double weight, std::span<double> acc) const;

    /// Single-point estimate Σ ω S(y) / Σ ω; negative when no candidate.
    double single_point(const Index3& x) const;

private:
    void init(const Volume& target, const LabelMap* target_labels, std::span<const Volume> atlas_images,
              std::span<const LabelMap> atlas_labels);
    std::size_t padded_index(const Index3& p) const;

    PatchConfig cfg_;
    Geometry geom_;
    Index3 patch_half_{}, search_half_{};
    Index3 pdims_{};
    Index3 margin_{};
    std::vector<std::ptrdiff_t> patch_offsets_;
    std::vector<std::ptrdiff_t> row_offsets_;  // first voxel of each x-row of a patch
    int row_length_ = 1;
    std::size_t words_ = 0;  // 64-bit words per packed label patch
    std::vector<float> target_img_;
    std::vector<float> target_lab_;
    std::vector<std::vector<float>> atlas_img_;
    std::vector<std::vector<float>> atlas_lab_;
    std::vector<std::vector<PatchStats>> atlas_img_stats_;  // per lattice voxel
    std::vector<std::vector<PatchStats>> atlas_lab_stats_;
    std::vector<std::vector<std::uint64_t>> atlas_bits_;  // packed label patches per lattice voxel
    std::vector<std::uint64_t> target_bits_;
};

struct PatchFusionResult {
    LabelMap labels;
    std::size_t decided = 0;            // domain voxels processed as patch centres
    std::size_t without_candidates = 0; // centres with no surviving candidate
    std::size_t fallback_voxels = 0;    // domain voxels with no covering estimate
    double mean_candidates = 0.0;
};

/// Multi-point patch labelling of every voxel of `domain`; voxels outside
/// the domain, and domain voxels no estimate reaches, keep `fallback`.
PatchFusionResult patch_fusion(const PatchLibrary& library, const LabelMap& domain, const LabelMap& fallback);

}  // namespace mafuse

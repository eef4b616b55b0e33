#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mafuse/filter_bank.hpp"
#include "mafuse/patch_fusion.hpp"
#include "mafuse/similarity.hpp"
#include "mafuse/volume.hpp"

namespace mafuse {

enum class FusionMethod { mv, staple, wv, crf, patch, combined };

std::string to_string(FusionMethod m);
/// Accepts mv, staple, wv, crf, patch, combined.
FusionMethod fusion_method_from_string(const std::string& s);
const std::vector<FusionMethod>& all_fusion_methods();

/// Every tunable of a run. Field names double as config-file keys.
struct PipelineConfig {
    int n_r = 15;
    int n_a = 10;
    std::string method = "combined";
    double lambda = 0.2;
    double c = -1.0;  // negative: 0.6 for isotropic, 0.8 for anisotropic spacing
    double q = 4.0;
    int k = 20;
    double epsilon = 0.85;
    double r_p = 1.5;
    double r_s = 4.0;
    double beta_i = 0.5;
    double beta_s = 1.0;
    int bins = 32;
    std::string filter_bank = "auto";  // auto, gaussian12 or steerable16
    int roi_margin = 3;
    int hist_levels = 256;
    std::string roi_name = "structure";
    std::string target;
    std::string target_affine;
    std::string library;
    std::string output;
    std::string truth;
    std::string report;

    /// Throws std::invalid_argument on out-of-range values.
    void validate() const;
    /// Effective `c` for a given voxel spacing.
    double contrast_mix(const Vec3& spacing) const;
    FilterBankKind bank_kind(const Vec3& spacing) const;
    PatchConfig patch_config(PatchMode mode) const;
};

/// Sets one field from its textual value. Throws std::invalid_argument for
/// an unknown key or an unparsable value.
void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value);
/// Reads flat `key = value` lines; '#' starts a comment.
PipelineConfig read_config_file(const std::filesystem::path& path, PipelineConfig base = {});
/// Every field as (key, value), in declaration order.
std::vector<std::pair<std::string, std::string>> config_entries(const PipelineConfig& cfg);
void write_config_echo(const std::filesystem::path& path, const PipelineConfig& cfg);

struct AtlasEntry {
    std::string id;
    Volume image;
    LabelMap labels;
    AffineTransform affine;  // common space -> atlas space
    /// Target common space -> atlas space, when a registration is available.
    std::optional<DisplacementField> field;
};

struct AtlasLibrary {
    std::vector<AtlasEntry> atlases;
    std::size_t size() const { return atlases.size(); }
};

/// Loads a CSV manifest `id,intensity_path,label_path,affine_path,dfield_path`.
/// Relative paths resolve against the manifest's directory; empty affine
/// means identity, empty dfield means none.
AtlasLibrary load_library(const std::filesystem::path& manifest);

struct TargetInput {
    Volume image;
    AffineTransform affine;  // common space -> target native space
};

/// Best-first ids of the `n` atlases most similar to the target.
std::vector<RankedAtlas> rank_and_select(const Volume& target, std::span<const Volume* const> images,
                                         std::span<const std::string> ids, SimilarityMetric metric, int n,
                                         const LabelMap* mask, int bins);

struct StageTiming {
    std::string stage;
    double seconds = 0.0;
};

struct MethodOutput {
    FusionMethod method = FusionMethod::combined;
    LabelMap labels;                // target native space
    std::optional<double> dice;     // when a ground truth was supplied
    std::vector<std::string> stages;  // stages this method depends on
};

struct PipelineResult {
    RegionOfInterest roi;
    Geometry roi_geometry;
    std::vector<MethodOutput> outputs;
    std::vector<StageTiming> timings;
    std::vector<std::string> warnings;
    std::vector<std::string> registration_ids;  // N_R selection, best first
    std::vector<std::string> patch_ids;         // N_A selection, best first
    LabelMap support_union;         // Ω* from the registered labels (ROI)
    LabelMap affine_support_union;  // same atlases, affine-only transfer (ROI)
    LabelMap uncertain;             // uncertainty mask of the registered labels (ROI)
    std::size_t patch_fallback_voxels = 0;

    const MethodOutput& output(FusionMethod m) const;
    double stage_seconds(const std::string& stage) const;
};

/// Runs the shared stages once and every requested method on top of them.
PipelineResult run_fusion(const TargetInput& target, const AtlasLibrary& library, const PipelineConfig& cfg,
                          std::span<const FusionMethod> methods, const LabelMap* truth = nullptr);

/// Metrics CSV with header `roi,method,dice,stage,seconds`.
std::string metrics_csv(const PipelineResult& res, const std::string& roi_name);

/// File-driven run of `cfg.method`: writes `cfg.output`, and `cfg.report`
/// plus `<report>.config.txt` when a report path is set.
PipelineResult run_pipeline(const PipelineConfig& cfg);

}  // namespace mafuse

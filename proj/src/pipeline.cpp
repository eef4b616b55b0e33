#include "mafuse/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "mafuse/crf.hpp"
#include "mafuse/global_fusion.hpp"
#include "mafuse/intensity.hpp"
#include "mafuse/io.hpp"
#include "mafuse/knn.hpp"
#include "mafuse/labels.hpp"
#include "mafuse/resample.hpp"

namespace mafuse {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    T v{};
    const std::string t = trim(text);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size())
        throw std::invalid_argument("config: bad value for " + key + ": '" + text + "'");
    return v;
}

std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

bool is_identity(const AffineTransform& a) {
    return a.matrix() == AffineTransform::identity().matrix();
}

double anisotropy(const Vec3& s) {
    return *std::max_element(s.begin(), s.end()) / *std::min_element(s.begin(), s.end());
}

class StageClock {
public:
    explicit StageClock(std::vector<StageTiming>& out) : out_(out) {}
    void start() { t0_ = std::chrono::steady_clock::now(); }
    void stop(const std::string& stage) {
        const auto t1 = std::chrono::steady_clock::now();
        out_.push_back({stage, std::chrono::duration<double>(t1 - t0_).count()});
    }

private:
    std::vector<StageTiming>& out_;
    std::chrono::steady_clock::time_point t0_{};
};

Volume to_common(const Volume& img, const AffineTransform& affine, const Geometry& common) {
    if (is_identity(affine) && img.geometry() == common)
        return img;
    return resample(img, affine, common, Interpolation::trilinear, 0.0);
}

LabelMap labels_to_common(const LabelMap& lab, const SignedDistanceMap& sdm, const AffineTransform& affine,
                          const Geometry& common) {
    if (is_identity(affine) && lab.geometry() == common)
        return lab;
    return transfer_labels_logodds(sdm, affine, common);
}

/// Likelihoods, prior and contrast terms feeding the graph cut.
LabelMap crf_fusion(const Volume& target, std::span<const Volume> warped, std::span<const LabelMap> labels,
                    std::span<const double> weights, const LabelMap& uncertain, const LabelMap& unanimous,
                    const PipelineConfig& cfg, std::vector<std::string>& warnings) {
    if (count_foreground(uncertain) == 0)
        return unanimous;
    const Geometry& g = target.geometry();
    const FilterBankKind kind = cfg.bank_kind(g.spacing);

    const FeatureVolume target_features = whiten(filter_bank(target, kind));
    std::vector<FeatureVolume> atlas_features;
    atlas_features.reserve(warped.size());
    for (const auto& w : warped)
        atlas_features.push_back(whiten(filter_bank(w, kind)));

    const LabelMap domain = dilate(uncertain);
    std::vector<std::array<double, 2>> likelihood(g.size(), {0.5, 0.5});
    try {
        std::size_t admitted = 0;
        for (std::size_t v = 0; v < domain.size(); ++v)
            admitted += domain[v] ? 1 : 0;
        const int k = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(cfg.k), admitted * warped.size()));
        const KnnModel model = build_knn_model(atlas_features, labels, domain, k);
        for (std::size_t v = 0; v < g.size(); ++v)
            if (uncertain[v])
                likelihood[v] = model.image_likelihood(target_features.at(v));
    } catch (const std::invalid_argument& e) {
        warnings.push_back(std::string("appearance model unavailable, using a flat likelihood: ") + e.what());
    }

    const PriorField prior = label_prior(labels, weights, cfg.q);
    Volume psi0(g, 0.0), psi1(g, 0.0);
    for (std::size_t v = 0; v < g.size(); ++v) {
        if (!uncertain[v])
            continue;
        const auto u = unary_potentials(likelihood[v], prior[v]);
        psi0[v] = u[0];
        psi1[v] = u[1];
    }
    const Volume grad = gradient_magnitude(target, 1.0);
    ContrastParams params;
    params.c = cfg.contrast_mix(g.spacing);
    params.sigma = robust_scale(target);
    params.sigma_g = mean_gradient(grad);
    const CrfModel model = build_energy(psi0, psi1, target, grad, uncertain, unanimous, cfg.lambda, params);
    return min_cut(model).labels;
}

}  // namespace

std::string to_string(FusionMethod m) {
    switch (m) {
    case FusionMethod::mv: return "mv";
    case FusionMethod::staple: return "staple";
    case FusionMethod::wv: return "wv";
    case FusionMethod::crf: return "crf";
    case FusionMethod::patch: return "patch";
    case FusionMethod::combined: return "combined";
    }
    return "?";
}

FusionMethod fusion_method_from_string(const std::string& s) {
    for (FusionMethod m : all_fusion_methods())
        if (to_string(m) == s)
            return m;
    throw std::invalid_argument("unknown fusion method '" + s + "'");
}

const std::vector<FusionMethod>& all_fusion_methods() {
    static const std::vector<FusionMethod> all{FusionMethod::mv,  FusionMethod::staple, FusionMethod::wv,
                                               FusionMethod::crf, FusionMethod::patch,  FusionMethod::combined};
    return all;
}

void PipelineConfig::validate() const {
    if (n_r < 1 || n_a < 1)
        throw std::invalid_argument("config: n_r and n_a must be >= 1");
    fusion_method_from_string(method);
    if (!(lambda >= 0.0))
        throw std::invalid_argument("config: lambda must be >= 0");
    if (c > 1.0)
        throw std::invalid_argument("config: c must be <= 1 (negative selects the default)");
    if (!(q > 0.0))
        throw std::invalid_argument("config: q must be > 0");
    if (k < 1)
        throw std::invalid_argument("config: k must be >= 1");
    if (bins < 2)
        throw std::invalid_argument("config: bins must be >= 2");
    if (roi_margin < 0)
        throw std::invalid_argument("config: roi_margin must be >= 0");
    if (hist_levels < 1)
        throw std::invalid_argument("config: hist_levels must be >= 1");
    if (filter_bank != "auto")
        filter_bank_from_string(filter_bank);
    patch_config(PatchMode::combined).validate();
}

double PipelineConfig::contrast_mix(const Vec3& spacing) const {
    if (c >= 0.0)
        return c;
    return anisotropy(spacing) > 1.3 ? 0.8 : 0.6;
}

FilterBankKind PipelineConfig::bank_kind(const Vec3& spacing) const {
    return filter_bank == "auto" ? select_filter_bank(spacing) : filter_bank_from_string(filter_bank);
}

PatchConfig PipelineConfig::patch_config(PatchMode mode) const {
    PatchConfig p;
    p.patch_radius_mm = r_p;
    p.search_radius_mm = r_s;
    p.epsilon = epsilon;
    p.beta_i = beta_i;
    p.beta_s = beta_s;
    p.mode = mode;
    return p;
}

void set_config_value(PipelineConfig& cfg, const std::string& key, const std::string& value) {
    const std::string k = trim(key);
    const std::string v = trim(value);
    if (k == "n_r") cfg.n_r = parse_number<int>(k, v);
    else if (k == "n_a") cfg.n_a = parse_number<int>(k, v);
    else if (k == "method") cfg.method = v;
    else if (k == "lambda") cfg.lambda = parse_number<double>(k, v);
    else if (k == "c") cfg.c = parse_number<double>(k, v);
    else if (k == "q") cfg.q = parse_number<double>(k, v);
    else if (k == "k") cfg.k = parse_number<int>(k, v);
    else if (k == "epsilon") cfg.epsilon = parse_number<double>(k, v);
    else if (k == "r_p") cfg.r_p = parse_number<double>(k, v);
    else if (k == "r_s") cfg.r_s = parse_number<double>(k, v);
    else if (k == "beta_i") cfg.beta_i = parse_number<double>(k, v);
    else if (k == "beta_s") cfg.beta_s = parse_number<double>(k, v);
    else if (k == "bins") cfg.bins = parse_number<int>(k, v);
    else if (k == "filter_bank") cfg.filter_bank = v;
    else if (k == "roi_margin") cfg.roi_margin = parse_number<int>(k, v);
    else if (k == "hist_levels") cfg.hist_levels = parse_number<int>(k, v);
    else if (k == "roi_name") cfg.roi_name = v;
    else if (k == "target") cfg.target = v;
    else if (k == "target_affine") cfg.target_affine = v;
    else if (k == "library") cfg.library = v;
    else if (k == "output") cfg.output = v;
    else if (k == "truth") cfg.truth = v;
    else if (k == "report") cfg.report = v;
    else throw std::invalid_argument("config: unknown key '" + k + "'");
}

PipelineConfig read_config_file(const std::filesystem::path& path, PipelineConfig base) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open config file " + path.string());
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        if (trim(line).empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
        set_config_value(base, line.substr(0, eq), line.substr(eq + 1));
    }
    return base;
}

std::vector<std::pair<std::string, std::string>> config_entries(const PipelineConfig& cfg) {
    return {
        {"n_r", std::to_string(cfg.n_r)},
        {"n_a", std::to_string(cfg.n_a)},
        {"method", cfg.method},
        {"lambda", format_double(cfg.lambda)},
        {"c", format_double(cfg.c)},
        {"q", format_double(cfg.q)},
        {"k", std::to_string(cfg.k)},
        {"epsilon", format_double(cfg.epsilon)},
        {"r_p", format_double(cfg.r_p)},
        {"r_s", format_double(cfg.r_s)},
        {"beta_i", format_double(cfg.beta_i)},
        {"beta_s", format_double(cfg.beta_s)},
        {"bins", std::to_string(cfg.bins)},
        {"filter_bank", cfg.filter_bank},
        {"roi_margin", std::to_string(cfg.roi_margin)},
        {"hist_levels", std::to_string(cfg.hist_levels)},
        {"roi_name", cfg.roi_name},
        {"target", cfg.target},
        {"target_affine", cfg.target_affine},
        {"library", cfg.library},
        {"output", cfg.output},
        {"truth", cfg.truth},
        {"report", cfg.report},
    };
}

void write_config_echo(const std::filesystem::path& path, const PipelineConfig& cfg) {
    std::ofstream out(path);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    for (const auto& [k, v] : config_entries(cfg))
        out << k << " = " << v << "\n";
}

AtlasLibrary load_library(const std::filesystem::path& manifest) {
    std::ifstream in(manifest);
    if (!in)
        throw std::runtime_error("cannot open library manifest " + manifest.string());
    const auto base = manifest.parent_path();
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path fp(p);
        return fp.is_absolute() ? fp : base / fp;
    };

    AtlasLibrary lib;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty())
            continue;
        std::vector<std::string> cols;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ','))
            cols.push_back(trim(cell));
        if (!line.empty() && line.back() == ',')
            cols.emplace_back();
        if (lineno == 1 && !cols.empty() && cols[0] == "id")
            continue;
        if (cols.size() != 5)
            throw std::runtime_error(manifest.string() + ":" + std::to_string(lineno) + ": expected 5 columns");
        if (cols[2].empty())
            throw std::runtime_error("atlas " + cols[0] + " has no label map");
        AtlasEntry e;
        e.id = cols[0];
        e.image = io::read_volume(resolve(cols[1]));
        e.labels = io::read_labels(resolve(cols[2]));
        require_same_geometry(e.labels.geometry(), e.image.geometry(), "atlas labels vs image");
        if (!cols[3].empty())
            e.affine = io::read_affine(resolve(cols[3]));
        if (!cols[4].empty())
            e.field = io::read_displacement(resolve(cols[4]));
        for (const auto& other : lib.atlases)
            if (other.id == e.id)
                throw std::runtime_error("duplicate atlas id " + e.id);
        lib.atlases.push_back(std::move(e));
    }
    if (lib.atlases.empty())
        throw std::runtime_error("library manifest lists no atlases");
    return lib;
}

std::vector<RankedAtlas> rank_and_select(const Volume& target, std::span<const Volume* const> images,
                                         std::span<const std::string> ids, SimilarityMetric metric, int n,
                                         const LabelMap* mask, int bins) {
    if (images.size() != ids.size())
        throw std::invalid_argument("rank_and_select: one id per image required");
    std::vector<AtlasRef> refs;
    for (std::size_t a = 0; a < images.size(); ++a)
        refs.push_back({ids[a], images[a]});
    auto ranked = rank_atlases(target, refs, metric, mask, bins);
    ranked.resize(std::min<std::size_t>(ranked.size(), static_cast<std::size_t>(std::max(n, 0))));
    return ranked;
}

const MethodOutput& PipelineResult::output(FusionMethod m) const {
    for (const auto& o : outputs)
        if (o.method == m)
            return o;
    throw std::out_of_range("no output for method " + to_string(m));
}

double PipelineResult::stage_seconds(const std::string& stage) const {
    double s = 0.0;
    for (const auto& t : timings)
        if (t.stage == stage)
            s += t.seconds;
    return s;
}

PipelineResult run_fusion(const TargetInput& target, const AtlasLibrary& library, const PipelineConfig& cfg,
                          std::span<const FusionMethod> methods, const LabelMap* truth) {
    cfg.validate();
    if (library.atlases.empty())
        throw std::invalid_argument("run_fusion: empty atlas library");
    if (methods.empty())
        throw std::invalid_argument("run_fusion: no fusion method requested");
    auto wants = [&](FusionMethod m) { return std::find(methods.begin(), methods.end(), m) != methods.end(); };
    const bool need_registered = wants(FusionMethod::mv) || wants(FusionMethod::staple) || wants(FusionMethod::wv) ||
                                 wants(FusionMethod::crf) || wants(FusionMethod::combined);
    const bool need_crf = wants(FusionMethod::crf) || wants(FusionMethod::combined);

    PipelineResult res;
    StageClock clock(res.timings);
    const std::size_t n_lib = library.size();

    // 1. spatial normalisation and ROI
    clock.start();
    const Geometry common = target.image.geometry();
    const Volume target_common = to_common(target.image, target.affine, common);
    std::vector<Volume> atlas_common;
    std::vector<LabelMap> labels_common;
    std::vector<SignedDistanceMap> sdms;
    std::vector<std::string> ids;
    for (const auto& a : library.atlases) {
        require_same_geometry(a.labels.geometry(), a.image.geometry(), "atlas labels vs image");
        sdms.push_back(signed_distance(a.labels));
        atlas_common.push_back(to_common(a.image, a.affine, common));
        labels_common.push_back(labels_to_common(a.labels, sdms.back(), a.affine, common));
        ids.push_back(a.id);
    }
    res.roi = bounding_roi(labels_common, cfg.roi_margin);
    const Volume target_roi = crop(target_common, res.roi);
    const Geometry& rg = target_roi.geometry();
    res.roi_geometry = rg;
    std::vector<Volume> atlas_roi;
    std::vector<LabelMap> affine_labels_roi;
    for (std::size_t a = 0; a < n_lib; ++a) {
        atlas_roi.push_back(crop(atlas_common[a], res.roi));
        affine_labels_roi.push_back(crop(labels_common[a], res.roi));
    }
    clock.stop("crop");

    // 2. MI ranking of the normalised atlases
    clock.start();
    std::vector<const Volume*> roi_ptrs;
    for (const auto& v : atlas_roi)
        roi_ptrs.push_back(&v);
    const int n_r = std::min<int>(cfg.n_r, static_cast<int>(n_lib));
    const auto reg_rank = rank_and_select(target_roi, roi_ptrs, ids, SimilarityMetric::mutual_information, n_r,
                                          nullptr, cfg.bins);
    std::vector<std::size_t> reg_sel;
    for (const auto& r : reg_rank) {
        res.registration_ids.push_back(r.id);
        reg_sel.push_back(static_cast<std::size_t>(std::find(ids.begin(), ids.end(), r.id) - ids.begin()));
    }
    clock.stop("rank_mi");

    // 3. non-rigid transfer of images and labels
    clock.start();
    std::vector<Volume> warped;
    std::vector<LabelMap> warped_labels;
    std::vector<LabelMap> sel_affine_labels;
    for (std::size_t a : reg_sel) {
        const auto& entry = library.atlases[a];
        sel_affine_labels.push_back(affine_labels_roi[a]);
        if (entry.field) {
            const DisplacementField& f = entry.field->geometry == common ? crop(*entry.field, res.roi) : *entry.field;
            warped.push_back(resample(entry.image, f, rg, Interpolation::trilinear, 0.0));
            warped_labels.push_back(transfer_labels_logodds(sdms[a], f, rg));
        } else {
            res.warnings.push_back("atlas " + entry.id +
                                   " has no displacement field; using its affine transfer in the registration stage");
            warped.push_back(atlas_roi[a]);
            warped_labels.push_back(affine_labels_roi[a]);
        }
    }
    clock.stop("transfer");

    // 4. support union and uncertainty
    clock.start();
    res.support_union = union_support(warped_labels);
    res.affine_support_union = union_support(sel_affine_labels);
    res.uncertain = uncertainty_mask(warped_labels);
    const LabelMap unanimous = majority_vote(warped_labels);
    clock.stop("support");

    std::map<FusionMethod, LabelMap> roi_out;
    std::map<FusionMethod, std::vector<std::string>> stages;
    const std::vector<std::string> base_stages{"crop", "rank_mi", "transfer", "support"};

    // 5. global fusion and the graph cut
    std::vector<double> weights;
    if (need_registered) {
        clock.start();
        for (const auto& w : warped)
            weights.push_back(semi_global_weight(target_roi, w, res.support_union, cfg.bins));
        clock.stop("weights");
    }
    if (wants(FusionMethod::mv)) {
        clock.start();
        roi_out[FusionMethod::mv] = unanimous;
        clock.stop("mv");
        stages[FusionMethod::mv] = {"mv"};
    }
    if (wants(FusionMethod::staple)) {
        clock.start();
        bool both = false;
        for (std::size_t v = 0; v < res.support_union.size() && !both; ++v)
            both = res.support_union[v] == 0;
        if (warped_labels.size() >= 2 && both && count_foreground(res.support_union) > 0) {
            roi_out[FusionMethod::staple] = staple_em(warped_labels).segmentation;
        } else {
            res.warnings.push_back("STAPLE needs two raters and both classes; using majority voting");
            roi_out[FusionMethod::staple] = unanimous;
        }
        clock.stop("staple");
        stages[FusionMethod::staple] = {"staple"};
    }
    if (wants(FusionMethod::wv)) {
        clock.start();
        roi_out[FusionMethod::wv] = threshold(label_prior(warped_labels, weights, cfg.q), 0.5, true);
        clock.stop("wv");
        stages[FusionMethod::wv] = {"weights", "wv"};
    }
    LabelMap crf_labels;
    if (need_crf) {
        clock.start();
        crf_labels =
            crf_fusion(target_roi, warped, warped_labels, weights, res.uncertain, unanimous, cfg, res.warnings);
        clock.stop("crf");
        if (wants(FusionMethod::crf)) {
            roi_out[FusionMethod::crf] = crf_labels;
            stages[FusionMethod::crf] = {"weights", "crf"};
        }
    }

    // 6-7. patch fusion on histogram-matched, affinely aligned atlases
    if (wants(FusionMethod::patch) || wants(FusionMethod::combined)) {
        clock.start();
        std::vector<Volume> matched;
        matched.reserve(n_lib);
        for (const auto& a : atlas_roi)
            matched.push_back(histogram_match(a, target_roi, cfg.hist_levels));
        std::vector<const Volume*> mptrs;
        for (const auto& m : matched)
            mptrs.push_back(&m);
        const int n_a = std::min<int>(cfg.n_a, static_cast<int>(n_lib));
        clock.stop("hist_match");

        auto select = [&](const LabelMap& mask, std::vector<Volume>& imgs, std::vector<LabelMap>& labs) {
            const LabelMap* m = count_foreground(mask) > 0 ? &mask : nullptr;
            const auto ranked = rank_and_select(target_roi, mptrs, ids, SimilarityMetric::ssd, n_a, m, cfg.bins);
            std::vector<std::string> sel;
            for (const auto& r : ranked) {
                const auto a = static_cast<std::size_t>(std::find(ids.begin(), ids.end(), r.id) - ids.begin());
                imgs.push_back(matched[a]);
                labs.push_back(affine_labels_roi[a]);
                sel.push_back(r.id);
            }
            return sel;
        };

        if (wants(FusionMethod::combined)) {
            clock.start();
            std::vector<Volume> imgs;
            std::vector<LabelMap> labs;
            res.patch_ids = select(res.support_union, imgs, labs);
            clock.stop("rank_ssd");
            clock.start();
            const PatchLibrary lib(target_roi, &crf_labels, imgs, labs, cfg.patch_config(PatchMode::combined));
            const auto pf = patch_fusion(lib, res.uncertain, crf_labels);
            res.patch_fallback_voxels = pf.fallback_voxels;
            roi_out[FusionMethod::combined] = pf.labels;
            clock.stop("patch_combined");
            stages[FusionMethod::combined] = {"weights", "crf", "hist_match", "rank_ssd", "patch_combined"};
        }
        if (wants(FusionMethod::patch)) {
            clock.start();
            std::vector<Volume> imgs;
            std::vector<LabelMap> labs;
            const LabelMap affine_union = union_support(affine_labels_roi);
            select(affine_union, imgs, labs);
            clock.stop("rank_ssd_affine");
            clock.start();
            const LabelMap domain = uncertainty_mask(labs);
            const LabelMap fallback = majority_vote(labs);
            const PatchLibrary lib(target_roi, nullptr, imgs, labs, cfg.patch_config(PatchMode::conventional));
            roi_out[FusionMethod::patch] = patch_fusion(lib, domain, fallback).labels;
            clock.stop("patch_conventional");
            stages[FusionMethod::patch] = {"hist_match", "rank_ssd_affine", "patch_conventional"};
        }
    }

    // 8. back to the target's native space
    clock.start();
    for (FusionMethod m : methods) {
        if (!roi_out.count(m))
            continue;
        const LabelMap full = uncrop(LabelMap(common, 0), roi_out[m], res.roi);
        MethodOutput o;
        o.method = m;
        if (is_identity(target.affine))
            o.labels = full;
        else
            o.labels = resample_labels(full, target.affine.inverse(), target.image.geometry());
        if (truth) {
            require_same_geometry(truth->geometry(), o.labels.geometry(), "ground truth vs output");
            o.dice = count_foreground(*truth) + count_foreground(o.labels) > 0 ? dice(o.labels, *truth) : 1.0;
        }
        o.stages = base_stages;
        for (const auto& s : stages[m])
            o.stages.push_back(s);
        o.stages.push_back("native");
        res.outputs.push_back(std::move(o));
    }
    clock.stop("native");
    return res;
}

std::string metrics_csv(const PipelineResult& res, const std::string& roi_name) {
    std::ostringstream out;
    out << "roi,method,dice,stage,seconds\n";
    char buf[64];
    for (const auto& o : res.outputs) {
        std::string d;
        if (o.dice) {
            std::snprintf(buf, sizeof buf, "%.6f", *o.dice);
            d = buf;
        }
        double total = 0.0;
        for (const auto& s : o.stages) {
            const double sec = res.stage_seconds(s);
            total += sec;
            std::snprintf(buf, sizeof buf, "%.6f", sec);
            out << roi_name << "," << to_string(o.method) << "," << d << "," << s << "," << buf << "\n";
        }
        std::snprintf(buf, sizeof buf, "%.6f", total);
        out << roi_name << "," << to_string(o.method) << "," << d << ",total," << buf << "\n";
    }
    return out.str();
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
    cfg.validate();
    if (cfg.target.empty() || cfg.library.empty())
        throw std::invalid_argument("run_pipeline: target and library are required");
    TargetInput target;
    target.image = io::read_volume(cfg.target);
    if (!cfg.target_affine.empty())
        target.affine = io::read_affine(cfg.target_affine);
    const AtlasLibrary library = load_library(cfg.library);
    std::optional<LabelMap> truth;
    if (!cfg.truth.empty())
        truth = io::read_labels(cfg.truth);

    const FusionMethod method = fusion_method_from_string(cfg.method);
    const std::vector<FusionMethod> methods{method};
    PipelineResult res = run_fusion(target, library, cfg, methods, truth ? &*truth : nullptr);
    for (const auto& w : res.warnings)
        std::cerr << "WARNING: " << w << "\n";

    if (!cfg.output.empty())
        io::write_labels(cfg.output, res.outputs.front().labels);
    if (!cfg.report.empty()) {
        std::ofstream rep(cfg.report);
        if (!rep)
            throw std::runtime_error("cannot write report " + cfg.report);
        rep << metrics_csv(res, cfg.roi_name);
        write_config_echo(cfg.report + ".config.txt", cfg);
    }
    return res;
}

}  // namespace mafuse

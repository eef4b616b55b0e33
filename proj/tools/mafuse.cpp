// Command-line front end: rank, fuse, phantom, eval, info.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mafuse/io.hpp"
#include "mafuse/labels.hpp"
#include "mafuse/phantom.hpp"
#include "mafuse/pipeline.hpp"
#include "mafuse/resample.hpp"
#include "mafuse/similarity.hpp"

namespace {

using namespace mafuse;

std::string shortest(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, r.ptr);
    if (s.find_first_of(".en") == std::string::npos)
        s += ".0";
    return s;
}

std::vector<FusionMethod> parse_methods(const std::string& list) {
    std::vector<FusionMethod> out;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty())
            out.push_back(fusion_method_from_string(item));
    if (out.empty())
        throw std::invalid_argument("no fusion method given");
    return out;
}

/// Keys exposed as flags; the flag is the key with '-' for '_'.
const std::vector<std::string>& tunable_keys() {
    static const std::vector<std::string> keys{"n_r",    "n_a",    "lambda", "c",        "q",           "k",
                                               "epsilon", "r_p",   "r_s",    "beta_i",   "beta_s",      "bins",
                                               "filter_bank", "roi_margin", "hist_levels", "roi_name"};
    return keys;
}

std::string flag_name(const std::string& key) {
    std::string f = "--" + key;
    for (auto& ch : f)
        if (ch == '_')
            ch = '-';
    return f;
}

void add_tunables(CLI::App* cmd, std::map<std::string, std::string>& values) {
    for (const auto& key : tunable_keys())
        cmd->add_option(flag_name(key), values[key], "pipeline parameter " + key);
}

void apply_tunables(CLI::App* cmd, const std::map<std::string, std::string>& values, PipelineConfig& cfg) {
    for (const auto& key : tunable_keys())
        if (cmd->count(flag_name(key)) > 0)
            set_config_value(cfg, key, values.at(key));
}

void print_volume_info(const std::string& path) {
    const Volume v = io::read_volume(path);
    const Geometry& g = v.geometry();
    double lo = v[0], hi = v[0];
    std::size_t nonzero = 0;
    for (double x : v.data()) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
        nonzero += x != 0.0 ? 1 : 0;
    }
    std::printf("path,%s\n", path.c_str());
    std::printf("dims,%d,%d,%d\n", g.dims[0], g.dims[1], g.dims[2]);
    std::printf("spacing,%s,%s,%s\n", shortest(g.spacing[0]).c_str(), shortest(g.spacing[1]).c_str(),
                shortest(g.spacing[2]).c_str());
    std::printf("origin,%s,%s,%s\n", shortest(g.origin[0]).c_str(), shortest(g.origin[1]).c_str(),
                shortest(g.origin[2]).c_str());
    std::printf("range,%s,%s\n", shortest(lo).c_str(), shortest(hi).c_str());
    std::printf("nonzero,%zu\n", nonzero);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-atlas label fusion"};
    app.require_subcommand(1);

    // rank
    auto* rank = app.add_subcommand("rank", "Rank library atlases against a target");
    std::string rank_target, rank_library, rank_metric = "mi", rank_mask;
    int rank_bins = 32;
    rank->add_option("--target", rank_target, "target intensity volume")->required()->check(CLI::ExistingFile);
    rank->add_option("--library", rank_library, "library manifest CSV")->required()->check(CLI::ExistingFile);
    rank->add_option("--metric", rank_metric, "mi or ssd")->check(CLI::IsMember({"mi", "ssd"}));
    rank->add_option("--mask", rank_mask, "optional mask volume")->check(CLI::ExistingFile);
    rank->add_option("--bins", rank_bins, "histogram bins for mi")->check(CLI::Range(2, 4096));

    // fuse
    auto* fuse = app.add_subcommand("fuse", "Segment a target with the atlas library");
    std::string fuse_config;
    PipelineConfig fuse_cli;
    std::map<std::string, std::string> fuse_values;
    fuse->add_option("--config", fuse_config, "key = value config file")->check(CLI::ExistingFile);
    fuse->add_option("--method", fuse_cli.method, "fusion method")
        ->check(CLI::IsMember({"mv", "staple", "wv", "crf", "patch", "combined"}));
    fuse->add_option("--target", fuse_cli.target, "target intensity volume");
    fuse->add_option("--target-affine", fuse_cli.target_affine, "common space -> target affine");
    fuse->add_option("--library", fuse_cli.library, "library manifest CSV");
    fuse->add_option("--out,--output", fuse_cli.output, "output label volume");
    fuse->add_option("--truth", fuse_cli.truth, "ground-truth labels for Dice");
    fuse->add_option("--report", fuse_cli.report, "metrics CSV");
    add_tunables(fuse, fuse_values);

    // phantom
    auto* phantom = app.add_subcommand("phantom", "Synthetic cohorts");
    phantom->require_subcommand(1);
    auto* gen = phantom->add_subcommand("generate", "Write a cohort and a manifest for one target");
    std::string gen_spec, gen_out;
    int gen_n = 11, gen_target = 0;
    std::optional<std::uint64_t> gen_seed;
    gen->add_option("--spec", gen_spec, "phantom spec file")->check(CLI::ExistingFile);
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--n", gen_n, "subjects")->check(CLI::Range(3, 1000));
    gen->add_option("--target", gen_target, "subject left out of the manifest")->check(CLI::NonNegativeNumber);
    gen->add_option("--seed", gen_seed, "random seed");

    auto* loo = phantom->add_subcommand("loo", "Leave-one-out evaluation on a generated cohort");
    std::string loo_spec, loo_config, loo_out, loo_folds, loo_methods = "mv,staple,wv,crf,patch,combined";
    int loo_n = 11;
    std::optional<std::uint64_t> loo_seed;
    std::map<std::string, std::string> loo_values;
    loo->add_option("--spec", loo_spec, "phantom spec file")->check(CLI::ExistingFile);
    loo->add_option("--config", loo_config, "pipeline config file")->check(CLI::ExistingFile);
    loo->add_option("--n", loo_n, "subjects")->check(CLI::Range(3, 1000));
    loo->add_option("--seed", loo_seed, "random seed");
    loo->add_option("--methods", loo_methods, "comma-separated fusion methods");
    loo->add_option("--out", loo_out, "summary CSV (stdout when absent)");
    loo->add_option("--folds", loo_folds, "per-fold CSV");
    add_tunables(loo, loo_values);

    // eval
    auto* eval = app.add_subcommand("eval", "Dice between an automatic and a reference segmentation");
    std::string eval_auto, eval_truth;
    eval->add_option("--auto", eval_auto, "automatic labels")->required()->check(CLI::ExistingFile);
    eval->add_option("--truth", eval_truth, "reference labels")->required()->check(CLI::ExistingFile);

    // info
    auto* info = app.add_subcommand("info", "Describe a volume, or print the defaults");
    std::string info_path;
    info->add_option("path", info_path, "volume file")->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return 2;
    }

    try {
        if (*rank) {
            const Volume target = io::read_volume(rank_target);
            const AtlasLibrary lib = load_library(rank_library);
            std::vector<Volume> images;
            std::vector<std::string> ids;
            for (const auto& a : lib.atlases) {
                images.push_back(resample(a.image, a.affine, target.geometry()));
                ids.push_back(a.id);
            }
            std::vector<const Volume*> ptrs;
            for (const auto& v : images)
                ptrs.push_back(&v);
            std::optional<LabelMap> mask;
            if (!rank_mask.empty())
                mask = io::read_labels(rank_mask);
            const auto metric = rank_metric == "ssd" ? SimilarityMetric::ssd : SimilarityMetric::mutual_information;
            const auto ranked = rank_and_select(target, ptrs, ids, metric, static_cast<int>(ids.size()),
                                                mask ? &*mask : nullptr, rank_bins);
            std::printf("rank,id,score\n");
            for (std::size_t i = 0; i < ranked.size(); ++i)
                std::printf("%zu,%s,%s\n", i + 1, ranked[i].id.c_str(), shortest(ranked[i].score).c_str());
            return 0;
        }
        if (*fuse) {
            PipelineConfig cfg;
            if (!fuse_config.empty())
                cfg = read_config_file(fuse_config);
            if (fuse->count("--method")) cfg.method = fuse_cli.method;
            if (fuse->count("--target")) cfg.target = fuse_cli.target;
            if (fuse->count("--target-affine")) cfg.target_affine = fuse_cli.target_affine;
            if (fuse->count("--library")) cfg.library = fuse_cli.library;
            if (fuse->count("--out")) cfg.output = fuse_cli.output;
            if (fuse->count("--truth")) cfg.truth = fuse_cli.truth;
            if (fuse->count("--report")) cfg.report = fuse_cli.report;
            apply_tunables(fuse, fuse_values, cfg);
            if (cfg.target.empty() || cfg.library.empty()) {
                std::cerr << "fuse: --target and --library are required (flag or config)\n" << fuse->help();
                return 2;
            }
            const PipelineResult res = run_pipeline(cfg);
            std::cout << metrics_csv(res, cfg.roi_name);
            return 0;
        }
        if (*phantom) {
            if (*gen) {
                PhantomSpec spec;
                if (!gen_spec.empty())
                    spec = read_phantom_spec(gen_spec);
                if (gen_seed)
                    spec.seed = *gen_seed;
                if (gen_target >= gen_n) {
                    std::cerr << "phantom generate: --target must be below --n\n";
                    return 2;
                }
                const Cohort cohort = generate_cohort(spec, gen_n);
                write_cohort(cohort, static_cast<std::size_t>(gen_target), gen_out);
                std::printf("wrote %d subjects to %s (target subject_%02d, manifest.csv)\n", gen_n, gen_out.c_str(),
                            gen_target);
                return 0;
            }
            if (*loo) {
                PhantomSpec spec;
                if (!loo_spec.empty())
                    spec = read_phantom_spec(loo_spec);
                if (loo_seed)
                    spec.seed = *loo_seed;
                PipelineConfig cfg;
                if (!loo_config.empty())
                    cfg = read_config_file(loo_config);
                apply_tunables(loo, loo_values, cfg);
                const auto methods = parse_methods(loo_methods);
                const Cohort cohort = generate_cohort(spec, loo_n);
                const LooResult r = leave_one_out(cohort, cfg, methods);
                const std::string summary = loo_summary_csv(r);
                if (loo_out.empty()) {
                    std::cout << summary;
                } else {
                    std::ofstream(loo_out) << summary;
                }
                if (!loo_folds.empty())
                    std::ofstream(loo_folds) << loo_folds_csv(r);
                return 0;
            }
        }
        if (*eval) {
            const LabelMap a = io::read_labels(eval_auto);
            const LabelMap t = io::read_labels(eval_truth);
            std::printf("dice,%s\n", shortest(dice(a, t)).c_str());
            return 0;
        }
        if (*info) {
            if (!info_path.empty()) {
                print_volume_info(info_path);
            } else {
                std::printf("mafuse multi-atlas label fusion\nmethods,mv,staple,wv,crf,patch,combined\n");
                for (const auto& [k, v] : config_entries(PipelineConfig{}))
                    std::printf("%s,%s\n", k.c_str(), v.c_str());
            }
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

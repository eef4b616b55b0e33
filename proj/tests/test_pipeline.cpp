// I/O round trips, configuration, manifests and end-to-end fusion runs.

#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "mafuse/io.hpp"
#include "mafuse/labels.hpp"
#include "mafuse/phantom.hpp"
#include "mafuse/pipeline.hpp"
#include "mafuse/resample.hpp"
#include "test_util.hpp"

using namespace mafuse;
using namespace mafuse::test;

namespace {

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// CSV text with the trailing seconds column removed from every row.
std::string without_seconds(const std::string& csv) {
    std::istringstream in(csv);
    std::string line, out;
    while (std::getline(in, line))
        out += line.substr(0, line.rfind(',')) + "\n";
    return out;
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("volume and label round trips in both formats") {
    TempDir dir("io");
    std::mt19937_64 rng(81);
    const Geometry g = make_geometry({7, 5, 4}, {0.9375, 1.5, 0.9375}, {-3.0, 2.5, 10.0});
    Volume v(g);
    std::uniform_int_distribution<int> u(-500, 500);
    for (auto& x : v.storage())
        x = u(rng) / 8.0;  // exact in float32
    const LabelMap l = random_labels(g, rng);
    for (const std::string ext : {".nii", ".mvol"}) {
        io::write_volume(dir / ("v" + ext), v);
        io::write_labels(dir / ("l" + ext), l);
        const Volume rv = io::read_volume(dir / ("v" + ext));
        const LabelMap rl = io::read_labels(dir / ("l" + ext));
        CHECK(rv.geometry() == g);
        CHECK(rv == v);
        CHECK(rl == l);
    }
    CHECK_THROWS_AS(io::read_volume(dir / "missing.nii"), std::runtime_error);
}

TEST_CASE("affine and displacement round trips") {
    TempDir dir("io");
    const AffineTransform a({1.5, 0.1, 0, 2, 0, 0.9, 0.2, -1, 0, 0, 1.1, 0.5, 0, 0, 0, 1});
    io::write_affine(dir / "a.txt", a);
    const AffineTransform ra = io::read_affine(dir / "a.txt");
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c)
            CHECK(ra(r, c) == a(r, c));

    const Geometry g = make_geometry({4, 3, 2}, {1.0, 2.0, 1.0}, {5.0, 0.0, -1.0});
    DisplacementField f(g);
    for (std::size_t i = 0; i < f.displacement.size(); ++i)
        f.displacement[i] = {i * 0.25, -0.5 * i, 1.0};
    for (const std::string name : {"f.nii", "f"}) {
        io::write_displacement(dir / name, f);
        const DisplacementField rf = io::read_displacement(dir / name);
        CHECK(rf.geometry == g);
        CHECK(rf.displacement == f.displacement);
    }
}

TEST_CASE("read_labels treats any nonzero value as foreground") {
    TempDir dir("io");
    const Geometry g = make_geometry({3, 1, 1});
    Volume v(g);
    v[0] = 0.0;
    v[1] = 2.0;
    v[2] = -1.0;
    io::write_volume(dir / "m.nii", v);
    const LabelMap l = io::read_labels(dir / "m.nii");
    CHECK(l[0] == 0);
    CHECK(l[1] == 1);
    CHECK(l[2] == 1);
}

}  // TEST_SUITE

TEST_SUITE("pipeline") {

TEST_CASE("config: keys, values, files and validation") {
    PipelineConfig cfg;
    set_config_value(cfg, "n_r", "7");
    set_config_value(cfg, "lambda", "0.35");
    set_config_value(cfg, "filter_bank", "gaussian12");
    set_config_value(cfg, "method", "crf");
    CHECK(cfg.n_r == 7);
    CHECK(cfg.lambda == 0.35);
    CHECK(cfg.filter_bank == "gaussian12");
    CHECK_THROWS_AS(set_config_value(cfg, "nr", "7"), std::invalid_argument);
    CHECK_THROWS_AS(set_config_value(cfg, "k", "twenty"), std::invalid_argument);
    CHECK_THROWS_AS(set_config_value(cfg, "k", "3.5"), std::invalid_argument);

    TempDir dir("cfg");
    {
        std::ofstream out(dir / "run.cfg");
        out << "# comment\n n_a = 4  # trailing\n\nepsilon=0.9\nmethod = patch\n";
    }
    const PipelineConfig f = read_config_file(dir / "run.cfg");
    CHECK(f.n_a == 4);
    CHECK(f.epsilon == 0.9);
    CHECK(f.method == "patch");
    CHECK(f.n_r == 15);

    PipelineConfig back;
    for (const auto& [k, v] : config_entries(cfg))
        set_config_value(back, k, v);
    CHECK(config_entries(back) == config_entries(cfg));

    PipelineConfig bad;
    bad.n_a = 0;
    CHECK_THROWS(bad.validate());
    bad = {};
    bad.lambda = -1;
    CHECK_THROWS(bad.validate());
    bad = {};
    bad.method = "vote";
    CHECK_THROWS(bad.validate());
}

TEST_CASE("config: defaults that depend on the spacing") {
    const PipelineConfig cfg;
    CHECK(cfg.contrast_mix({1.0, 1.0, 1.0}) == 0.6);
    CHECK(cfg.contrast_mix({0.9375, 1.5, 0.9375}) == 0.8);
    CHECK(cfg.bank_kind({0.9375, 1.5, 0.9375}) == FilterBankKind::gaussian12);
    const PatchConfig pc = cfg.patch_config(PatchMode::combined);
    CHECK(pc.patch_radius_mm == 1.5);
    CHECK(pc.search_radius_mm == 4.0);
    CHECK(pc.epsilon == 0.85);
}

TEST_CASE("fusion method names round trip") {
    for (FusionMethod m : all_fusion_methods())
        CHECK(fusion_method_from_string(to_string(m)) == m);
    CHECK(all_fusion_methods().size() == 6);
    CHECK_THROWS(fusion_method_from_string("joint"));
}

TEST_CASE("library manifest: relative paths, optional columns and errors") {
    TempDir dir("lib");
    std::mt19937_64 rng(82);
    const Geometry g = make_geometry({6, 6, 6});
    std::filesystem::create_directories(dir / "data");
    for (const char* id : {"a", "b"}) {
        io::write_volume(dir / ("data/" + std::string(id) + ".nii"), random_volume(g, rng));
        io::write_labels(dir / ("data/" + std::string(id) + "_l.nii"), random_labels(g, rng));
    }
    io::write_affine(dir / "data/b.affine", AffineTransform::translation({1.0, 0.0, 0.0}));
    io::write_displacement(dir / "data/b_field.nii", DisplacementField(g));
    {
        std::ofstream out(dir / "manifest.csv");
        out << "id,intensity_path,label_path,affine_path,dfield_path\n"
            << "a,data/a.nii,data/a_l.nii,,\n"
            << "b,data/b.nii,data/b_l.nii,data/b.affine,data/b_field.nii\n";
    }
    const AtlasLibrary lib = load_library(dir / "manifest.csv");
    REQUIRE(lib.size() == 2);
    CHECK(lib.atlases[0].id == "a");
    CHECK_FALSE(lib.atlases[0].field.has_value());
    CHECK(lib.atlases[0].affine(0, 3) == 0.0);
    CHECK(lib.atlases[1].field.has_value());
    CHECK(lib.atlases[1].affine(0, 3) == 1.0);

    {
        std::ofstream out(dir / "nolabel.csv");
        out << "a,data/a.nii,,,\n";
    }
    CHECK_THROWS_AS(load_library(dir / "nolabel.csv"), std::runtime_error);
    {
        std::ofstream out(dir / "dup.csv");
        out << "a,data/a.nii,data/a_l.nii,,\na,data/b.nii,data/b_l.nii,,\n";
    }
    CHECK_THROWS_AS(load_library(dir / "dup.csv"), std::runtime_error);
}

TEST_CASE("rank_and_select keeps the best n") {
    std::mt19937_64 rng(83);
    const Geometry g = make_geometry({12, 12, 12});
    const Volume t = random_volume(g, rng);
    const Volume far = random_volume(g, rng);
    Volume near = t;
    for (auto& x : near.storage())
        x += 0.01;
    const std::vector<const Volume*> imgs{&far, &t, &near};
    const std::vector<std::string> ids{"far", "copy", "near"};
    const auto r = rank_and_select(t, imgs, ids, SimilarityMetric::ssd, 2, nullptr, 32);
    REQUIRE(r.size() == 2);
    CHECK(r[0].id == "copy");
    CHECK(r[1].id == "near");
}

TEST_CASE("self-segmentation: a library holding the target reproduces its labels") {
    const Cohort cohort = generate_cohort(small_phantom_spec(), 4);
    AtlasLibrary lib = fold_library(cohort, 0);
    AtlasEntry self;
    self.id = "self";
    self.image = cohort.subjects[0].image;
    self.labels = cohort.subjects[0].labels;
    self.field = DisplacementField(cohort.field_geometry);
    lib.atlases.push_back(self);
    const TargetInput target{cohort.subjects[0].image, cohort.subjects[0].affine};
    const std::vector<FusionMethod> methods{FusionMethod::patch, FusionMethod::combined};
    const PipelineResult r = run_fusion(target, lib, PipelineConfig{}, methods, &cohort.subjects[0].labels);
    CHECK(r.registration_ids.front() == "self");
    CHECK(r.patch_ids.front() == "self");
    CHECK(*r.output(FusionMethod::combined).dice >= 0.99);
    CHECK(*r.output(FusionMethod::patch).dice >= 0.99);
}

TEST_CASE("majority voting on a unanimous library returns the shared labels") {
    const Cohort cohort = generate_cohort(small_phantom_spec(), 3);
    AtlasLibrary lib;
    for (int i = 0; i < 3; ++i) {
        AtlasEntry e;
        e.id = "copy" + std::to_string(i);
        e.image = cohort.subjects[1].image;
        e.labels = cohort.subjects[1].labels;
        e.field = DisplacementField(cohort.field_geometry);
        lib.atlases.push_back(e);
    }
    const TargetInput target{cohort.subjects[1].image, AffineTransform::identity()};
    const std::vector<FusionMethod> all = all_fusion_methods();
    const PipelineResult r = run_fusion(target, lib, PipelineConfig{}, all);
    for (FusionMethod m : all)
        CHECK(r.output(m).labels == cohort.subjects[1].labels);
    CHECK(count_foreground(r.uncertain) == 0);
}

TEST_CASE("one atlas: majority voting equals its transferred labels") {
    const Cohort cohort = generate_cohort(small_phantom_spec(), 3);
    AtlasLibrary lib = fold_library(cohort, 0);
    lib.atlases.resize(1);
    const TargetInput target{cohort.subjects[0].image, AffineTransform::identity()};
    const std::vector<FusionMethod> mv{FusionMethod::mv, FusionMethod::staple};
    const PipelineResult r = run_fusion(target, lib, PipelineConfig{}, mv);
    const Geometry& g = cohort.subjects[0].image.geometry();
    const DisplacementField& f = *lib.atlases[0].field;
    // the field covers the structure; outside it the affine transfer applies
    const LabelMap direct = transfer_labels_logodds(signed_distance(lib.atlases[0].labels), f, g);
    const LabelMap out = r.output(FusionMethod::mv).labels;
    const RegionOfInterest roi = r.roi;
    for (int k = 0; k < g.dims[2]; ++k)
        for (int j = 0; j < g.dims[1]; ++j)
            for (int i = 0; i < g.dims[0]; ++i) {
                const Vec3 p = g.physical(i, j, k);
                const Vec3 c = f.geometry.continuous_index(p);
                const bool in_field = c[0] >= 0 && c[1] >= 0 && c[2] >= 0 && c[0] <= f.geometry.dims[0] - 1 &&
                                      c[1] <= f.geometry.dims[1] - 1 && c[2] <= f.geometry.dims[2] - 1;
                const bool in_roi = i >= roi.lo[0] && i <= roi.hi[0] && j >= roi.lo[1] && j <= roi.hi[1] &&
                                    k >= roi.lo[2] && k <= roi.hi[2];
                if (in_field && in_roi)
                    REQUIRE(out.at(i, j, k) == direct.at(i, j, k));
            }
    CHECK(std::any_of(r.warnings.begin(), r.warnings.end(),
                      [](const std::string& w) { return w.find("STAPLE") != std::string::npos; }));
    CHECK(r.output(FusionMethod::staple).labels == out);
}

TEST_CASE("missing displacement fields degrade to affine transfer with a warning") {
    const Cohort cohort = generate_cohort(small_phantom_spec(), 4);
    AtlasLibrary lib = fold_library(cohort, 0);
    lib.atlases[1].field.reset();
    const TargetInput target{cohort.subjects[0].image, AffineTransform::identity()};
    const std::vector<FusionMethod> m{FusionMethod::mv, FusionMethod::crf};
    const PipelineResult r = run_fusion(target, lib, PipelineConfig{}, m, &cohort.subjects[0].labels);
    CHECK(std::any_of(r.warnings.begin(), r.warnings.end(), [&](const std::string& w) {
        return w.find(lib.atlases[1].id) != std::string::npos;
    }));
    CHECK(*r.output(FusionMethod::crf).dice > 0.5);
}

TEST_CASE("missing atlas labels are a hard error") {
    const Cohort cohort = generate_cohort(small_phantom_spec(), 3);
    AtlasLibrary lib = fold_library(cohort, 0);
    lib.atlases[0].labels = LabelMap();
    const TargetInput target{cohort.subjects[0].image, AffineTransform::identity()};
    const std::vector<FusionMethod> m{FusionMethod::mv};
    CHECK_THROWS(run_fusion(target, lib, PipelineConfig{}, m));
}

TEST_CASE("metrics report layout and determinism") {
    const Cohort cohort = generate_cohort(small_phantom_spec(), 4);
    const AtlasLibrary lib = fold_library(cohort, 2);
    const TargetInput target{cohort.subjects[2].image, AffineTransform::identity()};
    const std::vector<FusionMethod> all = all_fusion_methods();
    const PipelineResult a = run_fusion(target, lib, PipelineConfig{}, all, &cohort.subjects[2].labels);
    const PipelineResult b = run_fusion(target, lib, PipelineConfig{}, all, &cohort.subjects[2].labels);
    for (FusionMethod m : all) {
        CHECK(a.output(m).labels == b.output(m).labels);
        CHECK(*a.output(m).dice == *b.output(m).dice);
    }
    const std::string csv = metrics_csv(a, "left");
    CHECK(csv.rfind("roi,method,dice,stage,seconds\n", 0) == 0);
    CHECK(csv.find("left,combined,") != std::string::npos);
    CHECK(csv.find(",total,") != std::string::npos);
    CHECK(without_seconds(csv) == without_seconds(metrics_csv(b, "left")));
    for (const char* stage : {"crop", "rank_mi", "transfer", "crf", "patch_combined", "native"})
        CHECK(a.stage_seconds(stage) >= 0.0);
}

TEST_CASE("file-driven run writes labels, report and config echo") {
    TempDir dir("run");
    const Cohort cohort = generate_cohort(small_phantom_spec(), 4);
    write_cohort(cohort, 0, dir.path());
    PipelineConfig cfg;
    cfg.method = "wv";
    cfg.target = (dir / "subject_00.nii").string();
    cfg.target_affine = (dir / "subject_00.affine").string();
    cfg.library = (dir / "manifest.csv").string();
    cfg.truth = (dir / "subject_00_labels.nii").string();
    cfg.output = (dir / "out.nii").string();
    cfg.report = (dir / "report.csv").string();
    const PipelineResult r = run_pipeline(cfg);
    const LabelMap out = io::read_labels(cfg.output);
    CHECK(out == r.output(FusionMethod::wv).labels);
    CHECK(*r.output(FusionMethod::wv).dice > 0.7);
    const std::string report = read_file(cfg.report);
    CHECK(report.rfind("roi,method,dice,stage,seconds", 0) == 0);
    const std::string echo = read_file(cfg.report + ".config.txt");
    CHECK(echo.find("method = wv") != std::string::npos);
    CHECK(echo.find("n_r = 15") != std::string::npos);
}

}  // TEST_SUITE

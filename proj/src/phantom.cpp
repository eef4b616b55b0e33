#include "mafuse/phantom.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "mafuse/io.hpp"
#include "mafuse/labels.hpp"

namespace mafuse {

namespace {

constexpr int kFieldMargin = 8;
constexpr int kInverseIterations = 100;

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b, std::uint64_t tag) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(tag)};
    return std::mt19937_64(seq);
}

Vec3 random_direction(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    for (;;) {
        Vec3 d{n(rng), n(rng), n(rng)};
        const double len = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
        if (len > 1e-6)
            return {d[0] / len, d[1] / len, d[2] / len};
    }
}

/// Three harmonics per displacement axis, rescaled to an exact RMS
/// magnitude over `g`.
SmoothField random_smooth_field(std::mt19937_64& rng, double wavelength, double rms, const Geometry& g) {
    SmoothField f;
    if (rms <= 0.0)
        return f;
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    for (int axis = 0; axis < 3; ++axis)
        for (int h = 1; h <= 3; ++h) {
            SmoothField::Wave w;
            const Vec3 d = random_direction(rng);
            const double kmag = 2.0 * std::numbers::pi * h / wavelength;
            w.k = {d[0] * kmag, d[1] * kmag, d[2] * kmag};
            w.phase = phase(rng);
            w.amplitude[static_cast<std::size_t>(axis)] = n(rng) / h;
            f.waves.push_back(w);
        }
    double ss = 0.0;
    for (std::size_t v = 0; v < g.size(); ++v) {
        const Index3 c = g.coords(v);
        const Vec3 u = f(g.physical(c[0], c[1], c[2]));
        ss += u[0] * u[0] + u[1] * u[1] + u[2] * u[2];
    }
    const double cur = std::sqrt(ss / static_cast<double>(g.size()));
    if (cur > 0.0)
        for (auto& w : f.waves)
            for (auto& a : w.amplitude)
                a *= rms / cur;
    return f;
}

Vec3 base_centre(const PhantomSpec& s) {
    return {(s.dims[0] - 1) * s.spacing[0] / 2.0, (s.dims[1] - 1) * s.spacing[1] / 2.0,
            (s.dims[2] - 1) * s.spacing[2] / 2.0};
}

bool inside_distractor(const PhantomSpec& spec, const Vec3& b) {
    const Vec3 c = base_centre(spec);
    double f = 0.0;
    for (int a = 0; a < 3; ++a) {
        const double t = (b[a] - c[a] - spec.distractor_offset[a]) / spec.distractor_axes[a];
        f += t * t;
    }
    return f <= 1.0;
}

std::vector<double> split_numbers(const std::string& key, const std::string& v) {
    std::istringstream in(v);
    std::vector<double> out;
    double x;
    while (in >> x)
        out.push_back(x);
    if (!in.eof())
        throw std::invalid_argument("phantom spec: bad value for " + key);
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos)
        return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::string two_digit(std::size_t i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02zu", i);
    return buf;
}

}  // namespace

void PhantomSpec::validate() const {
    geometry().validate();
    for (int a = 0; a < 3; ++a)
        if (!(shape_axes[a] > 0.0) || !(distractor_axes[a] > 0.0))
            throw std::invalid_argument("phantom spec: shape axes must be > 0");
    if (!(shape_exponent > 0.0))
        throw std::invalid_argument("phantom spec: shape exponent must be > 0");
    if (foreground_mean == background_mean)
        throw std::invalid_argument("phantom spec: foreground and background means must differ");
    if (noise_sigma < 0.0 || deformation_mm < 0.0 || residual_mm < 0.0 || texture_amplitude < 0.0)
        throw std::invalid_argument("phantom spec: noise, deformation, residual and texture must be >= 0");
    if (bias_amplitude < 0.0 || bias_amplitude >= 1.0)
        throw std::invalid_argument("phantom spec: bias amplitude must lie in [0,1)");
    if (!(deformation_wavelength_mm > 0.0) || !(residual_wavelength_mm > 0.0) || !(texture_wavelength_mm > 0.0))
        throw std::invalid_argument("phantom spec: wavelengths must be > 0");
}

Geometry PhantomSpec::geometry() const {
    Geometry g;
    g.dims = dims;
    g.spacing = spacing;
    return g;
}

void set_phantom_value(PhantomSpec& s, const std::string& key, const std::string& value) {
    const std::string k = trim(key);
    const auto nums = split_numbers(k, value);
    auto scalar = [&]() {
        if (nums.size() != 1)
            throw std::invalid_argument("phantom spec: " + k + " takes one number");
        return nums[0];
    };
    auto vec = [&]() {
        if (nums.size() != 3)
            throw std::invalid_argument("phantom spec: " + k + " takes three numbers");
        return Vec3{nums[0], nums[1], nums[2]};
    };
    if (k == "dims") {
        const Vec3 d = vec();
        s.dims = {static_cast<int>(d[0]), static_cast<int>(d[1]), static_cast<int>(d[2])};
    } else if (k == "spacing") s.spacing = vec();
    else if (k == "shape_axes") s.shape_axes = vec();
    else if (k == "shape_exponent") s.shape_exponent = scalar();
    else if (k == "bend") s.bend = scalar();
    else if (k == "distractor_axes") s.distractor_axes = vec();
    else if (k == "distractor_offset") s.distractor_offset = vec();
    else if (k == "distractor_mean") s.distractor_mean = scalar();
    else if (k == "deformation_mm") s.deformation_mm = scalar();
    else if (k == "deformation_wavelength_mm") s.deformation_wavelength_mm = scalar();
    else if (k == "residual_mm") s.residual_mm = scalar();
    else if (k == "residual_wavelength_mm") s.residual_wavelength_mm = scalar();
    else if (k == "foreground_mean") s.foreground_mean = scalar();
    else if (k == "background_mean") s.background_mean = scalar();
    else if (k == "texture_amplitude") s.texture_amplitude = scalar();
    else if (k == "texture_wavelength_mm") s.texture_wavelength_mm = scalar();
    else if (k == "noise_sigma") s.noise_sigma = scalar();
    else if (k == "bias_amplitude") s.bias_amplitude = scalar();
    else if (k == "seed") s.seed = static_cast<std::uint64_t>(scalar());
    else throw std::invalid_argument("phantom spec: unknown key '" + k + "'");
}

PhantomSpec read_phantom_spec(const std::filesystem::path& path, PhantomSpec base) {
    std::ifstream in(path);
    if (!in)
        throw std::runtime_error("cannot open phantom spec " + path.string());
    std::string line;
    while (std::getline(in, line)) {
        if (const auto hash = line.find('#'); hash != std::string::npos)
            line.erase(hash);
        if (trim(line).empty())
            continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("phantom spec: expected key = value in '" + line + "'");
        set_phantom_value(base, line.substr(0, eq), line.substr(eq + 1));
    }
    return base;
}

Vec3 SmoothField::operator()(const Vec3& p) const {
    Vec3 u{0.0, 0.0, 0.0};
    for (const auto& w : waves) {
        const double s = std::sin(w.k[0] * p[0] + w.k[1] * p[1] + w.k[2] * p[2] + w.phase);
        u[0] += w.amplitude[0] * s;
        u[1] += w.amplitude[1] * s;
        u[2] += w.amplitude[2] * s;
    }
    return u;
}

bool phantom_inside(const PhantomSpec& spec, const Vec3& b) {
    const Vec3 c = base_centre(spec);
    const double dx = b[0] - c[0];
    const double dy = b[1] - c[1] - spec.bend * dx * dx;
    const double dz = b[2] - c[2];
    const double e = spec.shape_exponent;
    return std::pow(std::abs(dx / spec.shape_axes[0]), e) + std::pow(std::abs(dy / spec.shape_axes[1]), e) +
               std::pow(std::abs(dz / spec.shape_axes[2]), e) <=
           1.0;
}

Cohort generate_cohort(const PhantomSpec& spec, int n) {
    spec.validate();
    if (n < 3)
        throw std::invalid_argument("generate_cohort: at least three subjects required");
    const Geometry g = spec.geometry();
    Cohort cohort;
    cohort.spec = spec;

    // texture lives in base space so that it moves with the anatomy
    auto trng = make_rng(spec.seed, 0, 0, 1);
    SmoothField texture;
    {
        std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
        const double kmag = 2.0 * std::numbers::pi / spec.texture_wavelength_mm;
        for (int m = 0; m < 6; ++m) {
            SmoothField::Wave w;
            const Vec3 d = random_direction(trng);
            w.k = {d[0] * kmag, d[1] * kmag, d[2] * kmag};
            w.phase = phase(trng);
            w.amplitude = {spec.texture_amplitude / std::sqrt(3.0), 0.0, 0.0};
            texture.waves.push_back(w);
        }
    }

    for (int s = 0; s < n; ++s) {
        PhantomSubject sub;
        auto wrng = make_rng(spec.seed, static_cast<std::uint64_t>(s) + 1, 0, 2);
        sub.warp = random_smooth_field(wrng, spec.deformation_wavelength_mm, spec.deformation_mm, g);

        auto brng = make_rng(spec.seed, static_cast<std::uint64_t>(s) + 1, 0, 3);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        Vec3 bias_dir{u(brng), u(brng), u(brng)};
        const double l1 = std::abs(bias_dir[0]) + std::abs(bias_dir[1]) + std::abs(bias_dir[2]);

        auto nrng = make_rng(spec.seed, static_cast<std::uint64_t>(s) + 1, 0, 4);
        std::normal_distribution<double> noise(0.0, 1.0);

        sub.image = Volume(g, 0.0);
        sub.labels = LabelMap(g, 0);
        for (std::size_t v = 0; v < g.size(); ++v) {
            const Index3 c = g.coords(v);
            const Vec3 p = g.physical(c[0], c[1], c[2]);
            const Vec3 d = sub.warp(p);
            const Vec3 b{p[0] + d[0], p[1] + d[1], p[2] + d[2]};
            const bool fg = phantom_inside(spec, b);
            sub.labels[v] = fg ? 1 : 0;
            double mean = spec.background_mean;
            if (fg)
                mean = spec.foreground_mean;
            else if (inside_distractor(spec, b))
                mean = spec.distractor_mean;
            double bias = 1.0;
            if (l1 > 0.0) {
                double t = 0.0;
                for (int a = 0; a < 3; ++a)
                    t += bias_dir[a] * (g.dims[a] > 1 ? 2.0 * c[a] / (g.dims[a] - 1) - 1.0 : 0.0);
                bias += spec.bias_amplitude * t / l1;
            }
            const double nz = noise(nrng);
            sub.image[v] = (mean + texture(b)[0]) * bias + spec.noise_sigma * nz;
        }
        if (count_foreground(sub.labels) == 0)
            throw std::invalid_argument("generate_cohort: the structure falls outside the grid");
        cohort.subjects.push_back(std::move(sub));
    }

    std::vector<LabelMap> all;
    for (const auto& s : cohort.subjects)
        all.push_back(s.labels);
    const RegionOfInterest box = bounding_roi(all, kFieldMargin);
    cohort.field_geometry = g;
    cohort.field_geometry.dims = box.extent();
    for (int a = 0; a < 3; ++a)
        cohort.field_geometry.origin[a] = g.origin[a] + box.lo[a] * g.spacing[a];
    return cohort;
}

DisplacementField Cohort::make_field(std::size_t target, std::size_t atlas, bool with_residual) const {
    const auto& ut = subjects.at(target).warp;
    const auto& ua = subjects.at(atlas).warp;
    const Geometry& fg = field_geometry;
    SmoothField residual;
    if (with_residual) {
        auto rrng = make_rng(spec.seed, target + 1, atlas + 1, 5);
        residual = random_smooth_field(rrng, spec.residual_wavelength_mm, spec.residual_mm, fg);
    }
    DisplacementField f(fg);
    for (std::size_t v = 0; v < fg.size(); ++v) {
        const Index3 c = fg.coords(v);
        const Vec3 p = fg.physical(c[0], c[1], c[2]);
        const Vec3 dt = ut(p);
        const Vec3 b{p[0] + dt[0], p[1] + dt[1], p[2] + dt[2]};
        // atlas position q with q + ua(q) = b
        Vec3 q = b;
        for (int it = 0; it < kInverseIterations; ++it) {
            const Vec3 da = ua(q);
            const Vec3 nq{b[0] - da[0], b[1] - da[1], b[2] - da[2]};
            const double step = std::abs(nq[0] - q[0]) + std::abs(nq[1] - q[1]) + std::abs(nq[2] - q[2]);
            q = nq;
            if (step < 1e-10)
                break;
        }
        const Vec3 r = residual(p);
        f.displacement[v] = {q[0] - p[0] + r[0], q[1] - p[1] + r[1], q[2] - p[2] + r[2]};
    }
    return f;
}

DisplacementField Cohort::field(std::size_t target, std::size_t atlas) const {
    return make_field(target, atlas, true);
}

DisplacementField Cohort::exact_field(std::size_t target, std::size_t atlas) const {
    return make_field(target, atlas, false);
}

AtlasLibrary fold_library(const Cohort& cohort, std::size_t target) {
    AtlasLibrary lib;
    for (std::size_t a = 0; a < cohort.size(); ++a) {
        if (a == target)
            continue;
        AtlasEntry e;
        e.id = "subject_" + two_digit(a);
        e.image = cohort.subjects[a].image;
        e.labels = cohort.subjects[a].labels;
        e.affine = cohort.subjects[a].affine;
        e.field = cohort.field(target, a);
        lib.atlases.push_back(std::move(e));
    }
    return lib;
}

double LooResult::mean(std::size_t m) const {
    if (dice.empty())
        return 0.0;
    double s = 0.0;
    for (const auto& f : dice)
        s += f.at(m);
    return s / static_cast<double>(dice.size());
}

double LooResult::stddev(std::size_t m) const {
    if (dice.empty())
        return 0.0;
    const double mu = mean(m);
    double s = 0.0;
    for (const auto& f : dice)
        s += (f.at(m) - mu) * (f.at(m) - mu);
    return std::sqrt(s / static_cast<double>(dice.size()));
}

LooResult leave_one_out(const Cohort& cohort, const PipelineConfig& cfg, std::span<const FusionMethod> methods,
                        bool keep_folds, unsigned threads) {
    if (cohort.size() < 3)
        throw std::invalid_argument("leave_one_out: at least three subjects required");
    const std::size_t n = cohort.size();
    LooResult r;
    r.methods.assign(methods.begin(), methods.end());
    r.dice.assign(n, {});
    std::vector<std::optional<PipelineResult>> kept(keep_folds ? n : 0);
    std::vector<std::exception_ptr> errors(n);

    auto run_fold = [&](std::size_t t) {
        try {
            const AtlasLibrary lib = fold_library(cohort, t);
            TargetInput target{cohort.subjects[t].image, cohort.subjects[t].affine};
            PipelineResult pr = run_fusion(target, lib, cfg, methods, &cohort.subjects[t].labels);
            for (FusionMethod m : methods)
                r.dice[t].push_back(*pr.output(m).dice);
            if (keep_folds)
                kept[t] = std::move(pr);
        } catch (...) {
            errors[t] = std::current_exception();
        }
    };

    if (threads == 0)
        threads = std::max(1u, std::thread::hardware_concurrency());
    threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
    if (threads <= 1) {
        for (std::size_t t = 0; t < n; ++t)
            run_fold(t);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < threads; ++w)
            pool.emplace_back([&] {
                for (std::size_t t = next++; t < n; t = next++)
                    run_fold(t);
            });
        for (auto& th : pool)
            th.join();
    }
    for (const auto& e : errors)
        if (e)
            std::rethrow_exception(e);
    for (auto& k : kept)
        r.folds.push_back(std::move(*k));
    return r;
}

std::string loo_summary_csv(const LooResult& r) {
    std::ostringstream out;
    out << "method,mean_dice,std_dice,folds\n";
    char buf[96];
    for (std::size_t m = 0; m < r.methods.size(); ++m) {
        std::snprintf(buf, sizeof buf, "%.6f,%.6f,%zu", r.mean(m), r.stddev(m), r.dice.size());
        out << to_string(r.methods[m]) << "," << buf << "\n";
    }
    return out.str();
}

std::string loo_folds_csv(const LooResult& r) {
    std::ostringstream out;
    out << "fold,method,dice\n";
    char buf[32];
    for (std::size_t f = 0; f < r.dice.size(); ++f)
        for (std::size_t m = 0; m < r.methods.size(); ++m) {
            std::snprintf(buf, sizeof buf, "%.6f", r.dice[f][m]);
            out << f << "," << to_string(r.methods[m]) << "," << buf << "\n";
        }
    return out.str();
}

void write_cohort(const Cohort& cohort, std::size_t target, const std::filesystem::path& dir) {
    if (target >= cohort.size())
        throw std::invalid_argument("write_cohort: target index out of range");
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir / "manifest.csv");
    if (!manifest)
        throw std::runtime_error("cannot write manifest in " + dir.string());
    manifest << "id,intensity_path,label_path,affine_path,dfield_path\n";
    for (std::size_t s = 0; s < cohort.size(); ++s) {
        const std::string stem = "subject_" + two_digit(s);
        io::write_volume(dir / (stem + ".nii"), cohort.subjects[s].image);
        io::write_labels(dir / (stem + "_labels.nii"), cohort.subjects[s].labels);
        io::write_affine(dir / (stem + ".affine"), cohort.subjects[s].affine);
        if (s == target)
            continue;
        const std::string field = "field_" + two_digit(s) + "_to_" + two_digit(target) + ".nii";
        io::write_displacement(dir / field, cohort.field(target, s));
        manifest << stem << "," << stem << ".nii," << stem << "_labels.nii," << stem << ".affine," << field << "\n";
    }
}

}  // namespace mafuse

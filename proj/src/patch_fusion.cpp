#include "mafuse/patch_fusion.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mafuse {

namespace {

constexpr double kSigmaReg = 1e-6;

int mirror(int i, int n) {
    const int period = 2 * n;
    i %= period;
    if (i < 0)
        i += period;
    return i >= n ? period - 1 - i : i;
}

double luminance(double mx, double my) {
    const double den = mx * mx + my * my;
    return den > 0.0 ? 2.0 * mx * my / den : 1.0;
}

}  // namespace

std::string to_string(PatchMode m) {
    return m == PatchMode::combined ? "combined" : "conventional";
}

void PatchConfig::validate() const {
    if (!(patch_radius_mm > 0.0) || !(search_radius_mm > 0.0))
        throw std::invalid_argument("PatchConfig: radii must be > 0");
    if (!(epsilon >= 0.0 && epsilon <= 1.0))
        throw std::invalid_argument("PatchConfig: epsilon must lie in [0,1]");
    if (!(beta_i > 0.0) || !(beta_s > 0.0))
        throw std::invalid_argument("PatchConfig: bandwidth factors must be > 0");
    if (!(eps_i > 0.0) || !(eps_s > 0.0))
        throw std::invalid_argument("PatchConfig: bandwidth offsets must be > 0");
}

Index3 patch_half_size(double radius_mm, const Vec3& spacing) {
    if (!(radius_mm > 0.0))
        throw std::invalid_argument("patch_half_size: radius must be > 0");
    Index3 h{};
    for (int a = 0; a < 3; ++a) {
        if (!(spacing[a] > 0.0))
            throw std::invalid_argument("patch_half_size: spacing must be > 0");
        h[a] = static_cast<int>(std::ceil(radius_mm / spacing[a] - 1e-9));
    }
    return h;
}

Index3 patch_geometry(double radius_mm, const Vec3& spacing) {
    const Index3 h = patch_half_size(radius_mm, spacing);
    return {2 * h[0] + 1, 2 * h[1] + 1, 2 * h[2] + 1};
}

PatchStats patch_stats(std::span<const double> values) {
    PatchStats s;
    if (values.empty())
        return s;
    double sum = 0.0;
    for (double v : values)
        sum += v;
    s.mean = sum / static_cast<double>(values.size());
    double ss = 0.0;
    s.constant = true;
    for (double v : values) {
        ss += (v - s.mean) * (v - s.mean);
        if (v != values[0])
            s.constant = false;
    }
    s.stddev = s.constant ? 0.0 : std::sqrt(ss / static_cast<double>(values.size()));
    return s;
}

double similarity_factor(const PatchStats& x, const PatchStats& y) {
    if (x.constant && y.constant)
        return luminance(x.mean, y.mean);
    if (x.constant || y.constant)
        return 0.0;
    const double sx = x.stddev + kSigmaReg;
    const double sy = y.stddev + kSigmaReg;
    return luminance(x.mean, y.mean) * 2.0 * sx * sy / (sx * sx + sy * sy);
}

template <typename T>
Patch extract_patch(const Grid<T>& vol, const Index3& center, const Index3& half) {
    const Index3 d = vol.dims();
    if (!vol.geometry().contains(center[0], center[1], center[2]))
        throw std::out_of_range("extract_patch: centre outside the lattice");
    Patch p;
    p.center = center;
    p.half = half;
    p.values.reserve(static_cast<std::size_t>((2 * half[0] + 1) * (2 * half[1] + 1) * (2 * half[2] + 1)));
    for (int dk = -half[2]; dk <= half[2]; ++dk)
        for (int dj = -half[1]; dj <= half[1]; ++dj)
            for (int di = -half[0]; di <= half[0]; ++di)
                p.values.push_back(static_cast<double>(vol.at(mirror(center[0] + di, d[0]),
                                                              mirror(center[1] + dj, d[1]),
                                                              mirror(center[2] + dk, d[2]))));
    p.stats = patch_stats(p.values);
    return p;
}

template Patch extract_patch<double>(const Grid<double>&, const Index3&, const Index3&);
template Patch extract_patch<std::uint8_t>(const Grid<std::uint8_t>&, const Index3&, const Index3&);

double structural_similarity(const Patch& intensity_x, const Patch& labels_x, const Patch& intensity_y,
                             const Patch& labels_y) {
    return similarity_factor(intensity_x.stats, intensity_y.stats) * similarity_factor(labels_x.stats, labels_y.stats);
}

double squared_distance(const Patch& a, const Patch& b) {
    if (a.values.size() != b.values.size())
        throw std::invalid_argument("squared_distance: patch sizes differ");
    double s = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i)
        s += (a.values[i] - b.values[i]) * (a.values[i] - b.values[i]);
    return s;
}

Bandwidths bandwidths(std::span<const double> intensity_d2, std::span<const double> label_d2, const PatchConfig& cfg) {
    if (intensity_d2.empty())
        throw std::invalid_argument("bandwidths: empty search window");
    Bandwidths bw;
    bw.h_i2 = cfg.beta_i * *std::min_element(intensity_d2.begin(), intensity_d2.end()) + cfg.eps_i;
    const double min_s = label_d2.empty() ? 0.0 : *std::min_element(label_d2.begin(), label_d2.end());
    bw.h_s2 = cfg.beta_s * min_s + cfg.eps_s;
    return bw;
}

double patch_weight(double intensity_d2, double label_d2, const Bandwidths& bw, PatchMode mode) {
    double e = intensity_d2 / bw.h_i2;
    if (mode == PatchMode::combined)
        e += label_d2 / bw.h_s2;
    return std::exp(-e);
}

std::vector<double> multipoint_estimate(std::span<const double> weights,
                                        std::span<const std::vector<double>> label_patches) {
    if (weights.size() != label_patches.size() || weights.empty())
        throw std::invalid_argument("multipoint_estimate: one weight per patch required");
    const std::size_t n = label_patches.front().size();
    std::vector<double> est(n, 0.0);
    double wsum = 0.0;
    for (std::size_t c = 0; c < weights.size(); ++c) {
        if (label_patches[c].size() != n)
            throw std::invalid_argument("multipoint_estimate: patch sizes differ");
        wsum += weights[c];
        for (std::size_t p = 0; p < n; ++p)
            est[p] += weights[c] * label_patches[c][p];
    }
    if (!(wsum > 0.0))
        throw std::domain_error("multipoint_estimate: weights sum to zero");
    for (auto& v : est)
        v /= wsum;
    return est;
}

void LabelPatchEstimate::scatter(const Index3& center, const Index3& half, std::span<const double> estimate,
                                 const LabelMap* domain) {
    const std::size_t expected = static_cast<std::size_t>((2 * half[0] + 1) * (2 * half[1] + 1) * (2 * half[2] + 1));
    if (estimate.size() != expected)
        throw std::invalid_argument("LabelPatchEstimate::scatter: estimate size does not match the patch");
    if (domain)
        require_same_geometry(domain->geometry(), geometry_, "LabelPatchEstimate domain");
    std::size_t p = 0;
    for (int dk = -half[2]; dk <= half[2]; ++dk)
        for (int dj = -half[1]; dj <= half[1]; ++dj)
            for (int di = -half[0]; di <= half[0]; ++di, ++p) {
                const int i = center[0] + di, j = center[1] + dj, k = center[2] + dk;
                if (!geometry_.contains(i, j, k))
                    continue;
                const std::size_t v = geometry_.index(i, j, k);
                if (domain && !(*domain)[v])
                    continue;
                value_sum_[v] += estimate[p];
                ++votes_[v];
                if (estimate[p] > 0.5)
                    ++fg_votes_[v];
            }
}

LabelMap aggregate(const LabelPatchEstimate& est, const LabelMap& domain, const LabelMap& fallback) {
    require_same_geometry(domain.geometry(), est.geometry(), "aggregate domain");
    require_same_geometry(fallback.geometry(), est.geometry(), "aggregate fallback");
    LabelMap out = fallback;
    for (std::size_t v = 0; v < out.size(); ++v) {
        if (!domain[v] || est.votes(v) == 0)
            continue;
        out[v] = 2 * est.foreground_votes(v) > est.votes(v) ? 1 : 0;
    }
    return out;
}

PatchLibrary::PatchLibrary(const Volume& target, const LabelMap* target_labels, std::span<const Volume> atlas_images,
                           std::span<const LabelMap> atlas_labels, const PatchConfig& cfg)
    : cfg_(cfg), geom_(target.geometry()) {
    cfg_.validate();
    patch_half_ = patch_half_size(cfg.patch_radius_mm, geom_.spacing);
    search_half_ = patch_half_size(cfg.search_radius_mm, geom_.spacing);
    init(target, target_labels, atlas_images, atlas_labels);
}

PatchLibrary::PatchLibrary(const Volume& target, const LabelMap* target_labels, std::span<const Volume> atlas_images,
                           std::span<const LabelMap> atlas_labels, const PatchConfig& cfg, const Index3& patch_half,
                           const Index3& search_half)
    : cfg_(cfg), geom_(target.geometry()), patch_half_(patch_half), search_half_(search_half) {
    cfg_.validate();
    for (int a = 0; a < 3; ++a)
        if (patch_half[a] < 0 || search_half[a] < 0)
            throw std::invalid_argument("PatchLibrary: half sizes must be >= 0");
    init(target, target_labels, atlas_images, atlas_labels);
}

std::size_t PatchLibrary::padded_index(const Index3& p) const {
    return static_cast<std::size_t>(p[0] + margin_[0]) +
           static_cast<std::size_t>(pdims_[0]) *
               (static_cast<std::size_t>(p[1] + margin_[1]) +
                static_cast<std::size_t>(pdims_[1]) * static_cast<std::size_t>(p[2] + margin_[2]));
}

void PatchLibrary::init(const Volume& target, const LabelMap* target_labels, std::span<const Volume> atlas_images,
                        std::span<const LabelMap> atlas_labels) {
    if (atlas_images.empty() || atlas_images.size() != atlas_labels.size())
        throw std::invalid_argument("PatchLibrary: need one label map per atlas image and at least one atlas");
    if (cfg_.mode == PatchMode::combined && !target_labels)
        throw std::invalid_argument("PatchLibrary: combined mode needs a target labelling");
    for (const auto& im : atlas_images)
        require_same_geometry(im.geometry(), geom_, "PatchLibrary atlas image");
    for (const auto& lb : atlas_labels)
        require_same_geometry(lb.geometry(), geom_, "PatchLibrary atlas labels");
    if (target_labels)
        require_same_geometry(target_labels->geometry(), geom_, "PatchLibrary target labels");

    margin_ = patch_half_;
    const Index3 d = geom_.dims;
    for (int a = 0; a < 3; ++a)
        pdims_[a] = d[a] + 2 * margin_[a];
    const std::size_t psize = static_cast<std::size_t>(pdims_[0]) * static_cast<std::size_t>(pdims_[1]) *
                              static_cast<std::size_t>(pdims_[2]);

    auto pad = [&](auto&& value_at) {
        std::vector<float> out(psize);
        std::size_t n = 0;
        for (int k = -margin_[2]; k < d[2] + margin_[2]; ++k)
            for (int j = -margin_[1]; j < d[1] + margin_[1]; ++j)
                for (int i = -margin_[0]; i < d[0] + margin_[0]; ++i)
                    out[n++] = static_cast<float>(value_at(geom_.index(mirror(i, d[0]), mirror(j, d[1]), mirror(k, d[2]))));
        return out;
    };

    target_img_ = pad([&](std::size_t v) { return target[v]; });
    if (cfg_.mode == PatchMode::combined)
        target_lab_ = pad([&](std::size_t v) { return (*target_labels)[v] ? 1.0 : 0.0; });
    for (std::size_t a = 0; a < atlas_images.size(); ++a) {
        atlas_img_.push_back(pad([&](std::size_t v) { return atlas_images[a][v]; }));
        atlas_lab_.push_back(pad([&](std::size_t v) { return atlas_labels[a][v] ? 1.0 : 0.0; }));
    }

    patch_offsets_.clear();
    for (int dk = -patch_half_[2]; dk <= patch_half_[2]; ++dk)
        for (int dj = -patch_half_[1]; dj <= patch_half_[1]; ++dj)
            for (int di = -patch_half_[0]; di <= patch_half_[0]; ++di)
                patch_offsets_.push_back(static_cast<std::ptrdiff_t>(di) +
                                         static_cast<std::ptrdiff_t>(pdims_[0]) *
                                             (static_cast<std::ptrdiff_t>(dj) +
                                              static_cast<std::ptrdiff_t>(pdims_[1]) * dk));

    row_length_ = 2 * patch_half_[0] + 1;
    row_offsets_.clear();
    for (std::size_t p = 0; p < patch_offsets_.size(); p += static_cast<std::size_t>(row_length_))
        row_offsets_.push_back(patch_offsets_[p]);

    const std::size_t np = patch_offsets_.size();
    words_ = (np + 63) / 64;
    auto pack = [&](const std::vector<float>& arr, std::vector<std::uint64_t>& out) {
        out.assign(geom_.size() * words_, 0);
        for (std::size_t v = 0; v < geom_.size(); ++v) {
            const auto base = static_cast<std::ptrdiff_t>(padded_index(geom_.coords(v)));
            std::uint64_t* w = out.data() + v * words_;
            for (std::size_t p = 0; p < np; ++p)
                if (arr[static_cast<std::size_t>(base + patch_offsets_[p])] != 0.0f)
                    w[p / 64] |= std::uint64_t{1} << (p % 64);
        }
    };
    if (cfg_.mode == PatchMode::combined)
        pack(target_lab_, target_bits_);
    atlas_bits_.resize(atlas_lab_.size());
    for (std::size_t a = 0; a < atlas_lab_.size(); ++a)
        pack(atlas_lab_[a], atlas_bits_[a]);

    std::vector<double> buf(np);
    auto stats_of = [&](const std::vector<float>& arr, std::size_t base) {
        for (std::size_t p = 0; p < np; ++p)
            buf[p] = static_cast<double>(arr[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(base) + patch_offsets_[p])]);
        return patch_stats(buf);
    };
    for (std::size_t a = 0; a < atlas_images.size(); ++a) {
        std::vector<PatchStats> si(geom_.size()), sl(geom_.size());
        for (std::size_t v = 0; v < geom_.size(); ++v) {
            const std::size_t base = padded_index(geom_.coords(v));
            si[v] = stats_of(atlas_img_[a], base);
            sl[v] = stats_of(atlas_lab_[a], base);
        }
        atlas_img_stats_.push_back(std::move(si));
        atlas_lab_stats_.push_back(std::move(sl));
    }
}

CandidateSet PatchLibrary::candidates(const Index3& x) const {
    if (!geom_.contains(x[0], x[1], x[2]))
        throw std::out_of_range("PatchLibrary::candidates: centre outside the lattice");
    const bool combined = cfg_.mode == PatchMode::combined;
    const std::size_t np = patch_offsets_.size();
    const std::size_t xv = geom_.index(x);
    const std::ptrdiff_t xb = static_cast<std::ptrdiff_t>(padded_index(x));

    // target patch, row-contiguous
    std::vector<float> ti(np);
    std::vector<double> buf(np);
    for (std::size_t p = 0; p < np; ++p) {
        ti[p] = target_img_[static_cast<std::size_t>(xb + patch_offsets_[p])];
        buf[p] = ti[p];
    }
    const PatchStats tis = patch_stats(buf);
    PatchStats tss;
    if (combined) {
        for (std::size_t p = 0; p < np; ++p)
            buf[p] = target_lab_[static_cast<std::size_t>(xb + patch_offsets_[p])];
        tss = patch_stats(buf);
    }
    const std::uint64_t* tbits = combined ? target_bits_.data() + xv * words_ : nullptr;

    // squared intensity distance, abandoned once it reaches `limit`
    const std::size_t rows = row_offsets_.size();
    const auto rl = static_cast<std::size_t>(row_length_);
    auto intensity_d2 = [&](const float* img, std::ptrdiff_t yb, double limit) {
        double s = 0.0;
        const float* t = ti.data();
        for (std::size_t r = 0; r < rows; ++r, t += rl) {
            const float* a = img + yb + row_offsets_[r];
            for (std::size_t i = 0; i < rl; ++i) {
                const double e = static_cast<double>(a[i]) - static_cast<double>(t[i]);
                s += e * e;
            }
            if (s >= limit)
                return s;
        }
        return s;
    };

    const int lo0 = std::max(0, x[0] - search_half_[0]), hi0 = std::min(geom_.dims[0] - 1, x[0] + search_half_[0]);
    const int lo1 = std::max(0, x[1] - search_half_[1]), hi1 = std::min(geom_.dims[1] - 1, x[1] + search_half_[1]);
    const int lo2 = std::max(0, x[2] - search_half_[2]), hi2 = std::min(geom_.dims[2] - 1, x[2] + search_half_[2]);

    struct Rejected {
        int atlas;
        std::ptrdiff_t yb;
    };
    std::vector<Rejected> rejected;
    std::vector<std::ptrdiff_t> cand_base;
    CandidateSet cs;
    double min_s = std::numeric_limits<double>::infinity();
    const double thresh = combined ? cfg_.epsilon * cfg_.epsilon : cfg_.epsilon;
    const std::size_t window = atlas_img_.size() * static_cast<std::size_t>(hi0 - lo0 + 1) *
                               static_cast<std::size_t>(hi1 - lo1 + 1) * static_cast<std::size_t>(hi2 - lo2 + 1);
    cs.candidates.reserve(window);
    cand_base.reserve(window);

    for (std::size_t a = 0; a < atlas_img_.size(); ++a)
        for (int k = lo2; k <= hi2; ++k)
            for (int j = lo1; j <= hi1; ++j)
                for (int i = lo0; i <= hi0; ++i) {
                    const std::size_t v = geom_.index(i, j, k);
                    const std::ptrdiff_t yb = static_cast<std::ptrdiff_t>(padded_index({i, j, k}));
                    ++cs.window_size;
                    double ds = 0.0;
                    if (combined) {
                        const std::uint64_t* ab = atlas_bits_[a].data() + v * words_;
                        int diff = 0;
                        for (std::size_t w = 0; w < words_; ++w)
                            diff += std::popcount(ab[w] ^ tbits[w]);
                        ds = diff;
                        min_s = std::min(min_s, ds);
                    }
                    double sim = similarity_factor(tis, atlas_img_stats_[a][v]);
                    if (combined)
                        sim *= similarity_factor(tss, atlas_lab_stats_[a][v]);
                    if (sim > thresh) {
                        cs.candidates.push_back({static_cast<int>(a), v, 0.0, ds, sim, 0.0});
                        cand_base.push_back(yb);
                    } else {
                        rejected.push_back({static_cast<int>(a), yb});
                    }
                }

    // the bandwidth needs the smallest distance over the whole window
    double min_i = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cs.candidates.size(); ++c) {
        auto& cand = cs.candidates[c];
        cand.intensity_d2 = intensity_d2(atlas_img_[static_cast<std::size_t>(cand.atlas)].data(), cand_base[c],
                                         std::numeric_limits<double>::infinity());
        min_i = std::min(min_i, cand.intensity_d2);
    }
    for (const auto& r : rejected)
        min_i = std::min(min_i, intensity_d2(atlas_img_[static_cast<std::size_t>(r.atlas)].data(), r.yb, min_i));

    cs.bandwidths.h_i2 = cfg_.beta_i * min_i + cfg_.eps_i;
    cs.bandwidths.h_s2 = cfg_.beta_s * (combined ? min_s : 0.0) + cfg_.eps_s;
    for (auto& c : cs.candidates)
        c.weight = patch_weight(c.intensity_d2, c.label_d2, cs.bandwidths, cfg_.mode);
    return cs;
}

std::vector<double> PatchLibrary::label_patch(int atlas, std::size_t voxel) const {
    const auto& lab = atlas_lab_.at(static_cast<std::size_t>(atlas));
    const std::ptrdiff_t b = static_cast<std::ptrdiff_t>(padded_index(geom_.coords(voxel)));
    std::vector<double> out(patch_offsets_.size());
    for (std::size_t p = 0; p < out.size(); ++p)
        out[p] = lab[static_cast<std::size_t>(b + patch_offsets_[p])];
    return out;
}

void PatchLibrary::add_label_patch(int atlas, std::size_t voxel, double weight, std::span<double> acc) const {
    const auto& lab = atlas_lab_.at(static_cast<std::size_t>(atlas));
    if (acc.size() != patch_offsets_.size())
        throw std::invalid_argument("add_label_patch: accumulator size mismatch");
    const float* base = lab.data() + padded_index(geom_.coords(voxel));
    const auto rl = static_cast<std::size_t>(row_length_);
    double* out = acc.data();
    for (std::size_t r = 0; r < row_offsets_.size(); ++r, out += rl) {
        const float* a = base + row_offsets_[r];
        for (std::size_t i = 0; i < rl; ++i)
            out[i] += weight * static_cast<double>(a[i]);
    }
}

double PatchLibrary::single_point(const Index3& x) const {
    const CandidateSet cs = candidates(x);
    double num = 0.0, den = 0.0;
    for (const auto& c : cs.candidates) {
        const std::ptrdiff_t b = static_cast<std::ptrdiff_t>(padded_index(geom_.coords(c.voxel)));
        num += c.weight * atlas_lab_[static_cast<std::size_t>(c.atlas)][static_cast<std::size_t>(b)];
        den += c.weight;
    }
    return den > 0.0 ? num / den : -1.0;
}

PatchFusionResult patch_fusion(const PatchLibrary& library, const LabelMap& domain, const LabelMap& fallback) {
    const Geometry& g = library.geometry();
    require_same_geometry(domain.geometry(), g, "patch_fusion domain");
    require_same_geometry(fallback.geometry(), g, "patch_fusion fallback");
    const Index3 h = library.patch_half();

    LabelPatchEstimate est(g);
    PatchFusionResult res;
    std::size_t total_candidates = 0;
    std::vector<double> acc;
    for (std::size_t v = 0; v < g.size(); ++v) {
        if (!domain[v])
            continue;
        ++res.decided;
        const Index3 x = g.coords(v);
        const CandidateSet cs = library.candidates(x);
        total_candidates += cs.candidates.size();
        double wsum = 0.0;
        for (const auto& c : cs.candidates)
            wsum += c.weight;
        if (cs.candidates.empty() || !(wsum > 0.0)) {
            ++res.without_candidates;
            continue;
        }
        acc.assign(static_cast<std::size_t>((2 * h[0] + 1) * (2 * h[1] + 1) * (2 * h[2] + 1)), 0.0);
        for (const auto& c : cs.candidates)
            library.add_label_patch(c.atlas, c.voxel, c.weight, acc);
        for (auto& a : acc)
            a /= wsum;
        est.scatter(x, h, acc, &domain);
    }
    res.labels = aggregate(est, domain, fallback);
    for (std::size_t v = 0; v < g.size(); ++v)
        if (domain[v] && est.votes(v) == 0)
            ++res.fallback_voxels;
    res.mean_candidates = res.decided ? static_cast<double>(total_candidates) / static_cast<double>(res.decided) : 0.0;
    return res;
}

}  // namespace mafuse

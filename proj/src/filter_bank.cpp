#include "mafuse/filter_bank.hpp"

#include <algorithm>
#include <numeric>

namespace mafuse {

std::string to_string(FilterBankKind k) { return k == FilterBankKind::gaussian12 ? "gaussian12" : "steerable16"; }

FilterBankKind filter_bank_from_string(const std::string& s) {
    if (s == "gaussian12")
        return FilterBankKind::gaussian12;
    if (s == "steerable16")
        return FilterBankKind::steerable16;
    throw std::invalid_argument("unknown filter bank '" + s + "'");
}

FilterBankKind select_filter_bank(const Vec3& spacing) {
    const double hi = std::max({spacing[0], spacing[1], spacing[2]});
    const double lo = std::min({spacing[0], spacing[1], spacing[2]});
    return hi / lo > 1.3 ? FilterBankKind::gaussian12 : FilterBankKind::steerable16;
}

std::vector<double> gaussian_kernel(double sigma, int order) {
    if (!(sigma > 0.0))
        throw std::invalid_argument("gaussian_kernel: sigma must be > 0");
    if (order < 0 || order > 3)
        throw std::invalid_argument("gaussian_kernel: order must be 0..3");
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    const int n = 2 * radius + 1;
    std::vector<double> g(n), k(n);
    for (int t = 0; t < n; ++t) {
        const double i = t - radius;
        g[t] = std::exp(-0.5 * i * i / (sigma * sigma));
    }
    auto moment = [&](const std::vector<double>& w, int p) {
        double s = 0.0;
        for (int t = 0; t < n; ++t)
            s += std::pow(static_cast<double>(t - radius), p) * w[t];
        return s;
    };
    switch (order) {
    case 0: {
        const double z = std::accumulate(g.begin(), g.end(), 0.0);
        for (int t = 0; t < n; ++t)
            k[t] = g[t] / z;
        break;
    }
    case 1: {
        // convolution of a unit ramp must return +1
        const double m2 = moment(g, 2);
        for (int t = 0; t < n; ++t)
            k[t] = -(t - radius) * g[t] / m2;
        break;
    }
    case 2: {
        for (int t = 0; t < n; ++t) {
            const double i = t - radius;
            k[t] = (i * i - sigma * sigma) * g[t];
        }
        const double mean = std::accumulate(k.begin(), k.end(), 0.0) / n;
        for (auto& v : k)
            v -= mean;
        // response to i^2 is 2
        const double s = moment(k, 2);
        for (auto& v : k)
            v *= 2.0 / s;
        break;
    }
    case 3: {
        const double a = moment(g, 4) / moment(g, 2);
        for (int t = 0; t < n; ++t) {
            const double i = t - radius;
            k[t] = (i * i * i - a * i) * g[t];
        }
        // response to i^3 is 6
        const double s = moment(k, 3);
        for (auto& v : k)
            v *= -6.0 / s;
        break;
    }
    }
    // exact antisymmetry for odd orders
    if (order % 2 == 1) {
        for (int t = 0; t < radius; ++t) {
            const double v = 0.5 * (k[t] - k[n - 1 - t]);
            k[t] = v;
            k[n - 1 - t] = -v;
        }
        k[radius] = 0.0;
    }
    return k;
}

namespace {

inline int mirror(int i, int n) {
    const int period = 2 * n;
    int m = i % period;
    if (m < 0)
        m += period;
    return m < n ? m : period - 1 - m;
}

void convolve_axis(const Volume& in, Volume& out, std::span<const double> k, int axis) {
    const Geometry& g = in.geometry();
    const int radius = static_cast<int>(k.size() / 2);
    const int len = g.dims[axis];
    std::size_t stride = 1;
    for (int a = 0; a < axis; ++a)
        stride *= static_cast<std::size_t>(g.dims[a]);
    std::vector<double> line(len + 2 * radius);
    const int a1 = (axis + 1) % 3, a2 = (axis + 2) % 3;
    for (int u = 0; u < g.dims[a2]; ++u)
        for (int w = 0; w < g.dims[a1]; ++w) {
            Index3 p{};
            p[a1] = w;
            p[a2] = u;
            p[axis] = 0;
            const std::size_t base = g.index(p);
            for (int t = -radius; t < len + radius; ++t)
                line[t + radius] = in[base + stride * static_cast<std::size_t>(mirror(t, len))];
            for (int t = 0; t < len; ++t) {
                // out(t) = sum_i f(t - i) k(i)
                double s = 0.0;
                for (int q = 0; q < static_cast<int>(k.size()); ++q)
                    s += line[t + radius - (q - radius) ] * k[q];
                out[base + stride * static_cast<std::size_t>(t)] = s;
            }
        }
}

}  // namespace

Volume convolve_separable(const Volume& vol, std::span<const double> kx, std::span<const double> ky,
                          std::span<const double> kz) {
    Volume a(vol.geometry()), b(vol.geometry());
    convolve_axis(vol, a, kx, 0);
    convolve_axis(a, b, ky, 1);
    convolve_axis(b, a, kz, 2);
    return a;
}

Volume gaussian_derivative(const Volume& vol, double scale_mm, const Index3& orders) {
    const Geometry& g = vol.geometry();
    std::vector<double> k[3];
    for (int a = 0; a < 3; ++a) {
        k[a] = gaussian_kernel(scale_mm / g.spacing[a], orders[a]);
        const double unit = std::pow(g.spacing[a], orders[a]);
        for (auto& v : k[a])
            v /= unit;
    }
    return convolve_separable(vol, k[0], k[1], k[2]);
}

Volume gradient_magnitude(const Volume& vol, double scale_mm) {
    const Volume gx = gaussian_derivative(vol, scale_mm, {1, 0, 0});
    const Volume gy = gaussian_derivative(vol, scale_mm, {0, 1, 0});
    const Volume gz = gaussian_derivative(vol, scale_mm, {0, 0, 1});
    Volume out(vol.geometry());
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = std::sqrt(gx[i] * gx[i] + gy[i] * gy[i] + gz[i] * gz[i]);
    return out;
}

namespace {

void put(FeatureVolume& fv, int component, const Volume& v) {
    for (std::size_t i = 0; i < v.size(); ++i)
        fv.values[i * static_cast<std::size_t>(fv.dim) + component] = v[i];
}

}  // namespace

FeatureVolume gaussian_bank(const Volume& vol) {
    FeatureVolume fv(vol.geometry(), 12);
    int c = 0;
    for (double s : {1.0, 2.0, 4.0})
        put(fv, c++, gaussian_derivative(vol, s, {0, 0, 0}));
    for (double s : {2.0, 4.0}) {
        put(fv, c++, gaussian_derivative(vol, s, {1, 0, 0}));
        put(fv, c++, gaussian_derivative(vol, s, {0, 1, 0}));
        put(fv, c++, gaussian_derivative(vol, s, {0, 0, 1}));
    }
    for (double s : {1.0, 2.0, 4.0}) {
        Volume log = gaussian_derivative(vol, s, {2, 0, 0});
        const Volume yy = gaussian_derivative(vol, s, {0, 2, 0});
        const Volume zz = gaussian_derivative(vol, s, {0, 0, 2});
        for (std::size_t i = 0; i < log.size(); ++i)
            log[i] += yy[i] + zz[i];
        put(fv, c++, log);
    }
    return fv;
}

FeatureVolume steerable_bank(const Volume& vol, double base_scale_mm) {
    static const Index3 orders[16] = {
        {2, 0, 0}, {0, 2, 0}, {0, 0, 2}, {1, 1, 0}, {1, 0, 1}, {0, 1, 1},                        // second order
        {3, 0, 0}, {0, 3, 0}, {0, 0, 3}, {2, 1, 0}, {2, 0, 1}, {1, 2, 0}, {0, 2, 1}, {1, 0, 2},  // third order
        {0, 1, 2}, {1, 1, 1}};
    FeatureVolume fv(vol.geometry(), 16);
    for (int c = 0; c < 16; ++c)
        put(fv, c, gaussian_derivative(vol, base_scale_mm, orders[c]));
    return fv;
}

FeatureVolume filter_bank(const Volume& vol, FilterBankKind kind) {
    return kind == FilterBankKind::gaussian12 ? gaussian_bank(vol) : steerable_bank(vol);
}

WhiteningStats whitening_stats(const FeatureVolume& fv) {
    const std::size_t n = fv.geometry.size();
    if (n == 0 || fv.dim <= 0)
        throw std::invalid_argument("whitening_stats: empty feature volume");
    WhiteningStats st{std::vector<double>(fv.dim, 0.0), std::vector<double>(fv.dim, 0.0)};
    for (std::size_t v = 0; v < n; ++v) {
        const auto f = fv.at(v);
        for (int c = 0; c < fv.dim; ++c)
            st.mean[c] += f[c];
    }
    for (auto& m : st.mean)
        m /= static_cast<double>(n);
    for (std::size_t v = 0; v < n; ++v) {
        const auto f = fv.at(v);
        for (int c = 0; c < fv.dim; ++c) {
            const double d = f[c] - st.mean[c];
            st.stddev[c] += d * d;
        }
    }
    for (auto& s : st.stddev)
        s = std::sqrt(s / static_cast<double>(n));
    return st;
}

FeatureVolume whiten(const FeatureVolume& fv, const WhiteningStats* stats) {
    const WhiteningStats own = stats ? WhiteningStats{} : whitening_stats(fv);
    const WhiteningStats& st = stats ? *stats : own;
    if (st.mean.size() != static_cast<std::size_t>(fv.dim) || st.stddev.size() != static_cast<std::size_t>(fv.dim))
        throw std::invalid_argument("whiten: statistics dimension mismatch");
    FeatureVolume out = fv;
    out.stats = st;
    out.degenerate.assign(fv.dim, false);
    for (int c = 0; c < fv.dim; ++c) {
        // relative cut-off so round-off noise on a constant response counts as constant
        const double scale = std::max(1.0, std::abs(st.mean[c]));
        out.degenerate[c] = !(st.stddev[c] > 1e-12 * scale);
    }
    const std::size_t n = fv.geometry.size();
    for (std::size_t v = 0; v < n; ++v) {
        auto f = out.at(v);
        for (int c = 0; c < fv.dim; ++c)
            f[c] = out.degenerate[c] ? 0.0 : (f[c] - st.mean[c]) / st.stddev[c];
    }
    return out;
}

}  // namespace mafuse

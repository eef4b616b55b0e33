#include "mafuse/crf.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "mafuse/maxflow.hpp"

namespace mafuse {

namespace {
constexpr double kProbFloor = 1e-12;
}

double robust_scale(const Volume& vol) {
    std::vector<double> v(vol.data().begin(), vol.data().end());
    if (v.empty())
        return 1.0;
    auto median = [](std::vector<double>& x) {
        const std::size_t m = x.size() / 2;
        std::nth_element(x.begin(), x.begin() + static_cast<long>(m), x.end());
        double med = x[m];
        if (x.size() % 2 == 0) {
            med = 0.5 * (med + *std::max_element(x.begin(), x.begin() + static_cast<long>(m)));
        }
        return med;
    };
    const double med = median(v);
    for (auto& x : v)
        x = std::abs(x - med);
    const double mad = median(v);
    return mad > 0.0 ? 1.4826 * mad : 1.0;
}

double mean_gradient(const Volume& grad_mag) {
    if (grad_mag.size() == 0)
        return 1.0;
    double s = 0.0;
    for (double g : grad_mag.data())
        s += g;
    s /= static_cast<double>(grad_mag.size());
    return s > 0.0 ? s : 1.0;
}

std::array<double, 2> unary_potentials(const std::array<double, 2>& likelihood, double prior_fg) {
    auto floor = [](double p) { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); };
    const double p1 = floor(prior_fg);
    const double p0 = floor(1.0 - prior_fg);
    return {-std::log(floor(likelihood[0])) - std::log(p0), -std::log(floor(likelihood[1])) - std::log(p1)};
}

std::vector<Index3> bresenham_line(const Index3& a, const Index3& b) {
    std::vector<Index3> out;
    Index3 d{}, s{};
    int axis = 0;
    for (int i = 0; i < 3; ++i) {
        d[i] = std::abs(b[i] - a[i]);
        s[i] = b[i] >= a[i] ? 1 : -1;
        if (d[i] > d[axis])
            axis = i;
    }
    const int o1 = (axis + 1) % 3, o2 = (axis + 2) % 3;
    int e1 = 2 * d[o1] - d[axis];
    int e2 = 2 * d[o2] - d[axis];
    Index3 p = a;
    out.push_back(p);
    for (int step = 0; step < d[axis]; ++step) {
        if (e1 > 0) {
            p[o1] += s[o1];
            e1 -= 2 * d[axis];
        }
        if (e2 > 0) {
            p[o2] += s[o2];
            e2 -= 2 * d[axis];
        }
        e1 += 2 * d[o1];
        e2 += 2 * d[o2];
        p[axis] += s[axis];
        out.push_back(p);
    }
    return out;
}

double pairwise_beta(const Volume& image, const Volume& grad_mag, const Index3& x, const Index3& y,
                     const ContrastParams& params) {
    if (!(params.sigma > 0.0) || !(params.sigma_g > 0.0) || params.c < 0.0 || params.c > 1.0)
        throw std::invalid_argument("pairwise_beta: need sigma > 0, sigma_g > 0 and 0 <= c <= 1");
    const double diff = image.at(x[0], x[1], x[2]) - image.at(y[0], y[1], y[2]);
    const double intensity = 1.0 + std::log1p(diff * diff / (2.0 * params.sigma * params.sigma));
    double boundary = 0.0;
    if (params.c < 1.0) {
        double gmax = 0.0;
        for (const auto& r : bresenham_line(x, y))
            gmax = std::max(gmax, grad_mag.at(r[0], r[1], r[2]));
        boundary = 1.0 - std::exp(-gmax / params.sigma_g);
    }
    return params.c * intensity + (1.0 - params.c) * boundary;
}

const std::array<Index3, 13>& forward_neighbors() {
    static const std::array<Index3, 13> offs = [] {
        std::array<Index3, 13> o{};
        int n = 0;
        for (int dk = -1; dk <= 1; ++dk)
            for (int dj = -1; dj <= 1; ++dj)
                for (int di = -1; di <= 1; ++di) {
                    // lexicographically positive offsets
                    if (dk > 0 || (dk == 0 && (dj > 0 || (dj == 0 && di > 0))))
                        o[static_cast<std::size_t>(n++)] = {di, dj, dk};
                }
        return o;
    }();
    return offs;
}

double CrfModel::pairwise_energy(const std::vector<std::uint8_t>& s) const {
    double e = 0.0;
    for (const auto& ed : edges)
        if (s[static_cast<std::size_t>(ed.a)] != s[static_cast<std::size_t>(ed.b)])
            e += lambda * ed.beta;
    return e;
}

double CrfModel::energy(const std::vector<std::uint8_t>& s) const {
    if (s.size() != voxels.size())
        throw std::invalid_argument("CrfModel::energy: one label per node required");
    double e = 0.0;
    for (std::size_t n = 0; n < voxels.size(); ++n)
        e += unary[n][s[n] ? 1 : 0];
    return e + pairwise_energy(s);
}

CrfModel build_energy(const Volume& psi0, const Volume& psi1, const Volume& image, const Volume& grad_mag,
                      const LabelMap& mask, const LabelMap& fixed, double lambda, const ContrastParams& params) {
    const Geometry& g = mask.geometry();
    require_same_geometry(psi0.geometry(), g, "build_energy psi0");
    require_same_geometry(psi1.geometry(), g, "build_energy psi1");
    require_same_geometry(image.geometry(), g, "build_energy image");
    require_same_geometry(grad_mag.geometry(), g, "build_energy gradient");
    require_same_geometry(fixed.geometry(), g, "build_energy fixed labels");
    if (!(lambda >= 0.0))
        throw std::invalid_argument("build_energy: lambda must be >= 0");

    CrfModel m;
    m.geometry = g;
    m.lambda = lambda;
    m.fixed = fixed;
    std::vector<int> node_of(g.size(), -1);
    for (std::size_t v = 0; v < g.size(); ++v)
        if (mask[v]) {
            node_of[v] = static_cast<int>(m.voxels.size());
            m.voxels.push_back(v);
            if (!std::isfinite(psi0[v]) || !std::isfinite(psi1[v]))
                throw std::invalid_argument("build_energy: non-finite unary");
            m.unary.push_back({psi0[v], psi1[v]});
        }

    for (std::size_t n = 0; n < m.voxels.size(); ++n) {
        const Index3 x = g.coords(m.voxels[n]);
        for (int sign : {1, -1})
            for (const auto& o : forward_neighbors()) {
                const Index3 y{x[0] + sign * o[0], x[1] + sign * o[1], x[2] + sign * o[2]};
                if (!g.contains(y[0], y[1], y[2]))
                    continue;
                const std::size_t vy = g.index(y);
                const int ny = node_of[vy];
                if (ny >= 0) {
                    if (sign > 0) {
                        const double beta = pairwise_beta(image, grad_mag, x, y, params);
                        m.edges.push_back({static_cast<int>(n), ny, beta});
                    }
                } else {
                    // certain neighbour: disagreeing with its label costs λβ
                    const double beta = pairwise_beta(image, grad_mag, x, y, params);
                    m.unary[n][fixed[vy] ? 0 : 1] += lambda * beta;
                }
            }
    }
    return m;
}

CrfSolution min_cut(const CrfModel& model) {
    const int n = static_cast<int>(model.node_count());
    MaxFlowGraph graph(n);
    double constant = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto& u = model.unary[static_cast<std::size_t>(i)];
        const double lo = std::min(u[0], u[1]);
        constant += lo;
        // sink side is label 1: cutting source->i costs ψ(1)
        graph.add_terminal(i, u[1] - lo, u[0] - lo);
    }
    for (const auto& e : model.edges) {
        const double w = model.lambda * e.beta;
        if (!(w >= 0.0))
            throw std::logic_error("min_cut: negative pairwise capacity");
        graph.add_edge(e.a, e.b, w, w);
    }
    const double flow = graph.solve();

    CrfSolution sol;
    sol.node_labels.resize(static_cast<std::size_t>(n));
    sol.labels = model.fixed;
    for (int i = 0; i < n; ++i) {
        const std::uint8_t l = graph.on_source_side(i) ? 0 : 1;
        sol.node_labels[static_cast<std::size_t>(i)] = l;
        sol.labels[model.voxels[static_cast<std::size_t>(i)]] = l;
    }
    sol.energy = model.energy(sol.node_labels);
    const double expected = flow + constant;
    const double tol = 1e-9 * std::max(1.0, std::abs(expected));
    if (std::abs(sol.energy - expected) > tol * 1e3)
        throw std::logic_error("min_cut: cut energy disagrees with flow value");
    return sol;
}

}  // namespace mafuse

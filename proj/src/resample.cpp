#include "mafuse/resample.hpp"

#include <algorithm>

namespace mafuse {

namespace {

constexpr double kSnap = 1e-9;

struct Mapper {
    const Transform& xform;
    const Geometry& target;
    bool field_on_target = false;

    Mapper(const Transform& x, const Geometry& t) : xform(x), target(t) {
        if (const auto* a = std::get_if<AffineTransform>(&xform)) {
            a->inverse();  // rejects singular transforms up front
        } else {
            const auto& f = std::get<DisplacementField>(xform);
            f.validate();
            field_on_target = f.geometry == target;
        }
    }

    Vec3 operator()(int i, int j, int k) const {
        const Vec3 p = target.physical(i, j, k);
        if (const auto* a = std::get_if<AffineTransform>(&xform))
            return a->apply(p);
        const auto& f = std::get<DisplacementField>(xform);
        const Vec3 d = field_on_target ? f.displacement[target.index(i, j, k)] : f.sample(p);
        return {p[0] + d[0], p[1] + d[1], p[2] + d[2]};
    }
};

double snap(double c) {
    const double r = std::round(c);
    return std::abs(c - r) < kSnap ? r : c;
}

}  // namespace

Vec3 map_voxel(const Transform& xform, const Geometry& target, int i, int j, int k) {
    return Mapper(xform, target)(i, j, k);
}

Volume resample(const Volume& src, const Transform& xform, const Geometry& target, Interpolation mode, double fill) {
    target.validate();
    const Mapper map(xform, target);
    const Geometry& sg = src.geometry();
    Volume out(target, fill);

    for (int k = 0; k < target.dims[2]; ++k)
        for (int j = 0; j < target.dims[1]; ++j)
            for (int i = 0; i < target.dims[0]; ++i) {
                Vec3 c = sg.continuous_index(map(i, j, k));
                for (auto& v : c)
                    v = snap(v);
                double value = fill;
                if (mode == Interpolation::nearest) {
                    int n[3];
                    bool inside = true;
                    for (int a = 0; a < 3; ++a) {
                        n[a] = static_cast<int>(std::floor(c[a] + 0.5));
                        inside = inside && n[a] >= 0 && n[a] < sg.dims[a];
                    }
                    if (inside)
                        value = src.at(n[0], n[1], n[2]);
                } else {
                    int i0[3];
                    double f[3];
                    bool inside = true;
                    for (int a = 0; a < 3; ++a) {
                        if (c[a] < 0.0 || c[a] > sg.dims[a] - 1) {
                            inside = false;
                            break;
                        }
                        i0[a] = std::min(static_cast<int>(std::floor(c[a])), sg.dims[a] - 1);
                        f[a] = c[a] - i0[a];
                    }
                    if (inside) {
                        const int i1 = std::min(i0[0] + 1, sg.dims[0] - 1);
                        const int j1 = std::min(i0[1] + 1, sg.dims[1] - 1);
                        const int k1 = std::min(i0[2] + 1, sg.dims[2] - 1);
                        auto lerp = [](double a, double b, double t) { return t == 0.0 ? a : a * (1.0 - t) + b * t; };
                        const double c00 = lerp(src.at(i0[0], i0[1], i0[2]), src.at(i1, i0[1], i0[2]), f[0]);
                        const double c10 = lerp(src.at(i0[0], j1, i0[2]), src.at(i1, j1, i0[2]), f[0]);
                        const double c01 = lerp(src.at(i0[0], i0[1], k1), src.at(i1, i0[1], k1), f[0]);
                        const double c11 = lerp(src.at(i0[0], j1, k1), src.at(i1, j1, k1), f[0]);
                        value = lerp(lerp(c00, c10, f[1]), lerp(c01, c11, f[1]), f[2]);
                    }
                }
                out.at(i, j, k) = value;
            }
    return out;
}

LabelMap resample_labels(const LabelMap& src, const Transform& xform, const Geometry& target) {
    Volume as_real(src.geometry());
    for (std::size_t v = 0; v < src.size(); ++v)
        as_real[v] = src[v];
    const Volume r = resample(as_real, xform, target, Interpolation::nearest, 0.0);
    LabelMap out(target);
    for (std::size_t v = 0; v < out.size(); ++v)
        out[v] = r[v] != 0.0 ? 1 : 0;
    return out;
}

}  // namespace mafuse

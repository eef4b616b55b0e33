#include "mafuse/volume.hpp"

#include <algorithm>
#include <sstream>

namespace mafuse {

void Geometry::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (dims[a] < 1)
            throw std::invalid_argument("geometry dims must be >= 1");
        if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
            throw std::invalid_argument("geometry spacing must be finite and > 0");
        if (!std::isfinite(origin[a]))
            throw std::invalid_argument("geometry origin must be finite");
    }
}

void require_same_geometry(const Geometry& a, const Geometry& b, const char* what) {
    if (!(a == b)) {
        std::ostringstream os;
        os << what << ": geometry mismatch (" << a.dims[0] << "x" << a.dims[1] << "x" << a.dims[2] << " vs "
           << b.dims[0] << "x" << b.dims[1] << "x" << b.dims[2] << ")";
        throw std::invalid_argument(os.str());
    }
}

std::size_t count_foreground(const LabelMap& m) {
    return static_cast<std::size_t>(std::count_if(m.data().begin(), m.data().end(), [](std::uint8_t v) { return v != 0; }));
}

AffineTransform::AffineTransform() : m_{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1} {}

AffineTransform::AffineTransform(const std::array<double, 16>& m) : m_(m) {
    for (double v : m_)
        if (!std::isfinite(v))
            throw std::invalid_argument("affine matrix has non-finite entries");
    if (m_[12] != 0.0 || m_[13] != 0.0 || m_[14] != 0.0 || m_[15] != 1.0)
        throw std::invalid_argument("affine matrix last row must be (0,0,0,1)");
}

AffineTransform AffineTransform::translation(const Vec3& t) {
    return AffineTransform({1, 0, 0, t[0], 0, 1, 0, t[1], 0, 0, 1, t[2], 0, 0, 0, 1});
}

Vec3 AffineTransform::apply(const Vec3& p) const {
    return {m_[0] * p[0] + m_[1] * p[1] + m_[2] * p[2] + m_[3],
            m_[4] * p[0] + m_[5] * p[1] + m_[6] * p[2] + m_[7],
            m_[8] * p[0] + m_[9] * p[1] + m_[10] * p[2] + m_[11]};
}

double AffineTransform::linear_determinant() const {
    const auto& a = m_;
    return a[0] * (a[5] * a[10] - a[6] * a[9]) - a[1] * (a[4] * a[10] - a[6] * a[8]) +
           a[2] * (a[4] * a[9] - a[5] * a[8]);
}

AffineTransform AffineTransform::inverse() const {
    const double det = linear_determinant();
    double scale = 0.0;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            scale = std::max(scale, std::abs(m_[4 * r + c]));
    if (scale == 0.0 || std::abs(det) <= 1e-12 * scale * scale * scale)
        throw std::domain_error("affine transform is not invertible");
    const auto& a = m_;
    std::array<double, 9> inv{
        (a[5] * a[10] - a[6] * a[9]) / det, (a[2] * a[9] - a[1] * a[10]) / det, (a[1] * a[6] - a[2] * a[5]) / det,
        (a[6] * a[8] - a[4] * a[10]) / det, (a[0] * a[10] - a[2] * a[8]) / det, (a[2] * a[4] - a[0] * a[6]) / det,
        (a[4] * a[9] - a[5] * a[8]) / det,  (a[1] * a[8] - a[0] * a[9]) / det,  (a[0] * a[5] - a[1] * a[4]) / det};
    std::array<double, 16> out{};
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c)
            out[4 * r + c] = inv[3 * r + c];
        out[4 * r + 3] = -(inv[3 * r] * a[3] + inv[3 * r + 1] * a[7] + inv[3 * r + 2] * a[11]);
    }
    out[15] = 1.0;
    return AffineTransform(out);
}

AffineTransform AffineTransform::compose(const AffineTransform& inner) const {
    std::array<double, 16> out{};
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) {
            double s = 0.0;
            for (int k = 0; k < 4; ++k)
                s += m_[4 * r + k] * inner.m_[4 * k + c];
            out[4 * r + c] = s;
        }
    return AffineTransform(out);
}

Vec3 DisplacementField::sample(const Vec3& p) const {
    Vec3 ci = geometry.continuous_index(p);
    int i0[3];
    double f[3];
    for (int a = 0; a < 3; ++a) {
        double c = std::clamp(ci[a], 0.0, static_cast<double>(geometry.dims[a] - 1));
        const double r = std::round(c);
        if (std::abs(c - r) < 1e-9)
            c = r;
        i0[a] = std::min(static_cast<int>(std::floor(c)), geometry.dims[a] - 1);
        f[a] = c - i0[a];
    }
    Vec3 out{0.0, 0.0, 0.0};
    for (int dz = 0; dz < 2; ++dz) {
        const double wz = dz ? f[2] : 1.0 - f[2];
        if (wz == 0.0)
            continue;
        const int k = std::min(i0[2] + dz, geometry.dims[2] - 1);
        for (int dy = 0; dy < 2; ++dy) {
            const double wy = dy ? f[1] : 1.0 - f[1];
            if (wy == 0.0)
                continue;
            const int j = std::min(i0[1] + dy, geometry.dims[1] - 1);
            for (int dx = 0; dx < 2; ++dx) {
                const double wx = dx ? f[0] : 1.0 - f[0];
                if (wx == 0.0)
                    continue;
                const int i = std::min(i0[0] + dx, geometry.dims[0] - 1);
                const Vec3& d = displacement[geometry.index(i, j, k)];
                const double w = wx * wy * wz;
                out[0] += w * d[0];
                out[1] += w * d[1];
                out[2] += w * d[2];
            }
        }
    }
    return out;
}

void DisplacementField::validate() const {
    geometry.validate();
    if (displacement.size() != geometry.size())
        throw std::invalid_argument("displacement field length does not match geometry");
    for (const auto& d : displacement)
        if (!std::isfinite(d[0]) || !std::isfinite(d[1]) || !std::isfinite(d[2]))
            throw std::invalid_argument("displacement field has non-finite components");
}

void RegionOfInterest::validate_within(const Geometry& g) const {
    for (int a = 0; a < 3; ++a)
        if (lo[a] < 0 || hi[a] >= g.dims[a] || lo[a] > hi[a])
            throw std::invalid_argument("region of interest outside volume bounds");
}

}  // namespace mafuse

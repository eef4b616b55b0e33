#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace mafuse {

using Index3 = std::array<int, 3>;
using Vec3 = std::array<double, 3>;

/// Voxel lattice shared by every grid type: counts, mm spacing and the
/// physical position of voxel (0,0,0). Axes are aligned with physical space.
struct Geometry {
    Index3 dims{1, 1, 1};
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin{0.0, 0.0, 0.0};

    std::size_t size() const {
        return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
    }
    std::size_t index(int i, int j, int k) const {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(dims[0]) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(dims[1]) * k);
    }
    std::size_t index(const Index3& p) const { return index(p[0], p[1], p[2]); }
    Index3 coords(std::size_t idx) const {
        const auto nx = static_cast<std::size_t>(dims[0]);
        const auto ny = static_cast<std::size_t>(dims[1]);
        return {static_cast<int>(idx % nx), static_cast<int>((idx / nx) % ny), static_cast<int>(idx / (nx * ny))};
    }
    bool contains(int i, int j, int k) const {
        return i >= 0 && j >= 0 && k >= 0 && i < dims[0] && j < dims[1] && k < dims[2];
    }
    Vec3 physical(int i, int j, int k) const {
        return {origin[0] + i * spacing[0], origin[1] + j * spacing[1], origin[2] + k * spacing[2]};
    }
    /// Continuous voxel index of a physical point.
    Vec3 continuous_index(const Vec3& p) const {
        return {(p[0] - origin[0]) / spacing[0], (p[1] - origin[1]) / spacing[1], (p[2] - origin[2]) / spacing[2]};
    }
    double diagonal_mm() const {
        double s = 0.0;
        for (int a = 0; a < 3; ++a) {
            const double e = (dims[a] - 1) * spacing[a];
            s += e * e;
        }
        return std::sqrt(s);
    }

    /// Throws std::invalid_argument unless dims >= 1 and spacing > 0.
    void validate() const;

    bool operator==(const Geometry&) const = default;
};

/// Dense scalar grid, x-fastest storage.
template <typename T>
class Grid {
public:
    Grid() = default;
    explicit Grid(const Geometry& g, T fill = T{}) : geom_(g), data_(g.size(), fill) { geom_.validate(); }
    Grid(const Geometry& g, std::vector<T> data) : geom_(g), data_(std::move(data)) {
        geom_.validate();
        if (data_.size() != geom_.size())
            throw std::invalid_argument("grid data length does not match geometry");
    }

    const Geometry& geometry() const { return geom_; }
    const Index3& dims() const { return geom_.dims; }
    std::size_t size() const { return data_.size(); }

    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }
    T& at(int i, int j, int k) { return data_[geom_.index(i, j, k)]; }
    const T& at(int i, int j, int k) const { return data_[geom_.index(i, j, k)]; }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    std::vector<T>& storage() { return data_; }
    const std::vector<T>& storage() const { return data_; }

    bool operator==(const Grid&) const = default;

private:
    Geometry geom_;
    std::vector<T> data_;
};

using Volume = Grid<double>;
using LabelMap = Grid<std::uint8_t>;

/// Signed Euclidean distance (mm) to a label boundary, positive inside.
struct SignedDistanceMap {
    Volume field;
};

/// 4x4 row-major matrix mapping target physical coordinates to atlas
/// physical coordinates.
class AffineTransform {
public:
    AffineTransform();  // identity
    explicit AffineTransform(const std::array<double, 16>& m);

    static AffineTransform identity() { return {}; }
    static AffineTransform translation(const Vec3& t);

    Vec3 apply(const Vec3& p) const;
    /// Throws std::domain_error when the linear part is singular.
    AffineTransform inverse() const;
    double linear_determinant() const;
    const std::array<double, 16>& matrix() const { return m_; }
    double operator()(int r, int c) const { return m_[4 * r + c]; }
    AffineTransform compose(const AffineTransform& inner) const;  // this ∘ inner

private:
    std::array<double, 16> m_;
};

/// Per-voxel displacement (mm) on a target lattice: a target voxel at
/// physical p lands at p + d(p) in atlas space.
struct DisplacementField {
    Geometry geometry;
    std::vector<Vec3> displacement;

    DisplacementField() = default;
    explicit DisplacementField(const Geometry& g) : geometry(g), displacement(g.size(), Vec3{0.0, 0.0, 0.0}) {}

    /// Trilinear sample at an arbitrary physical point (edge-clamped).
    Vec3 sample(const Vec3& p) const;
    void validate() const;
};

using Transform = std::variant<AffineTransform, DisplacementField>;

/// Inclusive voxel bounds per axis.
struct RegionOfInterest {
    Index3 lo{0, 0, 0};
    Index3 hi{0, 0, 0};

    Index3 extent() const { return {hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1}; }
    void validate_within(const Geometry& g) const;
    bool operator==(const RegionOfInterest&) const = default;
};

template <typename T>
bool same_geometry(const Grid<T>& a, const Grid<T>& b) {
    return a.geometry() == b.geometry();
}

/// Throws std::invalid_argument with `what` when the geometries differ.
void require_same_geometry(const Geometry& a, const Geometry& b, const char* what);

std::size_t count_foreground(const LabelMap& m);

}  // namespace mafuse

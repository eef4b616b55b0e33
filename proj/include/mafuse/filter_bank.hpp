#pragma once

#include <span>
#include <string>
#include <vector>

#include "mafuse/volume.hpp"

namespace mafuse {

enum class FilterBankKind { gaussian12, steerable16 };

std::string to_string(FilterBankKind k);
FilterBankKind filter_bank_from_string(const std::string& s);

/// gaussian12 when the voxel anisotropy max/min spacing exceeds 1.3.
FilterBankKind select_filter_bank(const Vec3& spacing);

struct WhiteningStats {
    std::vector<double> mean;
    std::vector<double> stddev;
};

/// d filter responses per voxel, stored voxel-major.
struct FeatureVolume {
    Geometry geometry;
    int dim = 0;
    std::vector<double> values;
    WhiteningStats stats;            // statistics applied by whiten(), empty before
    std::vector<bool> degenerate;    // components zeroed for lack of variance

    FeatureVolume() = default;
    FeatureVolume(const Geometry& g, int d) : geometry(g), dim(d), values(g.size() * static_cast<std::size_t>(d), 0.0) {}

    std::span<const double> at(std::size_t voxel) const {
        return {values.data() + voxel * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }
    std::span<double> at(std::size_t voxel) {
        return {values.data() + voxel * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }
};

/// Sampled 1-D Gaussian derivative kernel of the given order (0..3), sigma
/// in voxels, truncated at 3 sigma. Moments are fixed so that the kernel
/// reproduces the exact derivative of polynomials up to degree `order`
/// (order >= 1 kernels annihilate constants; orders 2 and 3 annihilate
/// lines as well). Index 0 of the result is offset -radius.
std::vector<double> gaussian_kernel(double sigma_voxels, int order);

/// Separable convolution with half-sample mirror boundaries.
Volume convolve_separable(const Volume& vol, std::span<const double> kx, std::span<const double> ky,
                          std::span<const double> kz);

/// Gaussian derivative in mm units; orders per axis, scale in mm.
Volume gaussian_derivative(const Volume& vol, double scale_mm, const Index3& orders);

/// |∇(G_scale * I)| in intensity per mm.
Volume gradient_magnitude(const Volume& vol, double scale_mm);

/// G(1,2,4), Gx,Gy,Gz at 2 and 4, LoG(1,2,4); scales in mm.
FeatureVolume gaussian_bank(const Volume& vol);

/// Second derivatives Gxx,Gyy,Gzz,Gxy,Gxz,Gyz then the ten third-order
/// separable quadrature partners (xxx,yyy,zzz,xxy,xxz,xyy,yyz,xzz,yzz,xyz).
FeatureVolume steerable_bank(const Volume& vol, double base_scale_mm = 2.0);

FeatureVolume filter_bank(const Volume& vol, FilterBankKind kind);

/// Population mean and standard deviation per component.
WhiteningStats whitening_stats(const FeatureVolume& fv);

/// (value - mean) / std per component, using `stats` when given.
/// Components whose std is 0 are zeroed and flagged degenerate.
FeatureVolume whiten(const FeatureVolume& fv, const WhiteningStats* stats = nullptr);

}  // namespace mafuse

#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "mafuse/volume.hpp"

namespace mafuse {

/// Parameters of the contrast-sensitive Potts term.
struct ContrastParams {
    double c = 0.6;        // mix between intensity and boundary parts, in [0,1]
    double sigma = 1.0;    // robust intensity scale
    double sigma_g = 1.0;  // gradient normalisation
};

/// 1.4826 x median absolute deviation; 1 when the MAD vanishes.
double robust_scale(const Volume& vol);
/// Mean of a gradient-magnitude volume; 1 when it vanishes.
double mean_gradient(const Volume& grad_mag);

/// ψ(l) = -log p(I|l) - log p(l); both inputs floored to [1e-12, 1-1e-12].
std::array<double, 2> unary_potentials(const std::array<double, 2>& likelihood, double prior_fg);

/// Voxels on the 3-D Bresenham line from a to b, endpoints included.
std::vector<Index3> bresenham_line(const Index3& a, const Index3& b);

/// c(1 + ln(1 + (I(x)-I(y))^2 / 2σ^2)) + (1-c) max_{r on the line} (1 - exp(-|∇I(r)|/σ_G)).
double pairwise_beta(const Volume& image, const Volume& grad_mag, const Index3& x, const Index3& y,
                     const ContrastParams& params);

/// Offsets of the 13 forward neighbours of the 26-neighbourhood.
const std::array<Index3, 13>& forward_neighbors();

/// Binary energy restricted to the uncertain voxels. Unary entries already
/// include the cut cost against fixed-label (certain) neighbours.
struct CrfModel {
    struct Edge {
        int a = 0, b = 0;  // node indices
        double beta = 0.0;
    };

    Geometry geometry;
    double lambda = 0.2;
    std::vector<std::size_t> voxels;         // node -> voxel index
    std::vector<std::array<double, 2>> unary;  // effective unary per node
    std::vector<Edge> edges;
    LabelMap fixed;  // labels of certain voxels (and a fallback everywhere)

    std::size_t node_count() const { return voxels.size(); }
    /// E(S) over the uncertain nodes for a per-node labelling.
    double energy(const std::vector<std::uint8_t>& node_labels) const;
    /// Total pairwise penalty λ Σ β [S(a) != S(b)].
    double pairwise_energy(const std::vector<std::uint8_t>& node_labels) const;
};

/// Assembles the model over `mask`. `psi0`/`psi1` hold per-voxel unaries;
/// `fixed` supplies the labels of voxels outside the mask. Edges between
/// uncertain voxels carry β from `pairwise_beta`.
CrfModel build_energy(const Volume& psi0, const Volume& psi1, const Volume& image, const Volume& grad_mag,
                      const LabelMap& mask, const LabelMap& fixed, double lambda, const ContrastParams& params);

struct CrfSolution {
    LabelMap labels;  // full lattice, fixed voxels copied
    std::vector<std::uint8_t> node_labels;
    double energy = 0.0;
};

/// Global minimiser of the model by one s-t minimum cut. The returned energy
/// is re-evaluated on the labelling and checked against the flow value.
CrfSolution min_cut(const CrfModel& model);

}  // namespace mafuse

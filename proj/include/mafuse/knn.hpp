#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "mafuse/filter_bank.hpp"
#include "mafuse/volume.hpp"

namespace mafuse {

/// Exact k-nearest-neighbour search over fixed-dimension points. Splits on
/// the dimension of largest spread at the median; leaves hold <= 8 points.
/// Ties in distance resolve to the lower insertion index.
class KdTree {
public:
    struct Neighbor {
        double dist2 = 0.0;
        std::uint32_t index = 0;
    };

    KdTree() = default;
    /// `points` is row-major, size() = n * dim.
    KdTree(std::vector<double> points, int dim, int leaf_size = 8);

    std::size_t size() const { return dim_ ? points_.size() / static_cast<std::size_t>(dim_) : 0; }
    int dim() const { return dim_; }
    std::span<const double> point(std::size_t i) const {
        return {points_.data() + i * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
    }

    /// The k nearest points sorted by (dist2, index).
    std::vector<Neighbor> query(std::span<const double> q, std::size_t k) const;

private:
    struct Node {
        int split_dim = -1;  // -1 marks a leaf
        double split = 0.0;
        std::uint32_t begin = 0, end = 0;  // leaf range into order_
        std::uint32_t left = 0, right = 0;
    };

    std::uint32_t build(std::uint32_t begin, std::uint32_t end);
    void search(std::uint32_t node, std::span<const double> q, std::size_t k, std::vector<Neighbor>& heap,
                std::vector<double>& offsets, double cell_d2) const;

    std::vector<double> points_;
    int dim_ = 0;
    int leaf_size_ = 8;
    std::vector<std::uint32_t> order_;
    std::vector<Node> nodes_;
};

struct KnnNeighbor {
    double dist2 = 0.0;
    std::uint8_t label = 0;
};

/// Discriminative appearance model: labelled training feature vectors in a
/// kd-tree plus inverse-class-frequency weights N / (2 N_l).
class KnnModel {
public:
    KnnModel(std::vector<double> features, std::vector<std::uint8_t> labels, int dim, int k);

    std::size_t size() const { return labels_.size(); }
    int dim() const { return tree_.dim(); }
    int k() const { return k_; }
    const std::array<std::size_t, 2>& class_counts() const { return counts_; }
    const std::array<double, 2>& class_weights() const { return weights_; }

    std::vector<KnnNeighbor> query(std::span<const double> f, std::size_t k) const;

    /// Normalised (p0, p1) from the k nearest neighbours: each class sums
    /// w_l exp(-d^2) over its neighbours; an empty class contributes 1e-12.
    /// Distances are taken relative to the nearest neighbour, which leaves
    /// the normalised pair unchanged and avoids underflow.
    std::array<double, 2> image_likelihood(std::span<const double> f) const;

private:
    KdTree tree_;
    std::vector<std::uint8_t> labels_;
    std::array<std::size_t, 2> counts_{0, 0};
    std::array<double, 2> weights_{0.0, 0.0};
    int k_ = 20;
};

inline constexpr double kEmptyClassFloor = 1e-12;

/// Collects (feature, label) pairs of every atlas at voxels inside `domain`.
/// Throws std::invalid_argument when either class ends up empty.
KnnModel build_knn_model(std::span<const FeatureVolume> features, std::span<const LabelMap> labels,
                         const LabelMap& domain, int k = 20);

}  // namespace mafuse

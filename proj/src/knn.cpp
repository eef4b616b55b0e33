#include "mafuse/knn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mafuse {

namespace {

bool closer(const KdTree::Neighbor& a, const KdTree::Neighbor& b) {
    return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
}

}  // namespace

KdTree::KdTree(std::vector<double> points, int dim, int leaf_size)
    : points_(std::move(points)), dim_(dim), leaf_size_(std::max(1, leaf_size)) {
    if (dim_ <= 0)
        throw std::invalid_argument("KdTree: dimension must be > 0");
    if (points_.size() % static_cast<std::size_t>(dim_) != 0)
        throw std::invalid_argument("KdTree: point buffer is not a multiple of the dimension");
    if (size() > std::numeric_limits<std::uint32_t>::max())
        throw std::invalid_argument("KdTree: too many points");
    order_.resize(size());
    for (std::uint32_t i = 0; i < order_.size(); ++i)
        order_[i] = i;
    if (!order_.empty()) {
        nodes_.reserve(2 * order_.size() / static_cast<std::size_t>(leaf_size_) + 1);
        build(0, static_cast<std::uint32_t>(order_.size()));
    }
}

std::uint32_t KdTree::build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({});
    if (end - begin <= static_cast<std::uint32_t>(leaf_size_)) {
        nodes_[id].begin = begin;
        nodes_[id].end = end;
        return id;
    }
    int best_dim = 0;
    double best_spread = -1.0;
    for (int d = 0; d < dim_; ++d) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::uint32_t i = begin; i < end; ++i) {
            const double v = points_[static_cast<std::size_t>(order_[i]) * dim_ + d];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi - lo > best_spread) {
            best_spread = hi - lo;
            best_dim = d;
        }
    }
    if (best_spread <= 0.0) {  // all points identical
        nodes_[id].begin = begin;
        nodes_[id].end = end;
        return id;
    }
    const std::uint32_t mid = begin + (end - begin) / 2;
    auto key = [&](std::uint32_t i) { return points_[static_cast<std::size_t>(i) * dim_ + best_dim]; };
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) { return key(a) < key(b) || (key(a) == key(b) && a < b); });
    const double split = key(order_[mid]);
    const std::uint32_t left = build(begin, mid);
    const std::uint32_t right = build(mid, end);
    nodes_[id].split_dim = best_dim;
    nodes_[id].split = split;
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

void KdTree::search(std::uint32_t node, std::span<const double> q, std::size_t k, std::vector<Neighbor>& heap,
                    std::vector<double>& offsets, double cell_d2) const {
    const Node& n = nodes_[node];
    if (n.split_dim < 0) {
        for (std::uint32_t i = n.begin; i < n.end; ++i) {
            const std::uint32_t idx = order_[i];
            const double* p = points_.data() + static_cast<std::size_t>(idx) * dim_;
            const bool full = heap.size() == k;
            const double worst = full ? heap.front().dist2 : std::numeric_limits<double>::infinity();
            double d2 = 0.0;
            for (int d = 0; d < dim_ && d2 <= worst; ++d) {
                const double t = q[d] - p[d];
                d2 += t * t;
            }
            const Neighbor cand{d2, idx};
            if (!full) {
                heap.push_back(cand);
                std::push_heap(heap.begin(), heap.end(), closer);
            } else if (closer(cand, heap.front())) {
                std::pop_heap(heap.begin(), heap.end(), closer);
                heap.back() = cand;
                std::push_heap(heap.begin(), heap.end(), closer);
            }
        }
        return;
    }
    // left holds values <= split, right holds values >= split; `offsets`
    // keeps the per-axis gap between q and the current cell
    const double diff = q[n.split_dim] - n.split;
    const std::uint32_t near = diff < 0.0 ? n.left : n.right;
    const std::uint32_t far = diff < 0.0 ? n.right : n.left;
    search(near, q, k, heap, offsets, cell_d2);
    const double old = offsets[n.split_dim];
    const double far_d2 = cell_d2 - old * old + diff * diff;
    if (heap.size() < k || far_d2 <= heap.front().dist2) {
        offsets[n.split_dim] = diff;
        search(far, q, k, heap, offsets, far_d2);
        offsets[n.split_dim] = old;
    }
}

std::vector<KdTree::Neighbor> KdTree::query(std::span<const double> q, std::size_t k) const {
    if (q.size() != static_cast<std::size_t>(dim_))
        throw std::invalid_argument("KdTree::query: dimension mismatch");
    if (k > size())
        throw std::invalid_argument("KdTree::query: k exceeds tree size");
    std::vector<Neighbor> heap;
    if (k == 0)
        return heap;
    heap.reserve(k + 1);
    std::vector<double> offsets(static_cast<std::size_t>(dim_), 0.0);
    search(0, q, k, heap, offsets, 0.0);
    std::sort_heap(heap.begin(), heap.end(), closer);
    return heap;
}

KnnModel::KnnModel(std::vector<double> features, std::vector<std::uint8_t> labels, int dim, int k)
    : tree_(std::move(features), dim), labels_(std::move(labels)), k_(k) {
    if (labels_.size() != tree_.size())
        throw std::invalid_argument("KnnModel: one label per feature vector required");
    if (k_ < 1)
        throw std::invalid_argument("KnnModel: k must be >= 1");
    for (auto l : labels_)
        ++counts_[l ? 1 : 0];
    if (counts_[0] == 0 || counts_[1] == 0)
        throw std::invalid_argument("KnnModel: both classes need training points");
    const double n = static_cast<double>(labels_.size());
    for (int l = 0; l < 2; ++l)
        weights_[l] = n / (2.0 * static_cast<double>(counts_[l]));
}

std::vector<KnnNeighbor> KnnModel::query(std::span<const double> f, std::size_t k) const {
    const auto nn = tree_.query(f, k);
    std::vector<KnnNeighbor> out;
    out.reserve(nn.size());
    for (const auto& n : nn)
        out.push_back({n.dist2, labels_[n.index] ? std::uint8_t{1} : std::uint8_t{0}});
    return out;
}

std::array<double, 2> KnnModel::image_likelihood(std::span<const double> f) const {
    const auto nn = query(f, std::min<std::size_t>(static_cast<std::size_t>(k_), size()));
    std::array<double, 2> s{0.0, 0.0};
    std::array<bool, 2> seen{false, false};
    const double d0 = nn.empty() ? 0.0 : nn.front().dist2;
    for (const auto& n : nn) {
        s[n.label] += weights_[n.label] * std::exp(-(n.dist2 - d0));
        seen[n.label] = true;
    }
    for (int l = 0; l < 2; ++l)
        if (!seen[l])
            s[l] = kEmptyClassFloor;
    const double z = s[0] + s[1];
    return {s[0] / z, s[1] / z};
}

KnnModel build_knn_model(std::span<const FeatureVolume> features, std::span<const LabelMap> labels,
                         const LabelMap& domain, int k) {
    if (features.size() != labels.size() || features.empty())
        throw std::invalid_argument("build_knn_model: need one label map per feature volume");
    const int dim = features.front().dim;
    std::vector<double> pts;
    std::vector<std::uint8_t> lab;
    for (std::size_t a = 0; a < features.size(); ++a) {
        const auto& fv = features[a];
        require_same_geometry(fv.geometry, domain.geometry(), "build_knn_model features");
        require_same_geometry(labels[a].geometry(), domain.geometry(), "build_knn_model labels");
        if (fv.dim != dim)
            throw std::invalid_argument("build_knn_model: feature dimension mismatch");
        for (std::size_t v = 0; v < domain.size(); ++v) {
            if (!domain[v])
                continue;
            const auto f = fv.at(v);
            pts.insert(pts.end(), f.begin(), f.end());
            lab.push_back(labels[a][v] ? 1 : 0);
        }
    }
    if (lab.empty())
        throw std::invalid_argument("build_knn_model: empty training domain");
    return KnnModel(std::move(pts), std::move(lab), dim, k);
}

}  // namespace mafuse

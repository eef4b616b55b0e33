#pragma once

#include <cstdint>
#include <vector>

namespace mafuse {

/// s-t max-flow / min-cut on a sparse graph with real capacities, using
/// augmenting paths over two search trees that are reused between
/// augmentations (Boykov-Kolmogorov).
class MaxFlowGraph {
public:
    explicit MaxFlowGraph(int node_count);

    int node_count() const { return static_cast<int>(nodes_.size()); }

    /// Adds source->i and i->sink capacities. Both must be >= 0.
    void add_terminal(int i, double cap_source, double cap_sink);
    /// Adds i->j with `cap` and j->i with `rev_cap`. Both must be >= 0.
    void add_edge(int i, int j, double cap, double rev_cap);

    /// Runs to completion and returns the flow value.
    double solve();

    /// True when node i ends on the source side of the minimum cut.
    bool on_source_side(int i) const;

private:
    static constexpr int kNone = -1;
    static constexpr int kTerminal = -2;
    static constexpr int kOrphan = -3;

    enum Tree : std::uint8_t { free_node = 0, source_tree = 1, sink_tree = 2 };

    struct Node {
        int first = -1;
        int parent = kNone;
        double tr_cap = 0.0;  // > 0: residual from source; < 0: residual to sink
        long ts = 0;
        int dist = 0;
        Tree tree = free_node;
        bool queued = false;
    };
    struct Arc {
        int head = 0;
        int next = -1;
        double cap = 0.0;
    };

    static int sister(int a) { return a ^ 1; }
    void activate(int i);
    int next_active();
    void augment(int middle);
    void adopt(int i);

    std::vector<Node> nodes_;
    std::vector<Arc> arcs_;
    std::vector<int> active_;
    std::size_t active_head_ = 0;
    std::vector<int> orphans_;
    double flow_ = 0.0;
    long time_ = 0;
    bool solved_ = false;
};

}  // namespace mafuse

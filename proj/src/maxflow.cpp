#include "mafuse/maxflow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace mafuse {

MaxFlowGraph::MaxFlowGraph(int node_count) {
    if (node_count < 0)
        throw std::invalid_argument("MaxFlowGraph: negative node count");
    nodes_.resize(static_cast<std::size_t>(node_count));
}

void MaxFlowGraph::add_terminal(int i, double cap_source, double cap_sink) {
    if (!(cap_source >= 0.0) || !(cap_sink >= 0.0) || !std::isfinite(cap_source) || !std::isfinite(cap_sink))
        throw std::logic_error("MaxFlowGraph: terminal capacities must be finite and >= 0");
    Node& n = nodes_.at(static_cast<std::size_t>(i));
    // fold into a single residual, sending the common part straight through
    double s = cap_source, t = cap_sink;
    if (n.tr_cap > 0.0)
        s += n.tr_cap;
    else
        t -= n.tr_cap;
    flow_ += std::min(s, t);
    n.tr_cap = s - t;
}

void MaxFlowGraph::add_edge(int i, int j, double cap, double rev_cap) {
    if (!(cap >= 0.0) || !(rev_cap >= 0.0) || !std::isfinite(cap) || !std::isfinite(rev_cap))
        throw std::logic_error("MaxFlowGraph: edge capacities must be finite and >= 0");
    if (i == j)
        throw std::invalid_argument("MaxFlowGraph: self loop");
    const int a = static_cast<int>(arcs_.size());
    arcs_.push_back({j, nodes_.at(static_cast<std::size_t>(i)).first, cap});
    arcs_.push_back({i, nodes_.at(static_cast<std::size_t>(j)).first, rev_cap});
    nodes_[static_cast<std::size_t>(i)].first = a;
    nodes_[static_cast<std::size_t>(j)].first = a + 1;
}

void MaxFlowGraph::activate(int i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (!n.queued) {
        n.queued = true;
        active_.push_back(i);
    }
}

int MaxFlowGraph::next_active() {
    while (active_head_ < active_.size()) {
        const int i = active_[active_head_++];
        nodes_[static_cast<std::size_t>(i)].queued = false;
        if (nodes_[static_cast<std::size_t>(i)].parent != kNone)
            return i;
    }
    active_.clear();
    active_head_ = 0;
    return kNone;
}

void MaxFlowGraph::augment(int middle) {
    const int u = arcs_[static_cast<std::size_t>(sister(middle))].head;  // source side
    const int v = arcs_[static_cast<std::size_t>(middle)].head;          // sink side
    double b = arcs_[static_cast<std::size_t>(middle)].cap;
    for (int x = u;;) {
        const int p = nodes_[static_cast<std::size_t>(x)].parent;
        if (p == kTerminal) {
            b = std::min(b, nodes_[static_cast<std::size_t>(x)].tr_cap);
            break;
        }
        b = std::min(b, arcs_[static_cast<std::size_t>(sister(p))].cap);
        x = arcs_[static_cast<std::size_t>(p)].head;
    }
    for (int x = v;;) {
        const int p = nodes_[static_cast<std::size_t>(x)].parent;
        if (p == kTerminal) {
            b = std::min(b, -nodes_[static_cast<std::size_t>(x)].tr_cap);
            break;
        }
        b = std::min(b, arcs_[static_cast<std::size_t>(p)].cap);
        x = arcs_[static_cast<std::size_t>(p)].head;
    }

    arcs_[static_cast<std::size_t>(middle)].cap -= b;
    arcs_[static_cast<std::size_t>(sister(middle))].cap += b;
    for (int x = u;;) {
        Node& n = nodes_[static_cast<std::size_t>(x)];
        const int p = n.parent;
        if (p == kTerminal) {
            n.tr_cap -= b;
            if (n.tr_cap == 0.0) {
                n.parent = kOrphan;
                orphans_.push_back(x);
            }
            break;
        }
        arcs_[static_cast<std::size_t>(p)].cap += b;
        arcs_[static_cast<std::size_t>(sister(p))].cap -= b;
        if (arcs_[static_cast<std::size_t>(sister(p))].cap == 0.0) {
            n.parent = kOrphan;
            orphans_.push_back(x);
        }
        x = arcs_[static_cast<std::size_t>(p)].head;
    }
    for (int x = v;;) {
        Node& n = nodes_[static_cast<std::size_t>(x)];
        const int p = n.parent;
        if (p == kTerminal) {
            n.tr_cap += b;
            if (n.tr_cap == 0.0) {
                n.parent = kOrphan;
                orphans_.push_back(x);
            }
            break;
        }
        arcs_[static_cast<std::size_t>(sister(p))].cap += b;
        arcs_[static_cast<std::size_t>(p)].cap -= b;
        if (arcs_[static_cast<std::size_t>(p)].cap == 0.0) {
            n.parent = kOrphan;
            orphans_.push_back(x);
        }
        x = arcs_[static_cast<std::size_t>(p)].head;
    }
    flow_ += b;
}

void MaxFlowGraph::adopt(int i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    const bool src = n.tree == source_tree;
    constexpr int kInfDist = std::numeric_limits<int>::max();
    int best = kNone;
    int best_dist = kInfDist;
    for (int a = n.first; a != -1; a = arcs_[static_cast<std::size_t>(a)].next) {
        const double residual = src ? arcs_[static_cast<std::size_t>(sister(a))].cap : arcs_[static_cast<std::size_t>(a)].cap;
        if (residual <= 0.0)
            continue;
        int j = arcs_[static_cast<std::size_t>(a)].head;
        if (nodes_[static_cast<std::size_t>(j)].tree != n.tree || nodes_[static_cast<std::size_t>(j)].parent == kNone)
            continue;
        // walk to the root, checking the path does not pass through an orphan
        int d = 0;
        for (;;) {
            Node& y = nodes_[static_cast<std::size_t>(j)];
            if (y.ts == time_) {
                d += y.dist;
                break;
            }
            ++d;
            if (y.parent == kTerminal) {
                y.ts = time_;
                y.dist = 1;
                break;
            }
            if (y.parent == kOrphan) {
                d = kInfDist;
                break;
            }
            j = arcs_[static_cast<std::size_t>(y.parent)].head;
        }
        if (d == kInfDist)
            continue;
        if (d < best_dist) {
            best = a;
            best_dist = d;
        }
        for (j = arcs_[static_cast<std::size_t>(a)].head; nodes_[static_cast<std::size_t>(j)].ts != time_;) {
            Node& y = nodes_[static_cast<std::size_t>(j)];
            y.ts = time_;
            y.dist = d--;
            j = arcs_[static_cast<std::size_t>(y.parent)].head;
        }
    }

    if (best != kNone) {
        n.parent = best;
        n.ts = time_;
        n.dist = best_dist + 1;
        return;
    }
    // no valid parent: the node becomes free
    for (int a = n.first; a != -1; a = arcs_[static_cast<std::size_t>(a)].next) {
        const int j = arcs_[static_cast<std::size_t>(a)].head;
        Node& y = nodes_[static_cast<std::size_t>(j)];
        if (y.tree != n.tree || y.parent == kNone)
            continue;
        const double residual = src ? arcs_[static_cast<std::size_t>(sister(a))].cap : arcs_[static_cast<std::size_t>(a)].cap;
        if (residual > 0.0)
            activate(j);
        if (y.parent != kTerminal && y.parent != kOrphan && arcs_[static_cast<std::size_t>(y.parent)].head == i) {
            y.parent = kOrphan;
            orphans_.push_back(j);
        }
    }
    n.tree = free_node;
    n.parent = kNone;
}

double MaxFlowGraph::solve() {
    if (solved_)
        return flow_;
    for (int i = 0; i < node_count(); ++i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.tr_cap > 0.0) {
            n.tree = source_tree;
            n.parent = kTerminal;
            n.dist = 1;
            activate(i);
        } else if (n.tr_cap < 0.0) {
            n.tree = sink_tree;
            n.parent = kTerminal;
            n.dist = 1;
            activate(i);
        }
    }

    int current = kNone;
    for (;;) {
        int i = current;
        if (i == kNone || nodes_[static_cast<std::size_t>(i)].parent == kNone) {
            i = next_active();
            if (i == kNone)
                break;
        }
        current = kNone;

        int middle = kNone;
        Node& n = nodes_[static_cast<std::size_t>(i)];
        for (int a = n.first; a != -1; a = arcs_[static_cast<std::size_t>(a)].next) {
            const int j = arcs_[static_cast<std::size_t>(a)].head;
            Node& y = nodes_[static_cast<std::size_t>(j)];
            if (n.tree == source_tree) {
                if (arcs_[static_cast<std::size_t>(a)].cap <= 0.0)
                    continue;
                if (y.tree == free_node) {
                    y.tree = source_tree;
                    y.parent = sister(a);
                    y.ts = n.ts;
                    y.dist = n.dist + 1;
                    activate(j);
                } else if (y.tree == sink_tree) {
                    middle = a;
                    break;
                } else if (y.ts <= n.ts && y.dist > n.dist) {
                    y.parent = sister(a);
                    y.ts = n.ts;
                    y.dist = n.dist + 1;
                }
            } else {
                if (arcs_[static_cast<std::size_t>(sister(a))].cap <= 0.0)
                    continue;
                if (y.tree == free_node) {
                    y.tree = sink_tree;
                    y.parent = sister(a);
                    y.ts = n.ts;
                    y.dist = n.dist + 1;
                    activate(j);
                } else if (y.tree == source_tree) {
                    middle = sister(a);
                    break;
                } else if (y.ts <= n.ts && y.dist > n.dist) {
                    y.parent = sister(a);
                    y.ts = n.ts;
                    y.dist = n.dist + 1;
                }
            }
        }

        ++time_;
        if (middle == kNone)
            continue;
        current = i;
        augment(middle);
        while (!orphans_.empty()) {
            const int o = orphans_.back();
            orphans_.pop_back();
            adopt(o);
        }
    }
    solved_ = true;
    return flow_;
}

bool MaxFlowGraph::on_source_side(int i) const {
    const Node& n = nodes_.at(static_cast<std::size_t>(i));
    return n.parent != kNone && n.tree == source_tree;
}

}  // namespace mafuse

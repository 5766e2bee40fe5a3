#include "sad/adjacency.hpp"

#include <algorithm>
#include <stdexcept>

namespace sad {

TemporalAdjacency::TemporalAdjacency(const EventStream& stream) : lists_(stream.num_nodes) {
    // stream is time-sorted, so per-node append order is already sorted;
    // a self-loop contributes a single entry
    for (size_t i = 0; i < stream.events.size(); ++i) {
        const Event& e = stream.events[i];
        lists_[e.src].push_back({e.dst, i, e.t});
        if (e.dst != e.src) lists_[e.dst].push_back({e.src, i, e.t});
    }
}

const std::vector<NeighborRef>& TemporalAdjacency::history(uint32_t node) const {
    if (node >= lists_.size()) throw std::invalid_argument("TemporalAdjacency: node id out of range");
    return lists_[node];
}

size_t TemporalAdjacency::history_end_before(uint32_t node, double t) const {
    const std::vector<NeighborRef>& list = history(node);
    // first index with time >= t; everything before is strictly earlier
    const auto it = std::lower_bound(list.begin(), list.end(), t,
                                     [](const NeighborRef& r, double tt) { return r.t < tt; });
    return static_cast<size_t>(it - list.begin());
}

std::vector<NeighborRef> TemporalAdjacency::neighbors_before(uint32_t node, double t, size_t k) const {
    if (k == 0) throw std::invalid_argument("neighbors_before: k must be >= 1");
    const std::vector<NeighborRef>& list = history(node);
    const size_t end = history_end_before(node, t);
    const size_t n = std::min(k, end);
    std::vector<NeighborRef> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) out.push_back(list[end - 1 - i]);
    return out;
}

std::vector<NeighborRef> TemporalAdjacency::neighbors_before_uniform(uint32_t node, double t, size_t k,
                                                                     Rng& rng) const {
    if (k == 0) throw std::invalid_argument("neighbors_before_uniform: k must be >= 1");
    const std::vector<NeighborRef>& list = history(node);
    const size_t end = history_end_before(node, t);
    if (end <= k) return neighbors_before(node, t, k);
    std::vector<size_t> picks = rng.sample_without_replacement(end, k);
    std::sort(picks.begin(), picks.end(), std::greater<size_t>());  // most recent first
    std::vector<NeighborRef> out;
    out.reserve(k);
    for (size_t i : picks) out.push_back(list[i]);
    return out;
}

Subgraph sample_subgraph(const TemporalAdjacency& adj, uint32_t node, double t, size_t hops, size_t per_hop,
                         Rng* uniform_rng) {
    if (hops == 0) throw std::invalid_argument("sample_subgraph: hops must be >= 1");
    if (per_hop == 0) throw std::invalid_argument("sample_subgraph: per_hop must be >= 1");
    Subgraph g;
    g.layers.resize(hops + 1);
    SubgraphEntry root;
    root.node = node;
    root.query_time = t;
    g.layers[0].push_back(root);
    for (size_t h = 0; h < hops; ++h) {
        std::vector<SubgraphEntry>& parents = g.layers[h];
        std::vector<SubgraphEntry>& next = g.layers[h + 1];
        for (SubgraphEntry& parent : parents) {
            parent.child_begin = next.size();
            const std::vector<NeighborRef> nbrs =
                uniform_rng ? adj.neighbors_before_uniform(parent.node, parent.query_time, per_hop, *uniform_rng)
                            : adj.neighbors_before(parent.node, parent.query_time, per_hop);
            for (const NeighborRef& r : nbrs) {
                SubgraphEntry e;
                e.node = r.neighbor;
                e.query_time = r.t;
                e.dt_parent = parent.query_time - r.t;
                e.event_index = r.event_index;
                next.push_back(e);
            }
            parent.child_end = next.size();
        }
    }
    return g;
}

}  // namespace sad

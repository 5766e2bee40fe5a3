#pragma once

#include <cstdint>
#include <vector>

#include "sad/events.hpp"
#include "sad/rng.hpp"

namespace sad {

struct NeighborRef {
    uint32_t neighbor = 0;
    size_t event_index = 0;
    double t = 0.0;
};

// Per-node time-sorted event index. Every event appears in both endpoints'
// lists, so neighborhood queries treat interactions as bidirectional.
// Immutable after construction; safe for concurrent reads.
class TemporalAdjacency {
public:
    explicit TemporalAdjacency(const EventStream& stream);

    // Up to k events strictly before t, most recent first.
    std::vector<NeighborRef> neighbors_before(uint32_t node, double t, size_t k) const;

    // Uniform sample (without replacement) of up to k events strictly before
    // t, most recent first. Variant kept behind the sampling flag.
    std::vector<NeighborRef> neighbors_before_uniform(uint32_t node, double t, size_t k, Rng& rng) const;

    size_t num_nodes() const { return lists_.size(); }
    const std::vector<NeighborRef>& history(uint32_t node) const;

private:
    size_t history_end_before(uint32_t node, double t) const;

    std::vector<std::vector<NeighborRef>> lists_;
};

constexpr size_t kNoEvent = static_cast<size_t>(-1);

// One node of a sampled computation tree. Root entries have no parent event;
// every other entry records the interaction that put it in the tree.
struct SubgraphEntry {
    uint32_t node = 0;
    double query_time = 0.0;   // time this entry's own neighbors are drawn at
    double dt_parent = 0.0;    // parent query time minus this interaction time
    size_t event_index = kNoEvent;
    size_t child_begin = 0;    // range into the next layer
    size_t child_end = 0;
};

// Layered temporal computation tree; layers[0] holds the single root.
struct Subgraph {
    std::vector<std::vector<SubgraphEntry>> layers;
};

// Expands (node, t) into a `hops`-layer tree, taking the per_hop most recent
// events of each entry at that entry's own interaction time. Passing an Rng
// switches neighbor selection to the uniform variant.
Subgraph sample_subgraph(const TemporalAdjacency& adj, uint32_t node, double t, size_t hops, size_t per_hop,
                         Rng* uniform_rng = nullptr);

}  // namespace sad

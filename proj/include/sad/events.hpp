#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace sad {

// One timestamped directed interaction. label: -1 unlabeled, 0 normal,
// 1 anomalous (the source node's state at time t).
struct Event {
    uint32_t src = 0;
    uint32_t dst = 0;
    double t = 0.0;
    std::vector<double> features;
    int label = -1;
};

// Time-sorted event sequence over one contiguous node-id space. Bipartite
// inputs map items after users: item j becomes node num_users + j.
struct EventStream {
    std::vector<Event> events;
    size_t num_nodes = 0;
    size_t num_users = 0;
    size_t edge_feature_dim = 0;

    // Checks sortedness, id bounds, feature dims, finite non-negative times.
    void validate() const;
};

// Reads a JODIE-style CSV: a header line, then rows of
// user_id,item_id,timestamp,state_label,<edge features...>.
// state_label must be 0 or 1. Malformed rows are rejected with their
// 1-based file line number.
EventStream ingest_csv(const std::string& path);

// Writes the same layout ingest_csv reads. Round-trips exactly.
void write_csv(const EventStream& stream, const std::string& path);

struct SplitResult {
    EventStream train;
    EventStream val;
    EventStream test;
};

// Order-preserving partition at floor(f1*m) and floor((f1+f2)*m) events.
SplitResult chronological_split(const EventStream& stream,
                                std::array<double, 3> fractions = {0.70, 0.15, 0.15});

// Replaces the labels of exactly floor(p * L) labeled events with -1, chosen
// by a seeded shuffle. The input stream is left untouched.
EventStream drop_labels(const EventStream& stream, double p, uint64_t seed);

}  // namespace sad

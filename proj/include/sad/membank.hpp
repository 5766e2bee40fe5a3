#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "sad/rng.hpp"

namespace sad {

// Decay-weighted reference statistics of a memory-bank sample, drawn at one
// timestamp and treated as constants thereafter.
struct ReferenceScore {
    double mu = 0.0;
    double sigma = 1.0;
    double at_time = 0.0;
    size_t sample_count = 0;
};

// Time-decay weight of a stored score: 1 / (ln(t - t_i + 1) + 1).
double decay_weight(double t, double t_i);

// z-score of s against a reference; the reference is a constant of the draw.
double deviation(double s, const ReferenceScore& ref);

// Bounded FIFO of (anomaly score, storage time) messages from normal and
// unlabeled samples. Pushes must be chronological; entries are immutable once
// stored. Single-writer.
class MemoryBank {
public:
    MemoryBank(size_t capacity, size_t sample_size);

    // Stores (score, t) iff label is 0 or -1; label 1 is a silent no-op.
    // Evicts the oldest entry at capacity.
    void push(double score, double t, int label);

    // Draws min(sample_size, size()) entries uniformly without replacement
    // and evaluates the decay-weighted mean and (k-1)-denominator standard
    // deviation. The weighted sums are divided by k, not by the weight total.
    // sigma is clamped to >= 1e-6 (a single-entry draw sits at the clamp).
    // unit_weights forces every decay weight to 1; normalize_weights rescales
    // the drawn weights to mean 1 (study variant).
    ReferenceScore reference(double t, Rng& rng, bool unit_weights = false, bool normalize_weights = false) const;

    size_t size() const { return queue_.size(); }
    size_t capacity() const { return capacity_; }
    size_t sample_size() const { return sample_size_; }
    bool empty() const { return queue_.empty(); }
    void clear();

    struct Entry {
        double score;
        double t;
    };
    const std::deque<Entry>& entries() const { return queue_; }

    // Debug dump, one "score,t" line per entry after a header.
    void dump_csv(const std::string& path) const;

    static constexpr double kSigmaFloor = 1e-6;

private:
    size_t capacity_;
    size_t sample_size_;
    std::deque<Entry> queue_;
    double last_t_ = -1.0;
};

}  // namespace sad

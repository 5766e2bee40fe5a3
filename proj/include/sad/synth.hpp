#pragma once

#include <cstdint>
#include <vector>

#include "sad/events.hpp"

namespace sad {

// Synthetic labeled interaction stream: per-user event times follow an
// inhomogeneous Poisson process with a daily sine cycle,
//   lambda(t) = base_rate * (1 + amplitude * sin(2*pi*t / 86400)),
// realized by thinning, and the same cycle moves the feature mean, so the
// normal population fluctuates over the day. A seeded fraction of users is
// anomalous: inside one contiguous per-user window (a quarter of the
// horizon, onsets staggered across it, snapped near the daily intensity
// peak) their events carry label 1 and feature vectors shifted by
// anomaly_feature_shift, and the account goes quiet once the window closes.
// All other events carry label 0 and N(cycle, 1) features.
struct SynthConfig {
    size_t num_users = 200;
    size_t num_items = 50;
    double horizon_seconds = 14.0 * 86400.0;
    double base_rate = 1.5;  // events per user per day
    double daily_cycle_amplitude = 0.6;
    double anomaly_user_fraction = 0.05;
    // Empty means no shift; a single value broadcasts over all dimensions.
    std::vector<double> anomaly_feature_shift;
    size_t edge_feature_dim = 8;
    uint64_t seed = 1;
};

// Fully deterministic in config.seed, independent of platform.
EventStream generate(const SynthConfig& config);

}  // namespace sad

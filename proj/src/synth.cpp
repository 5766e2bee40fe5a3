#include "sad/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "sad/rng.hpp"

namespace sad {

namespace {

constexpr double kDay = 86400.0;
// sin(2*pi*t/day) peaks a quarter day in
constexpr double kPeakPhase = kDay / 4.0;

void validate(const SynthConfig& c) {
    if (c.num_users == 0 || c.num_items == 0) throw std::invalid_argument("synth: users and items must be positive");
    if (c.edge_feature_dim == 0) throw std::invalid_argument("synth: edge_feature_dim must be positive");
    if (!(c.horizon_seconds > 0.0)) throw std::invalid_argument("synth: horizon must be positive");
    if (!(c.base_rate > 0.0)) throw std::invalid_argument("synth: base_rate must be positive");
    if (c.daily_cycle_amplitude < 0.0 || c.daily_cycle_amplitude >= 1.0) {
        throw std::invalid_argument("synth: daily_cycle_amplitude must be in [0,1)");
    }
    if (c.anomaly_user_fraction < 0.0 || c.anomaly_user_fraction > 1.0) {
        throw std::invalid_argument("synth: anomaly_user_fraction must be in [0,1]");
    }
    if (!c.anomaly_feature_shift.empty() && c.anomaly_feature_shift.size() != 1 &&
        c.anomaly_feature_shift.size() != c.edge_feature_dim) {
        throw std::invalid_argument("synth: anomaly_feature_shift must have 1 or edge_feature_dim entries");
    }
}

}  // namespace

EventStream generate(const SynthConfig& config) {
    validate(config);
    const Rng master(config.seed);

    std::vector<double> shift(config.edge_feature_dim, 0.0);
    if (config.anomaly_feature_shift.size() == 1) {
        std::fill(shift.begin(), shift.end(), config.anomaly_feature_shift[0]);
    } else if (!config.anomaly_feature_shift.empty()) {
        shift = config.anomaly_feature_shift;
    }

    // pick anomalous users by seeded shuffle
    const size_t n_anom = static_cast<size_t>(std::floor(config.anomaly_user_fraction *
                                                         static_cast<double>(config.num_users)));
    std::vector<uint32_t> users(config.num_users);
    for (size_t u = 0; u < users.size(); ++u) users[u] = static_cast<uint32_t>(u);
    Rng pick_rng = master.fork(0xA0);
    pick_rng.shuffle(users);

    // window onset per anomalous user: staggered across the horizon so every
    // split sees windows in every phase, snapped near the daily intensity
    // peak with a +-2h jitter
    const double window_len = config.horizon_seconds / 3.0;
    std::vector<double> win_start(config.num_users, -1.0);
    std::vector<double> win_end(config.num_users, -1.0);
    Rng win_rng = master.fork(0xB0);
    const double onset_hi = config.horizon_seconds - window_len;
    for (size_t i = 0; i < n_anom; ++i) {
        const double slot = onset_hi * (static_cast<double>(i) + 0.5) / static_cast<double>(n_anom);
        double start = slot;
        if (config.horizon_seconds > kDay) {
            const double day = std::round((slot - kPeakPhase) / kDay) * kDay;
            start = day + kPeakPhase + win_rng.uniform(-7200.0, 7200.0);
        }
        start = std::clamp(start, 0.0, onset_hi);
        win_start[users[i]] = start;
        win_end[users[i]] = start + window_len;
    }

    EventStream stream;
    stream.num_users = config.num_users;
    stream.num_nodes = config.num_users + config.num_items;
    stream.edge_feature_dim = config.edge_feature_dim;

    const double rate_per_sec = config.base_rate / kDay;
    const double lam_max = rate_per_sec * (1.0 + config.daily_cycle_amplitude);
    for (uint32_t u = 0; u < config.num_users; ++u) {
        Rng rng = master.fork(0x1000 + u);
        const bool anomalous = win_start[u] >= 0.0;
        double t = 0.0;
        for (;;) {
            t += rng.exponential(lam_max);
            if (t > config.horizon_seconds) break;
            // an anomalous account goes quiet once its window closes
            if (anomalous && t > win_end[u]) break;
            const double cycle = config.daily_cycle_amplitude * std::sin(2.0 * std::numbers::pi * t / kDay);
            const double lam = rate_per_sec * (1.0 + cycle);
            if (rng.uniform() * lam_max > lam) continue;  // thinning rejection
            Event e;
            e.src = u;
            e.dst = static_cast<uint32_t>(config.num_users + rng.below(config.num_items));
            e.t = t;
            const bool in_window = anomalous && t >= win_start[u] && t <= win_end[u];
            e.label = in_window ? 1 : 0;
            e.features.resize(config.edge_feature_dim);
            // the daily cycle also moves the feature mean, so the "normal"
            // score distribution genuinely fluctuates over the day
            for (size_t f = 0; f < config.edge_feature_dim; ++f) {
                e.features[f] = rng.normal() + cycle + (in_window ? shift[f] : 0.0);
            }
            stream.events.push_back(std::move(e));
        }
    }
    std::stable_sort(stream.events.begin(), stream.events.end(),
                     [](const Event& a, const Event& b) { return a.t < b.t; });
    stream.validate();
    return stream;
}

}  // namespace sad

#include "sad/membank.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace sad {

double decay_weight(double t, double t_i) {
    if (t < t_i) throw std::invalid_argument("decay_weight: t precedes storage time");
    return 1.0 / (std::log(t - t_i + 1.0) + 1.0);
}

double deviation(double s, const ReferenceScore& ref) { return (s - ref.mu) / ref.sigma; }

MemoryBank::MemoryBank(size_t capacity, size_t sample_size) : capacity_(capacity), sample_size_(sample_size) {
    if (capacity == 0 || sample_size == 0) throw std::invalid_argument("MemoryBank: sizes must be positive");
}

void MemoryBank::push(double score, double t, int label) {
    if (label != 0 && label != -1) return;
    if (!std::isfinite(score) || !std::isfinite(t)) throw std::invalid_argument("MemoryBank::push: non-finite input");
    if (t < last_t_) throw std::invalid_argument("MemoryBank::push: pushes must be chronological");
    last_t_ = t;
    if (queue_.size() == capacity_) queue_.pop_front();
    queue_.push_back({score, t});
}

void MemoryBank::clear() {
    queue_.clear();
    last_t_ = -1.0;
}

ReferenceScore MemoryBank::reference(double t, Rng& rng, bool unit_weights, bool normalize_weights) const {
    if (queue_.empty()) throw std::runtime_error("MemoryBank::reference: bank is empty (cold start)");
    const size_t k = std::min(sample_size_, queue_.size());
    std::vector<size_t> picks = rng.sample_without_replacement(queue_.size(), k);
    std::sort(picks.begin(), picks.end());  // accumulation order independent of draw order
    std::vector<double> w(k), r(k);
    double wsum = 0.0;
    for (size_t i = 0; i < k; ++i) {
        const Entry& e = queue_[picks[i]];
        w[i] = unit_weights ? 1.0 : decay_weight(t, e.t);
        r[i] = e.score;
        wsum += w[i];
    }
    if (normalize_weights && wsum > 0.0) {
        const double scale = static_cast<double>(k) / wsum;
        for (double& wi : w) wi *= scale;
    }
    const double kd = static_cast<double>(k);
    double mu = 0.0;
    for (size_t i = 0; i < k; ++i) mu += w[i] * r[i];
    mu /= kd;
    double var_num = 0.0;
    for (size_t i = 0; i < k; ++i) var_num += w[i] * (r[i] - mu) * (r[i] - mu);
    double sigma = k > 1 ? std::sqrt(var_num / (kd - 1.0)) : 0.0;
    if (!(sigma >= kSigmaFloor)) sigma = kSigmaFloor;
    return {mu, sigma, t, k};
}

void MemoryBank::dump_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("MemoryBank::dump_csv: cannot open " + path);
    os << "score,t\n";
    for (const Entry& e : queue_) os << e.score << ',' << e.t << '\n';
}

}  // namespace sad

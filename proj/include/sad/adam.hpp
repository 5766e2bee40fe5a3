#pragma once

#include <cstdint>
#include <vector>

#include "sad/tape.hpp"

namespace sad {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam. Moment accumulators are keyed by parameter index and
// allocated on the first step; shapes must agree on every later step.
class AdamState {
public:
    AdamState() = default;
    explicit AdamState(AdamConfig cfg) : cfg_(cfg) {}

    void step(std::vector<Parameter>& params, const std::vector<Tensor>& grads, double lr);

    uint64_t steps() const { return steps_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    uint64_t steps_ = 0;
};

}  // namespace sad

#include "sad/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace sad {

void AdamState::step(std::vector<Parameter>& params, const std::vector<Tensor>& grads, double lr) {
    if (params.size() != grads.size()) {
        throw std::invalid_argument("adam: " + std::to_string(params.size()) + " params vs " +
                                    std::to_string(grads.size()) + " grads");
    }
    if (m_.empty()) {
        m_.reserve(params.size());
        v_.reserve(params.size());
        for (const Parameter& p : params) {
            m_.emplace_back(p.value.shape());
            v_.emplace_back(p.value.shape());
        }
    }
    if (m_.size() != params.size()) throw std::invalid_argument("adam: parameter count changed across steps");
    ++steps_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(steps_));
    for (size_t p = 0; p < params.size(); ++p) {
        Tensor& w = params[p].value;
        const Tensor& g = grads[p];
        if (!w.same_shape(g) || !w.same_shape(m_[p])) {
            throw std::invalid_argument("adam: shape mismatch for " + params[p].name + ": param " + w.shape_str() +
                                        " vs grad " + g.shape_str());
        }
        double* wd = w.data();
        const double* gd = g.data();
        double* md = m_[p].data();
        double* vd = v_[p].data();
        for (size_t i = 0; i < w.size(); ++i) {
            md[i] = cfg_.beta1 * md[i] + (1.0 - cfg_.beta1) * gd[i];
            vd[i] = cfg_.beta2 * vd[i] + (1.0 - cfg_.beta2) * gd[i] * gd[i];
            const double mhat = md[i] / bc1;
            const double vhat = vd[i] / bc2;
            wd[i] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

}  // namespace sad

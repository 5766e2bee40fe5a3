#include "sad/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace sad {

double deviation_loss(double dev, int y, double margin) {
    if (y != 0 && y != 1) throw std::invalid_argument("deviation_loss: label must be 0 or 1");
    const double a = std::fabs(dev);
    return y == 0 ? a : std::max(0.0, margin - a);
}

Var deviation_loss_batch(Tape& tape, Var devs, const std::vector<int>& labels, double margin) {
    const Tensor& dv = tape.value(devs);
    if (dv.size() != labels.size()) throw std::invalid_argument("deviation_loss_batch: label count mismatch");
    size_t labeled = 0;
    for (int y : labels) {
        if (y < -1 || y > 1) throw std::invalid_argument("deviation_loss_batch: bad label");
        if (y >= 0) ++labeled;
    }
    if (labeled == 0) return tape.constant(Tensor::scalar(0.0));
    const double inv = 1.0 / static_cast<double>(labeled);
    Tensor w_normal(dv.shape());
    Tensor w_anom(dv.shape());
    for (size_t i = 0; i < labels.size(); ++i) {
        w_normal[i] = labels[i] == 0 ? inv : 0.0;
        w_anom[i] = labels[i] == 1 ? inv : 0.0;
    }
    Var a = tape.abs(devs);
    Var hinge = tape.relu(tape.affine(a, -1.0, margin));  // max(0, m - |dev|)
    return tape.add(tape.inner_const(a, std::move(w_normal)), tape.inner_const(hinge, std::move(w_anom)));
}

PairWeights pseudo_groups(const std::vector<double>& devs, double threshold) {
    const size_t n = devs.size();
    if (n < 2) throw std::invalid_argument("pseudo_groups: need at least two samples");
    PairWeights pw;
    pw.n = n;
    pw.active.assign(n * n, 0.0);
    pw.weight.assign(n * n, 0.0);
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double dd = std::fabs(devs[i] - devs[j]);
            pw.active[i * n + j] = dd < threshold ? 1.0 : 0.0;
            pw.weight[i * n + j] = 1.0 / (1.0 + dd);
        }
    }
    return pw;
}

Var contrastive_loss(Tape& tape, Var z, const std::vector<double>& devs, double temperature, double group_threshold,
                     bool raw_dots) {
    if (temperature <= 0.0) throw std::invalid_argument("contrastive_loss: temperature must be positive");
    const Tensor& zv = tape.value(z);
    if (zv.rank() != 2) throw std::invalid_argument("contrastive_loss: rank-2 embeddings required");
    const size_t n = zv.shape()[0];
    if (devs.size() != n) throw std::invalid_argument("contrastive_loss: deviation count mismatch");
    const PairWeights pw = pseudo_groups(devs, group_threshold);

    Var zn = raw_dots ? z : tape.l2_normalize_rows(z);
    Var scaled = tape.scale(tape.matmul_nt(zn, zn), 1.0 / temperature);
    Tensor diag_mask({n, n});
    for (size_t i = 0; i < n; ++i) diag_mask[i * n + i] = -1e9;  // removes k == i from the denominator
    Var masked = tape.add(scaled, tape.constant(std::move(diag_mask)));
    Var lse = tape.logsumexp_rows(masked);  // [n,1]
    Var lse_cols = tape.matmul(lse, tape.constant(Tensor::full({1, n}, 1.0)));
    // per-pair log ratio, softmax-log argument clamped at 1e-12
    const double log_clamp = std::log(Tape::kLogClamp);
    Var log_ratio = tape.sub(scaled, lse_cols);
    Var clamped = tape.affine(tape.relu(tape.affine(log_ratio, 1.0, -log_clamp)), 1.0, log_clamp);

    const double c = -1.0 / static_cast<double>(n - 1);
    Tensor coeff({n, n});
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < n; ++j) coeff[i * n + j] = c * pw.active[i * n + j] * pw.weight[i * n + j];
    }
    return tape.inner_const(clamped, std::move(coeff));
}

double combine_losses(Mode mode, double dev_loss, double scl_loss, const double* sup_loss, const LossConfig& cfg) {
    if (mode == Mode::anomaly) {
        if (sup_loss) throw std::invalid_argument("combine_losses: sup loss given in anomaly mode");
        return dev_loss + cfg.alpha * scl_loss;
    }
    if (!sup_loss) throw std::invalid_argument("combine_losses: downstream mode needs a sup loss");
    return *sup_loss + cfg.alpha * dev_loss + cfg.beta * scl_loss;
}

Var combine_losses(Tape& tape, Mode mode, Var dev_loss, Var scl_loss, Var sup_loss, const LossConfig& cfg) {
    if (mode == Mode::anomaly) {
        if (sup_loss.valid()) throw std::invalid_argument("combine_losses: sup loss given in anomaly mode");
        return tape.add(dev_loss, tape.scale(scl_loss, cfg.alpha));
    }
    if (!sup_loss.valid()) throw std::invalid_argument("combine_losses: downstream mode needs a sup loss");
    return tape.add(sup_loss, tape.add(tape.scale(dev_loss, cfg.alpha), tape.scale(scl_loss, cfg.beta)));
}

}  // namespace sad

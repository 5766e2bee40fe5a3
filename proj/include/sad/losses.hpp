#pragma once

#include <vector>

#include "sad/tape.hpp"

namespace sad {

enum class Mode { anomaly, downstream };

struct LossConfig {
    double margin = 5.0;  // Z-score confidence interval parameter m
    double temperature = 0.5;
    double group_threshold = 1.0;  // pseudo-group interval, in sigma units
    double alpha = 0.1;
    double beta = 0.01;
};

// Per-sample deviation loss: (1-y)*|dev| + y*max(0, m - |dev|). y must be
// 0 or 1; an unlabeled sample reaching this is a caller bug and is rejected.
double deviation_loss(double dev, int y, double margin);

// Batch form on the tape: mean over labeled members (label 0/1); members
// with label -1 are excluded. Returns a constant 0 if nothing is labeled.
Var deviation_loss_batch(Tape& tape, Var devs, const std::vector<int>& labels, double margin);

// Ordered-pair pseudo-grouping from detached deviation values:
// active(i,j) = 1[|dev_i - dev_j| < threshold], weight(i,j) = 1/(1+|...|).
// Both symmetric, diagonal zero. Rejects fewer than two samples.
struct PairWeights {
    size_t n = 0;
    std::vector<double> active;  // n*n row-major
    std::vector<double> weight;  // n*n row-major
};
PairWeights pseudo_groups(const std::vector<double>& devs, double threshold = 1.0);

// Pseudo-label supervised contrastive loss over a batch of embeddings.
// devs are detached constants that only shape the pair weights; gradients
// flow through the embeddings alone. Embeddings are L2-normalized before the
// dot products unless raw_dots is set (fidelity flag). Sum over samples.
Var contrastive_loss(Tape& tape, Var z, const std::vector<double>& devs, double temperature,
                     double group_threshold = 1.0, bool raw_dots = false);

// Objective combination. anomaly: dev + alpha*scl. downstream:
// sup + alpha*dev + beta*scl (sup must be present in downstream mode only).
double combine_losses(Mode mode, double dev_loss, double scl_loss, const double* sup_loss, const LossConfig& cfg);
Var combine_losses(Tape& tape, Mode mode, Var dev_loss, Var scl_loss, Var sup_loss, const LossConfig& cfg);

}  // namespace sad

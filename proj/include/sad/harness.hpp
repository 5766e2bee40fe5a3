#pragma once

#include <cstdint>
#include <vector>

#include "sad/trainer.hpp"

namespace sad {

// Deterministic per-config sampling-seed derivation shared by train() and
// the evaluation helpers.
uint64_t sampling_seed(const ExperimentConfig& config);

// AUC on the chronological test split, using the mode-appropriate score
// (class-1 probability downstream, raw anomaly score in anomaly mode).
// Unlabeled test events are excluded.
double evaluate_test_auc(const EventStream& stream, const SadModel& model, const ExperimentConfig& config);

struct SweepRow {
    double p = 0.0;
    double mean_auc = 0.0;
    double std_auc = 0.0;
    std::vector<double> per_seed;
};

// Few-shot robustness sweep: per (p, seed) drops p of the training labels,
// trains, and evaluates the test AUC. Deterministic per (p, seed); jobs are
// independent and run in parallel when parallel_jobs is set.
std::vector<SweepRow> run_fewshot(const EventStream& stream, const ExperimentConfig& base,
                                  const std::vector<double>& p_values = {0.1, 0.3, 0.5, 0.7, 0.9},
                                  const std::vector<uint64_t>& seeds = {1, 2, 3}, bool parallel_jobs = true);

struct AblationRow {
    Ablation variant = Ablation::backbone;
    double mean_auc = 0.0;
    double std_auc = 0.0;
    std::vector<double> per_seed;
};

// Ablation ladder {backbone, dev, mem, time, scl} at the given drop ratio,
// sharing the seed set across variants.
std::vector<AblationRow> run_ablation(const EventStream& stream, const ExperimentConfig& base,
                                      const std::vector<uint64_t>& seeds = {1, 2, 3, 4, 5}, double drop_ratio = 0.5,
                                      bool parallel_jobs = true);

}  // namespace sad

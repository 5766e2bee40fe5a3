#include "sad/harness.hpp"

#include <cmath>
#include <exception>
#include <functional>
#include <stdexcept>

#include "sad/metrics.hpp"

namespace sad {

namespace {

uint64_t mix_seed(uint64_t seed, uint64_t salt) {
    uint64_t z = seed ^ salt;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

struct Stats {
    double mean = 0.0;
    double stddev = 0.0;
};

Stats summarize(const std::vector<double>& xs) {
    Stats s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double acc = 0.0;
        for (double x : xs) acc += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(acc / static_cast<double>(xs.size() - 1));
    }
    return s;
}

// Runs one job per (row, seed) cell, optionally in parallel. Exceptions are
// carried out of the parallel region and rethrown.
void run_jobs(size_t n_jobs, bool parallel, const std::function<void(size_t)>& job) {
    std::vector<std::exception_ptr> errors(n_jobs);
    if (parallel) {
#pragma omp parallel for schedule(dynamic)
        for (long long j = 0; j < static_cast<long long>(n_jobs); ++j) {
            try {
                job(static_cast<size_t>(j));
            } catch (...) {
                errors[static_cast<size_t>(j)] = std::current_exception();
            }
        }
    } else {
        for (size_t j = 0; j < n_jobs; ++j) {
            try {
                job(j);
            } catch (...) {
                errors[j] = std::current_exception();
            }
        }
    }
    for (const std::exception_ptr& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace

uint64_t sampling_seed(const ExperimentConfig& config) {
    return mix_seed(config.seed, 0x3b5d7f90a1c2d3e4ULL);  // matches the trainer's derivation
}

double evaluate_test_auc(const EventStream& stream, const SadModel& model, const ExperimentConfig& config) {
    const size_t m = stream.events.size();
    const size_t test_begin = static_cast<size_t>(std::floor(0.85 * static_cast<double>(m)));
    if (test_begin >= m) throw std::invalid_argument("evaluate_test_auc: empty test split");
    const TemporalAdjacency adj(stream);
    const std::vector<EventScore> scores = score_events(model, stream, adj, test_begin, m, config.per_hop,
                                                        config.uniform_sampling, sampling_seed(config));
    std::vector<double> s;
    std::vector<int> y;
    for (size_t i = 0; i < scores.size(); ++i) {
        const int label = stream.events[test_begin + i].label;
        if (label < 0) continue;
        s.push_back(config.mode == Mode::downstream ? scores[i].class1_prob : scores[i].anomaly_score);
        y.push_back(label);
    }
    return auc_roc(s, y);
}

std::vector<SweepRow> run_fewshot(const EventStream& stream, const ExperimentConfig& base,
                                  const std::vector<double>& p_values, const std::vector<uint64_t>& seeds,
                                  bool parallel_jobs) {
    if (p_values.empty() || seeds.empty()) throw std::invalid_argument("run_fewshot: empty sweep");
    std::vector<SweepRow> rows(p_values.size());
    for (size_t r = 0; r < rows.size(); ++r) {
        rows[r].p = p_values[r];
        rows[r].per_seed.assign(seeds.size(), 0.0);
    }
    run_jobs(p_values.size() * seeds.size(), parallel_jobs, [&](size_t j) {
        const size_t r = j / seeds.size();
        const size_t s = j % seeds.size();
        ExperimentConfig cfg = base;
        cfg.drop_ratio = p_values[r];
        cfg.seed = seeds[s];
        cfg.verbose = false;
        cfg.checkpoint_out.clear();
        const TrainResult result = train(stream, cfg);
        rows[r].per_seed[s] = evaluate_test_auc(stream, result.model, cfg);
    });
    for (SweepRow& row : rows) {
        const Stats st = summarize(row.per_seed);
        row.mean_auc = st.mean;
        row.std_auc = st.stddev;
    }
    return rows;
}

std::vector<AblationRow> run_ablation(const EventStream& stream, const ExperimentConfig& base,
                                      const std::vector<uint64_t>& seeds, double drop_ratio, bool parallel_jobs) {
    if (seeds.empty()) throw std::invalid_argument("run_ablation: no seeds");
    const std::vector<Ablation> ladder = {Ablation::backbone, Ablation::dev, Ablation::mem, Ablation::time,
                                          Ablation::scl};
    std::vector<AblationRow> rows(ladder.size());
    for (size_t r = 0; r < rows.size(); ++r) {
        rows[r].variant = ladder[r];
        rows[r].per_seed.assign(seeds.size(), 0.0);
    }
    run_jobs(ladder.size() * seeds.size(), parallel_jobs, [&](size_t j) {
        const size_t r = j / seeds.size();
        const size_t s = j % seeds.size();
        ExperimentConfig cfg = base;
        cfg.ablation = ladder[r];
        cfg.drop_ratio = drop_ratio;
        cfg.seed = seeds[s];
        cfg.verbose = false;
        cfg.checkpoint_out.clear();
        const TrainResult result = train(stream, cfg);
        rows[r].per_seed[s] = evaluate_test_auc(stream, result.model, cfg);
    });
    for (AblationRow& row : rows) {
        const Stats st = summarize(row.per_seed);
        row.mean_auc = st.mean;
        row.std_auc = st.stddev;
    }
    return rows;
}

}  // namespace sad

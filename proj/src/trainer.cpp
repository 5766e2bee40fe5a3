#include "sad/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <stdexcept>

#include "json.hpp"
#include "sad/adam.hpp"
#include "sad/checkpoint.hpp"
#include "sad/membank.hpp"
#include "sad/metrics.hpp"
#include "sad/rng.hpp"

namespace sad {

namespace {

constexpr uint64_t kSaltInit = 0x1f3a8c2d5e7b96c1ULL;
constexpr uint64_t kSaltDrop = 0x9d4e6f8a1b3c5d70ULL;
constexpr uint64_t kSaltRef = 0x5c7e9fa0b1d2e3f4ULL;
constexpr uint64_t kSaltSample = 0x3b5d7f90a1c2d3e4ULL;

uint64_t sub_seed(uint64_t seed, uint64_t salt) {
    uint64_t z = seed ^ salt;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::pair<size_t, size_t> split_points(size_t m) {
    return {static_cast<size_t>(std::floor(0.70 * static_cast<double>(m))),
            static_cast<size_t>(std::floor(0.85 * static_cast<double>(m)))};
}

double class1_probability(double l0, double l1) {
    const double m = std::max(l0, l1);
    const double e0 = std::exp(l0 - m), e1 = std::exp(l1 - m);
    return e1 / (e0 + e1);
}

constexpr size_t kScoreChunk = 32;

void score_chunk(const SadModel& model, const EventStream& stream, const TemporalAdjacency& adj, size_t first,
                 size_t count, size_t per_hop, bool uniform_sampling, uint64_t sample_seed, EventScore* out) {
    const size_t hops = model.config().layers;
    std::vector<Subgraph> sgs;
    sgs.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        const Event& ev = stream.events[first + i];
        if (uniform_sampling) {
            Rng rng = Rng(sample_seed).fork(first + i);
            sgs.push_back(sample_subgraph(adj, ev.src, ev.t, hops, per_hop, &rng));
        } else {
            sgs.push_back(sample_subgraph(adj, ev.src, ev.t, hops, per_hop));
        }
    }
    Tape tape;
    const TapedParams tp = register_params(tape, model);
    const Var z = encode_batch(tape, model, tp, stream, sgs);
    const Tensor& s = tape.value(detect(tape, model, tp, z));
    const Tensor& logits = tape.value(project(tape, model, tp, z));
    for (size_t i = 0; i < count; ++i) {
        out[i].anomaly_score = s[i];
        out[i].class1_prob = class1_probability(logits[i * 2], logits[i * 2 + 1]);
    }
}

std::vector<EventScore> score_range(const SadModel& model, const EventStream& stream, const TemporalAdjacency& adj,
                                    size_t first, size_t last, size_t per_hop, bool uniform_sampling,
                                    uint64_t sample_seed, bool parallel) {
    if (last < first || last > stream.events.size()) throw std::invalid_argument("score_events: bad range");
    std::vector<EventScore> out(last - first);
    if (out.empty()) return out;
    const size_t n_chunks = (out.size() + kScoreChunk - 1) / kScoreChunk;
    if (parallel) {
        std::exception_ptr error;
#pragma omp parallel for schedule(dynamic)
        for (long long c = 0; c < static_cast<long long>(n_chunks); ++c) {
            try {
                const size_t lo = static_cast<size_t>(c) * kScoreChunk;
                const size_t count = std::min(kScoreChunk, out.size() - lo);
                score_chunk(model, stream, adj, first + lo, count, per_hop, uniform_sampling, sample_seed,
                            out.data() + lo);
            } catch (...) {
#pragma omp critical
                if (!error) error = std::current_exception();
            }
        }
        if (error) std::rethrow_exception(error);
    } else {
        for (size_t c = 0; c < n_chunks; ++c) {
            const size_t lo = c * kScoreChunk;
            const size_t count = std::min(kScoreChunk, out.size() - lo);
            score_chunk(model, stream, adj, first + lo, count, per_hop, uniform_sampling, sample_seed,
                        out.data() + lo);
        }
    }
    return out;
}

}  // namespace

const char* to_string(Mode mode) { return mode == Mode::anomaly ? "anomaly" : "downstream"; }

const char* to_string(Ablation ablation) {
    switch (ablation) {
        case Ablation::backbone: return "backbone";
        case Ablation::dev: return "dev";
        case Ablation::mem: return "mem";
        case Ablation::time: return "time";
        case Ablation::scl: return "scl";
    }
    return "?";
}

Mode mode_from_string(const std::string& s) {
    if (s == "anomaly") return Mode::anomaly;
    if (s == "downstream") return Mode::downstream;
    throw std::invalid_argument("unknown mode '" + s + "' (expected anomaly|downstream)");
}

Ablation ablation_from_string(const std::string& s) {
    for (Ablation a : {Ablation::backbone, Ablation::dev, Ablation::mem, Ablation::time, Ablation::scl}) {
        if (s == to_string(a)) return a;
    }
    throw std::invalid_argument("unknown ablation '" + s + "' (expected backbone|dev|mem|time|scl)");
}

void ExperimentConfig::validate() const {
    if (batch_size == 0) throw std::invalid_argument("config: batch_size must be positive");
    if (!(lr > 0.0)) throw std::invalid_argument("config: lr must be positive");
    if (epochs == 0) throw std::invalid_argument("config: epochs must be positive");
    if (memory_capacity == 0 || memory_sample == 0) throw std::invalid_argument("config: memory sizes must be positive");
    if (hops == 0 || per_hop == 0) throw std::invalid_argument("config: hops and per_hop must be positive");
    if (drop_ratio < 0.0 || drop_ratio > 1.0) throw std::invalid_argument("config: drop_ratio must be in [0,1]");
    if (!(loss.margin > 0.0)) throw std::invalid_argument("config: margin must be positive");
    if (!(loss.temperature > 0.0)) throw std::invalid_argument("config: temperature must be positive");
    if (!(loss.group_threshold > 0.0)) throw std::invalid_argument("config: group threshold must be positive");
    if (loss.alpha < 0.0 || loss.beta < 0.0) throw std::invalid_argument("config: alpha and beta must be >= 0");
    if (patience == 0) throw std::invalid_argument("config: patience must be positive");
    if (embed_dim == 0 || heads == 0 || embed_dim % heads != 0) {
        throw std::invalid_argument("config: embed_dim must be a positive multiple of heads");
    }
    if (time_dim == 0 || detector_hidden == 0 || projection_hidden == 0) {
        throw std::invalid_argument("config: model widths must be positive");
    }
}

std::string TrainReport::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["mode"] = mode;
    j["ablation"] = ablation;
    j["best_epoch"] = best_epoch;
    j["best_val_auc"] = best_val_auc;
    j["checkpoint"] = checkpoint_path;
    j["wall_seconds"] = wall_seconds;
    j["epochs"] = nlohmann::json::array();
    for (size_t e = 0; e < epochs.size(); ++e) {
        j["epochs"].push_back({{"epoch", e},
                               {"dev_loss", epochs[e].dev_loss},
                               {"scl_loss", epochs[e].scl_loss},
                               {"sup_loss", epochs[e].sup_loss},
                               {"total_loss", epochs[e].total_loss},
                               {"val_auc", epochs[e].val_auc}});
    }
    return j.dump(2);
}

TrainResult train(const EventStream& stream, const ExperimentConfig& config) {
    config.validate();
    stream.validate();
    if (stream.events.empty()) throw std::invalid_argument("train: empty stream");
    if (config.mode == Mode::anomaly && config.ablation == Ablation::backbone) {
        throw std::invalid_argument("train: the backbone ablation has no objective in anomaly mode");
    }
    const auto t_start = std::chrono::steady_clock::now();

    const SplitResult split = chronological_split(stream);
    if (split.train.events.empty()) throw std::invalid_argument("train: empty training split");
    const EventStream train_split = config.drop_ratio > 0.0
                                        ? drop_labels(split.train, config.drop_ratio, sub_seed(config.seed, kSaltDrop))
                                        : split.train;
    const auto [val_begin, test_begin] = split_points(stream.events.size());

    const TemporalAdjacency adj(stream);

    ModelConfig mcfg;
    mcfg.node_feature_dim = std::max<size_t>(stream.edge_feature_dim, 1);
    mcfg.edge_feature_dim = stream.edge_feature_dim;
    mcfg.time_dim = config.time_dim;
    mcfg.embed_dim = config.embed_dim;
    mcfg.layers = config.hops;
    mcfg.heads = config.heads;
    mcfg.detector_hidden = config.detector_hidden;
    mcfg.projection_hidden = config.projection_hidden;
    SadModel model(mcfg, sub_seed(config.seed, kSaltInit));

    AdamState adam(AdamConfig{});
    MemoryBank bank(config.memory_capacity, config.memory_sample);
    Rng ref_rng(sub_seed(config.seed, kSaltRef));
    const uint64_t sample_seed = sub_seed(config.seed, kSaltSample);

    const bool dev_on = config.ablation != Ablation::backbone;
    const bool bank_on = config.ablation >= Ablation::mem;
    const bool unit_weights = config.ablation == Ablation::mem;
    const bool scl_on = config.ablation == Ablation::scl;

    const size_t n_train = train_split.events.size();
    const size_t n_batches = (n_train + config.batch_size - 1) / config.batch_size;

    TrainReport report;
    report.seed = config.seed;
    report.mode = to_string(config.mode);
    report.ablation = to_string(config.ablation);
    std::vector<Parameter> best_params = model.params();
    double best_auc = -1.0;
    size_t best_epoch = 0;
    bool warned_single_class_val = false;

    for (size_t epoch = 0; epoch < config.epochs; ++epoch) {
        bank.clear();  // pushes must stay chronological across the epoch
        EpochStats stats;
        for (size_t b = 0; b < n_batches; ++b) {
            const size_t lo = b * config.batch_size;
            const size_t hi = std::min(lo + config.batch_size, n_train);
            const size_t batch = hi - lo;

            std::vector<Subgraph> sgs;
            sgs.reserve(batch);
            std::vector<int> labels(batch);
            for (size_t i = 0; i < batch; ++i) {
                const Event& ev = train_split.events[lo + i];
                labels[i] = ev.label;
                if (config.uniform_sampling) {
                    Rng rng = Rng(sample_seed).fork(lo + i);
                    sgs.push_back(sample_subgraph(adj, ev.src, ev.t, config.hops, config.per_hop, &rng));
                } else {
                    sgs.push_back(sample_subgraph(adj, ev.src, ev.t, config.hops, config.per_hop));
                }
            }

            Tape tape;
            const TapedParams tp = register_params(tape, model);
            const Var z = encode_batch(tape, model, tp, stream, sgs);
            const Var s_var = detect(tape, model, tp, z);
            const Tensor s_val = tape.value(s_var);

            ReferenceScore ref;  // standard-normal fallback (cold start / w/dev)
            ref.at_time = train_split.events[hi - 1].t;
            if (bank_on && bank.size() >= config.memory_sample) {
                ref = bank.reference(ref.at_time, ref_rng, unit_weights, config.normalize_bank_weights);
            }
            const Var devs = tape.affine(s_var, 1.0 / ref.sigma, -ref.mu / ref.sigma);

            Var dev_loss = dev_on ? deviation_loss_batch(tape, devs, labels, config.loss.margin)
                                  : tape.constant(Tensor::scalar(0.0));
            Var scl_loss = tape.constant(Tensor::scalar(0.0));
            if (scl_on && batch >= 2) {
                const Tensor& dv = tape.value(devs);
                std::vector<double> dev_vals(dv.data(), dv.data() + dv.size());
                scl_loss = contrastive_loss(tape, z, dev_vals, config.loss.temperature, config.loss.group_threshold,
                                            config.raw_contrastive_dots);
            }

            Var total;
            double sup_val = 0.0;
            if (config.mode == Mode::downstream) {
                // Eq-style routing: the supervised head trains alone unless
                // sup_trains_encoder lets its gradient reach the encoder.
                const Var z_proj = config.sup_trains_encoder ? z : tape.constant(tape.value(z));
                const Var logits = project(tape, model, tp, z_proj);
                const Var sup_loss = tape.softmax_xent(logits, labels);
                sup_val = tape.value(sup_loss).item();
                total = combine_losses(tape, Mode::downstream, dev_loss, scl_loss, sup_loss, config.loss);
            } else {
                total = combine_losses(tape, Mode::anomaly, dev_loss, scl_loss, Var{}, config.loss);
            }

            const double total_val = tape.value(total).item();
            if (!std::isfinite(total_val)) {
                double s_min = s_val[0], s_max = s_val[0];
                for (size_t i = 0; i < s_val.size(); ++i) {
                    s_min = std::min(s_min, s_val[i]);
                    s_max = std::max(s_max, s_val[i]);
                }
                std::fprintf(stderr,
                             "train: non-finite loss at epoch %zu batch %zu: dev=%g scl=%g sup=%g "
                             "score range [%g, %g], reference mu=%g sigma=%g\n",
                             epoch, b, tape.value(dev_loss).item(), tape.value(scl_loss).item(), sup_val, s_min, s_max,
                             ref.mu, ref.sigma);
                throw std::runtime_error("train: non-finite loss, aborting");
            }

            stats.dev_loss += tape.value(dev_loss).item();
            stats.scl_loss += tape.value(scl_loss).item();
            stats.sup_loss += sup_val;
            stats.total_loss += total_val;

            tape.backward(total);
            std::vector<Tensor> grads;
            grads.reserve(tp.vars.size());
            for (Var v : tp.vars) grads.push_back(tape.grad(v));
            adam.step(model.params(), grads, config.lr);

            if (bank_on) {
                for (size_t i = 0; i < batch; ++i) {
                    const Event& ev = train_split.events[lo + i];
                    bank.push(s_val[i], ev.t, ev.label);  // label 1 is a no-op
                }
            }
        }
        stats.dev_loss /= static_cast<double>(n_batches);
        stats.scl_loss /= static_cast<double>(n_batches);
        stats.sup_loss /= static_cast<double>(n_batches);
        stats.total_loss /= static_cast<double>(n_batches);

        // side-effect-free validation pass
        double val_auc = 0.5;
        if (test_begin > val_begin) {
            const std::vector<EventScore> scores =
                score_events(model, stream, adj, val_begin, test_begin, config.per_hop, config.uniform_sampling,
                             sample_seed);
            std::vector<double> s;
            std::vector<int> y;
            for (size_t i = 0; i < scores.size(); ++i) {
                const int label = stream.events[val_begin + i].label;
                if (label < 0) continue;
                s.push_back(config.mode == Mode::downstream ? scores[i].class1_prob : scores[i].anomaly_score);
                y.push_back(label);
            }
            bool has_pos = false, has_neg = false;
            for (int label : y) (label == 1 ? has_pos : has_neg) = true;
            if (has_pos && has_neg) {
                val_auc = auc_roc(s, y);
            } else if (!warned_single_class_val) {
                std::fprintf(stderr, "train: validation split is single-class; recording val_auc=0.5\n");
                warned_single_class_val = true;
            }
        }
        stats.val_auc = val_auc;
        report.epochs.push_back(stats);
        if (config.verbose) {
            std::fprintf(stderr, "epoch %zu/%zu dev %.4f scl %.4f sup %.4f total %.4f val_auc %.4f\n", epoch + 1,
                         config.epochs, stats.dev_loss, stats.scl_loss, stats.sup_loss, stats.total_loss, val_auc);
        }
        if (val_auc > best_auc) {
            best_auc = val_auc;
            best_epoch = epoch;
            best_params = model.params();
        } else if (epoch - best_epoch >= config.patience) {
            break;
        }
    }

    model.params() = best_params;
    report.best_epoch = best_epoch;
    report.best_val_auc = best_auc;
    if (!config.checkpoint_out.empty()) {
        save_checkpoint(config.checkpoint_out, model.params());
        report.checkpoint_path = config.checkpoint_out;
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return {std::move(report), std::move(model)};
}

std::vector<EventScore> score_events(const SadModel& model, const EventStream& stream, const TemporalAdjacency& adj,
                                     size_t first, size_t last, size_t per_hop, bool uniform_sampling,
                                     uint64_t sample_seed) {
    return score_range(model, stream, adj, first, last, per_hop, uniform_sampling, sample_seed, true);
}

std::vector<EventScore> score_events_serial(const SadModel& model, const EventStream& stream,
                                            const TemporalAdjacency& adj, size_t first, size_t last, size_t per_hop,
                                            bool uniform_sampling, uint64_t sample_seed) {
    return score_range(model, stream, adj, first, last, per_hop, uniform_sampling, sample_seed, false);
}

std::vector<EventScore> infer_scores(const EventStream& stream, const std::string& checkpoint_path, size_t per_hop) {
    stream.validate();
    SadModel model = SadModel::from_params(load_checkpoint(checkpoint_path));
    const TemporalAdjacency adj(stream);
    return score_events(model, stream, adj, 0, stream.events.size(), per_hop);
}

}  // namespace sad

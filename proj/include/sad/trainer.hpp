#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sad/adjacency.hpp"
#include "sad/events.hpp"
#include "sad/losses.hpp"
#include "sad/model.hpp"

namespace sad {

// Cumulative ablation ladder: each variant keeps everything the previous one
// enables. backbone = projection head alone (downstream supervision only);
// dev = deviation loss against a fixed standard-normal reference; mem = the
// memory bank with unit weights; time = decay-weighted bank; scl = the full
// model with pseudo-label contrastive learning.
enum class Ablation { backbone, dev, mem, time, scl };

const char* to_string(Mode mode);
const char* to_string(Ablation ablation);
Mode mode_from_string(const std::string& s);
Ablation ablation_from_string(const std::string& s);

struct ExperimentConfig {
    Mode mode = Mode::downstream;
    Ablation ablation = Ablation::scl;
    size_t batch_size = 256;
    double lr = 0.0005;
    size_t epochs = 10;
    uint64_t seed = 1;
    LossConfig loss;
    size_t memory_capacity = 4000;  // M
    size_t memory_sample = 1000;    // M_s
    size_t hops = 2;                // also the encoder layer count
    size_t per_hop = 20;
    double drop_ratio = 0.0;

    size_t time_dim = 32;
    size_t embed_dim = 128;
    size_t heads = 2;
    size_t detector_hidden = 64;
    size_t projection_hidden = 64;
    size_t patience = 5;
    bool uniform_sampling = false;      // neighbor selection variant
    bool sup_trains_encoder = false;    // lets the downstream loss reach the encoder
    bool normalize_bank_weights = false;
    bool raw_contrastive_dots = false;
    bool verbose = true;                // progress lines on stderr
    std::string checkpoint_out;         // best-epoch parameters; empty = in memory only

    void validate() const;
};

struct EpochStats {
    double dev_loss = 0.0;
    double scl_loss = 0.0;
    double sup_loss = 0.0;
    double total_loss = 0.0;
    double val_auc = 0.0;
};

struct TrainReport {
    std::vector<EpochStats> epochs;
    size_t best_epoch = 0;
    double best_val_auc = 0.0;
    std::string checkpoint_path;
    double wall_seconds = 0.0;
    uint64_t seed = 0;
    std::string mode;
    std::string ablation;

    std::string to_json() const;
};

struct TrainResult {
    TrainReport report;
    SadModel model;  // best-epoch parameters
};

// Chronological mini-batch training per the combined objective. The stream is
// split 70/15/15; drop_ratio is applied to the training split only. The bank
// restarts empty each epoch (pushes must stay chronological). Validation AUC
// is computed per epoch without side effects; the best epoch's parameters are
// retained and training stops early after `patience` stale epochs. If the
// validation split is single-class the epoch's AUC is recorded as 0.5.
TrainResult train(const EventStream& stream, const ExperimentConfig& config);

struct EventScore {
    double anomaly_score = 0.0;
    double class1_prob = 0.0;
};

// Pure forward scoring of events [first, last) at their own timestamps: no
// bank activity, no parameter updates. Work is split into fixed chunks;
// score_events fans the chunks out with OpenMP and is bitwise identical to
// score_events_serial for any thread count.
std::vector<EventScore> score_events(const SadModel& model, const EventStream& stream, const TemporalAdjacency& adj,
                                     size_t first, size_t last, size_t per_hop, bool uniform_sampling = false,
                                     uint64_t sample_seed = 0);
std::vector<EventScore> score_events_serial(const SadModel& model, const EventStream& stream,
                                            const TemporalAdjacency& adj, size_t first, size_t last, size_t per_hop,
                                            bool uniform_sampling = false, uint64_t sample_seed = 0);

// Checkpoint-driven inference over every event of the stream.
std::vector<EventScore> infer_scores(const EventStream& stream, const std::string& checkpoint_path,
                                     size_t per_hop = 20);

}  // namespace sad

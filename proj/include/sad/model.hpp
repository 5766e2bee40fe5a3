#pragma once

#include <cstdint>
#include <vector>

#include "sad/adjacency.hpp"
#include "sad/events.hpp"
#include "sad/tape.hpp"

namespace sad {

struct ModelConfig {
    size_t node_feature_dim = 8;  // raw node inputs are zero vectors of this width
    size_t edge_feature_dim = 8;
    size_t time_dim = 32;
    size_t embed_dim = 128;
    size_t layers = 2;
    size_t heads = 2;
    size_t detector_hidden = 64;
    size_t projection_hidden = 64;

    void validate() const;
};

// Parameter bundle for the four trainable networks, in a fixed layout with
// stable checkpoint names:
//   time.omega, time.phase,
//   encoder.layer{k}.head{h}.{Wq,Wk,Wv}, encoder.layer{k}.{Wc,bc},
//   detector.{W1,b1,W2,b2}, projection.{W1,b1,W2,b2}.
// Weights start uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases at
// zero; time frequencies start at 2*pi over log-spaced periods (one minute
// up to a month) so daily cycles are representable from the first step.
class SadModel {
public:
    SadModel(ModelConfig cfg, uint64_t seed);

    // Rebuilds a model from checkpointed parameters, inferring the config
    // from names and shapes.
    static SadModel from_params(std::vector<Parameter> params);

    const ModelConfig& config() const { return cfg_; }
    std::vector<Parameter>& params() { return params_; }
    const std::vector<Parameter>& params() const { return params_; }

    const Parameter& param(const std::string& name) const;
    Parameter& param(const std::string& name);

    // Index groups over params(): the routing units of the objective.
    std::vector<size_t> encoder_param_ids() const;  // time encoder + attention stack
    std::vector<size_t> detector_param_ids() const;
    std::vector<size_t> projection_param_ids() const;

    size_t head_dim() const { return cfg_.embed_dim / cfg_.heads; }
    // input width of the layer-k query / key rows
    size_t query_dim(size_t layer) const { return layer == 0 ? cfg_.node_feature_dim : cfg_.embed_dim; }
    size_t key_dim(size_t layer) const { return query_dim(layer) + cfg_.edge_feature_dim + cfg_.time_dim; }

private:
    SadModel(ModelConfig cfg, std::vector<Parameter> params, int);
    void build_layout();

    ModelConfig cfg_;
    std::vector<Parameter> params_;
    size_t detector_base_ = 0;
    size_t projection_base_ = 0;
};

// Per-tape leaf registration; vars align with model.params() indices.
struct TapedParams {
    std::vector<Var> vars;
};
TapedParams register_params(Tape& tape, const SadModel& model);

// Attention-weight capture for tests: weights[pass-1][depth][head] holds the
// flattened per-key attention weights of that group.
struct AttentionProbe {
    std::vector<std::vector<std::vector<std::vector<double>>>> weights;
};

// phi(dt)[i] = cos(omega_i * dt + phase_i), one row per gap. Negative gaps
// violate the prior-to-t contract and are rejected.
Var time_encode(Tape& tape, const std::vector<double>& dts, Var omega, Var phase);

// Batched encoder over pre-sampled subgraphs (one z row per root, in order).
// An entry with no history attends over a single zero self entry.
Var encode_batch(Tape& tape, const SadModel& model, const TapedParams& tp, const EventStream& stream,
                 const std::vector<Subgraph>& subgraphs, AttentionProbe* probe = nullptr);

// Single-root convenience; runs its own tape and returns the embedding.
Tensor encode_node(const SadModel& model, const EventStream& stream, const Subgraph& subgraph,
                   AttentionProbe* probe = nullptr);

// Anomaly score: W2 . relu(W1 . z + b1) + b2, one unbounded scalar per row.
Var detect(Tape& tape, const SadModel& model, const TapedParams& tp, Var z);

// Two class logits per row; class-1 probability is softmax(logits)[1].
Var project(Tape& tape, const SadModel& model, const TapedParams& tp, Var z);

}  // namespace sad

#include "sad/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <unordered_map>

#include "sad/rng.hpp"

namespace sad {

void ModelConfig::validate() const {
    if (node_feature_dim == 0) throw std::invalid_argument("ModelConfig: node_feature_dim must be positive");
    if (time_dim == 0) throw std::invalid_argument("ModelConfig: time_dim must be positive");
    if (embed_dim == 0 || layers == 0 || heads == 0) {
        throw std::invalid_argument("ModelConfig: embed_dim, layers and heads must be positive");
    }
    if (embed_dim % heads != 0) throw std::invalid_argument("ModelConfig: embed_dim must be divisible by heads");
    if (detector_hidden == 0 || projection_hidden == 0) {
        throw std::invalid_argument("ModelConfig: hidden widths must be positive");
    }
}

namespace {

struct ParamSpec {
    std::string name;
    std::vector<size_t> shape;
};

std::vector<ParamSpec> expected_layout(const ModelConfig& cfg) {
    const size_t dk = cfg.embed_dim / cfg.heads;
    std::vector<ParamSpec> specs;
    specs.push_back({"time.omega", {1, cfg.time_dim}});
    specs.push_back({"time.phase", {1, cfg.time_dim}});
    for (size_t k = 0; k < cfg.layers; ++k) {
        const size_t q_in = k == 0 ? cfg.node_feature_dim : cfg.embed_dim;
        const size_t k_in = q_in + cfg.edge_feature_dim + cfg.time_dim;
        const std::string layer = "encoder.layer" + std::to_string(k) + ".";
        for (size_t h = 0; h < cfg.heads; ++h) {
            const std::string head = layer + "head" + std::to_string(h) + ".";
            specs.push_back({head + "Wq", {q_in, dk}});
            specs.push_back({head + "Wk", {k_in, dk}});
            specs.push_back({head + "Wv", {k_in, dk}});
        }
        specs.push_back({layer + "Wc", {q_in + cfg.embed_dim, cfg.embed_dim}});
        specs.push_back({layer + "bc", {1, cfg.embed_dim}});
    }
    specs.push_back({"detector.W1", {cfg.embed_dim, cfg.detector_hidden}});
    specs.push_back({"detector.b1", {1, cfg.detector_hidden}});
    specs.push_back({"detector.W2", {cfg.detector_hidden, 1}});
    specs.push_back({"detector.b2", {1, 1}});
    specs.push_back({"projection.W1", {cfg.embed_dim, cfg.projection_hidden}});
    specs.push_back({"projection.b1", {1, cfg.projection_hidden}});
    specs.push_back({"projection.W2", {cfg.projection_hidden, 2}});
    specs.push_back({"projection.b2", {1, 2}});
    return specs;
}

Tensor uniform_weights(Rng& rng, const std::vector<size_t>& shape) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(shape[0]));
    Tensor t(shape);
    for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

Tensor initial_frequencies(size_t d_t) {
    // 2*pi over log-spaced periods, one minute up to a month
    const double lo = 60.0, hi = 30.0 * 86400.0;
    Tensor omega({1, d_t});
    for (size_t i = 0; i < d_t; ++i) {
        const double frac = d_t > 1 ? static_cast<double>(i) / static_cast<double>(d_t - 1) : 0.5;
        omega[i] = 2.0 * std::numbers::pi / (lo * std::pow(hi / lo, frac));
    }
    return omega;
}

}  // namespace

SadModel::SadModel(ModelConfig cfg, uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(seed);
    for (const ParamSpec& spec : expected_layout(cfg_)) {
        Tensor value;
        if (spec.name == "time.omega") {
            value = initial_frequencies(cfg_.time_dim);
        } else if (spec.name == "time.phase" || spec.name.find(".b") != std::string::npos) {
            value = Tensor(spec.shape);  // zero biases and phases
        } else {
            value = uniform_weights(rng, spec.shape);
        }
        params_.push_back({spec.name, std::move(value)});
    }
    build_layout();
}

SadModel::SadModel(ModelConfig cfg, std::vector<Parameter> params, int) : cfg_(cfg), params_(std::move(params)) {
    cfg_.validate();
    build_layout();
}

void SadModel::build_layout() {
    const std::vector<ParamSpec> specs = expected_layout(cfg_);
    if (params_.size() != specs.size()) {
        throw std::invalid_argument("SadModel: expected " + std::to_string(specs.size()) + " parameters, got " +
                                    std::to_string(params_.size()));
    }
    for (size_t i = 0; i < specs.size(); ++i) {
        if (params_[i].name != specs[i].name) {
            throw std::invalid_argument("SadModel: parameter " + std::to_string(i) + " is " + params_[i].name +
                                        ", expected " + specs[i].name);
        }
        if (params_[i].value.shape() != specs[i].shape) {
            throw std::invalid_argument("SadModel: " + params_[i].name + " has shape " + params_[i].value.shape_str() +
                                        ", expected " + shape_to_string(specs[i].shape));
        }
    }
    detector_base_ = 2 + cfg_.layers * (3 * cfg_.heads + 2);
    projection_base_ = detector_base_ + 4;
}

SadModel SadModel::from_params(std::vector<Parameter> params) {
    std::unordered_map<std::string, size_t> by_name;
    for (size_t i = 0; i < params.size(); ++i) by_name[params[i].name] = i;
    auto get = [&](const std::string& name) -> const Parameter& {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw std::invalid_argument("SadModel: checkpoint is missing " + name);
        return params[it->second];
    };

    ModelConfig cfg;
    cfg.time_dim = get("time.omega").value.cols();
    size_t layers = 0, heads = 0;
    while (by_name.count("encoder.layer" + std::to_string(layers) + ".Wc")) ++layers;
    while (by_name.count("encoder.layer0.head" + std::to_string(heads) + ".Wq")) ++heads;
    if (layers == 0 || heads == 0) throw std::invalid_argument("SadModel: checkpoint has no encoder layers");
    cfg.layers = layers;
    cfg.heads = heads;
    cfg.embed_dim = get("detector.W1").value.shape()[0];
    cfg.detector_hidden = get("detector.W1").value.shape()[1];
    cfg.projection_hidden = get("projection.W1").value.shape()[1];
    cfg.node_feature_dim = get("encoder.layer0.head0.Wq").value.shape()[0];
    const size_t k_in0 = get("encoder.layer0.head0.Wk").value.shape()[0];
    if (k_in0 < cfg.node_feature_dim + cfg.time_dim) {
        throw std::invalid_argument("SadModel: inconsistent layer-0 key width in checkpoint");
    }
    cfg.edge_feature_dim = k_in0 - cfg.node_feature_dim - cfg.time_dim;

    std::vector<Parameter> ordered;
    ordered.reserve(params.size());
    const std::vector<ParamSpec> specs = expected_layout(cfg);
    if (params.size() != specs.size()) {
        throw std::invalid_argument("SadModel: checkpoint has " + std::to_string(params.size()) +
                                    " parameters, expected " + std::to_string(specs.size()));
    }
    for (const ParamSpec& spec : specs) ordered.push_back(get(spec.name));
    return SadModel(cfg, std::move(ordered), 0);
}

const Parameter& SadModel::param(const std::string& name) const {
    for (const Parameter& p : params_) {
        if (p.name == name) return p;
    }
    throw std::invalid_argument("SadModel: no parameter named " + name);
}

Parameter& SadModel::param(const std::string& name) {
    return const_cast<Parameter&>(static_cast<const SadModel*>(this)->param(name));
}

std::vector<size_t> SadModel::encoder_param_ids() const {
    std::vector<size_t> ids(detector_base_);
    for (size_t i = 0; i < detector_base_; ++i) ids[i] = i;
    return ids;
}

std::vector<size_t> SadModel::detector_param_ids() const {
    return {detector_base_, detector_base_ + 1, detector_base_ + 2, detector_base_ + 3};
}

std::vector<size_t> SadModel::projection_param_ids() const {
    return {projection_base_, projection_base_ + 1, projection_base_ + 2, projection_base_ + 3};
}

TapedParams register_params(Tape& tape, const SadModel& model) {
    TapedParams tp;
    tp.vars.reserve(model.params().size());
    for (const Parameter& p : model.params()) tp.vars.push_back(tape.leaf(p.value));
    return tp;
}

Var time_encode(Tape& tape, const std::vector<double>& dts, Var omega, Var phase) {
    if (dts.empty()) throw std::invalid_argument("time_encode: no time gaps");
    for (double dt : dts) {
        if (!std::isfinite(dt) || dt < 0.0) throw std::invalid_argument("time_encode: negative time gap");
    }
    return tape.cosine_features(dts, omega, phase);
}

Var encode_batch(Tape& tape, const SadModel& model, const TapedParams& tp, const EventStream& stream,
                 const std::vector<Subgraph>& subgraphs, AttentionProbe* probe) {
    const ModelConfig& cfg = model.config();
    const size_t K = cfg.layers;
    const size_t B = subgraphs.size();
    if (B == 0) throw std::invalid_argument("encode_batch: empty batch");
    for (const Subgraph& sg : subgraphs) {
        if (sg.layers.size() != K + 1 || sg.layers[0].size() != 1) {
            throw std::invalid_argument("encode_batch: subgraph depth does not match the encoder layer count");
        }
    }

    // flattened per-depth row offsets, batch-major
    std::vector<std::vector<size_t>> depth_off(K + 1, std::vector<size_t>(B + 1, 0));
    for (size_t d = 0; d <= K; ++d) {
        for (size_t b = 0; b < B; ++b) depth_off[d][b + 1] = depth_off[d][b] + subgraphs[b].layers[d].size();
    }

    if (probe) {
        probe->weights.assign(K, std::vector<std::vector<std::vector<double>>>(
                                     K + 1, std::vector<std::vector<double>>(cfg.heads)));
    }

    const size_t dk = model.head_dim();
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    auto layer_base = [&](size_t k) { return 2 + k * (3 * cfg.heads + 2); };

    // h_store[d][k] = h^k of all depth-d entries
    std::vector<std::vector<Var>> h_store(K + 1, std::vector<Var>(K + 1));

    for (size_t pass = 1; pass <= K; ++pass) {
        const size_t layer = pass - 1;
        for (size_t d = 0; d + pass <= K; ++d) {
            const size_t n_units = depth_off[d][B];
            if (n_units == 0) continue;

            std::vector<int64_t> gather_idx;
            std::vector<double> dts;
            std::vector<std::pair<size_t, size_t>> segments;
            std::vector<const Event*> key_events;
            segments.reserve(n_units);
            for (size_t b = 0; b < B; ++b) {
                for (const SubgraphEntry& e : subgraphs[b].layers[d]) {
                    const size_t start = gather_idx.size();
                    if (e.child_begin == e.child_end) {
                        // zero self entry for history-free nodes
                        gather_idx.push_back(-1);
                        dts.push_back(0.0);
                        key_events.push_back(nullptr);
                    } else {
                        for (size_t c = e.child_begin; c < e.child_end; ++c) {
                            const SubgraphEntry& ch = subgraphs[b].layers[d + 1][c];
                            if (ch.event_index >= stream.events.size()) {
                                throw std::invalid_argument("encode_batch: subgraph references a foreign stream");
                            }
                            gather_idx.push_back(static_cast<int64_t>(depth_off[d + 1][b] + c));
                            dts.push_back(ch.dt_parent);
                            key_events.push_back(&stream.events[ch.event_index]);
                        }
                    }
                    segments.push_back({start, gather_idx.size() - start});
                }
            }
            const size_t T = gather_idx.size();

            std::vector<Var> parts;
            if (pass == 1 || !h_store[d + 1][pass - 1].valid()) {
                // raw node inputs are zero vectors (and when no entries exist
                // at depth d+1 every unit here attends over its zero self
                // entry), so the leading columns fuse with the edge features
                // into one constant block
                const size_t h_width = pass == 1 ? cfg.node_feature_dim : cfg.embed_dim;
                Tensor block({T, h_width + cfg.edge_feature_dim});
                for (size_t t = 0; t < T; ++t) {
                    if (!key_events[t]) continue;
                    const std::vector<double>& f = key_events[t]->features;
                    if (f.size() != cfg.edge_feature_dim) {
                        throw std::invalid_argument("encode_batch: edge feature dim mismatch with model config");
                    }
                    std::copy(f.begin(), f.end(), block.data() + t * block.cols() + h_width);
                }
                parts.push_back(tape.constant(std::move(block)));
            } else {
                parts.push_back(tape.gather_rows(h_store[d + 1][pass - 1], std::move(gather_idx)));
                if (cfg.edge_feature_dim > 0) {
                    Tensor ef({T, cfg.edge_feature_dim});
                    for (size_t t = 0; t < T; ++t) {
                        if (!key_events[t]) continue;
                        const std::vector<double>& f = key_events[t]->features;
                        if (f.size() != cfg.edge_feature_dim) {
                            throw std::invalid_argument("encode_batch: edge feature dim mismatch with model config");
                        }
                        std::copy(f.begin(), f.end(), ef.data() + t * cfg.edge_feature_dim);
                    }
                    parts.push_back(tape.constant(std::move(ef)));
                }
            }
            parts.push_back(time_encode(tape, dts, tp.vars[0], tp.vars[1]));
            Var key_in = tape.concat_cols(parts);
            Var q_in = pass == 1 ? tape.constant(Tensor({n_units, cfg.node_feature_dim})) : h_store[d][pass - 1];

            std::vector<Var> head_outs;
            head_outs.reserve(cfg.heads);
            for (size_t h = 0; h < cfg.heads; ++h) {
                const size_t base = layer_base(layer) + h * 3;
                Var q_proj = tape.matmul(q_in, tp.vars[base]);
                Var k_proj = tape.matmul(key_in, tp.vars[base + 1]);
                Var v_proj = tape.matmul(key_in, tp.vars[base + 2]);
                std::vector<double>* sink = probe ? &probe->weights[pass - 1][d][h] : nullptr;
                head_outs.push_back(tape.attention_pool(q_proj, k_proj, v_proj, segments, scale, sink));
            }
            Var h_n = cfg.heads > 1 ? tape.concat_cols(head_outs) : head_outs[0];

            const size_t cbase = layer_base(layer) + 3 * cfg.heads;
            Var lin = tape.add_rowwise(tape.matmul(tape.concat_cols({q_in, h_n}), tp.vars[cbase]), tp.vars[cbase + 1]);
            h_store[d][pass] = pass < K ? tape.relu(lin) : lin;
        }
    }
    return h_store[0][K];
}

Tensor encode_node(const SadModel& model, const EventStream& stream, const Subgraph& subgraph,
                   AttentionProbe* probe) {
    Tape tape;
    TapedParams tp = register_params(tape, model);
    Var z = encode_batch(tape, model, tp, stream, {subgraph}, probe);
    return tape.value(z);
}

Var detect(Tape& tape, const SadModel& model, const TapedParams& tp, Var z) {
    const ModelConfig& cfg = model.config();
    if (tape.value(z).rank() != 2 || tape.value(z).cols() != cfg.embed_dim) {
        throw std::invalid_argument("detect: expected embeddings of length " + std::to_string(cfg.embed_dim) +
                                    ", got " + tape.value(z).shape_str());
    }
    const std::vector<size_t> ids = model.detector_param_ids();
    Var hidden = tape.relu(tape.add_rowwise(tape.matmul(z, tp.vars[ids[0]]), tp.vars[ids[1]]));
    return tape.add_rowwise(tape.matmul(hidden, tp.vars[ids[2]]), tp.vars[ids[3]]);
}

Var project(Tape& tape, const SadModel& model, const TapedParams& tp, Var z) {
    const ModelConfig& cfg = model.config();
    if (tape.value(z).rank() != 2 || tape.value(z).cols() != cfg.embed_dim) {
        throw std::invalid_argument("project: expected embeddings of length " + std::to_string(cfg.embed_dim) +
                                    ", got " + tape.value(z).shape_str());
    }
    const std::vector<size_t> ids = model.projection_param_ids();
    Var hidden = tape.relu(tape.add_rowwise(tape.matmul(z, tp.vars[ids[0]]), tp.vars[ids[1]]));
    return tape.add_rowwise(tape.matmul(hidden, tp.vars[ids[2]]), tp.vars[ids[3]]);
}

}  // namespace sad

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "sad/harness.hpp"
#include "sad/losses.hpp"
#include "sad/membank.hpp"
#include "sad/synth.hpp"
#include "sad/trainer.hpp"

using namespace sad;

namespace {

EventStream small_stream(uint64_t seed = 19) {
    SynthConfig cfg;
    cfg.num_users = 30;
    cfg.num_items = 8;
    cfg.horizon_seconds = 10 * 86400.0;
    cfg.base_rate = 1.5;
    cfg.anomaly_user_fraction = 0.2;
    cfg.anomaly_feature_shift = {2.0};
    cfg.edge_feature_dim = 3;
    cfg.seed = seed;
    return generate(cfg);
}

ExperimentConfig tiny_config() {
    ExperimentConfig cfg;
    cfg.batch_size = 32;
    cfg.epochs = 2;
    cfg.per_hop = 4;
    cfg.time_dim = 4;
    cfg.embed_dim = 8;
    cfg.heads = 2;
    cfg.detector_hidden = 5;
    cfg.projection_hidden = 5;
    cfg.memory_capacity = 64;
    cfg.memory_sample = 16;
    cfg.lr = 0.01;
    cfg.verbose = false;
    return cfg;
}

bool params_equal(const std::vector<Parameter>& a, const std::vector<Parameter>& b, const std::vector<size_t>& ids) {
    for (size_t id : ids) {
        for (size_t i = 0; i < a[id].value.size(); ++i) {
            if (a[id].value[i] != b[id].value[i]) return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("train is deterministic given the seed") {
    const EventStream s = small_stream();
    ExperimentConfig cfg = tiny_config();
    cfg.seed = 42;
    const TrainResult a = train(s, cfg);
    const TrainResult b = train(s, cfg);
    REQUIRE(a.report.epochs.size() == b.report.epochs.size());
    for (size_t e = 0; e < a.report.epochs.size(); ++e) {
        CHECK(a.report.epochs[e].total_loss == b.report.epochs[e].total_loss);
        CHECK(a.report.epochs[e].dev_loss == b.report.epochs[e].dev_loss);
        CHECK(a.report.epochs[e].scl_loss == b.report.epochs[e].scl_loss);
        CHECK(a.report.epochs[e].val_auc == b.report.epochs[e].val_auc);
    }
    for (size_t p = 0; p < a.model.params().size(); ++p) {
        for (size_t i = 0; i < a.model.params()[p].value.size(); ++i) {
            REQUIRE(a.model.params()[p].value[i] == b.model.params()[p].value[i]);
        }
    }
}

// Routing checks compare two one-epoch runs with different batch sizes: both
// return their only epoch's parameters, so any trained group must differ
// between them while a group that receives no gradient stays at its (shared)
// initialization.
TEST_CASE("gradient routing: backbone trains the projection head alone") {
    const EventStream s = small_stream();
    ExperimentConfig cfg = tiny_config();
    cfg.ablation = Ablation::backbone;
    cfg.epochs = 1;
    cfg.batch_size = 32;
    const TrainResult a = train(s, cfg);
    cfg.batch_size = 16;
    const TrainResult b = train(s, cfg);
    CHECK(params_equal(a.model.params(), b.model.params(), a.model.encoder_param_ids()));
    CHECK(params_equal(a.model.params(), b.model.params(), a.model.detector_param_ids()));
    CHECK_FALSE(params_equal(a.model.params(), b.model.params(), a.model.projection_param_ids()));
}

TEST_CASE("gradient routing: anomaly mode never touches the projection head") {
    const EventStream s = small_stream();
    ExperimentConfig cfg = tiny_config();
    cfg.mode = Mode::anomaly;
    cfg.ablation = Ablation::time;
    cfg.epochs = 1;
    cfg.batch_size = 32;
    const TrainResult a = train(s, cfg);
    cfg.batch_size = 16;
    const TrainResult b = train(s, cfg);
    CHECK(params_equal(a.model.params(), b.model.params(), a.model.projection_param_ids()));
    CHECK_FALSE(params_equal(a.model.params(), b.model.params(), a.model.encoder_param_ids()));
    CHECK_FALSE(params_equal(a.model.params(), b.model.params(), a.model.detector_param_ids()));
}

TEST_CASE("gradient routing: detached projection input keeps the sup loss off the encoder") {
    const EventStream s = small_stream();
    ExperimentConfig cfg = tiny_config();
    cfg.ablation = Ablation::scl;
    cfg.loss.alpha = 0.0;  // silences the deviation path
    cfg.loss.beta = 0.0;   // silences the contrastive path
    cfg.epochs = 1;
    cfg.batch_size = 32;
    const TrainResult a = train(s, cfg);
    cfg.batch_size = 16;
    const TrainResult b = train(s, cfg);
    CHECK(params_equal(a.model.params(), b.model.params(), a.model.encoder_param_ids()));

    cfg.sup_trains_encoder = true;  // comparison flag opens the path
    cfg.batch_size = 32;
    const TrainResult c = train(s, cfg);
    cfg.batch_size = 16;
    const TrainResult d = train(s, cfg);
    CHECK_FALSE(params_equal(c.model.params(), d.model.params(), c.model.encoder_param_ids()));
}

TEST_CASE("the contrastive loss sends no gradient into the detector") {
    const EventStream s = small_stream();
    const TemporalAdjacency adj(s);
    ModelConfig mcfg;
    mcfg.node_feature_dim = s.edge_feature_dim;
    mcfg.edge_feature_dim = s.edge_feature_dim;
    mcfg.time_dim = 4;
    mcfg.embed_dim = 8;
    mcfg.heads = 2;
    mcfg.detector_hidden = 5;
    mcfg.projection_hidden = 5;
    const SadModel model(mcfg, 3);
    std::vector<Subgraph> sgs;
    for (size_t i = 0; i < 4; ++i) {
        const Event& ev = s.events[s.events.size() - 1 - i];
        sgs.push_back(sample_subgraph(adj, ev.src, ev.t, 2, 4));
    }
    Tape tape;
    const TapedParams tp = register_params(tape, model);
    const Var z = encode_batch(tape, model, tp, s, sgs);
    const Var sc = detect(tape, model, tp, z);
    const Tensor& sv = tape.value(sc);
    const std::vector<double> devs(sv.data(), sv.data() + sv.size());
    const Var scl = contrastive_loss(tape, z, devs, 0.5);
    tape.backward(scl);
    for (size_t id : model.detector_param_ids()) {
        const Tensor g = tape.grad(tp.vars[id]);
        for (size_t i = 0; i < g.size(); ++i) REQUIRE(g[i] == 0.0);
    }
    for (size_t id : model.projection_param_ids()) {
        const Tensor g = tape.grad(tp.vars[id]);
        for (size_t i = 0; i < g.size(); ++i) REQUIRE(g[i] == 0.0);
    }
    bool encoder_touched = false;
    for (size_t id : model.encoder_param_ids()) {
        const Tensor g = tape.grad(tp.vars[id]);
        for (size_t i = 0; i < g.size(); ++i) encoder_touched = encoder_touched || g[i] != 0.0;
    }
    CHECK(encoder_touched);
}

TEST_CASE("parallel scoring is bitwise identical to the serial reference") {
    const EventStream s = small_stream(7);
    const TemporalAdjacency adj(s);
    ModelConfig mcfg;
    mcfg.node_feature_dim = s.edge_feature_dim;
    mcfg.edge_feature_dim = s.edge_feature_dim;
    mcfg.time_dim = 8;
    mcfg.embed_dim = 16;
    mcfg.heads = 2;
    const SadModel model(mcfg, 11);
    const size_t first = s.events.size() / 4, last = s.events.size();
    const auto par = score_events(model, s, adj, first, last, 5);
    const auto ser = score_events_serial(model, s, adj, first, last, 5);
    REQUIRE(par.size() == ser.size());
    for (size_t i = 0; i < par.size(); ++i) {
        REQUIRE(par[i].anomaly_score == ser[i].anomaly_score);
        REQUIRE(par[i].class1_prob == ser[i].class1_prob);
    }
    // the uniform-sampling variant is seeded per event and stays deterministic
    const auto par_u = score_events(model, s, adj, first, last, 5, true, 99);
    const auto ser_u = score_events_serial(model, s, adj, first, last, 5, true, 99);
    for (size_t i = 0; i < par_u.size(); ++i) REQUIRE(par_u[i].anomaly_score == ser_u[i].anomaly_score);
}

TEST_CASE("infer_scores: pure checkpoint-driven inference") {
    const EventStream s = small_stream(13);
    ExperimentConfig cfg = tiny_config();
    cfg.epochs = 1;
    cfg.checkpoint_out = "trainer_test_ckpt.bin";
    const TrainResult result = train(s, cfg);
    REQUIRE(result.report.checkpoint_path == cfg.checkpoint_out);
    const auto a = infer_scores(s, cfg.checkpoint_out, cfg.per_hop);
    const auto b = infer_scores(s, cfg.checkpoint_out, cfg.per_hop);
    REQUIRE(a.size() == s.events.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].anomaly_score == b[i].anomaly_score);
        CHECK(a[i].class1_prob == b[i].class1_prob);
    }
    // a stream with a different feature width does not match the checkpoint
    SynthConfig mismatch;
    mismatch.num_users = 10;
    mismatch.num_items = 3;
    mismatch.horizon_seconds = 86400.0;
    mismatch.base_rate = 3.0;
    mismatch.edge_feature_dim = 5;
    mismatch.seed = 1;
    CHECK_THROWS(infer_scores(generate(mismatch), cfg.checkpoint_out, cfg.per_hop));
    std::remove(cfg.checkpoint_out.c_str());
}

TEST_CASE("train rejects inconsistent setups") {
    const EventStream s = small_stream();
    ExperimentConfig cfg = tiny_config();
    cfg.mode = Mode::anomaly;
    cfg.ablation = Ablation::backbone;
    CHECK_THROWS_AS(train(s, cfg), std::invalid_argument);
    ExperimentConfig bad = tiny_config();
    bad.drop_ratio = 1.5;
    CHECK_THROWS_AS(train(s, bad), std::invalid_argument);
    EventStream empty;
    empty.num_nodes = 2;
    CHECK_THROWS_AS(train(empty, tiny_config()), std::invalid_argument);
}

TEST_CASE("training report fields are well-formed") {
    const EventStream s = small_stream();
    ExperimentConfig cfg = tiny_config();
    cfg.epochs = 3;
    cfg.drop_ratio = 0.5;
    const TrainResult result = train(s, cfg);
    CHECK(result.report.epochs.size() <= 3);
    for (const EpochStats& e : result.report.epochs) {
        CHECK(e.val_auc >= 0.0);
        CHECK(e.val_auc <= 1.0);
        CHECK(std::isfinite(e.total_loss));
    }
    CHECK(result.report.best_epoch < result.report.epochs.size());
    CHECK(result.report.wall_seconds > 0.0);
    const std::string json = result.report.to_json();
    CHECK(json.find("\"val_auc\"") != std::string::npos);
    CHECK(json.find("\"best_epoch\"") != std::string::npos);
}

TEST_CASE("fewshot harness: exact p column, deterministic rows") {
    const EventStream s = small_stream(28);
    ExperimentConfig cfg = tiny_config();
    cfg.epochs = 1;
    const std::vector<double> ps{0.1, 0.3, 0.5, 0.7, 0.9};
    const auto rows = run_fewshot(s, cfg, ps, {5, 6});
    REQUIRE(rows.size() == 5);
    for (size_t r = 0; r < rows.size(); ++r) {
        CHECK(rows[r].p == ps[r]);
        CHECK(rows[r].per_seed.size() == 2);
        CHECK(rows[r].mean_auc >= 0.0);
        CHECK(rows[r].mean_auc <= 1.0);
        CHECK(rows[r].std_auc >= 0.0);
    }
    // serial harness reproduces the parallel one
    const auto rows2 = run_fewshot(s, cfg, ps, {5, 6}, false);
    for (size_t r = 0; r < rows.size(); ++r) {
        for (size_t i = 0; i < rows[r].per_seed.size(); ++i) CHECK(rows[r].per_seed[i] == rows2[r].per_seed[i]);
    }
}

TEST_CASE("ablation harness: ladder order and row isolation") {
    const EventStream s = small_stream(28);
    ExperimentConfig cfg = tiny_config();
    cfg.epochs = 1;
    const auto rows = run_ablation(s, cfg, {9}, 0.5);
    REQUIRE(rows.size() == 5);
    CHECK(rows[0].variant == Ablation::backbone);
    CHECK(rows[1].variant == Ablation::dev);
    CHECK(rows[2].variant == Ablation::mem);
    CHECK(rows[3].variant == Ablation::time);
    CHECK(rows[4].variant == Ablation::scl);
    // the backbone row reproduces independently of the rest of the ladder
    ExperimentConfig solo = cfg;
    solo.ablation = Ablation::backbone;
    solo.drop_ratio = 0.5;
    solo.seed = 9;
    solo.verbose = false;
    const TrainResult result = train(s, solo);
    CHECK(rows[0].per_seed[0] == evaluate_test_auc(s, result.model, solo));
}

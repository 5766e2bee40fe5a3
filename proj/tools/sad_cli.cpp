// Command-line surface: generate | train | eval | fewshot | ablate |
// export-embeddings. Reports go to --out as JSON; human-readable tables go to
// stdout; training progress goes to stderr.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "CLI11.hpp"
#include "json.hpp"
#include "sad/checkpoint.hpp"
#include "sad/events.hpp"
#include "sad/harness.hpp"
#include "sad/metrics.hpp"
#include "sad/model.hpp"
#include "sad/synth.hpp"
#include "sad/trainer.hpp"

using nlohmann::json;

namespace {

struct GenerateOpts {
    sad::SynthConfig cfg;
    double days = 14.0;
    double shift = 2.0;
    std::string out = "synthetic.csv";
};

struct ExperimentOpts {
    sad::ExperimentConfig cfg;
    std::string mode = "downstream";
    std::string ablation = "scl";
    std::string data;
    int threads = 0;
};

void add_experiment_flags(CLI::App* cmd, ExperimentOpts& opt) {
    cmd->add_option("--data", opt.data, "input CSV (JODIE layout)")->required();
    cmd->add_option("--mode", opt.mode, "anomaly|downstream")->capture_default_str();
    cmd->add_option("--ablation", opt.ablation, "backbone|dev|mem|time|scl")->capture_default_str();
    cmd->add_option("--drop-ratio", opt.cfg.drop_ratio, "fraction of training labels replaced by -1")
        ->capture_default_str();
    cmd->add_option("--seed", opt.cfg.seed, "run seed")->capture_default_str();
    cmd->add_option("--epochs", opt.cfg.epochs, "max training epochs")->capture_default_str();
    cmd->add_option("--batch-size", opt.cfg.batch_size)->capture_default_str();
    cmd->add_option("--lr", opt.cfg.lr)->capture_default_str();
    cmd->add_option("--alpha", opt.cfg.loss.alpha)->capture_default_str();
    cmd->add_option("--beta", opt.cfg.loss.beta)->capture_default_str();
    cmd->add_option("--margin", opt.cfg.loss.margin)->capture_default_str();
    cmd->add_option("--temperature", opt.cfg.loss.temperature)->capture_default_str();
    cmd->add_option("--memory-size", opt.cfg.memory_capacity)->capture_default_str();
    cmd->add_option("--memory-sample", opt.cfg.memory_sample)->capture_default_str();
    cmd->add_option("--hops", opt.cfg.hops)->capture_default_str();
    cmd->add_option("--per-hop", opt.cfg.per_hop)->capture_default_str();
    cmd->add_option("--time-dim", opt.cfg.time_dim)->capture_default_str();
    cmd->add_option("--embed-dim", opt.cfg.embed_dim)->capture_default_str();
    cmd->add_option("--heads", opt.cfg.heads)->capture_default_str();
    cmd->add_option("--detector-hidden", opt.cfg.detector_hidden)->capture_default_str();
    cmd->add_option("--projection-hidden", opt.cfg.projection_hidden)->capture_default_str();
    cmd->add_option("--patience", opt.cfg.patience)->capture_default_str();
    cmd->add_flag("--uniform-sampling", opt.cfg.uniform_sampling, "uniform instead of most-recent neighbor sampling");
    cmd->add_flag("--sup-trains-encoder", opt.cfg.sup_trains_encoder,
                  "let the downstream loss reach the encoder (comparison flag)");
    cmd->add_flag("--normalize-bank-weights", opt.cfg.normalize_bank_weights,
                  "rescale drawn decay weights to mean 1 (study variant)");
    cmd->add_flag("--raw-dots", opt.cfg.raw_contrastive_dots, "contrastive dot products without L2 normalization");
    cmd->add_option("--threads", opt.threads, "worker thread cap (0 = library default)")->capture_default_str();
    cmd->set_config("--config", "", "key=value config file; command-line flags win");
}

void finalize(ExperimentOpts& opt) {
    opt.cfg.mode = sad::mode_from_string(opt.mode);
    opt.cfg.ablation = sad::ablation_from_string(opt.ablation);
#ifdef _OPENMP
    if (opt.threads > 0) omp_set_num_threads(opt.threads);
#endif
}

void write_json(const std::string& path, const json& j) {
    if (path.empty()) return;
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    os << j.dump(2) << '\n';
}

json sweep_json(const std::vector<sad::SweepRow>& rows) {
    json arr = json::array();
    for (const sad::SweepRow& r : rows) {
        arr.push_back({{"p", r.p}, {"mean_auc", r.mean_auc}, {"std_auc", r.std_auc}, {"per_seed", r.per_seed}});
    }
    return arr;
}

json ablation_json(const std::vector<sad::AblationRow>& rows) {
    json arr = json::array();
    for (const sad::AblationRow& r : rows) {
        arr.push_back({{"variant", sad::to_string(r.variant)},
                       {"mean_auc", r.mean_auc},
                       {"std_auc", r.std_auc},
                       {"per_seed", r.per_seed}});
    }
    return arr;
}

std::vector<uint64_t> seed_list(size_t n, uint64_t first) {
    std::vector<uint64_t> seeds(n);
    for (size_t i = 0; i < n; ++i) seeds[i] = first + i;
    return seeds;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SAD: semi-supervised anomaly detection on continuous-time dynamic graphs"};
    app.require_subcommand(1);

    GenerateOpts gen;
    CLI::App* c_gen = app.add_subcommand("generate", "write a synthetic labeled interaction stream as CSV");
    c_gen->add_option("--out", gen.out, "output CSV path")->capture_default_str();
    c_gen->add_option("--users", gen.cfg.num_users)->capture_default_str();
    c_gen->add_option("--items", gen.cfg.num_items)->capture_default_str();
    c_gen->add_option("--days", gen.days, "horizon in days")->capture_default_str();
    c_gen->add_option("--rate", gen.cfg.base_rate, "events per user per day")->capture_default_str();
    c_gen->add_option("--amplitude", gen.cfg.daily_cycle_amplitude)->capture_default_str();
    c_gen->add_option("--anomaly-fraction", gen.cfg.anomaly_user_fraction)->capture_default_str();
    c_gen->add_option("--shift", gen.shift, "feature mean shift of anomalous events")->capture_default_str();
    c_gen->add_option("--feature-dim", gen.cfg.edge_feature_dim)->capture_default_str();
    c_gen->add_option("--seed", gen.cfg.seed)->capture_default_str();

    ExperimentOpts tr;
    std::string tr_checkpoint = "model.ckpt";
    std::string tr_out = "train_report.json";
    CLI::App* c_train = app.add_subcommand("train", "train on a CSV stream and keep the best-epoch checkpoint");
    add_experiment_flags(c_train, tr);
    c_train->add_option("--checkpoint", tr_checkpoint, "checkpoint output path")->capture_default_str();
    c_train->add_option("--out", tr_out, "training report JSON path")->capture_default_str();

    std::string ev_checkpoint, ev_data, ev_out, ev_split = "test";
    size_t ev_per_hop = 20;
    CLI::App* c_eval = app.add_subcommand("eval", "score a stream against a checkpoint and report AUC");
    c_eval->add_option("--checkpoint", ev_checkpoint)->required();
    c_eval->add_option("--data", ev_data)->required();
    c_eval->add_option("--split", ev_split, "test|val|all")->capture_default_str();
    c_eval->add_option("--per-hop", ev_per_hop)->capture_default_str();
    c_eval->add_option("--out", ev_out, "metrics JSON path");

    ExperimentOpts fs;
    size_t fs_seeds = 3;
    uint64_t fs_first_seed = 1;
    bool fs_include_p0 = false;
    std::string fs_out = "fewshot.json";
    CLI::App* c_fs = app.add_subcommand("fewshot", "drop-ratio sweep over p in {0.1,0.3,0.5,0.7,0.9}");
    add_experiment_flags(c_fs, fs);
    c_fs->add_option("--seeds", fs_seeds, "number of seeds per p")->capture_default_str();
    c_fs->add_option("--first-seed", fs_first_seed)->capture_default_str();
    c_fs->add_flag("--include-p0", fs_include_p0, "prepend a p=0 smoke row");
    c_fs->add_option("--out", fs_out, "sweep JSON path")->capture_default_str();

    ExperimentOpts ab;
    size_t ab_seeds = 5;
    uint64_t ab_first_seed = 1;
    double ab_drop = 0.5;
    std::string ab_out = "ablation.json";
    CLI::App* c_ab = app.add_subcommand("ablate", "ablation ladder {backbone,dev,mem,time,scl}");
    add_experiment_flags(c_ab, ab);
    c_ab->add_option("--seeds", ab_seeds, "number of seeds per variant")->capture_default_str();
    c_ab->add_option("--first-seed", ab_first_seed)->capture_default_str();
    c_ab->add_option("--ladder-drop-ratio", ab_drop, "drop ratio shared by all ladder rows")->capture_default_str();
    c_ab->add_option("--out", ab_out, "ladder JSON path")->capture_default_str();

    std::string ex_checkpoint, ex_data, ex_out = "embeddings.csv";
    size_t ex_per_hop = 20;
    CLI::App* c_ex = app.add_subcommand("export-embeddings", "write per-event source-node embeddings as CSV");
    c_ex->add_option("--checkpoint", ex_checkpoint)->required();
    c_ex->add_option("--data", ex_data)->required();
    c_ex->add_option("--out", ex_out)->capture_default_str();
    c_ex->add_option("--per-hop", ex_per_hop)->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*c_gen) {
            gen.cfg.horizon_seconds = gen.days * 86400.0;
            gen.cfg.anomaly_feature_shift = {gen.shift};
            const sad::EventStream stream = sad::generate(gen.cfg);
            sad::write_csv(stream, gen.out);
            size_t positives = 0;
            for (const sad::Event& e : stream.events) positives += e.label == 1 ? 1 : 0;
            std::printf("wrote %zu events (%zu anomalous) over %zu nodes to %s\n", stream.events.size(), positives,
                        stream.num_nodes, gen.out.c_str());
        } else if (*c_train) {
            finalize(tr);
            tr.cfg.checkpoint_out = tr_checkpoint;
            const sad::EventStream stream = sad::ingest_csv(tr.data);
            const sad::TrainResult result = sad::train(stream, tr.cfg);
            const double test_auc = sad::evaluate_test_auc(stream, result.model, tr.cfg);
            json j = json::parse(result.report.to_json());
            j["test_auc"] = test_auc;
            write_json(tr_out, j);
            std::printf("best_val_auc %.4f (epoch %zu)  test_auc %.4f  checkpoint %s  report %s\n",
                        result.report.best_val_auc, result.report.best_epoch + 1, test_auc, tr_checkpoint.c_str(),
                        tr_out.c_str());
        } else if (*c_eval) {
            const sad::EventStream stream = sad::ingest_csv(ev_data);
            const size_t m = stream.events.size();
            size_t first = 0, last = m;
            if (ev_split == "test") {
                first = static_cast<size_t>(0.85 * static_cast<double>(m));
            } else if (ev_split == "val") {
                first = static_cast<size_t>(0.70 * static_cast<double>(m));
                last = static_cast<size_t>(0.85 * static_cast<double>(m));
            } else if (ev_split != "all") {
                throw std::invalid_argument("--split must be test, val or all");
            }
            const sad::SadModel model = sad::SadModel::from_params(sad::load_checkpoint(ev_checkpoint));
            const sad::TemporalAdjacency adj(stream);
            const std::vector<sad::EventScore> scores = sad::score_events(model, stream, adj, first, last, ev_per_hop);
            std::vector<double> probs, raw;
            std::vector<int> labels;
            for (size_t i = 0; i < scores.size(); ++i) {
                if (stream.events[first + i].label < 0) continue;
                probs.push_back(scores[i].class1_prob);
                raw.push_back(scores[i].anomaly_score);
                labels.push_back(stream.events[first + i].label);
            }
            const double auc_prob = sad::auc_roc(probs, labels);
            const double auc_raw = sad::auc_roc(raw, labels);
            write_json(ev_out, json{{"split", ev_split},
                                    {"events", scores.size()},
                                    {"labeled", labels.size()},
                                    {"auc_class1_prob", auc_prob},
                                    {"auc_anomaly_score", auc_raw}});
            std::printf("split %s: %zu events, AUC %.4f (class-1 probability), %.4f (raw anomaly score)\n",
                        ev_split.c_str(), scores.size(), auc_prob, auc_raw);
        } else if (*c_fs) {
            finalize(fs);
            const sad::EventStream stream = sad::ingest_csv(fs.data);
            std::vector<double> ps{0.1, 0.3, 0.5, 0.7, 0.9};
            if (fs_include_p0) ps.insert(ps.begin(), 0.0);
            const auto rows = sad::run_fewshot(stream, fs.cfg, ps, seed_list(fs_seeds, fs_first_seed));
            std::printf("%6s %10s %10s\n", "p", "mean AUC", "std");
            for (const sad::SweepRow& r : rows) std::printf("%6.2f %10.4f %10.4f\n", r.p, r.mean_auc, r.std_auc);
            write_json(fs_out, json{{"seeds", fs_seeds}, {"rows", sweep_json(rows)}});
        } else if (*c_ab) {
            finalize(ab);
            const sad::EventStream stream = sad::ingest_csv(ab.data);
            const auto rows = sad::run_ablation(stream, ab.cfg, seed_list(ab_seeds, ab_first_seed), ab_drop);
            std::printf("%10s %10s %10s\n", "variant", "mean AUC", "std");
            for (const sad::AblationRow& r : rows) {
                std::printf("%10s %10.4f %10.4f\n", sad::to_string(r.variant), r.mean_auc, r.std_auc);
            }
            write_json(ab_out, json{{"seeds", ab_seeds}, {"drop_ratio", ab_drop}, {"rows", ablation_json(rows)}});
        } else if (*c_ex) {
            const sad::EventStream stream = sad::ingest_csv(ex_data);
            const sad::SadModel model = sad::SadModel::from_params(sad::load_checkpoint(ex_checkpoint));
            const sad::TemporalAdjacency adj(stream);
            std::ofstream os(ex_out);
            if (!os) throw std::runtime_error("cannot open " + ex_out + " for writing");
            os << "node_id,t";
            for (size_t d = 0; d < model.config().embed_dim; ++d) os << ",z" << d;
            os << '\n';
            const size_t chunk = 64;
            char buf[64];
            for (size_t lo = 0; lo < stream.events.size(); lo += chunk) {
                const size_t hi = std::min(lo + chunk, stream.events.size());
                std::vector<sad::Subgraph> sgs;
                for (size_t i = lo; i < hi; ++i) {
                    const sad::Event& ev = stream.events[i];
                    sgs.push_back(sad::sample_subgraph(adj, ev.src, ev.t, model.config().layers, ex_per_hop));
                }
                sad::Tape tape;
                const sad::TapedParams tp = sad::register_params(tape, model);
                const sad::Tensor& z = tape.value(sad::encode_batch(tape, model, tp, stream, sgs));
                for (size_t i = lo; i < hi; ++i) {
                    std::snprintf(buf, sizeof(buf), "%.17g", stream.events[i].t);
                    os << stream.events[i].src << ',' << buf;
                    for (size_t d = 0; d < z.cols(); ++d) {
                        std::snprintf(buf, sizeof(buf), "%.8g", z[(i - lo) * z.cols() + d]);
                        os << ',' << buf;
                    }
                    os << '\n';
                }
            }
            std::printf("wrote %zu embeddings to %s\n", stream.events.size(), ex_out.c_str());
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}

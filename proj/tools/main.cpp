// Command-line front end: train / eval / ablate / gradcheck / dump-adjacency /
// consistency, all driven by a JSON config with targeted flag overrides.
// Exit codes: 0 ok, 1 config, 2 data/io, 3 numeric.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "capsroute/ablate.hpp"
#include "capsroute/checkpoint.hpp"
#include "capsroute/config.hpp"
#include "capsroute/consistency.hpp"
#include "capsroute/gradcheck.hpp"
#include "capsroute/model.hpp"
#include "capsroute/synthetic.hpp"
#include "capsroute/text.hpp"
#include "capsroute/trainer.hpp"

namespace {

using namespace capsroute;
using nlohmann::json;

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string checkpoint;
    std::string out;
    std::string data_path;
};

RunConfig load_config_or_default(const CommonOpts& opts, bool required) {
    RunConfig cfg;
    if (!opts.config_path.empty()) {
        cfg = load_run_config(opts.config_path);
    } else if (required) {
        throw ConfigError("--config is required for this command");
    }
    if (opts.seed) cfg.model.seed = *opts.seed;
    return cfg;
}

void echo_config(const RunConfig& cfg) {
    std::cout << "{\"resolved_config\":" << run_config_to_json(cfg) << "}\n";
}

DataFormat resolve_format(const DataConfig& data, const std::string& path) {
    return data.format.empty() ? infer_data_format(path) : data_format_from_name(data.format);
}

struct LoadedSplit {
    Vocab vocab;
    LabelMap labels;
    std::vector<Document> train;
    std::vector<Document> test;
};

// Training-side data path: vocab and label map built from the train split.
LoadedSplit load_training_data(const RunConfig& cfg) {
    if (cfg.data.train_path.empty()) throw DataError("no training dataset configured (data.train)");
    auto raw_train = load_dataset(cfg.data.train_path, resolve_format(cfg.data, cfg.data.train_path));
    if (raw_train.empty()) throw DataError("training dataset is empty: " + cfg.data.train_path);

    std::vector<std::string> texts;
    texts.reserve(raw_train.size());
    for (const auto& ex : raw_train) texts.push_back(ex.text);

    LoadedSplit split{Vocab::build(texts, cfg.data.vocab_min_count, cfg.data.vocab_max_size), LabelMap{}, {}, {}};
    split.train = encode_dataset(raw_train, split.vocab, split.labels, cfg.model.L, /*grow_labels=*/true);
    if (!cfg.data.test_path.empty()) {
        auto raw_test = load_dataset(cfg.data.test_path, resolve_format(cfg.data, cfg.data.test_path));
        split.test = encode_dataset(raw_test, split.vocab, split.labels, cfg.model.L, /*grow_labels=*/false);
    }
    return split;
}

std::size_t resolve_class_count(ModelConfig& model, const LabelMap& labels) {
    if (model.C == 0) {
        model.C = labels.size();
    } else if (model.C != labels.size()) {
        throw ConfigError("model.classes (" + std::to_string(model.C) + ") disagrees with dataset labels (" +
                          std::to_string(labels.size()) + ")");
    }
    return model.C;
}

json eval_to_json(const EvalStats& stats) {
    return {{"accuracy", stats.accuracy},
            {"mean_loss", stats.mean_loss},
            {"per_class_accuracy", stats.per_class_accuracy},
            {"count", stats.count}};
}

int cmd_train(const CommonOpts& opts) {
    RunConfig cfg = load_config_or_default(opts, /*required=*/true);
    if (!opts.checkpoint.empty()) cfg.train.checkpoint_path = opts.checkpoint;
    if (!opts.out.empty()) cfg.train.metrics_out = opts.out;

    auto split = load_training_data(cfg);
    resolve_class_count(cfg.model, split.labels);
    echo_config(cfg);

    CapsNet<float> model(cfg.model, split.vocab.size());
    Adam<float> opt(model.params(), cfg.train.lr);
    auto report = param_report(model);
    std::cout << json{{"params", report.total}, {"blocks", report.blocks.size()},
                      {"train_docs", split.train.size()}, {"test_docs", split.test.size()}}
                     .dump()
              << "\n";

    std::ofstream metrics_file;
    if (!cfg.train.metrics_out.empty()) {
        metrics_file.open(cfg.train.metrics_out, std::ios::trunc);
        if (!metrics_file) throw DataError("cannot write metrics file: " + cfg.train.metrics_out);
    }

    double last_mean_loss = 0.0;
    std::optional<double> last_test_accuracy;
    for (std::size_t epoch = 0; epoch < cfg.train.epochs; ++epoch) {
        auto stats = train_epoch(model, opt, split.train, cfg.train, epoch);
        last_mean_loss = stats.mean_loss;
        json line{{"epoch", epoch},
                  {"mean_loss", stats.mean_loss},
                  {"seconds", stats.seconds},
                  {"sec_per_batch", stats.sec_per_batch}};
        const bool do_eval = !split.test.empty() && cfg.train.eval_every > 0 &&
                             ((epoch + 1) % cfg.train.eval_every == 0 || epoch + 1 == cfg.train.epochs);
        if (do_eval) {
            auto eval = evaluate(model, split.test, cfg.train.loss);
            line["test_accuracy"] = eval.accuracy;
            last_test_accuracy = eval.accuracy;
        }
        const std::string text = line.dump();
        std::cout << text << "\n";
        if (metrics_file) metrics_file << text << "\n";
    }

    if (!cfg.train.checkpoint_path.empty()) {
        save_checkpoint(cfg.train.checkpoint_path, cfg.model, cfg.train, split.labels, split.vocab,
                        model.params());
        split.vocab.save(cfg.train.checkpoint_path + ".vocab");
    }

    json final_line{{"final_mean_loss", last_mean_loss}, {"epochs", cfg.train.epochs}, {"params", report.total}};
    if (last_test_accuracy) final_line["test_accuracy"] = *last_test_accuracy;
    std::cout << final_line.dump() << "\n";
    return 0;
}

// Restore a model and its vocab/labels from a checkpoint path.
struct RestoredModel {
    Checkpoint ckpt;
    Vocab vocab;
    LabelMap labels;
    std::unique_ptr<CapsNet<float>> model;
};

RestoredModel restore_model(const std::string& path) {
    if (path.empty()) throw DataError("no checkpoint given (--checkpoint)");
    RestoredModel r{load_checkpoint(path), Vocab::from_tokens({"<pad>", "<unk>"}), LabelMap{}, nullptr};
    r.vocab = r.ckpt.vocab();
    r.labels = r.ckpt.label_map();
    r.model = std::make_unique<CapsNet<float>>(r.ckpt.model, r.vocab.size());
    restore_params(r.ckpt, r.model->params());
    return r;
}

int cmd_eval(const CommonOpts& opts) {
    RunConfig cfg = load_config_or_default(opts, /*required=*/false);
    const std::string ckpt_path = !opts.checkpoint.empty() ? opts.checkpoint : cfg.train.checkpoint_path;
    auto restored = restore_model(ckpt_path);

    const std::string data_path = !opts.data_path.empty() ? opts.data_path : cfg.data.test_path;
    if (data_path.empty()) throw DataError("no evaluation dataset configured (data.test or --data)");

    RunConfig effective = cfg;
    effective.model = restored.ckpt.model;
    echo_config(effective);

    auto raw = load_dataset(data_path, resolve_format(cfg.data, data_path));
    auto docs = encode_dataset(raw, restored.vocab, restored.labels, restored.ckpt.model.L,
                               /*grow_labels=*/false);
    auto stats = evaluate(*restored.model, docs, restored.ckpt.train.loss);
    std::cout << eval_to_json(stats).dump() << "\n";
    return 0;
}

int cmd_ablate(const CommonOpts& opts) {
    RunConfig cfg = load_config_or_default(opts, /*required=*/true);
    auto split = load_training_data(cfg);
    resolve_class_count(cfg.model, split.labels);
    echo_config(cfg);
    if (split.test.empty()) throw DataError("ablation needs a test split (data.test)");

    auto cells = expand_ablation_grid(cfg.ablation);
    auto rows = run_ablation<float>(cfg.model, cfg.train, split.train, split.test, split.vocab.size(), cells);
    const std::string csv = ablation_csv(rows);
    if (!opts.out.empty()) {
        std::ofstream out(opts.out, std::ios::trunc);
        if (!out) throw DataError("cannot write ablation table: " + opts.out);
        out << csv;
    }
    std::cout << csv;

    bool any_ok = false;
    for (const auto& row : rows) any_ok = any_ok || row.ok;
    if (!any_ok) {
        std::cerr << "error: every ablation cell failed\n";
        return 1;
    }
    return 0;
}

// Identity forward with a deliberately wrong backward (gradient scaled by
// 1.05); negative control proving the checker can fail.
Tensor<double> corrupted_identity(const Tensor<double>& x) {
    Tensor<double> out = Tensor<double>::from(x.shape(),
                                              std::vector<double>(x.values().begin(), x.values().end()),
                                              x.requires_grad() && Tape<double>::active() != nullptr);
    if (out.requires_grad()) {
        Tape<double>::active()->record(out, [x, out]() mutable {
            auto g = out.grad();
            auto gx = x.grad();
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += 1.05 * g[i];
        });
    }
    return out;
}

int cmd_gradcheck(const CommonOpts& opts, bool corrupt_backward) {
    RunConfig cfg = load_config_or_default(opts, /*required=*/false);
    if (opts.config_path.empty()) {
        // built-in desk-scale config
        cfg.model.D = 8;
        cfg.model.K = 3;
        cfg.model.stride = 2;
        cfg.model.B1 = 4;
        cfg.model.B2 = 2;
        cfg.model.N_caps = 6;
        cfg.model.d = 8;
        cfg.model.L = 8;
        cfg.model.C = 3;
        cfg.model.seed = opts.seed.value_or(42);
    }
    if (cfg.model.C == 0) cfg.model.C = 3;
    echo_config(cfg);

    const std::size_t vocab_size = 24;
    CapsNet<double> model(cfg.model, vocab_size);
    const std::size_t total = model.params().scalar_count();
    if (total > 20000) {
        throw ConfigError("gradcheck requires a tiny model (" + std::to_string(total) +
                          " parameters exceeds the 20000 cap)");
    }

    // fixed probe document and label
    Rng rng(cfg.model.seed ^ 0xD0C5ull);
    std::vector<int> ids;
    for (std::size_t i = 0; i < cfg.model.L; ++i)
        ids.push_back(2 + static_cast<int>(rng.below(vocab_size - 2)));
    const int label = static_cast<int>(rng.below(cfg.model.C));

    auto loss_fn = [&]() {
        auto fwd = model.forward_doc(ids);
        Tensor<double> loss = model.doc_loss(fwd, label, LossKind::margin);
        return corrupt_backward ? corrupted_identity(loss) : loss;
    };
    // step balances truncation against round-off: the loss carries ~1e-15
    // relative noise, so smaller steps drown near-zero gradients in it
    auto results = finite_diff_check<double>(loss_fn, model.params(), 1e-4);

    bool all_ok = true;
    std::vector<std::string> failing;
    for (const auto& r : results) {
        const bool ok = r.max_rel_err <= 1e-3;
        all_ok = all_ok && ok;
        if (!ok) failing.push_back(r.name);
        std::printf("%-16s max_rel_err %.3e  (analytic %.6e vs central-diff %.6e at [%zu], %zu coords)  %s\n",
                    r.name.c_str(), r.max_rel_err, r.analytic, r.numeric, r.worst_index,
                    r.coords_checked, ok ? "ok" : "FAIL");
    }
    if (!all_ok) {
        std::string names;
        for (const auto& n : failing) names += (names.empty() ? "" : ", ") + n;
        std::cerr << "error: gradient check failed for: " << names << "\n";
        return 3;
    }
    return 0;
}

void write_matrix_csv(const std::string& path, const Tensor<float>& m) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write matrix file: " + path);
    char buf[32];
    for (std::size_t i = 0; i < m.dim(0); ++i) {
        for (std::size_t j = 0; j < m.dim(1); ++j) {
            std::snprintf(buf, sizeof(buf), "%.6f", static_cast<double>(m.at(i, j)));
            out << (j ? "," : "") << buf;
        }
        out << "\n";
    }
}

int cmd_dump_adjacency(const CommonOpts& opts, const std::string& text) {
    auto restored = restore_model(opts.checkpoint);
    if (text.empty()) throw DataError("no document given (--text)");
    const std::string out_dir = opts.out.empty() ? "." : opts.out;
    std::filesystem::create_directories(out_dir);

    auto ids = encode_document(text, restored.vocab, restored.ckpt.model.L);
    auto fwd = restored.model->forward_doc(ids, /*want_trace=*/true);
    const RoutingConfig& rc = restored.ckpt.model.routing;

    for (Metric metric : {Metric::wd, Metric::ed, Metric::cs}) {
        const std::string tag = to_string(metric);
        write_matrix_csv(out_dir + "/A_" + tag + ".csv", pairwise_adjacency(fwd.u, metric, rc.wd_mode));
        write_matrix_csv(out_dir + "/Atilde_" + tag + ".csv",
                         normalized_adjacency(fwd.u, rc.norm, metric, rc.wd_mode));
    }

    // long-format routing trace: logits and couplings per (child, parent),
    // parent norms once per iteration
    std::ofstream trace(out_dir + "/trace.csv", std::ios::trunc);
    if (!trace) throw DataError("cannot write trace file: " + out_dir + "/trace.csv");
    trace << "iteration,quantity,child,parent,value\n";
    const std::size_t C = restored.ckpt.model.C;
    char buf[32];
    for (std::size_t it = 0; it < fwd.routing.trace.size(); ++it) {
        const auto& rec = fwd.routing.trace[it];
        const std::size_t n = rec.parent_norms.size() ? rec.logits.size() / C : 0;
        const std::size_t c_cols = n ? rec.couplings.size() / n : 0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < C; ++j) {
                std::snprintf(buf, sizeof(buf), "%.6f", rec.logits[i * C + j]);
                trace << it << ",logit," << i << "," << j << "," << buf << "\n";
            }
            for (std::size_t j = 0; j < c_cols; ++j) {
                std::snprintf(buf, sizeof(buf), "%.6f", rec.couplings[i * c_cols + j]);
                trace << it << ",coupling," << i << "," << j << "," << buf << "\n";
            }
        }
        for (std::size_t j = 0; j < rec.parent_norms.size(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.6f", rec.parent_norms[j]);
            trace << it << ",parent_norm,," << j << "," << buf << "\n";
        }
    }
    std::cout << json{{"out_dir", out_dir}, {"caps", fwd.u.dim(0)}, {"iterations", fwd.routing.trace.size()}}
                     .dump()
              << "\n";
    return 0;
}

int cmd_consistency(const CommonOpts& opts) {
    RunConfig cfg = load_config_or_default(opts, /*required=*/false);
    const std::string ckpt_path = !opts.checkpoint.empty() ? opts.checkpoint : cfg.train.checkpoint_path;
    auto restored = restore_model(ckpt_path);

    const std::string data_path = !opts.data_path.empty() ? opts.data_path : cfg.data.test_path;
    if (data_path.empty()) throw DataError("no dataset configured (data.test or --data)");
    auto raw = load_dataset(data_path, resolve_format(cfg.data, data_path));
    auto docs = encode_dataset(raw, restored.vocab, restored.labels, restored.ckpt.model.L,
                               /*grow_labels=*/false);
    if (docs.empty()) throw DataError("empty dataset: " + data_path);

    auto report = semantic_consistency(*restored.model, docs);
    std::cout << json{{"NCL", report.ncl}, {"PCL", report.pcl}, {"RL", report.rl}}.dump() << "\n";
    std::printf("%8s %8s %8s\n", "NCL", "PCL", "RL");
    std::printf("%7.2f%% %7.2f%% %7.2f%%\n", report.ncl, report.pcl, report.rl);
    return 0;
}

int dispatch(int argc, char** argv) {
    CLI::App app{"capsule-network text classifier with graph routing"};
    app.require_subcommand(1);

    CommonOpts opts;
    bool corrupt_backward = false;
    std::string doc_text;

    auto add_common = [&opts](CLI::App* cmd, bool with_data) {
        cmd->add_option("--config", opts.config_path, "JSON config path");
        cmd->add_option("--seed", opts.seed, "override model.seed");
        cmd->add_option("--checkpoint", opts.checkpoint, "checkpoint path");
        cmd->add_option("--out", opts.out, "output path");
        if (with_data) cmd->add_option("--data", opts.data_path, "dataset path override");
    };

    CLI::App* train = app.add_subcommand("train", "train a model and write a checkpoint");
    add_common(train, false);
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    add_common(eval, true);
    CLI::App* ablate = app.add_subcommand("ablate", "run the routing-variant sweep");
    add_common(ablate, false);
    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
    add_common(gradcheck, false);
    gradcheck->add_flag("--corrupt-backward", corrupt_backward,
                        "negative control: inject a wrong backward and expect failure");
    CLI::App* dump = app.add_subcommand("dump-adjacency", "export adjacency matrices and routing trace");
    add_common(dump, false);
    dump->add_option("--text", doc_text, "document to analyze");
    CLI::App* consistency = app.add_subcommand("consistency", "per-layer semantic consistency report");
    add_common(consistency, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (train->parsed()) return cmd_train(opts);
        if (eval->parsed()) return cmd_eval(opts);
        if (ablate->parsed()) return cmd_ablate(opts);
        if (gradcheck->parsed()) return cmd_gradcheck(opts, corrupt_backward);
        if (dump->parsed()) return cmd_dump_adjacency(opts, doc_text);
        if (consistency->parsed()) return cmd_consistency(opts);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

} // namespace

int main(int argc, char** argv) {
    return dispatch(argc, argv);
}

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "capsroute/adjacency.hpp"
#include "capsroute/model.hpp"
#include "capsroute/trainer.hpp"

namespace capsroute {

struct AblationRow {
    AblationCellConfig cell;
    bool ok = true;
    std::string error;
    double accuracy = 0.0;
    double mean_loss = 0.0;
    std::size_t param_count = 0;
    double sec_per_batch = 0.0;
    bool has_mechanism = false;
    double mechanism = 0.0;
};

/// The normalization-swap sweep: every metric under both normalizations,
/// plus the single adjacency-off cell. Attention stays on throughout so the
/// cells differ only in how Ã is built.
inline std::vector<AblationCellConfig> default_ablation_grid() {
    std::vector<AblationCellConfig> cells;
    for (Metric m : {Metric::cs, Metric::ed, Metric::wd}) {
        for (NormMode n : {NormMode::general, NormMode::classic}) {
            cells.push_back({RoutingVariant::graph, m, n, true});
        }
    }
    cells.push_back({RoutingVariant::graph, Metric::wd, NormMode::identity, true});
    return cells;
}

inline std::vector<AblationCellConfig> expand_ablation_grid(const AblationConfig& cfg) {
    if (!cfg.cells.empty()) return cfg.cells;
    if (cfg.has_axes()) {
        std::vector<AblationCellConfig> cells;
        for (Metric m : cfg.metrics)
            for (NormMode n : cfg.norms) cells.push_back({RoutingVariant::graph, m, n, cfg.attention});
        return cells;
    }
    return default_ablation_grid();
}

/// Mean displacement the graph aggregation applies to the prediction
/// vectors: mean over probe documents and (parent, child) pairs of
/// ‖(Ã·û_j)_i − û_{j|i}‖₂, with the mixing weight held at identity so the
/// value is zero exactly when Ã = I. Computed on the untrained cell model.
template <class S>
double aggregation_displacement(CapsNet<S>& model, const std::vector<Document>& probe_docs) {
    const RoutingConfig& rc = model.config().routing;
    if (!rc.uses_gcn()) throw ContractError("aggregation displacement: cell has no graph step");
    double total = 0.0;
    std::size_t pairs = 0;
    for (const auto& doc : probe_docs) {
        auto fwd = model.forward_doc(doc.tokens);
        Tensor<S> A_tilde = normalized_adjacency(fwd.u, rc.norm, rc.metric, rc.wd_mode);
        for (const auto& slab : fwd.u_hat) {
            Tensor<S> mixed = matmul(A_tilde, slab);
            for (std::size_t i = 0; i < slab.dim(0); ++i) {
                double sq = 0.0;
                for (std::size_t t = 0; t < slab.dim(1); ++t) {
                    const double diff = static_cast<double>(mixed.at(i, t)) - static_cast<double>(slab.at(i, t));
                    sq += diff * diff;
                }
                total += std::sqrt(sq);
                ++pairs;
            }
        }
    }
    return pairs == 0 ? 0.0 : total / static_cast<double>(pairs);
}

/// Train and evaluate every cell from the same base config, seed, and data
/// order; a failing cell records its error and the sweep continues.
template <class S>
std::vector<AblationRow> run_ablation(const ModelConfig& base, const TrainConfig& tcfg,
                                      const std::vector<Document>& train_docs,
                                      const std::vector<Document>& test_docs,
                                      std::size_t vocab_size,
                                      const std::vector<AblationCellConfig>& cells) {
    if (cells.empty()) throw ConfigError("ablation: empty grid");
    std::vector<AblationRow> rows;
    for (const auto& cell : cells) {
        AblationRow row;
        row.cell = cell;
        try {
            ModelConfig cfg = base;
            cfg.routing.variant = cell.variant;
            cfg.routing.metric = cell.metric;
            cfg.routing.norm = cell.norm;
            cfg.routing.attention = cell.attention;
            CapsNet<S> model(cfg, vocab_size);
            row.param_count = model.params().scalar_count();

            if (cfg.routing.uses_gcn()) {
                std::vector<Document> probe(test_docs.begin(),
                                            test_docs.begin() +
                                                static_cast<std::ptrdiff_t>(std::min<std::size_t>(8, test_docs.size())));
                row.mechanism = aggregation_displacement(model, probe);
                row.has_mechanism = true;
            }

            Adam<S> opt(model.params(), tcfg.lr);
            double sec_sum = 0.0;
            std::size_t sec_batches = 0;
            for (std::size_t epoch = 0; epoch < tcfg.epochs; ++epoch) {
                auto stats = train_epoch(model, opt, train_docs, tcfg, epoch);
                // skip the first batches of the first epoch as warmup
                const std::size_t skip = epoch == 0 ? std::min<std::size_t>(3, stats.batch_losses.size()) : 0;
                const std::size_t counted = stats.batch_losses.size() - skip;
                if (counted > 0) {
                    sec_sum += stats.sec_per_batch * static_cast<double>(counted);
                    sec_batches += counted;
                }
            }
            row.sec_per_batch = sec_batches == 0 ? 0.0 : sec_sum / static_cast<double>(sec_batches);

            auto eval = evaluate(model, test_docs, tcfg.loss);
            row.accuracy = eval.accuracy;
            row.mean_loss = eval.mean_loss;
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
    std::ostringstream out;
    out << "variant,metric,norm,attention,accuracy,loss,params,sec_per_batch,mechanism_check,error\n";
    char buf[64];
    for (const auto& row : rows) {
        out << to_string(row.cell.variant) << ','
            << (row.cell.norm == NormMode::identity ? "-" : to_string(row.cell.metric)) << ','
            << to_string(row.cell.norm) << ',' << (row.cell.attention ? "on" : "off") << ',';
        if (row.ok) {
            std::snprintf(buf, sizeof(buf), "%.4f,%.6f,%zu,%.6f", row.accuracy, row.mean_loss,
                          row.param_count, row.sec_per_batch);
            out << buf << ',';
            if (row.has_mechanism) {
                std::snprintf(buf, sizeof(buf), "%.6f", row.mechanism);
                out << buf;
            }
            out << ',';
        } else {
            std::string msg = row.error;
            for (auto& c : msg)
                if (c == ',' || c == '\n') c = ';';
            out << ",,,,," << msg;
        }
        out << '\n';
    }
    return out.str();
}

} // namespace capsroute

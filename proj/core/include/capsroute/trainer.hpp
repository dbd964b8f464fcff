#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "capsroute/model.hpp"
#include "capsroute/text.hpp"

namespace capsroute {

struct EpochStats {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    std::vector<double> batch_losses;
    double seconds = 0.0;
    double sec_per_batch = 0.0;
};

struct EvalStats {
    double accuracy = 0.0;
    double mean_loss = 0.0;
    std::vector<double> per_class_accuracy;
    std::size_t count = 0;
};

struct ParamReport {
    std::vector<std::pair<std::string, std::size_t>> blocks;
    std::size_t total = 0;
    double sec_per_batch = 0.0;
};

namespace detail {
inline std::uint64_t epoch_shuffle_seed(std::uint64_t base, std::size_t epoch) {
    return base ^ (0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(epoch) + 1));
}
} // namespace detail

/// Mean loss over one batch on the active tape.
template <class S>
Tensor<S> batch_loss(CapsNet<S>& model, const Batch& batch, LossKind loss) {
    if (batch.size() == 0) throw ContractError("batch loss: empty batch");
    Tensor<S> total;
    for (std::size_t k = 0; k < batch.size(); ++k) {
        auto fwd = model.forward_doc(batch.token_ids[k]);
        Tensor<S> l = model.doc_loss(fwd, batch.labels[k], loss);
        total = k == 0 ? l : add(total, l);
    }
    return affine(total, 1.0 / static_cast<double>(batch.size()), 0.0);
}

/// One pass over the shuffled data: per batch, fresh tape, mean loss,
/// backward, Adam step. The shuffle order is a pure function of the model
/// seed and the epoch index, so identical seeds give identical loss
/// sequences.
template <class S>
EpochStats train_epoch(CapsNet<S>& model, Adam<S>& opt, const std::vector<Document>& docs,
                       const TrainConfig& tcfg, std::size_t epoch_index) {
    EpochStats stats;
    stats.epoch = epoch_index;
    auto batches = make_batches(docs, tcfg.batch,
                                detail::epoch_shuffle_seed(model.config().seed, epoch_index));
    const auto t0 = std::chrono::steady_clock::now();
    double loss_sum = 0.0;
    for (const auto& batch : batches) {
        Tape<S> tape;
        typename Tape<S>::Scope scope(tape);
        Tensor<S> loss = batch_loss(model, batch, tcfg.loss);
        backward(loss);
        opt.step();
        model.params().zero_grads();
        stats.batch_losses.push_back(static_cast<double>(loss.item()));
        loss_sum += stats.batch_losses.back();
    }
    const auto t1 = std::chrono::steady_clock::now();
    stats.seconds = std::chrono::duration<double>(t1 - t0).count();
    if (!batches.empty()) {
        stats.mean_loss = loss_sum / static_cast<double>(batches.size());
        stats.sec_per_batch = stats.seconds / static_cast<double>(batches.size());
    }
    return stats;
}

/// Accuracy and mean loss without touching any parameter; running it twice
/// gives identical reports.
template <class S>
EvalStats evaluate(CapsNet<S>& model, const std::vector<Document>& docs, LossKind loss) {
    if (docs.empty()) throw DataError("evaluate: empty dataset");
    EvalStats stats;
    const std::size_t C = model.config().C;
    std::vector<std::size_t> per_class_total(C, 0), per_class_hit(C, 0);
    double loss_sum = 0.0;
    std::size_t hits = 0;
    for (const auto& doc : docs) {
        if (doc.label < 0 || static_cast<std::size_t>(doc.label) >= C) {
            throw DataError("evaluate: label " + std::to_string(doc.label) +
                            " outside the model's " + std::to_string(C) + " classes");
        }
        auto fwd = model.forward_doc(doc.tokens);
        loss_sum += static_cast<double>(model.doc_loss(fwd, doc.label, loss).item());
        ++per_class_total[static_cast<std::size_t>(doc.label)];
        if (fwd.prediction == doc.label) {
            ++hits;
            ++per_class_hit[static_cast<std::size_t>(doc.label)];
        }
    }
    stats.count = docs.size();
    stats.accuracy = static_cast<double>(hits) / static_cast<double>(docs.size());
    stats.mean_loss = loss_sum / static_cast<double>(docs.size());
    for (std::size_t c = 0; c < C; ++c) {
        stats.per_class_accuracy.push_back(
            per_class_total[c] == 0 ? 0.0
                                    : static_cast<double>(per_class_hit[c]) /
                                          static_cast<double>(per_class_total[c]));
    }
    return stats;
}

/// Per-block and total parameter counts; when a timing batch is supplied,
/// also the mean forward+backward wall time per batch (3 warmups, 20 timed
/// passes).
template <class S>
ParamReport param_report(CapsNet<S>& model, const Batch* timing_batch = nullptr,
                         LossKind loss = LossKind::margin, std::size_t warmup = 3,
                         std::size_t timed = 20) {
    ParamReport report;
    for (const auto& p : model.params().all()) {
        report.blocks.emplace_back(p.name, p.value.numel());
        report.total += p.value.numel();
    }
    if (timing_batch && timed > 0) {
        auto run_once = [&]() {
            Tape<S> tape;
            typename Tape<S>::Scope scope(tape);
            Tensor<S> loss_t = batch_loss(model, *timing_batch, loss);
            backward(loss_t);
            model.params().zero_grads();
        };
        for (std::size_t i = 0; i < warmup; ++i) run_once();
        const auto t0 = std::chrono::steady_clock::now();
        for (std::size_t i = 0; i < timed; ++i) run_once();
        const auto t1 = std::chrono::steady_clock::now();
        report.sec_per_batch = std::chrono::duration<double>(t1 - t0).count() / static_cast<double>(timed);
    }
    return report;
}

} // namespace capsroute

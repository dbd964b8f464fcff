// Acceptance gate for the toolkit: re-verifies the headline behavioral
// guarantees end to end in one binary. Each criterion prints a single
// [PASS]/[FAIL] line with the measured numbers; the exit code is nonzero if
// any criterion fails. Runs from scratch (no fixtures on disk) in a few
// minutes on a laptop.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "capsroute/ablate.hpp"
#include "capsroute/adjacency.hpp"
#include "capsroute/capsule.hpp"
#include "capsroute/checkpoint.hpp"
#include "capsroute/consistency.hpp"
#include "capsroute/gradcheck.hpp"
#include "capsroute/model.hpp"
#include "capsroute/rng.hpp"
#include "capsroute/routing.hpp"
#include "capsroute/synthetic.hpp"
#include "capsroute/text.hpp"
#include "capsroute/trainer.hpp"

using namespace capsroute;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

template <class S>
Tensor<S> random_tensor(Rng& rng, const std::vector<std::size_t>& shape, double lo, double hi) {
    Tensor<S> t = Tensor<S>::zeros(shape);
    for (auto& v : t.values_mut()) v = static_cast<S>(rng.uniform(lo, hi));
    return t;
}

template <class S>
bool bitwise(const Tensor<S>& a, const Tensor<S>& b) {
    if (a.shape() != b.shape()) return false;
    for (std::size_t i = 0; i < a.numel(); ++i)
        if (a.values()[i] != b.values()[i]) return false;
    return true;
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

struct Outcome {
    bool pass = false;
    std::string detail;
    std::vector<std::string> notes; // extra indented reporting lines
};

// ---------------------------------------------------------------------------
// criterion 1: graph routing collapses to the plain agreement baseline when
// the adjacency is the identity, the mixing weight is the identity, and the
// attention gate is off — bitwise, across random instances.
Outcome criterion1() {
    const auto t0 = Clock::now();
    Rng rng(4101);
    const int trials = 120;
    int matched = 0;
    for (int t = 0; t < trials; ++t) {
        const std::size_t C = 1 + rng.below(4);
        const std::size_t n = 1 + rng.below(8);
        const std::size_t d = 1 + rng.below(16);
        const int r = 1 + static_cast<int>(rng.below(4));
        auto u = random_tensor<double>(rng, {n, d}, -1.0, 1.0);
        std::vector<Tensor<double>> u_hat;
        for (std::size_t j = 0; j < C; ++j) u_hat.push_back(random_tensor<double>(rng, {n, d}, -1.5, 1.5));

        RoutingConfig cfg;
        cfg.variant = RoutingVariant::graph;
        cfg.norm = NormMode::identity;
        cfg.attention = false;
        cfg.iterations = r;
        auto graph = graph_routing(u_hat, u, cfg, Tensor<double>::identity(d));
        auto plain = dynamic_routing(u_hat, r, /*leaky=*/false);
        if (bitwise(graph.v, plain.v) && bitwise(graph.couplings, plain.couplings)) ++matched;
    }
    const double secs = seconds_since(t0);
    Outcome o;
    o.pass = matched == trials && secs < 10.0;
    o.detail = "identity-graph routing matches the dynamic baseline bitwise on " +
               std::to_string(matched) + "/" + std::to_string(trials) + " random instances in " +
               fmt("%.2f", secs) + "s (limit 10s)";
    return o;
}

// ---------------------------------------------------------------------------
// criterion 2: analytic gradients match central differences for every
// parameter block, under every routing variant the model can be built with.
Outcome criterion2() {
    const auto t0 = Clock::now();

    struct VariantSpec {
        std::string name;
        RoutingConfig rc;
    };
    std::vector<VariantSpec> variants;
    {
        RoutingConfig rc;
        rc.iterations = 2;
        rc.attention = false;
        rc.variant = RoutingVariant::dynamic;
        variants.push_back({"dynamic", rc});
        rc.variant = RoutingVariant::leaky;
        variants.push_back({"leaky", rc});
        rc.variant = RoutingVariant::gcn_only;
        variants.push_back({"gcn_only", rc});
        for (Metric m : {Metric::wd, Metric::ed, Metric::cs}) {
            for (NormMode norm : {NormMode::general, NormMode::classic, NormMode::identity}) {
                for (bool att : {true, false}) {
                    rc.variant = RoutingVariant::graph;
                    rc.metric = m;
                    rc.norm = norm;
                    rc.attention = att;
                    variants.push_back({std::string("graph/") + to_string(m) + "/" + to_string(norm) +
                                            (att ? "/att" : "/noatt"),
                                        rc});
                }
            }
        }
    }

    double worst = 0.0;
    std::string worst_at;
    std::vector<std::string> failing;
    for (const auto& spec : variants) {
        ModelConfig cfg;
        cfg.D = 8;
        cfg.K = 3;
        cfg.stride = 2;
        cfg.B1 = 4;
        cfg.B2 = 2;
        cfg.N_caps = 6;
        cfg.d = 8;
        cfg.L = 8;
        cfg.C = 3;
        cfg.seed = 42;
        cfg.routing = spec.rc;

        const std::size_t vocab_size = 24;
        CapsNet<double> model(cfg, vocab_size);
        Rng rng(cfg.seed ^ 0xD0C5ull);
        std::vector<int> ids;
        for (std::size_t i = 0; i < cfg.L; ++i)
            ids.push_back(2 + static_cast<int>(rng.below(vocab_size - 2)));
        const int label = static_cast<int>(rng.below(cfg.C));

        auto loss_fn = [&]() {
            auto fwd = model.forward_doc(ids);
            return model.doc_loss(fwd, label, LossKind::margin);
        };
        auto results = finite_diff_check<double>(loss_fn, model.params(), 1e-4);
        for (const auto& r : results) {
            if (r.max_rel_err > worst) {
                worst = r.max_rel_err;
                worst_at = spec.name + ":" + r.name;
            }
            if (r.max_rel_err > 1e-3) failing.push_back(spec.name + ":" + r.name);
        }
    }
    const double secs = seconds_since(t0);

    Outcome o;
    o.pass = failing.empty() && secs < 300.0;
    std::ostringstream d;
    d << "finite differences confirm every parameter block across " << variants.size()
      << " routing variants; worst rel err " << fmt("%.2e", worst) << " at " << worst_at << " (cap 1e-3), "
      << fmt("%.1f", secs) << "s (limit 300s)";
    if (!failing.empty()) {
        d << "; failing:";
        for (const auto& f : failing) d << " " << f;
    }
    o.detail = d.str();
    return o;
}

// ---------------------------------------------------------------------------
// criterion 3: structural invariants hold across ≥100 random trials each.
Outcome criterion3() {
    struct Property {
        std::string name;
        int trials = 0;
        int good = 0;
    };
    std::vector<Property> props;
    Rng rng(4303);

    { // squash keeps direction and lands strictly inside the unit ball
        Property p{"squash norm<1 and direction kept", 0, 0};
        for (int t = 0; t < 120; ++t) {
            const std::size_t d = 1 + rng.below(12);
            auto x = random_tensor<double>(rng, {1, d}, -4.0, 4.0);
            double nx = 0.0;
            for (double v : x.values()) nx += v * v;
            nx = std::sqrt(nx);
            if (nx < 1e-6) continue;
            auto y = squash_rows(x);
            double ny = 0.0, dot = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                ny += y.values()[k] * y.values()[k];
                dot += x.values()[k] * y.values()[k];
            }
            ny = std::sqrt(ny);
            ++p.trials;
            if (ny < 1.0 && dot / (nx * ny) > 1.0 - 1e-6) ++p.good;
        }
        props.push_back(p);
    }

    { // coupling rows are distributions, with the orphan slot when leaky
        Property p{"coupling rows sum to 1 (leaky incl.)", 0, 0};
        for (int t = 0; t < 120; ++t) {
            const std::size_t C = 1 + rng.below(4);
            const std::size_t n = 1 + rng.below(6);
            const std::size_t d = 1 + rng.below(8);
            const int r = 1 + static_cast<int>(rng.below(3));
            const bool leaky = (t % 2) == 0;
            std::vector<Tensor<double>> u_hat;
            for (std::size_t j = 0; j < C; ++j)
                u_hat.push_back(random_tensor<double>(rng, {n, d}, -2.0, 2.0));
            auto res = dynamic_routing(u_hat, r, leaky);
            bool ok = res.couplings.dim(1) == C + (leaky ? 1 : 0);
            for (std::size_t i = 0; ok && i < n; ++i) {
                double row = 0.0;
                for (std::size_t j = 0; j < res.couplings.dim(1); ++j) row += res.couplings.at(i, j);
                ok = std::abs(row - 1.0) < 1e-9;
            }
            ++p.trials;
            if (ok) ++p.good;
        }
        props.push_back(p);
    }

    { // attention weights are a distribution over parents for every child
        Property p{"attention rows sum to 1", 0, 0};
        for (int t = 0; t < 120; ++t) {
            const std::size_t C = 1 + rng.below(4);
            const std::size_t n = 1 + rng.below(6);
            const std::size_t d = 1 + rng.below(8);
            std::vector<Tensor<double>> h;
            for (std::size_t j = 0; j < C; ++j) h.push_back(random_tensor<double>(rng, {n, d}, -2.0, 2.0));
            auto w = random_tensor<double>(rng, {d, 1}, -1.0, 1.0);
            auto b = random_tensor<double>(rng, {1, 1}, -0.5, 0.5);
            Tensor<double> alpha;
            auto o = attention_gate(h, w, b, &alpha);
            bool ok = alpha.dim(0) == n && alpha.dim(1) == C && o.size() == C;
            for (std::size_t i = 0; ok && i < n; ++i) {
                double row = 0.0;
                for (std::size_t j = 0; j < C; ++j) row += alpha.at(i, j);
                ok = std::abs(row - 1.0) < 1e-9;
            }
            ++p.trials;
            if (ok) ++p.good;
        }
        props.push_back(p);
    }

    { // adjacency is symmetric, zero on the diagonal, nonpositive elsewhere
        Property p{"adjacency symmetric/zero-diag/nonpositive", 0, 0};
        for (int t = 0; t < 120; ++t) {
            const Metric m = std::vector<Metric>{Metric::wd, Metric::ed, Metric::cs}[t % 3];
            const std::size_t n = 2 + rng.below(7);
            const std::size_t d = 1 + rng.below(10);
            auto caps = random_tensor<double>(rng, {n, d}, -2.0, 2.0);
            auto A = pairwise_adjacency(caps, m);
            bool ok = true;
            for (std::size_t i = 0; ok && i < n; ++i) {
                ok = A.at(i, i) == 0.0;
                for (std::size_t j = 0; ok && j < n; ++j)
                    ok = A.at(i, j) <= 0.0 && A.at(i, j) == A.at(j, i);
            }
            ++p.trials;
            if (ok) ++p.good;
        }
        props.push_back(p);
    }

    { // softmax-plus-self-loop normalization: every row carries mass 2
        Property p{"normalized adjacency rows sum to 2", 0, 0};
        for (int t = 0; t < 120; ++t) {
            const Metric m = std::vector<Metric>{Metric::wd, Metric::ed, Metric::cs}[t % 3];
            const std::size_t n = 2 + rng.below(7);
            const std::size_t d = 1 + rng.below(10);
            auto caps = random_tensor<double>(rng, {n, d}, -2.0, 2.0);
            auto At = normalize_general(pairwise_adjacency(caps, m));
            bool ok = true;
            for (std::size_t i = 0; ok && i < n; ++i) {
                double row = 0.0;
                for (std::size_t j = 0; j < n; ++j) row += At.at(i, j);
                ok = std::abs(row - 2.0) < 1e-6;
            }
            ++p.trials;
            if (ok) ++p.good;
        }
        props.push_back(p);
    }

    { // relabeling capsules relabels the adjacency the same way
        Property p{"adjacency permutation equivariance", 0, 0};
        for (int t = 0; t < 120; ++t) {
            const Metric m = std::vector<Metric>{Metric::wd, Metric::ed, Metric::cs}[t % 3];
            const std::size_t n = 2 + rng.below(6);
            const std::size_t d = 1 + rng.below(8);
            auto caps = random_tensor<double>(rng, {n, d}, -2.0, 2.0);
            std::vector<std::size_t> perm(n);
            for (std::size_t i = 0; i < n; ++i) perm[i] = i;
            rng.shuffle(perm);
            Tensor<double> permuted = Tensor<double>::zeros({n, d});
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < d; ++k)
                    permuted.values_mut()[i * d + k] = caps.at(perm[i], k);
            auto A = pairwise_adjacency(caps, m);
            auto Ap = pairwise_adjacency(permuted, m);
            bool ok = true;
            for (std::size_t i = 0; ok && i < n; ++i)
                for (std::size_t j = 0; ok && j < n; ++j)
                    ok = Ap.at(i, j) == A.at(perm[i], perm[j]);
            ++p.trials;
            if (ok) ++p.good;
        }
        props.push_back(p);
    }

    { // permuting the child capsules leaves the routed parents unchanged
        Property p{"routing permutation equivariance", 0, 0};
        for (int t = 0; t < 110; ++t) {
            const std::size_t C = 1 + rng.below(3);
            const std::size_t n = 2 + rng.below(5);
            const std::size_t d = 2 + rng.below(5);
            auto u = random_tensor<double>(rng, {n, d}, -1.5, 1.5);
            std::vector<Tensor<double>> u_hat;
            for (std::size_t j = 0; j < C; ++j)
                u_hat.push_back(random_tensor<double>(rng, {n, d}, -1.5, 1.5));
            auto W = random_tensor<double>(rng, {d, d}, -0.7, 0.7);
            auto aw = random_tensor<double>(rng, {d, 1}, -0.7, 0.7);
            auto ab = random_tensor<double>(rng, {1, 1}, -0.3, 0.3);

            std::vector<std::size_t> perm(n);
            for (std::size_t i = 0; i < n; ++i) perm[i] = i;
            rng.shuffle(perm);
            Tensor<double> up = Tensor<double>::zeros({n, d});
            std::vector<Tensor<double>> u_hat_p;
            for (std::size_t j = 0; j < C; ++j) u_hat_p.push_back(Tensor<double>::zeros({n, d}));
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t k = 0; k < d; ++k) {
                    up.values_mut()[i * d + k] = u.at(perm[i], k);
                    for (std::size_t j = 0; j < C; ++j)
                        u_hat_p[j].values_mut()[i * d + k] = u_hat[j].at(perm[i], k);
                }

            RoutingConfig cfg;
            cfg.variant = RoutingVariant::graph;
            cfg.metric = Metric::ed;
            cfg.norm = NormMode::general;
            cfg.attention = true;
            cfg.iterations = 2;
            auto a = graph_routing(u_hat, u, cfg, W, &aw, &ab);
            auto b = graph_routing(u_hat_p, up, cfg, W, &aw, &ab);
            bool ok = true;
            for (std::size_t i = 0; ok && i < a.v.numel(); ++i)
                ok = std::abs(a.v.values()[i] - b.v.values()[i]) < 1e-9;
            ++p.trials;
            if (ok) ++p.good;
        }
        props.push_back(p);
    }

    { // the same seed builds the same model: forwards agree bitwise
        Property p{"determinism under a fixed seed", 0, 0};
        ModelConfig cfg;
        cfg.D = 8;
        cfg.K = 3;
        cfg.stride = 2;
        cfg.B1 = 4;
        cfg.B2 = 2;
        cfg.N_caps = 6;
        cfg.d = 8;
        cfg.L = 8;
        cfg.C = 3;
        cfg.seed = 99;
        CapsNet<float> m1(cfg, 30), m2(cfg, 30);
        for (int t = 0; t < 120; ++t) {
            std::vector<int> ids;
            for (std::size_t i = 0; i < cfg.L; ++i) ids.push_back(static_cast<int>(rng.below(30)));
            auto f1 = m1.forward_doc(ids);
            auto f2 = m2.forward_doc(ids);
            ++p.trials;
            if (bitwise(f1.probs, f2.probs) && f1.prediction == f2.prediction) ++p.good;
        }
        props.push_back(p);
    }

    Outcome o;
    o.pass = true;
    std::ostringstream d;
    d << props.size() << " invariant families, each over 100+ random trials:";
    for (const auto& p : props) {
        const bool ok = p.trials >= 100 && p.good == p.trials;
        o.pass = o.pass && ok;
        d << " [" << p.name << " " << p.good << "/" << p.trials << (ok ? "" : " FAIL") << "]";
    }
    o.detail = d.str();
    return o;
}

// ---------------------------------------------------------------------------
// shared state: the desk-scale training run that criteria 4-8 examine
struct TrainedState {
    bool ready = false;
    ModelConfig mcfg;
    TrainConfig tcfg;
    Vocab vocab{Vocab::from_tokens({"<pad>", "<unk>"})};
    LabelMap labels;
    std::vector<Document> train_docs, test_docs;
    std::unique_ptr<CapsNet<float>> model;
    double untrained_accuracy = 0.0;
    double best_accuracy = 0.0;
    std::size_t epochs_used = 0;
};

// criterion 4: the flagship configuration (graph routing, WD affinities,
// attention on) actually learns a planted-keyword task at desk scale, and an
// untrained model sits at chance.
Outcome criterion4(TrainedState& st) {
    const auto t0 = Clock::now();
    auto corpus = make_keyword_corpus(1234, /*train_per_class=*/500, /*test_per_class=*/125);

    std::vector<std::string> texts;
    for (const auto& ex : corpus.train) texts.push_back(ex.text);
    st.vocab = Vocab::build(texts, /*min_count=*/1, /*max_size=*/30000);

    st.mcfg.D = 300;
    st.mcfg.K = 3;
    st.mcfg.stride = 2;
    st.mcfg.B1 = 64;
    st.mcfg.B2 = 64;
    st.mcfg.N_caps = 10;
    st.mcfg.d = 16;
    st.mcfg.L = 16;
    st.mcfg.C = 0;
    st.mcfg.seed = 1234;
    st.mcfg.routing.variant = RoutingVariant::graph;
    st.mcfg.routing.metric = Metric::wd;
    st.mcfg.routing.norm = NormMode::general;
    st.mcfg.routing.attention = true;
    st.mcfg.routing.iterations = 3;

    st.train_docs = encode_dataset(corpus.train, st.vocab, st.labels, st.mcfg.L, /*grow_labels=*/true);
    st.test_docs = encode_dataset(corpus.test, st.vocab, st.labels, st.mcfg.L, /*grow_labels=*/false);
    st.mcfg.C = st.labels.size();

    st.tcfg.lr = 5e-5;
    st.tcfg.batch = 32;
    st.tcfg.epochs = 10;
    st.tcfg.loss = LossKind::margin;

    st.model = std::make_unique<CapsNet<float>>(st.mcfg, st.vocab.size());
    st.untrained_accuracy = evaluate(*st.model, st.test_docs, st.tcfg.loss).accuracy;

    // train the full schedule: the target must fall within it, and the later
    // criteria inspect the fully trained model
    Adam<float> opt(st.model->params(), st.tcfg.lr);
    std::size_t first_at_target = 0;
    double final_accuracy = 0.0;
    for (std::size_t epoch = 0; epoch < st.tcfg.epochs; ++epoch) {
        train_epoch(*st.model, opt, st.train_docs, st.tcfg, epoch);
        final_accuracy = evaluate(*st.model, st.test_docs, st.tcfg.loss).accuracy;
        st.epochs_used = epoch + 1;
        if (final_accuracy > st.best_accuracy) st.best_accuracy = final_accuracy;
        if (first_at_target == 0 && final_accuracy >= 0.95) first_at_target = epoch + 1;
    }
    st.ready = true;
    const double secs = seconds_since(t0);

    const bool chance_ok = st.untrained_accuracy >= 0.15 && st.untrained_accuracy <= 0.35;
    Outcome o;
    o.pass = st.vocab.size() <= 300 && st.train_docs.size() == 2000 && st.test_docs.size() == 500 &&
             chance_ok && st.best_accuracy >= 0.95 && secs < 600.0;
    std::ostringstream d;
    d << "keyword corpus 2000/500, vocab " << st.vocab.size() << " (cap 300): untrained accuracy "
      << fmt("%.3f", st.untrained_accuracy) << " (band 0.15-0.35), hit 0.95 at epoch "
      << first_at_target << "/10, final " << fmt("%.3f", final_accuracy) << ", " << fmt("%.1f", secs)
      << "s (limit 600s)";
    o.detail = d.str();
    return o;
}

// criterion 5: on the trained model, routed-feature consistency clears both
// earlier layers by a wide margin.
Outcome criterion5(TrainedState& st) {
    Outcome o;
    if (!st.ready) {
        o.detail = "skipped: the training run in criterion 4 did not produce a model";
        return o;
    }
    auto rep = semantic_consistency(*st.model, st.test_docs);
    o.pass = rep.rl >= rep.ncl + 20.0 && rep.rl >= rep.pcl + 20.0;
    o.detail = "layer consistency NCL " + fmt("%.2f", rep.ncl) + "%, PCL " + fmt("%.2f", rep.pcl) +
               "%, routed " + fmt("%.2f", rep.rl) + "% (routed must clear both by 20 points)";
    return o;
}

// criterion 6: the ablation harness produces its full seven-row table on the
// same corpus, and the adjacency-off cells measurably aggregate nothing.
Outcome criterion6(TrainedState& st) {
    Outcome o;
    if (!st.ready) {
        o.detail = "skipped: the training run in criterion 4 did not produce a model";
        return o;
    }
    TrainConfig tcfg = st.tcfg;
    tcfg.epochs = 5; // past the early plateau, so the reported ordering means something
    auto rows = run_ablation<float>(st.mcfg, tcfg, st.train_docs, st.test_docs, st.vocab.size(),
                                    default_ablation_grid());

    bool all_ok = rows.size() == 7;
    bool identity_confirmed = false;
    for (const auto& row : rows) {
        all_ok = all_ok && row.ok;
        if (row.cell.norm == NormMode::identity)
            identity_confirmed = row.has_mechanism && row.mechanism == 0.0;
        std::ostringstream n;
        n << to_string(row.cell.metric) << "/" << to_string(row.cell.norm) << ": accuracy "
          << fmt("%.3f", row.accuracy) << ", displacement "
          << (row.has_mechanism ? fmt("%.6f", row.mechanism) : std::string("-"));
        o.notes.push_back(n.str());
    }
    o.pass = all_ok && identity_confirmed;
    o.detail = std::to_string(rows.size()) +
               "/7 sweep cells completed; adjacency-off aggregation displacement is exactly 0 "
               "(accuracy ordering reported below, not asserted)";
    return o;
}

// criterion 7: a checkpoint round trip reproduces evaluation results and
// per-document class probabilities bitwise.
Outcome criterion7(TrainedState& st) {
    Outcome o;
    if (!st.ready) {
        o.detail = "skipped: the training run in criterion 4 did not produce a model";
        return o;
    }
    const std::string path = "acceptance_roundtrip.ckpt";
    save_checkpoint(path, st.mcfg, st.tcfg, st.labels, st.vocab, st.model->params());
    auto ckpt = load_checkpoint(path);
    CapsNet<float> restored(ckpt.model, ckpt.vocab().size());
    restore_params(ckpt, restored.params());
    std::remove(path.c_str());

    auto base = evaluate(*st.model, st.test_docs, st.tcfg.loss);
    auto loaded = evaluate(restored, st.test_docs, st.tcfg.loss);
    bool probs_equal = true;
    for (const auto& doc : st.test_docs) {
        auto fa = st.model->forward_doc(doc.tokens);
        auto fb = restored.forward_doc(doc.tokens);
        probs_equal = probs_equal && bitwise(fa.probs, fb.probs) && fa.prediction == fb.prediction;
        if (!probs_equal) break;
    }
    o.pass = base.accuracy == loaded.accuracy && base.mean_loss == loaded.mean_loss && probs_equal;
    o.detail = "save/load/evaluate reproduces accuracy (" + fmt("%.3f", loaded.accuracy) +
               "), mean loss, and all " + std::to_string(st.test_docs.size()) +
               " per-document probability vectors bitwise";
    return o;
}

// criterion 8: untrained models sit at chance on balanced 4-class data for
// several seeds, so the learning signal in criterion 4 is real.
Outcome criterion8(TrainedState& st) {
    Outcome o;
    if (!st.ready) {
        o.detail = "skipped: the training run in criterion 4 did not produce a model";
        return o;
    }
    std::ostringstream d;
    d << "untrained accuracy per seed:";
    bool all_in_band = true;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        ModelConfig cfg = st.mcfg;
        cfg.seed = seed;
        CapsNet<float> model(cfg, st.vocab.size());
        const double acc = evaluate(model, st.test_docs, st.tcfg.loss).accuracy;
        all_in_band = all_in_band && acc >= 0.15 && acc <= 0.35;
        d << " " << fmt("%.3f", acc);
    }
    d << " (band 0.25±0.10)";
    o.pass = all_in_band;
    o.detail = d.str();
    return o;
}

} // namespace

int main() {
    TrainedState st;
    std::vector<std::pair<int, std::function<Outcome()>>> criteria = {
        {1, [&] { return criterion1(); }}, {2, [&] { return criterion2(); }},
        {3, [&] { return criterion3(); }}, {4, [&] { return criterion4(st); }},
        {5, [&] { return criterion5(st); }}, {6, [&] { return criterion6(st); }},
        {7, [&] { return criterion7(st); }}, {8, [&] { return criterion8(st); }},
    };

    int failures = 0;
    for (auto& [id, fn] : criteria) {
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("unexpected exception: ") + e.what();
        }
        if (!o.pass) ++failures;
        std::printf("[%s] criterion %d: %s\n", o.pass ? "PASS" : "FAIL", id, o.detail.c_str());
        for (const auto& note : o.notes) std::printf("    %s\n", note.c_str());
        std::fflush(stdout);
    }
    std::printf("acceptance: %d/8 criteria passed\n", 8 - failures);
    return failures == 0 ? 0 : 1;
}

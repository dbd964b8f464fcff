#pragma once

#include <vector>

#include "capsroute/adjacency.hpp"
#include "capsroute/config.hpp"
#include "capsroute/tensor.hpp"

namespace capsroute {

/// One graph-convolution step per parent class: H_j = Ã·Û_j·W_g, mixing each
/// child's prediction with its graph neighbors' before routing.
template <class S>
std::vector<Tensor<S>> gcn_aggregate(const std::vector<Tensor<S>>& u_hat, const Tensor<S>& A_tilde,
                                     const Tensor<S>& W_g) {
    std::vector<Tensor<S>> h;
    h.reserve(u_hat.size());
    for (const auto& slab : u_hat) {
        h.push_back(matmul(matmul(A_tilde, slab), W_g));
    }
    return h;
}

/// Top-down gate: score every aggregated vector with a shared tanh
/// feed-forward (d→1), softmax the scores over the parent axis per child,
/// and scale each vector by its weight. alpha_out (N×C) receives the
/// weights when non-null.
template <class S>
std::vector<Tensor<S>> attention_gate(const std::vector<Tensor<S>>& h, const Tensor<S>& att_w,
                                      const Tensor<S>& att_b, Tensor<S>* alpha_out = nullptr) {
    std::vector<Tensor<S>> score_cols;
    score_cols.reserve(h.size());
    for (const auto& slab : h) {
        score_cols.push_back(tanh(add_rowvec(matmul(slab, att_w), att_b))); // N×1
    }
    Tensor<S> alpha = softmax(concat_cols(score_cols), 1);
    if (alpha_out) *alpha_out = alpha;
    std::vector<Tensor<S>> o;
    o.reserve(h.size());
    for (std::size_t j = 0; j < h.size(); ++j) {
        o.push_back(scale_rows(h[j], slice_col(alpha, j)));
    }
    return o;
}

/// Value snapshot of one agreement iteration, for trace dumps and the
/// monotonicity check. Logits/couplings are row-major N×C (couplings carry
/// one extra trailing column when leaky).
struct RoutingIterRecord {
    std::vector<double> logits;
    std::vector<double> couplings;
    std::vector<double> parent_norms;
};

template <class S>
struct RoutingResult {
    Tensor<S> v;                      // C×d parent capsules
    Tensor<S> couplings;              // final c (N×C, or N×(C+1) with leak column)
    std::vector<Tensor<S>> features;  // the per-parent N×d slabs the couplings weighted
    Tensor<S> alpha;                  // attention weights; valid() only when attention ran
    std::vector<RoutingIterRecord> trace;
};

/// Routing by agreement over precomputed per-parent feature slabs.
/// Each iteration: c = softmax(e) over parents (with a fixed zero leak logit
/// appended when leaky, its mass discarded), s_j = Σ_i c_ij·f_{j|i},
/// v_j = squash(s_j), e_ij += û_{j|i}·v_j. For dynamic routing the features
/// are û itself; graph routing feeds the attention-gated GCN output while the
/// agreement update still scores against û.
template <class S>
RoutingResult<S> agreement_loop(const std::vector<Tensor<S>>& features,
                                const std::vector<Tensor<S>>& u_hat, int iterations, bool leaky,
                                bool want_trace = false) {
    if (features.empty() || features.size() != u_hat.size()) {
        throw ShapeError("agreement loop: feature/prediction slab counts disagree");
    }
    const std::size_t C = features.size();
    const std::size_t N = features[0].dim(0);
    if (iterations < 1) throw ContractError("agreement loop: iterations must be at least 1");

    Tensor<S> e = Tensor<S>::zeros({N, C});
    Tensor<S> leak_col = Tensor<S>::zeros({N, 1});
    Tensor<S> ones_row = Tensor<S>::from({1, N}, std::vector<S>(N, S(1)));

    RoutingResult<S> res;
    res.features = features;
    for (int t = 0; t < iterations; ++t) {
        Tensor<S> c;
        if (leaky) {
            std::vector<Tensor<S>> cols;
            cols.reserve(C + 1);
            for (std::size_t j = 0; j < C; ++j) cols.push_back(slice_col(e, j));
            cols.push_back(leak_col);
            c = softmax(concat_cols(cols), 1); // N×(C+1); leak mass dropped below
        } else {
            c = softmax(e, 1);
        }

        std::vector<Tensor<S>> s_rows;
        s_rows.reserve(C);
        for (std::size_t j = 0; j < C; ++j) {
            s_rows.push_back(matmul(ones_row, scale_rows(features[j], slice_col(c, j)))); // 1×d
        }
        Tensor<S> v = squash_rows(concat_rows(s_rows));

        if (want_trace) {
            RoutingIterRecord rec;
            rec.logits.assign(e.values().begin(), e.values().end());
            rec.couplings.assign(c.values().begin(), c.values().end());
            Tensor<S> norms = row_norms(v);
            rec.parent_norms.assign(norms.values().begin(), norms.values().end());
            res.trace.push_back(std::move(rec));
        }

        Tensor<S> vt = transpose(v);
        std::vector<Tensor<S>> delta_cols;
        delta_cols.reserve(C);
        for (std::size_t j = 0; j < C; ++j) {
            delta_cols.push_back(matmul(u_hat[j], slice_col(vt, j))); // N×1 agreement scores
        }
        e = add(e, concat_cols(delta_cols));

        res.v = v;
        res.couplings = c;
    }
    return res;
}

/// Classic agreement baseline (and its leaky variant): route the prediction
/// vectors directly.
template <class S>
RoutingResult<S> dynamic_routing(const std::vector<Tensor<S>>& u_hat, int iterations, bool leaky,
                                 bool want_trace = false) {
    return agreement_loop(u_hat, u_hat, iterations, leaky, want_trace);
}

/// Full graph routing: adjacency from the child capsules, one GCN step,
/// optional attention gate, then agreement on the gated features.
template <class S>
RoutingResult<S> graph_routing(const std::vector<Tensor<S>>& u_hat, const Tensor<S>& u,
                               const RoutingConfig& cfg, const Tensor<S>& W_g,
                               const Tensor<S>* att_w = nullptr, const Tensor<S>* att_b = nullptr,
                               bool want_trace = false) {
    Tensor<S> A_tilde = normalized_adjacency(u, cfg.norm, cfg.metric, cfg.wd_mode);
    std::vector<Tensor<S>> h = gcn_aggregate(u_hat, A_tilde, W_g);
    Tensor<S> alpha;
    std::vector<Tensor<S>> o;
    if (cfg.attention) {
        if (!att_w || !att_b) throw ContractError("graph routing: attention enabled without its weights");
        o = attention_gate(h, *att_w, *att_b, &alpha);
    } else {
        o = h;
    }
    RoutingResult<S> res = agreement_loop(o, u_hat, cfg.iterations, /*leaky=*/false, want_trace);
    res.alpha = alpha;
    return res;
}

/// GCN-only baseline: aggregate under the general normalization and average
/// the children per parent; no agreement iterations, so the couplings are
/// uniform by construction.
template <class S>
RoutingResult<S> gcn_only(const std::vector<Tensor<S>>& u_hat, const Tensor<S>& u, Metric metric,
                          WdMode wd_mode, const Tensor<S>& W_g) {
    Tensor<S> A_tilde = normalize_general(pairwise_adjacency(u, metric, wd_mode));
    std::vector<Tensor<S>> h = gcn_aggregate(u_hat, A_tilde, W_g);
    std::vector<Tensor<S>> s_rows;
    s_rows.reserve(h.size());
    for (const auto& slab : h) s_rows.push_back(mean_rows(slab));
    RoutingResult<S> res;
    res.v = squash_rows(concat_rows(s_rows));
    const std::size_t N = u.dim(0), C = u_hat.size();
    res.couplings = Tensor<S>::from({N, C}, std::vector<S>(N * C, static_cast<S>(1.0 / static_cast<double>(C))));
    res.features = h;
    return res;
}

} // namespace capsroute

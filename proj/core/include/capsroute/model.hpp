#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "capsroute/capsule.hpp"
#include "capsroute/config.hpp"
#include "capsroute/param.hpp"
#include "capsroute/routing.hpp"

namespace capsroute {

/// The assembled classifier: embedding → n-gram conv → primary capsules →
/// compression → per-class transform → routing → class scores.
///
/// Parameter registration order is fixed and shared with the checkpoint
/// format. The pad row of the embedding is zeroed at init and never receives
/// gradient, so padded positions stay inert.
template <class S>
class CapsNet {
public:
    CapsNet(const ModelConfig& cfg, std::size_t vocab_size) : cfg_(cfg), vocab_size_(vocab_size) {
        cfg_.validate();
        if (cfg_.C < 2) throw ConfigError("model: class count must be at least 2 (got " +
                                          std::to_string(cfg_.C) + ")");
        if (vocab_size_ < 2) throw ConfigError("model: vocab must hold at least pad and unk");
        conv_len_ = conv_output_length(cfg_.L, cfg_.K, cfg_.stride);

        // Weight matrices use fan-balanced uniform init so capsule norms start
        // in the responsive range of squash; biases start at zero. The
        // embedding table uses a small fixed range.
        Rng rng(cfg_.seed);
        auto glorot = [&](const std::string& name, Shape shape) {
            const double limit = std::sqrt(6.0 / (static_cast<double>(shape[0]) + static_cast<double>(shape[1])));
            return params_.create(name, std::move(shape), rng, -limit, limit);
        };
        embedding_ = params_.create("embedding", {vocab_size_, cfg_.D}, rng);
        for (std::size_t j = 0; j < cfg_.D; ++j) embedding_.values_mut()[j] = S(0); // pad row
        ncl_W_ = glorot("ncl.W", {cfg_.K * cfg_.D, cfg_.B1});
        ncl_b_ = params_.create_zeros("ncl.b", {cfg_.B1});
        pcl_W_ = glorot("pcl.W", {cfg_.B1, cfg_.B2 * cfg_.d});
        pcl_b_ = params_.create_zeros("pcl.b", {cfg_.B2 * cfg_.d});
        compress_ = glorot("compress.w", {cfg_.N_caps, conv_len_ * cfg_.B2});
        for (std::size_t j = 0; j < cfg_.C; ++j) {
            trans_W_.push_back(glorot("transform.W." + std::to_string(j), {cfg_.d, cfg_.d}));
            trans_b_.push_back(params_.create_zeros("transform.b." + std::to_string(j), {1, cfg_.d}));
        }
        if (cfg_.routing.uses_gcn()) {
            gcn_W_ = glorot("routing.gcn.W", {cfg_.d, cfg_.d});
        }
        if (cfg_.routing.uses_attention()) {
            att_w_ = glorot("routing.att.w", {cfg_.d, 1});
            att_b_ = params_.create_zeros("routing.att.b", {1});
        }
    }

    const ModelConfig& config() const { return cfg_; }
    std::size_t vocab_size() const { return vocab_size_; }
    std::size_t conv_len() const { return conv_len_; }
    ParamStore<S>& params() { return params_; }
    const ParamStore<S>& params() const { return params_; }

    Tensor<S>& gcn_weight() {
        if (!gcn_W_.valid()) throw ContractError("model has no GCN weight under variant " +
                                                 to_string(cfg_.routing.variant));
        return gcn_W_;
    }

    struct DocForward {
        Tensor<S> g;        // conv features, L'×B1
        Tensor<S> pcl_pre;  // primary capsules before squash, (L'·B2)×d
        Tensor<S> p;        // squashed primary capsules
        Tensor<S> u;        // compressed child capsules, N×d
        std::vector<Tensor<S>> u_hat; // per-class prediction slabs
        RoutingResult<S> routing;
        Tensor<S> probs;    // ‖v_j‖ per class
        int prediction = 0;
    };

    DocForward forward_doc(const std::vector<int>& token_ids, bool want_trace = false) {
        if (token_ids.size() != cfg_.L) {
            throw ShapeError("forward: document has " + std::to_string(token_ids.size()) +
                             " tokens, model expects padded length " + std::to_string(cfg_.L));
        }
        DocForward f;
        Tensor<S> x = embedding_lookup(embedding_, token_ids);
        f.g = ngram_conv(x, ncl_W_, ncl_b_, cfg_.K, cfg_.stride);
        f.pcl_pre = primary_capsules_pre(f.g, pcl_W_, pcl_b_, cfg_.d);
        f.p = squash_rows(f.pcl_pre);
        f.u = compress(compress_, f.p);
        f.u_hat = transform(f.u, trans_W_, trans_b_);

        switch (cfg_.routing.variant) {
            case RoutingVariant::dynamic:
                f.routing = dynamic_routing(f.u_hat, cfg_.routing.iterations, false, want_trace);
                break;
            case RoutingVariant::leaky:
                f.routing = dynamic_routing(f.u_hat, cfg_.routing.iterations, true, want_trace);
                break;
            case RoutingVariant::gcn_only:
                f.routing = gcn_only(f.u_hat, f.u, cfg_.routing.metric, cfg_.routing.wd_mode, gcn_W_);
                break;
            case RoutingVariant::graph:
                f.routing = graph_routing(f.u_hat, f.u, cfg_.routing, gcn_W_,
                                          att_w_.valid() ? &att_w_ : nullptr,
                                          att_b_.valid() ? &att_b_ : nullptr, want_trace);
                break;
        }
        f.probs = class_probs(f.routing.v);
        f.prediction = predict_class(f.probs);
        return f;
    }

    Tensor<S> doc_loss(const DocForward& f, int label, LossKind kind) {
        return kind == LossKind::margin ? margin_loss(f.probs, label)
                                        : cross_entropy_loss(f.probs, label);
    }

private:
    ModelConfig cfg_;
    std::size_t vocab_size_;
    std::size_t conv_len_ = 0;
    ParamStore<S> params_;
    Tensor<S> embedding_, ncl_W_, ncl_b_, pcl_W_, pcl_b_, compress_;
    std::vector<Tensor<S>> trans_W_, trans_b_;
    Tensor<S> gcn_W_, att_w_, att_b_;
};

} // namespace capsroute

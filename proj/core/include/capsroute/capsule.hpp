#pragma once

#include <vector>

#include "capsroute/tensor.hpp"

namespace capsroute {

/// squash for a single vector; rows of a matrix go through squash_rows.
template <class S>
Tensor<S> squash(const Tensor<S>& s) {
    if (s.ndim() != 1) throw ShapeError("squash: expected a 1-d vector, got " + shape_str(s.shape()));
    const std::size_t n = s.dim(0);
    return reshape(squash_rows(reshape(s, {1, n})), {n});
}

/// N-gram convolution as unfold + matmul: windows of K embedding rows (stride
/// s) flattened and projected through W_a ((K·D)×B1), bias b_1, relu.
/// Output is L'×B1 with L' = floor((L−K)/s)+1.
template <class S>
Tensor<S> ngram_conv(const Tensor<S>& x, const Tensor<S>& W_a, const Tensor<S>& b_1,
                     std::size_t window, std::size_t stride) {
    return relu(add_rowvec(matmul(im2col(x, window, stride), W_a), b_1));
}

/// Linear part of the primary-capsule layer: project each conv row through
/// W_b (B1×(B2·d)), add b_2, and reshape so every (position, filter) pair is
/// one d-dimensional capsule row. Callers squash_rows the result; the
/// pre-squash rows are also what the layer-consistency diagnostic reads.
template <class S>
Tensor<S> primary_capsules_pre(const Tensor<S>& g, const Tensor<S>& W_b, const Tensor<S>& b_2,
                               std::size_t d) {
    Tensor<S> lin = add_rowvec(matmul(g, W_b), b_2); // L'×(B2·d)
    const std::size_t rows = lin.dim(0) * (lin.dim(1) / d);
    if (lin.dim(1) % d != 0) {
        throw ShapeError("primary capsules: width " + std::to_string(lin.dim(1)) +
                         " is not a multiple of capsule dimension " + std::to_string(d));
    }
    return reshape(lin, {rows, d});
}

template <class S>
Tensor<S> primary_capsules(const Tensor<S>& g, const Tensor<S>& W_b, const Tensor<S>& b_2,
                           std::size_t d) {
    return squash_rows(primary_capsules_pre(g, W_b, b_2, d));
}

/// Capsule compression u = Wc·p: each output capsule is a learned weighted
/// sum of all primary capsules.
template <class S>
Tensor<S> compress(const Tensor<S>& compress_w, const Tensor<S>& p) {
    return matmul(compress_w, p);
}

/// Prediction vectors û_{j|i} = u_i·W_j + b_j, one N×d slab per parent class.
/// W_j is stored in right-multiply orientation.
template <class S>
std::vector<Tensor<S>> transform(const Tensor<S>& u, const std::vector<Tensor<S>>& W_trans,
                                 const std::vector<Tensor<S>>& b_trans) {
    if (W_trans.size() != b_trans.size()) {
        throw ShapeError("transform: weight/bias class counts disagree");
    }
    std::vector<Tensor<S>> u_hat;
    u_hat.reserve(W_trans.size());
    for (std::size_t j = 0; j < W_trans.size(); ++j) {
        u_hat.push_back(add_rowvec(matmul(u, W_trans[j]), b_trans[j]));
    }
    return u_hat;
}

/// Class scores p̂_k = ‖v_k‖ over the final parent capsules.
template <class S>
Tensor<S> class_probs(const Tensor<S>& v) {
    return row_norms(v);
}

/// Argmax with ties to the lowest index.
template <class S>
int predict_class(const Tensor<S>& probs) {
    int best = 0;
    for (std::size_t k = 1; k < probs.numel(); ++k) {
        if (probs.values()[k] > probs.values()[best]) best = static_cast<int>(k);
    }
    return best;
}

/// Margin loss: Σ_k T_k·max(0, m⁺−p̂_k)² + λ·(1−T_k)·max(0, p̂_k−m⁻)².
template <class S>
Tensor<S> margin_loss(const Tensor<S>& probs, int label,
                      double m_pos = 0.9, double m_neg = 0.1, double lambda = 0.5) {
    const std::size_t C = probs.numel();
    if (label < 0 || static_cast<std::size_t>(label) >= C) {
        throw ShapeError("margin loss: label " + std::to_string(label) + " out of range for " +
                         std::to_string(C) + " classes");
    }
    Tensor<S> on = Tensor<S>::zeros({C});
    Tensor<S> off = Tensor<S>::zeros({C});
    for (std::size_t k = 0; k < C; ++k) {
        const bool hit = static_cast<int>(k) == label;
        on.values_mut()[k] = hit ? S(1) : S(0);
        off.values_mut()[k] = hit ? S(0) : S(1);
    }
    Tensor<S> pos = relu(affine(probs, -1.0, m_pos));
    Tensor<S> neg = relu(affine(probs, 1.0, -m_neg));
    Tensor<S> pos_term = sum(mul(on, mul(pos, pos)));
    Tensor<S> neg_term = sum(mul(off, mul(neg, neg)));
    return add(pos_term, affine(neg_term, lambda, 0.0));
}

/// Cross-entropy over softmaxed class scores, the configurable alternative
/// objective.
template <class S>
Tensor<S> cross_entropy_loss(const Tensor<S>& probs, int label) {
    const std::size_t C = probs.numel();
    if (label < 0 || static_cast<std::size_t>(label) >= C) {
        throw ShapeError("cross entropy: label " + std::to_string(label) + " out of range for " +
                         std::to_string(C) + " classes");
    }
    return affine(log(pick(softmax(probs, 0), static_cast<std::size_t>(label))), -1.0, 0.0);
}

} // namespace capsroute

#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "capsroute/config.hpp"
#include "capsroute/tensor.hpp"

namespace capsroute {

namespace detail {

// Ranks of each row's values in ascending order, for the sorted (1-d
// empirical) WD mode. Ties break by position, so the permutation is
// deterministic.
template <class S>
std::vector<std::size_t> ascending_order(const S* row, std::size_t d) {
    std::vector<std::size_t> idx(d);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [row](std::size_t a, std::size_t b) { return row[a] < row[b]; });
    return idx;
}

} // namespace detail

/// Pairwise capsule affinities as a nonpositive N×N matrix with zero
/// diagonal, symmetric by construction (each pair computed once, mirrored).
///
///   WD (dirac):  a_ij = −‖y_i−y_j‖₁      (L1 between the pose vectors)
///   WD (sorted): a_ij = −‖sort(y_i)−sort(y_j)‖₁   (1-d empirical transport)
///   ED:          a_ij = −‖y_i−y_j‖₂
///   CS:          a_ij = cos(y_i,y_j) − 1; rows with norm < 1e-9 count as
///                cosine 0 against everything (a = −1) and pass no gradient.
template <class S>
Tensor<S> pairwise_adjacency(const Tensor<S>& caps, Metric metric, WdMode wd_mode = WdMode::dirac) {
    detail::require_2d(caps, "pairwise_adjacency");
    const std::size_t n = caps.dim(0), d = caps.dim(1);
    Tensor<S> out = Tensor<S>::zeros({n, n}, detail::track<S>({caps.requires_grad()}));

    const S* y = caps.values().data();
    std::vector<std::vector<std::size_t>> order; // per-row sort permutation (sorted WD only)
    if (metric == Metric::wd && wd_mode == WdMode::sorted) {
        order.reserve(n);
        for (std::size_t i = 0; i < n; ++i) order.push_back(detail::ascending_order(y + i * d, d));
    }
    std::vector<double> norms; // row norms (CS only)
    if (metric == Metric::cs) {
        norms.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            double sq = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double v = static_cast<double>(y[i * d + k]);
                sq += v * v;
            }
            norms[i] = std::sqrt(sq);
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double a = 0.0;
            switch (metric) {
                case Metric::wd: {
                    double acc = 0.0;
                    if (wd_mode == WdMode::sorted) {
                        for (std::size_t k = 0; k < d; ++k)
                            acc += std::abs(static_cast<double>(y[i * d + order[i][k]]) -
                                            static_cast<double>(y[j * d + order[j][k]]));
                    } else {
                        for (std::size_t k = 0; k < d; ++k)
                            acc += std::abs(static_cast<double>(y[i * d + k]) -
                                            static_cast<double>(y[j * d + k]));
                    }
                    a = -acc;
                    break;
                }
                case Metric::ed: {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < d; ++k) {
                        const double diff = static_cast<double>(y[i * d + k]) - static_cast<double>(y[j * d + k]);
                        acc += diff * diff;
                    }
                    a = -std::sqrt(acc);
                    break;
                }
                case Metric::cs: {
                    if (norms[i] < 1e-9 || norms[j] < 1e-9) {
                        a = -1.0; // zero vector: cosine taken as 0
                    } else {
                        double dot = 0.0;
                        for (std::size_t k = 0; k < d; ++k)
                            dot += static_cast<double>(y[i * d + k]) * static_cast<double>(y[j * d + k]);
                        // Rounding can push the ratio past ±1 for (anti)colinear
                        // rows; clamp so affinities stay nonpositive.
                        a = std::clamp(dot / (norms[i] * norms[j]), -1.0, 1.0) - 1.0;
                    }
                    break;
                }
            }
            const S av = static_cast<S>(a);
            out.values_mut()[i * n + j] = av;
            out.values_mut()[j * n + i] = av;
        }
    }
    detail::check_finite(out, "pairwise_adjacency");

    if (out.requires_grad()) {
        detail::record<S>(out, [caps, out, metric, wd_mode, order, norms, n, d]() mutable {
            auto g = out.grad();
            auto gc = caps.grad();
            const S* yv = caps.values().data();
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t j = i + 1; j < n; ++j) {
                    // both mirrored entries feed the same pair
                    const double go = static_cast<double>(g[i * n + j]) + static_cast<double>(g[j * n + i]);
                    if (go == 0.0) continue;
                    switch (metric) {
                        case Metric::wd: {
                            for (std::size_t k = 0; k < d; ++k) {
                                const std::size_t ki = wd_mode == WdMode::sorted ? order[i][k] : k;
                                const std::size_t kj = wd_mode == WdMode::sorted ? order[j][k] : k;
                                const double diff = static_cast<double>(yv[i * d + ki]) -
                                                    static_cast<double>(yv[j * d + kj]);
                                const double sgn = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
                                gc[i * d + ki] += static_cast<S>(-go * sgn);
                                gc[j * d + kj] += static_cast<S>(go * sgn);
                            }
                            break;
                        }
                        case Metric::ed: {
                            double acc = 0.0;
                            for (std::size_t k = 0; k < d; ++k) {
                                const double diff = static_cast<double>(yv[i * d + k]) -
                                                    static_cast<double>(yv[j * d + k]);
                                acc += diff * diff;
                            }
                            const double dist = std::sqrt(acc);
                            if (dist < 1e-12) break; // coincident points: flat
                            for (std::size_t k = 0; k < d; ++k) {
                                const double diff = static_cast<double>(yv[i * d + k]) -
                                                    static_cast<double>(yv[j * d + k]);
                                gc[i * d + k] += static_cast<S>(-go * diff / dist);
                                gc[j * d + k] += static_cast<S>(go * diff / dist);
                            }
                            break;
                        }
                        case Metric::cs: {
                            if (norms[i] < 1e-9 || norms[j] < 1e-9) break; // locked at cosine 0
                            double dot = 0.0;
                            for (std::size_t k = 0; k < d; ++k)
                                dot += static_cast<double>(yv[i * d + k]) * static_cast<double>(yv[j * d + k]);
                            const double inv = 1.0 / (norms[i] * norms[j]);
                            const double cosv = dot * inv;
                            for (std::size_t k = 0; k < d; ++k) {
                                const double yi = static_cast<double>(yv[i * d + k]);
                                const double yj = static_cast<double>(yv[j * d + k]);
                                gc[i * d + k] += static_cast<S>(go * (yj * inv - cosv * yi / (norms[i] * norms[i])));
                                gc[j * d + k] += static_cast<S>(go * (yi * inv - cosv * yj / (norms[j] * norms[j])));
                            }
                            break;
                        }
                    }
                }
            }
        });
    }
    return out;
}

/// Ã = softmax(A) + I_N, the per-row normalization. Rows sum to 2; the
/// softmax part is row-stochastic.
template <class S>
Tensor<S> normalize_general(const Tensor<S>& A) {
    detail::require_2d(A, "normalize_general");
    return add(softmax(A, 1), Tensor<S>::identity(A.dim(0)));
}

/// Classic renormalization D̂^{−1/2}·M·D̂^{−1/2} built from the capsule set:
/// M's off-diagonal is exp(−distance) for ED/WD (elementwise exp of the
/// nonpositive adjacency) and the cosine for CS; both leave the diagonal at
/// 1, playing the role of A+I. M is a nonnegative similarity matrix by
/// contract, so negative cosines are clamped to zero; the diagonal 1 then
/// keeps every degree strictly positive.
template <class S>
Tensor<S> normalize_classic(const Tensor<S>& caps, Metric metric, WdMode wd_mode = WdMode::dirac) {
    Tensor<S> A = pairwise_adjacency(caps, metric, wd_mode);
    Tensor<S> M = metric == Metric::cs ? relu(affine(A, 1.0, 1.0)) : exp(A);
    Tensor<S> inv_sqrt_deg = rsqrt(row_sums(M));
    return scale_cols(scale_rows(M, inv_sqrt_deg), inv_sqrt_deg);
}

/// The "adjacency off" ablation: exactly I_N, no gradient participation.
template <class S>
Tensor<S> identity_adjacency(std::size_t n) {
    return Tensor<S>::identity(n);
}

/// Dispatch on the configured normalization mode.
template <class S>
Tensor<S> normalized_adjacency(const Tensor<S>& caps, NormMode mode, Metric metric,
                               WdMode wd_mode = WdMode::dirac) {
    switch (mode) {
        case NormMode::general: return normalize_general(pairwise_adjacency(caps, metric, wd_mode));
        case NormMode::classic: return normalize_classic(caps, metric, wd_mode);
        case NormMode::identity: return identity_adjacency<S>(caps.dim(0));
    }
    throw ContractError("unhandled normalization mode");
}

} // namespace capsroute

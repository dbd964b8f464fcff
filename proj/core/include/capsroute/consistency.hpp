#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "capsroute/model.hpp"
#include "capsroute/text.hpp"

namespace capsroute {

enum class LayerTag { ncl, pcl, rl };

inline std::string to_string(LayerTag t) {
    switch (t) {
        case LayerTag::ncl: return "NCL";
        case LayerTag::pcl: return "PCL";
        case LayerTag::rl: return "RL";
    }
    return "?";
}

struct ConsistencyReport {
    double ncl = 0.0; // percentages in [0, 100]
    double pcl = 0.0;
    double rl = 0.0;
};

namespace detail {

// Index of the v row nearest to `row` (Euclidean, ties to the lowest index).
inline int nearest_parent(const std::vector<double>& row, const std::vector<std::vector<double>>& v_rows) {
    int best = 0;
    double best_sq = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < v_rows.size(); ++k) {
        double sq = 0.0;
        for (std::size_t t = 0; t < row.size(); ++t) {
            const double diff = row[t] - v_rows[k][t];
            sq += diff * diff;
        }
        if (sq < best_sq) {
            best_sq = sq;
            best = static_cast<int>(k);
        }
    }
    return best;
}

} // namespace detail

/// Fraction (as a percentage) of a layer's d-dimensional rows whose nearest
/// final-output row v_k belongs to the model's predicted class, averaged
/// over documents.
///
/// Layer rows: NCL = primary-capsule projections before the squash (the conv
/// features carried into pose space), PCL = the squashed primary capsules,
/// RL = each child's coupling-weighted routed contribution Σ_j c_ij·f_{j|i}
/// under the final couplings (leak mass, when present, excluded).
template <class S>
double layer_consistency(CapsNet<S>& model, const std::vector<Document>& docs, LayerTag layer) {
    if (docs.empty()) throw DataError("layer consistency: empty dataset");
    const std::size_t C = model.config().C;
    const std::size_t d = model.config().d;
    double doc_sum = 0.0;
    for (const auto& doc : docs) {
        auto fwd = model.forward_doc(doc.tokens);
        std::vector<std::vector<double>> v_rows(C, std::vector<double>(d));
        for (std::size_t k = 0; k < C; ++k)
            for (std::size_t t = 0; t < d; ++t)
                v_rows[k][t] = static_cast<double>(fwd.routing.v.at(k, t));

        std::vector<std::vector<double>> rows;
        if (layer == LayerTag::ncl || layer == LayerTag::pcl) {
            const Tensor<S>& src = layer == LayerTag::ncl ? fwd.pcl_pre : fwd.p;
            rows.assign(src.dim(0), std::vector<double>(d));
            for (std::size_t i = 0; i < src.dim(0); ++i)
                for (std::size_t t = 0; t < d; ++t) rows[i][t] = static_cast<double>(src.at(i, t));
        } else {
            const std::size_t N = fwd.u.dim(0);
            rows.assign(N, std::vector<double>(d, 0.0));
            for (std::size_t i = 0; i < N; ++i) {
                for (std::size_t j = 0; j < C; ++j) { // couplings may carry a leak column beyond C
                    const double c = static_cast<double>(fwd.routing.couplings.at(i, j));
                    for (std::size_t t = 0; t < d; ++t)
                        rows[i][t] += c * static_cast<double>(fwd.routing.features[j].at(i, t));
                }
            }
        }

        std::size_t hits = 0;
        for (const auto& row : rows) {
            if (detail::nearest_parent(row, v_rows) == fwd.prediction) ++hits;
        }
        doc_sum += static_cast<double>(hits) / static_cast<double>(rows.size());
    }
    return 100.0 * doc_sum / static_cast<double>(docs.size());
}

template <class S>
ConsistencyReport semantic_consistency(CapsNet<S>& model, const std::vector<Document>& docs) {
    ConsistencyReport r;
    r.ncl = layer_consistency(model, docs, LayerTag::ncl);
    r.pcl = layer_consistency(model, docs, LayerTag::pcl);
    r.rl = layer_consistency(model, docs, LayerTag::rl);
    return r;
}

} // namespace capsroute

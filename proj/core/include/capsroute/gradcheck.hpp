#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "capsroute/param.hpp"
#include "capsroute/tensor.hpp"

namespace capsroute {

/// Relative error with an absolute floor, so near-zero pairs compare on
/// absolute difference instead of blowing up.
inline double fd_rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

struct FdBlockResult {
    std::string name;
    double max_rel_err = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0; // gradient entries at the worst coordinate
    double numeric = 0.0;
    std::size_t coords_checked = 0;
};

/// Compare backpropagated gradients against central differences of loss_fn.
///
/// loss_fn must rebuild the loss from the current parameter values on every
/// call and be deterministic. The analytic pass runs once under a fresh tape;
/// the perturbed evaluations run with no tape active. `stride` subsamples
/// coordinates within each block (1 = check all).
template <class S>
std::vector<FdBlockResult> finite_diff_check(const std::function<Tensor<S>()>& loss_fn,
                                             ParamStore<S>& params,
                                             double h = 1e-5,
                                             std::size_t stride = 1) {
    if (stride == 0) throw ContractError("finite_diff_check: stride must be positive");

    params.zero_grads();
    std::vector<std::vector<double>> analytic;
    {
        Tape<S> tape;
        typename Tape<S>::Scope scope(tape);
        Tensor<S> loss = loss_fn();
        backward(loss);
        for (auto& p : params.all()) {
            auto g = p.value.grad();
            analytic.emplace_back(g.begin(), g.end());
        }
    }

    std::vector<FdBlockResult> results;
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& p = params.all()[k];
        FdBlockResult r;
        r.name = p.name;
        auto vals = p.value.values_mut();
        for (std::size_t i = 0; i < vals.size(); i += stride) {
            const S saved = vals[i];
            vals[i] = static_cast<S>(static_cast<double>(saved) + h);
            const double plus = static_cast<double>(loss_fn().item());
            vals[i] = static_cast<S>(static_cast<double>(saved) - h);
            const double minus = static_cast<double>(loss_fn().item());
            vals[i] = saved;
            const double numeric = (plus - minus) / (2.0 * h);
            const double err = fd_rel_err(analytic[k][i], numeric);
            if (err >= r.max_rel_err) {
                r.max_rel_err = err;
                r.worst_index = i;
                r.analytic = analytic[k][i];
                r.numeric = numeric;
            }
            ++r.coords_checked;
        }
        results.push_back(std::move(r));
    }
    return results;
}

inline double fd_worst(const std::vector<FdBlockResult>& results) {
    double worst = 0.0;
    for (const auto& r : results) worst = std::max(worst, r.max_rel_err);
    return worst;
}

} // namespace capsroute

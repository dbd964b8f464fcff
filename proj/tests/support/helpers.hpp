// Shared test utilities: random tensor generation and a gradient-vs-central-
// difference probe used by the per-op property suites.
#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <vector>

#include "capsroute/gradcheck.hpp"
#include "capsroute/rng.hpp"
#include "capsroute/tensor.hpp"

namespace testhelp {

template <class S>
capsroute::Tensor<S> random_tensor(capsroute::Rng& rng, capsroute::Shape shape, double lo = -1.0,
                                   double hi = 1.0, bool requires_grad = true) {
    std::vector<S> vals(capsroute::shape_numel(shape));
    for (auto& v : vals) v = static_cast<S>(rng.uniform(lo, hi));
    return capsroute::Tensor<S>::from(std::move(shape), std::move(vals), requires_grad);
}

template <class S>
bool bitwise_equal(const capsroute::Tensor<S>& a, const capsroute::Tensor<S>& b) {
    if (a.shape() != b.shape()) return false;
    return std::memcmp(a.values().data(), b.values().data(), a.values().size() * sizeof(S)) == 0;
}

template <class S>
double max_abs_diff(const capsroute::Tensor<S>& a, const capsroute::Tensor<S>& b) {
    double worst = 0.0;
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i)
        worst = std::max(worst, std::fabs(static_cast<double>(av[i]) - static_cast<double>(bv[i])));
    return worst;
}

// Analytic gradients of `inputs` under loss_fn, compared coordinate-by-
// coordinate against central differences. loss_fn must be pure in the input
// values. Returns the worst relative error across every input coordinate.
inline double op_grad_max_rel_err(const std::function<capsroute::Tensor<double>()>& loss_fn,
                                  std::vector<capsroute::Tensor<double>> inputs, double h = 1e-5) {
    using namespace capsroute;
    for (auto& t : inputs) t.zero_grad();
    {
        Tape<double>::Scope scope;
        Tensor<double> loss = loss_fn();
        backward(loss);
    }
    double worst = 0.0;
    for (auto& t : inputs) {
        auto vals = t.values_mut();
        auto grads = t.grad();
        for (std::size_t i = 0; i < vals.size(); ++i) {
            const double orig = vals[i];
            vals[i] = orig + h;
            const double up = loss_fn().item();
            vals[i] = orig - h;
            const double down = loss_fn().item();
            vals[i] = orig;
            const double numeric = (up - down) / (2.0 * h);
            worst = std::max(worst, fd_rel_err(grads[i], numeric));
        }
    }
    return worst;
}

// Reduce any tensor to a scalar with fixed random weights so gradients reach
// every coordinate of the op under test.
inline capsroute::Tensor<double> scalarize(const capsroute::Tensor<double>& t, capsroute::Rng& rng) {
    using namespace capsroute;
    std::vector<double> w(t.numel());
    for (auto& v : w) v = rng.uniform(-1.0, 1.0);
    Tensor<double> weights = Tensor<double>::from(t.shape(), std::move(w), false);
    return sum(mul(t, weights));
}

} // namespace testhelp

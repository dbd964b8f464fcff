#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "capsroute/errors.hpp"
#include "capsroute/rng.hpp"
#include "capsroute/tensor.hpp"

namespace capsroute {

template <class S>
void fill_uniform(Tensor<S>& t, Rng& rng, double lo, double hi) {
    for (auto& v : t.values_mut()) v = static_cast<S>(rng.uniform(lo, hi));
}

template <class S>
struct Param {
    std::string name;
    Tensor<S> value;
};

/// Ordered collection of named trainable tensors. Registration order is part
/// of the contract: checkpoints and the optimizer walk it as-is.
template <class S>
class ParamStore {
public:
    // Tensors are shared handles, so these return copies that alias the
    // stored parameter; references into the vector would dangle on growth.
    Tensor<S> create(const std::string& name, Shape shape, Rng& rng, double lo = -0.05, double hi = 0.05) {
        Tensor<S> t = Tensor<S>::zeros(std::move(shape), true);
        fill_uniform(t, rng, lo, hi);
        return add(name, std::move(t));
    }

    Tensor<S> create_zeros(const std::string& name, Shape shape) {
        return add(name, Tensor<S>::zeros(std::move(shape), true));
    }

    Tensor<S> add(const std::string& name, Tensor<S> t) {
        for (const auto& p : params_) {
            if (p.name == name) throw ContractError("parameter registered twice: " + name);
        }
        t.set_requires_grad(true);
        params_.push_back(Param<S>{name, t});
        return t;
    }

    Tensor<S> find(const std::string& name) {
        for (auto& p : params_) {
            if (p.name == name) return p.value;
        }
        throw ContractError("unknown parameter: " + name);
    }

    std::vector<Param<S>>& all() { return params_; }
    const std::vector<Param<S>>& all() const { return params_; }
    std::size_t size() const { return params_.size(); }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) n += p.value.numel();
        return n;
    }

    void zero_grads() {
        for (auto& p : params_) p.value.zero_grad();
    }

private:
    std::vector<Param<S>> params_;
};

/// Adam with bias correction. Moment buffers are kept in double; the shared
/// step counter t advances once per step() across all parameters.
template <class S>
class Adam {
public:
    explicit Adam(ParamStore<S>& params, double lr,
                  double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : params_(params), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& p : params.all()) {
            m_.emplace_back(p.value.numel(), 0.0);
            v_.emplace_back(p.value.numel(), 0.0);
        }
    }

    void step() {
        if (params_.size() != m_.size()) {
            throw ContractError("optimizer state does not match parameter store");
        }
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t k = 0; k < params_.size(); ++k) {
            auto& p = params_.all()[k];
            if (!p.value.has_grad()) {
                throw ContractError("step before backward: no gradient for parameter " + p.name);
            }
            auto g = p.value.grad();
            auto vals = p.value.values_mut();
            auto& m = m_[k];
            auto& v = v_[k];
            for (std::size_t i = 0; i < vals.size(); ++i) {
                const double gi = static_cast<double>(g[i]);
                m[i] = beta1_ * m[i] + (1.0 - beta1_) * gi;
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * gi * gi;
                const double mhat = m[i] / bc1;
                const double vhat = v[i] / bc2;
                vals[i] = static_cast<S>(static_cast<double>(vals[i]) - lr_ * mhat / (std::sqrt(vhat) + eps_));
            }
        }
    }

    std::size_t step_count() const { return t_; }
    double learning_rate() const { return lr_; }

private:
    ParamStore<S>& params_;
    double lr_, beta1_, beta2_, eps_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

} // namespace capsroute

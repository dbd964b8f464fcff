#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "capsroute/errors.hpp"

namespace capsroute {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << "]";
    return os.str();
}

template <class S>
struct TensorData {
    Shape shape;
    std::vector<S> values;
    bool requires_grad = false;
    std::vector<S> grad; // empty until first touched; same length as values afterwards
};

/// Dense row-major tensor handle. Copying a Tensor copies the handle, not the
/// buffer; op outputs are treated as immutable once produced. Scalars are
/// shape {1}.
template <class S>
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        Tensor t;
        t.d_ = std::make_shared<TensorData<S>>();
        t.d_->shape = std::move(shape);
        if (t.d_->shape.empty()) throw ShapeError("tensor shape must be non-empty");
        t.d_->values.assign(shape_numel(t.d_->shape), S(0));
        t.d_->requires_grad = requires_grad;
        return t;
    }

    static Tensor from(Shape shape, std::vector<S> values, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        if (values.size() != t.numel()) {
            throw ShapeError("tensor data length " + std::to_string(values.size()) +
                             " does not match shape " + shape_str(t.shape()));
        }
        t.d_->values = std::move(values);
        return t;
    }

    static Tensor scalar(S v) { return from({1}, {v}); }

    static Tensor identity(std::size_t n) {
        Tensor t = zeros({n, n});
        for (std::size_t i = 0; i < n; ++i) t.d_->values[i * n + i] = S(1);
        return t;
    }

    bool valid() const { return static_cast<bool>(d_); }
    const Shape& shape() const { return d_->shape; }
    std::size_t ndim() const { return d_->shape.size(); }
    std::size_t numel() const { return d_->values.size(); }
    std::size_t dim(std::size_t i) const { return d_->shape.at(i); }

    std::span<const S> values() const { return d_->values; }
    std::span<S> values_mut() { return d_->values; }

    S item() const {
        if (numel() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
        return d_->values[0];
    }
    S at(std::size_t i) const { return d_->values.at(i); }
    S at(std::size_t i, std::size_t j) const {
        return d_->values.at(i * d_->shape.at(1) + j);
    }

    bool requires_grad() const { return d_->requires_grad; }
    void set_requires_grad(bool b) { d_->requires_grad = b; }

    bool has_grad() const { return !d_->grad.empty(); }

    /// Gradient buffer, allocated (zeroed) on first access. The tensor is a
    /// shared handle, so gradients stay reachable through const handles too.
    std::span<S> grad() const {
        if (d_->grad.empty()) d_->grad.assign(d_->values.size(), S(0));
        return d_->grad;
    }

    void zero_grad() const {
        if (!d_->grad.empty()) d_->grad.assign(d_->values.size(), S(0));
    }

    /// Identity of the underlying buffer; two handles to one tensor compare equal.
    const void* id() const { return d_.get(); }

private:
    std::shared_ptr<TensorData<S>> d_;
};

/// Wengert list for reverse-mode differentiation. Ops append a backward step
/// as they execute; backward() replays the list once in reverse. Gradients of
/// op outputs are rebuilt on each backward pass while leaf gradients
/// (parameters, inputs) accumulate until explicitly zeroed.
template <class S>
class Tape {
public:
    struct Step {
        Tensor<S> output;
        std::function<void()> run;
    };

    void record(Tensor<S> output, std::function<void()> run) {
        steps_.push_back(Step{std::move(output), std::move(run)});
    }

    std::size_t size() const { return steps_.size(); }

    void clear() { steps_.clear(); }

    void run_backward(Tensor<S>& loss) {
        for (auto& step : steps_) step.output.zero_grad();
        loss.grad()[0] = S(1);
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) it->run();
    }

    static Tape*& active() {
        thread_local Tape* current = nullptr;
        return current;
    }

    /// RAII activation; ops record onto the innermost active tape. The
    /// default constructor owns a fresh tape for the duration of the scope.
    class Scope {
    public:
        Scope() : owned_(std::make_unique<Tape>()), prev_(active()) { active() = owned_.get(); }
        explicit Scope(Tape& t) : prev_(active()) { active() = &t; }
        ~Scope() { active() = prev_; }
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        std::unique_ptr<Tape> owned_;
        Tape* prev_;
    };

private:
    std::vector<Step> steps_;
};

/// Backpropagate from a scalar loss through the active tape.
template <class S>
void backward(Tensor<S> loss) {
    Tape<S>* tape = Tape<S>::active();
    if (!tape) throw ContractError("backward: no active tape");
    if (loss.numel() != 1) {
        throw ContractError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
    }
    tape->run_backward(loss);
}

namespace detail {

template <class S>
void check_finite(const Tensor<S>& t, const char* op) {
    for (std::size_t i = 0; i < t.numel(); ++i) {
        if (!std::isfinite(static_cast<double>(t.values()[i]))) {
            throw NumericError(std::string(op) + ": non-finite value at flat index " + std::to_string(i));
        }
    }
}

template <class S>
bool track(std::initializer_list<bool> requires_grad) {
    if (!Tape<S>::active()) return false;
    for (bool b : requires_grad)
        if (b) return true;
    return false;
}

template <class S>
void record(Tensor<S> out, std::function<void()> fn) {
    Tape<S>::active()->record(std::move(out), std::move(fn));
}

template <class S>
void require_same_shape(const Tensor<S>& a, const Tensor<S>& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    }
}

template <class S>
void require_2d(const Tensor<S>& a, const char* op) {
    if (a.ndim() != 2) {
        throw ShapeError(std::string(op) + ": expected a 2-d tensor, got " + shape_str(a.shape()));
    }
}

// Accepts {m} or {m,1} as a length-m vector.
template <class S>
std::size_t vector_length(const Tensor<S>& v, const char* op) {
    if (v.ndim() == 1) return v.dim(0);
    if (v.ndim() == 2 && v.dim(1) == 1) return v.dim(0);
    throw ShapeError(std::string(op) + ": expected a vector, got " + shape_str(v.shape()));
}

} // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
    detail::require_same_shape(a, b, "add");
    Tensor<S> out = Tensor<S>::zeros(a.shape(), detail::track<S>({a.requires_grad(), b.requires_grad()}));
    for (std::size_t i = 0; i < out.numel(); ++i) {
        out.values_mut()[i] = static_cast<S>(static_cast<double>(a.values()[i]) + static_cast<double>(b.values()[i]));
    }
    detail::check_finite(out, "add");
    if (out.requires_grad()) {
        detail::record<S>(out, [a, b, out]() mutable {
            auto g = out.grad();
            if (a.requires_grad()) {
                auto ga = a.grad();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                auto gb = b.grad();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
            }
        });
    }
    return out;
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
    detail::require_same_shape(a, b, "sub");
    Tensor<S> out = Tensor<S>::zeros(a.shape(), detail::track<S>({a.requires_grad(), b.requires_grad()}));
    for (std::size_t i = 0; i < out.numel(); ++i) {
        out.values_mut()[i] = static_cast<S>(static_cast<double>(a.values()[i]) - static_cast<double>(b.values()[i]));
    }
    detail::check_finite(out, "sub");
    if (out.requires_grad()) {
        detail::record<S>(out, [a, b, out]() mutable {
            auto g = out.grad();
            if (a.requires_grad()) {
                auto ga = a.grad();
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                auto gb = b.grad();
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
        });
    }
    return out;
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
    detail::require_same_shape(a, b, "mul");
    Tensor<S> out = Tensor<S>::zeros(a.shape(), detail::track<S>({a.requires_grad(), b.requires_grad()}));
    for (std::size_t i = 0; i < out.numel(); ++i) {
        out.values_mut()[i] = static_cast<S>(static_cast<double>(a.values()[i]) * static_cast<double>(b.values()[i]));
    }
    detail::check_finite(out, "mul");
    if (out.requires_grad()) {
        detail::record<S>(out, [a, b, out]() mutable {
            auto g = out.grad();
            if (a.requires_grad()) {
                auto ga = a.grad();
                for (std::size_t i = 0; i < g.size(); ++i)
                    ga[i] += static_cast<S>(static_cast<double>(g[i]) * static_cast<double>(b.values()[i]));
            }
            if (b.requires_grad()) {
                auto gb = b.grad();
                for (std::size_t i = 0; i < g.size(); ++i)
                    gb[i] += static_cast<S>(static_cast<double>(g[i]) * static_cast<double>(a.values()[i]));
            }
        });
    }
    return out;
}

/// scale * a + shift, elementwise.
template <class S>
Tensor<S> affine(const Tensor<S>& a, double scale, double shift) {
    Tensor<S> out = Tensor<S>::zeros(a.shape(), detail::track<S>({a.requires_grad()}));
    for (std::size_t i = 0; i < out.numel(); ++i) {
        out.values_mut()[i] = static_cast<S>(scale * static_cast<double>(a.values()[i]) + shift);
    }
    detail::check_finite(out, "affine");
    if (out.requires_grad()) {
        detail::record<S>(out, [a, out, scale]() mutable {
            auto g = out.grad();
            auto ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i)
                ga[i] += static_cast<S>(scale * static_cast<double>(g[i]));
        });
    }
    return out;
}

template <class S>
Tensor<S> relu(const Tensor<S>& a) {
    Tensor<S> out = Tensor<S>::zeros(a.shape(), detail::track<S>({a.requires_grad()}));
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const S v = a.values()[i];
        out.values_mut()[i] = v > S(0) ? v : S(0);
    }
    detail::check_finite(out, "relu");
    if (out.requires_grad()) {
        detail::record<S>(out, [a, out]() mutable {
            auto g = out.grad();
            auto ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i)
                if (a.values()[i] > S(0)) ga[i] += g[i];
        });
    }
    return out;
}

template <class S>
Tensor<S> tanh(const Tensor<S>& a) {
    Tensor<S> out = Tensor<S>::zeros(a.shape(), detail::track<S>({a.requires_grad()}));
    for (std::size_t i = 0; i < out.numel(); ++i) {
        out.values_mut()[i] = static_cast<S>(std::tanh(static_cast<double>(a.values()[i])));
    }
    detail::check_finite(out, "tanh");
    if (out.requires_grad()) {
        detail::record<S>(out, [a, out]() mutable {
            auto g = out.grad();
            auto ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double y = static_cast<double>(out.values()[i]);
                ga[i] += static_cast<S>(static_cast<double>(g[i]) * (1.0 - y * y));
            }
        });
    }
    return out;
}

template <class S>
Tensor<S> exp(const Tensor<S>& a) {
    Tensor<S> out = Tensor<S>::zeros(a.shape(), detail::track<S>({a.requires_grad()}));
    for (std::size_t i = 0; i < out.numel(); ++i) {
        out.values_mut()[i] = static_cast<S>(std::exp(static_cast<double>(a.values()[i])));
    }
    detail::check_finite(out, "exp");
    if (out.requires_grad()) {
        detail::record<S>(out, [a, out]() mutable {
            auto g = out.grad();
            auto ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i)
                ga[i] += static_cast<S>(static_cast<double>(g[i]) * static_cast<double>(out.values()[i]));
        });
    }
    return out;
}

template <class S>
Tensor<S> log(const Tensor<S>& a) {
    Tensor<S> out = Tensor<S>::zeros(a.shape(), detail::track<S>({a.requires_grad()}));
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const double v = static_cast<double>(a.values()[i]);
        if (v <= 0.0) throw NumericError("log: nonpositive input at flat index " + std::to_string(i));
        out.values_mut()[i] = static_cast<S>(std::log(v));
    }
    detail::check_finite(out, "log");
    if (out.requires_grad()) {
        detail::record<S>(out, [a, out]() mutable {
            auto g = out.grad();
            auto ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i)
                ga[i] += static_cast<S>(static_cast<double>(g[i]) / static_cast<double>(a.values()[i]));
        });
    }
    return out;
}

/// x^(-1/2), elementwise. Inputs must be strictly positive.
template <class S>
Tensor<S> rsqrt(const Tensor<S>& a) {
    Tensor<S> out = Tensor<S>::zeros(a.shape(), detail::track<S>({a.requires_grad()}));
    for (std::size_t i = 0; i < out.numel(); ++i) {
        const double v = static_cast<double>(a.values()[i]);
        if (v <= 0.0) throw NumericError("rsqrt: nonpositive input at flat index " + std::to_string(i));
        out.values_mut()[i] = static_cast<S>(1.0 / std::sqrt(v));
    }
    detail::check_finite(out, "rsqrt");
    if (out.requires_grad()) {
        detail::record<S>(out, [a, out]() mutable {
            auto g = out.grad();
            auto ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double y = static_cast<double>(out.values()[i]); // v^{-1/2}
                ga[i] += static_cast<S>(static_cast<double>(g[i]) * (-0.5) * y * y * y);
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Matrix ops
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
    detail::require_2d(a, "matmul");
    detail::require_2d(b, "matmul");
    const std::size_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
    if (k != k2) {
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
    }
    Tensor<S> out = Tensor<S>::zeros({m, n}, detail::track<S>({a.requires_grad(), b.requires_grad()}));
    const S* pa = a.values().data();
    const S* pb = b.values().data();
    S* po = out.values_mut().data();
    std::vector<double> acc(n);
    for (std::size_t i = 0; i < m; ++i) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (std::size_t t = 0; t < k; ++t) {
            const double av = static_cast<double>(pa[i * k + t]);
            const S* brow = pb + t * n;
            for (std::size_t j = 0; j < n; ++j) acc[j] += av * static_cast<double>(brow[j]);
        }
        for (std::size_t j = 0; j < n; ++j) po[i * n + j] = static_cast<S>(acc[j]);
    }
    detail::check_finite(out, "matmul");
    if (out.requires_grad()) {
        detail::record<S>(out, [a, b, out, m, k, n]() mutable {
            auto g = out.grad();
            if (a.requires_grad()) {
                auto ga = a.grad();
                // a.grad += g * b^T
                for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t t = 0; t < k; ++t) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j)
                            acc += static_cast<double>(g[i * n + j]) * static_cast<double>(b.values()[t * n + j]);
                        ga[i * k + t] += static_cast<S>(acc);
                    }
                }
            }
            if (b.requires_grad()) {
                auto gb = b.grad();
                // b.grad += a^T * g
                for (std::size_t t = 0; t < k; ++t) {
                    for (std::size_t j = 0; j < n; ++j) {
                        double acc = 0.0;
                        for (std::size_t i = 0; i < m; ++i)
                            acc += static_cast<double>(a.values()[i * k + t]) * static_cast<double>(g[i * n + j]);
                        gb[t * n + j] += static_cast<S>(acc);
                    }
                }
            }
        });
    }
    return out;
}

template <class S>
Tensor<S> transpose(const Tensor<S>& a) {
    detail::require_2d(a, "transpose");
    const std::size_t m = a.dim(0), n = a.dim(1);
    Tensor<S> out = Tensor<S>::zeros({n, m}, detail::track<S>({a.requires_grad()}));
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j)
            out.values_mut()[j * m + i] = a.values()[i * n + j];
    if (out.requires_grad()) {
        detail::record<S>(out, [a, out, m, n]() mutable {
            auto g = out.grad();
            auto ga = a.grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    ga[i * n + j] += g[j * m + i];
        });
    }
    return out;
}

/// Same data, new shape (sizes must agree). The buffer is copied.
template <class S>
Tensor<S> reshape(const Tensor<S>& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    Tensor<S> out = Tensor<S>::from(std::move(shape),
                                    std::vector<S>(a.values().begin(), a.values().end()),
                                    detail::track<S>({a.requires_grad()}));
    if (out.requires_grad()) {
        detail::record<S>(out, [a, out]() mutable {
            auto g = out.grad();
            auto ga = a.grad();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reductions and normalizations
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> sum(const Tensor<S>& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) acc += static_cast<double>(a.values()[i]);
    Tensor<S> out = Tensor<S>::zeros({1}, detail::track<S>({a.requires_grad()}));
    out.values_mut()[0] = static_cast<S>(acc);
    detail::check_finite(out, "sum");
    if (out.requires_grad()) {
        detail::record<S>(out, [a, out]() mutable {
            const S g = out.grad()[0];
            auto ga = a.grad();
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
        });
    }
    return out;
}

/// Select one element of a 1-d tensor as a scalar.
template <class S>
Tensor<S> pick(const Tensor<S>& a, std::size_t index) {
    if (a.ndim() != 1 || index >= a.dim(0)) {
        throw ShapeError("pick: index " + std::to_string(index) + " out of range for " + shape_str(a.shape()));
    }
    Tensor<S> out = Tensor<S>::zeros({1}, detail::track<S>({a.requires_grad()}));
    out.values_mut()[0] = a.values()[index];
    if (out.requires_grad()) {
        detail::record<S>(out, [a, out, index]() mutable {
            a.grad()[index] += out.grad()[0];
        });
    }
    return out;
}

/// Euclidean norm of all elements, as a scalar. Backward is x/||x|| with an
/// epsilon guard so the zero vector gets a zero gradient.
template <class S>
Tensor<S> l2_norm(const Tensor<S>& a) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double v = static_cast<double>(a.values()[i]);
        acc += v * v;
    }
    const double norm = std::sqrt(acc);
    Tensor<S> out = Tensor<S>::zeros({1}, detail::track<S>({a.requires_grad()}));
    out.values_mut()[0] = static_cast<S>(norm);
    detail::check_finite(out, "l2_norm");
    if (out.requires_grad()) {
        detail::record<S>(out, [a, out, norm]() mutable {
            const double g = static_cast<double>(out.grad()[0]);
            const double inv = 1.0 / std::max(norm, 1e-9);
            auto ga = a.grad();
            for (std::size_t i = 0; i < ga.size(); ++i)
                ga[i] += static_cast<S>(g * static_cast<double>(a.values()[i]) * inv);
        });
    }
    return out;
}

/// Per-row Euclidean norms of an m x n matrix, as a length-m vector.
template <class S>
Tensor<S> row_norms(const Tensor<S>& a) {
    detail::require_2d(a, "row_norms");
    const std::size_t m = a.dim(0), n = a.dim(1);
    Tensor<S> out = Tensor<S>::zeros({m}, detail::track<S>({a.requires_grad()}));
    std::vector<double> norms(m);
    for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double v = static_cast<double>(a.values()[i * n + j]);
            acc += v * v;
        }
        norms[i] = std::sqrt(acc);
        out.values_mut()[i] = static_cast<S>(norms[i]);
    }
    detail::check_finite(out, "row_norms");
    if (out.requires_grad()) {
        detail::record<S>(out, [a, out, norms, m, n]() mutable {
            auto g = out.grad();
            auto ga = a.grad();
            for (std::size_t i = 0; i < m; ++i) {
                const double coeff = static_cast<double>(g[i]) / std::max(norms[i], 1e-9);
                for (std::size_t j = 0; j < n; ++j)
                    ga[i * n + j] += static_cast<S>(coeff * static_cast<double>(a.values()[i * n + j]));
            }
        });
    }
    return out;
}

template <class S>
Tensor<S> row_sums(const Tensor<S>& a) {
    detail::require_2d(a, "row_sums");
    const std::size_t m = a.dim(0), n = a.dim(1);
    Tensor<S> out = Tensor<S>::zeros({m}, detail::track<S>({a.requires_grad()}));
    for (std::size_t i = 0; i < m; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += static_cast<double>(a.values()[i * n + j]);
        out.values_mut()[i] = static_cast<S>(acc);
    }
    detail::check_finite(out, "row_sums");
    if (out.requires_grad()) {
        detail::record<S>(out, [a, out, m, n]() mutable {
            auto g = out.grad();
            auto ga = a.grad();
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i];
        });
    }
    return out;
}

/// Column mean of an m x n matrix, as a 1 x n row.
template <class S>
Tensor<S> mean_rows(const Tensor<S>& a) {
    detail::require_2d(a, "mean_rows");
    const std::size_t m = a.dim(0), n = a.dim(1);
    Tensor<S> out = Tensor<S>::zeros({1, n}, detail::track<S>({a.requires_grad()}));
    for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) acc += static_cast<double>(a.values()[i * n + j]);
        out.values_mut()[j] = static_cast<S>(acc / static_cast<double>(m));
    }
    detail::check_finite(out, "mean_rows");
    if (out.requires_grad()) {
        detail::record<S>(out, [a, out, m, n]() mutable {
            auto g = out.grad();
            auto ga = a.grad();
            const double inv = 1.0 / static_cast<double>(m);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    ga[i * n + j] += static_cast<S>(static_cast<double>(g[j]) * inv);
        });
    }
    return out;
}

/// Softmax along one axis, with max subtraction for stability. Every slice
/// along the axis sums to 1.
template <class S>
Tensor<S> softmax(const Tensor<S>& a, std::size_t axis) {
    if (axis >= a.ndim()) {
        throw ShapeError("softmax: axis " + std::to_string(axis) + " invalid for " + shape_str(a.shape()));
    }
    const std::size_t len = a.dim(axis);
    std::size_t outer = 1, inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= a.dim(i);
    for (std::size_t i = axis + 1; i < a.ndim(); ++i) inner *= a.dim(i);

    Tensor<S> out = Tensor<S>::zeros(a.shape(), detail::track<S>({a.requires_grad()}));
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::size_t t = 0; t < len; ++t)
                mx = std::max(mx, static_cast<double>(a.values()[base + t * inner]));
            double denom = 0.0;
            for (std::size_t t = 0; t < len; ++t)
                denom += std::exp(static_cast<double>(a.values()[base + t * inner]) - mx);
            for (std::size_t t = 0; t < len; ++t) {
                const double e = std::exp(static_cast<double>(a.values()[base + t * inner]) - mx);
                out.values_mut()[base + t * inner] = static_cast<S>(e / denom);
            }
        }
    }
    detail::check_finite(out, "softmax");
    if (out.requires_grad()) {
        detail::record<S>(out, [a, out, outer, inner, len]() mutable {
            auto g = out.grad();
            auto ga = a.grad();
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t in = 0; in < inner; ++in) {
                    const std::size_t base = o * len * inner + in;
                    double dot = 0.0;
                    for (std::size_t t = 0; t < len; ++t) {
                        const std::size_t idx = base + t * inner;
                        dot += static_cast<double>(g[idx]) * static_cast<double>(out.values()[idx]);
                    }
                    for (std::size_t t = 0; t < len; ++t) {
                        const std::size_t idx = base + t * inner;
                        const double y = static_cast<double>(out.values()[idx]);
                        ga[idx] += static_cast<S>(y * (static_cast<double>(g[idx]) - dot));
                    }
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Broadcast helpers
// ---------------------------------------------------------------------------

/// M + b for every row of M; b has length n (shape {n} or {1,n}).
template <class S>
Tensor<S> add_rowvec(const Tensor<S>& m, const Tensor<S>& b) {
    detail::require_2d(m, "add_rowvec");
    const std::size_t rows = m.dim(0), cols = m.dim(1);
    std::size_t blen = b.ndim() == 2 && b.dim(0) == 1 ? b.dim(1)
                     : b.ndim() == 1                  ? b.dim(0)
                                                      : 0;
    if (blen != cols) {
        throw ShapeError("add_rowvec: " + shape_str(m.shape()) + " vs " + shape_str(b.shape()));
    }
    Tensor<S> out = Tensor<S>::zeros(m.shape(), detail::track<S>({m.requires_grad(), b.requires_grad()}));
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            out.values_mut()[i * cols + j] = static_cast<S>(
                static_cast<double>(m.values()[i * cols + j]) + static_cast<double>(b.values()[j]));
    detail::check_finite(out, "add_rowvec");
    if (out.requires_grad()) {
        detail::record<S>(out, [m, b, out, rows, cols]() mutable {
            auto g = out.grad();
            if (m.requires_grad()) {
                auto gm = m.grad();
                for (std::size_t i = 0; i < g.size(); ++i) gm[i] += g[i];
            }
            if (b.requires_grad()) {
                auto gb = b.grad();
                for (std::size_t j = 0; j < cols; ++j) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < rows; ++i) acc += static_cast<double>(g[i * cols + j]);
                    gb[j] += static_cast<S>(acc);
                }
            }
        });
    }
    return out;
}

/// Scale row i of M by v[i].
template <class S>
Tensor<S> scale_rows(const Tensor<S>& m, const Tensor<S>& v) {
    detail::require_2d(m, "scale_rows");
    const std::size_t rows = m.dim(0), cols = m.dim(1);
    if (detail::vector_length(v, "scale_rows") != rows) {
        throw ShapeError("scale_rows: " + shape_str(m.shape()) + " vs " + shape_str(v.shape()));
    }
    Tensor<S> out = Tensor<S>::zeros(m.shape(), detail::track<S>({m.requires_grad(), v.requires_grad()}));
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            out.values_mut()[i * cols + j] = static_cast<S>(
                static_cast<double>(m.values()[i * cols + j]) * static_cast<double>(v.values()[i]));
    detail::check_finite(out, "scale_rows");
    if (out.requires_grad()) {
        detail::record<S>(out, [m, v, out, rows, cols]() mutable {
            auto g = out.grad();
            if (m.requires_grad()) {
                auto gm = m.grad();
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j)
                        gm[i * cols + j] += static_cast<S>(
                            static_cast<double>(g[i * cols + j]) * static_cast<double>(v.values()[i]));
            }
            if (v.requires_grad()) {
                auto gv = v.grad();
                for (std::size_t i = 0; i < rows; ++i) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < cols; ++j)
                        acc += static_cast<double>(g[i * cols + j]) * static_cast<double>(m.values()[i * cols + j]);
                    gv[i] += static_cast<S>(acc);
                }
            }
        });
    }
    return out;
}

/// Scale column j of M by v[j].
template <class S>
Tensor<S> scale_cols(const Tensor<S>& m, const Tensor<S>& v) {
    detail::require_2d(m, "scale_cols");
    const std::size_t rows = m.dim(0), cols = m.dim(1);
    if (detail::vector_length(v, "scale_cols") != cols) {
        throw ShapeError("scale_cols: " + shape_str(m.shape()) + " vs " + shape_str(v.shape()));
    }
    Tensor<S> out = Tensor<S>::zeros(m.shape(), detail::track<S>({m.requires_grad(), v.requires_grad()}));
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            out.values_mut()[i * cols + j] = static_cast<S>(
                static_cast<double>(m.values()[i * cols + j]) * static_cast<double>(v.values()[j]));
    detail::check_finite(out, "scale_cols");
    if (out.requires_grad()) {
        detail::record<S>(out, [m, v, out, rows, cols]() mutable {
            auto g = out.grad();
            if (m.requires_grad()) {
                auto gm = m.grad();
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j)
                        gm[i * cols + j] += static_cast<S>(
                            static_cast<double>(g[i * cols + j]) * static_cast<double>(v.values()[j]));
            }
            if (v.requires_grad()) {
                auto gv = v.grad();
                for (std::size_t j = 0; j < cols; ++j) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < rows; ++i)
                        acc += static_cast<double>(g[i * cols + j]) * static_cast<double>(m.values()[i * cols + j]);
                    gv[j] += static_cast<S>(acc);
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Slicing and stacking
// ---------------------------------------------------------------------------

template <class S>
Tensor<S> slice_col(const Tensor<S>& m, std::size_t col) {
    detail::require_2d(m, "slice_col");
    const std::size_t rows = m.dim(0), cols = m.dim(1);
    if (col >= cols) throw ShapeError("slice_col: column " + std::to_string(col) + " out of range for " + shape_str(m.shape()));
    Tensor<S> out = Tensor<S>::zeros({rows, 1}, detail::track<S>({m.requires_grad()}));
    for (std::size_t i = 0; i < rows; ++i) out.values_mut()[i] = m.values()[i * cols + col];
    if (out.requires_grad()) {
        detail::record<S>(out, [m, out, rows, cols, col]() mutable {
            auto g = out.grad();
            auto gm = m.grad();
            for (std::size_t i = 0; i < rows; ++i) gm[i * cols + col] += g[i];
        });
    }
    return out;
}

/// Stack k column vectors {m,1} into an m x k matrix.
template <class S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    const std::size_t rows = parts[0].dim(0);
    bool needs = false;
    for (const auto& p : parts) {
        if (p.ndim() != 2 || p.dim(1) != 1 || p.dim(0) != rows) {
            throw ShapeError("concat_cols: expected {" + std::to_string(rows) + ",1} parts, got " + shape_str(p.shape()));
        }
        needs = needs || p.requires_grad();
    }
    const std::size_t cols = parts.size();
    Tensor<S> out = Tensor<S>::zeros({rows, cols}, Tape<S>::active() && needs);
    for (std::size_t j = 0; j < cols; ++j)
        for (std::size_t i = 0; i < rows; ++i)
            out.values_mut()[i * cols + j] = parts[j].values()[i];
    if (out.requires_grad()) {
        detail::record<S>(out, [parts, out, rows, cols]() mutable {
            auto g = out.grad();
            for (std::size_t j = 0; j < cols; ++j) {
                if (!parts[j].requires_grad()) continue;
                auto gp = parts[j].grad();
                for (std::size_t i = 0; i < rows; ++i) gp[i] += g[i * cols + j];
            }
        });
    }
    return out;
}

/// Stack k row vectors {1,n} into a k x n matrix.
template <class S>
Tensor<S> concat_rows(const std::vector<Tensor<S>>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no parts");
    const std::size_t cols = parts[0].dim(1);
    bool needs = false;
    for (const auto& p : parts) {
        if (p.ndim() != 2 || p.dim(0) != 1 || p.dim(1) != cols) {
            throw ShapeError("concat_rows: expected {1," + std::to_string(cols) + "} parts, got " + shape_str(p.shape()));
        }
        needs = needs || p.requires_grad();
    }
    const std::size_t rows = parts.size();
    Tensor<S> out = Tensor<S>::zeros({rows, cols}, Tape<S>::active() && needs);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j)
            out.values_mut()[i * cols + j] = parts[i].values()[j];
    if (out.requires_grad()) {
        detail::record<S>(out, [parts, out, rows, cols]() mutable {
            auto g = out.grad();
            for (std::size_t i = 0; i < rows; ++i) {
                if (!parts[i].requires_grad()) continue;
                auto gp = parts[i].grad();
                for (std::size_t j = 0; j < cols; ++j) gp[j] += g[i * cols + j];
            }
        });
    }
    return out;
}

// Braced-list conveniences; initializer lists are a non-deduced context for
// the vector overloads above.
template <class S>
Tensor<S> concat_cols(std::initializer_list<Tensor<S>> parts) {
    return concat_cols(std::vector<Tensor<S>>(parts));
}

template <class S>
Tensor<S> concat_rows(std::initializer_list<Tensor<S>> parts) {
    return concat_rows(std::vector<Tensor<S>>(parts));
}

// ---------------------------------------------------------------------------
// Text-model specific ops
// ---------------------------------------------------------------------------

/// Gather rows of the embedding table for a token id sequence. Row 0 (the
/// padding id) is frozen: no gradient is ever written into it.
template <class S>
Tensor<S> embedding_lookup(const Tensor<S>& table, const std::vector<int>& ids) {
    detail::require_2d(table, "embedding_lookup");
    const std::size_t v = table.dim(0), d = table.dim(1);
    Tensor<S> out = Tensor<S>::zeros({ids.size(), d}, detail::track<S>({table.requires_grad()}));
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const int id = ids[i];
        if (id < 0 || static_cast<std::size_t>(id) >= v) {
            throw DataError("embedding_lookup: token id " + std::to_string(id) +
                            " out of range for table " + shape_str(table.shape()));
        }
        for (std::size_t j = 0; j < d; ++j)
            out.values_mut()[i * d + j] = table.values()[static_cast<std::size_t>(id) * d + j];
    }
    if (out.requires_grad()) {
        detail::record<S>(out, [table, out, ids, d]() mutable {
            auto g = out.grad();
            auto gt = table.grad();
            for (std::size_t i = 0; i < ids.size(); ++i) {
                if (ids[i] == 0) continue; // pad row stays frozen
                const std::size_t row = static_cast<std::size_t>(ids[i]) * d;
                for (std::size_t j = 0; j < d; ++j) gt[row + j] += g[i * d + j];
            }
        });
    }
    return out;
}

inline std::size_t conv_output_length(std::size_t len, std::size_t window, std::size_t stride) {
    if (len < window) {
        throw ShapeError("conv window " + std::to_string(window) + " exceeds input length " + std::to_string(len));
    }
    return (len - window) / stride + 1;
}

/// Unfold sliding windows of an L x D matrix into rows: output row i is the
/// flattened slice x[i*stride .. i*stride+window).
template <class S>
Tensor<S> im2col(const Tensor<S>& x, std::size_t window, std::size_t stride) {
    detail::require_2d(x, "im2col");
    const std::size_t len = x.dim(0), d = x.dim(1);
    const std::size_t out_len = conv_output_length(len, window, stride);
    Tensor<S> out = Tensor<S>::zeros({out_len, window * d}, detail::track<S>({x.requires_grad()}));
    for (std::size_t i = 0; i < out_len; ++i)
        for (std::size_t w = 0; w < window; ++w)
            for (std::size_t j = 0; j < d; ++j)
                out.values_mut()[i * window * d + w * d + j] = x.values()[(i * stride + w) * d + j];
    if (out.requires_grad()) {
        detail::record<S>(out, [x, out, out_len, window, stride, d]() mutable {
            auto g = out.grad();
            auto gx = x.grad();
            for (std::size_t i = 0; i < out_len; ++i)
                for (std::size_t w = 0; w < window; ++w)
                    for (std::size_t j = 0; j < d; ++j)
                        gx[(i * stride + w) * d + j] += g[i * window * d + w * d + j];
        });
    }
    return out;
}

/// Row-wise squash nonlinearity: v = (||s||^2 / (1 + ||s||^2)) * s / ||s||.
/// Keeps direction, bounds the norm below 1, and maps the zero row to itself.
template <class S>
Tensor<S> squash_rows(const Tensor<S>& a) {
    detail::require_2d(a, "squash_rows");
    const std::size_t m = a.dim(0), n = a.dim(1);
    Tensor<S> out = Tensor<S>::zeros(a.shape(), detail::track<S>({a.requires_grad()}));
    std::vector<double> norms(m);
    for (std::size_t i = 0; i < m; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double v = static_cast<double>(a.values()[i * n + j]);
            sq += v * v;
        }
        const double norm = std::sqrt(sq);
        norms[i] = norm;
        const double scale = norm / (1.0 + sq);
        for (std::size_t j = 0; j < n; ++j)
            out.values_mut()[i * n + j] = static_cast<S>(static_cast<double>(a.values()[i * n + j]) * scale);
    }
    detail::check_finite(out, "squash_rows");
    if (out.requires_grad()) {
        detail::record<S>(out, [a, out, norms, m, n]() mutable {
            auto g = out.grad();
            auto ga = a.grad();
            for (std::size_t i = 0; i < m; ++i) {
                const double norm = norms[i];
                const double sq = norm * norm;
                const double scale = norm / (1.0 + sq);
                // d scale / d norm, divided by norm for the outer-product term
                const double dscale = (1.0 - sq) / ((1.0 + sq) * (1.0 + sq));
                const double inv_norm = 1.0 / std::max(norm, 1e-9);
                double dot = 0.0;
                for (std::size_t j = 0; j < n; ++j)
                    dot += static_cast<double>(g[i * n + j]) * static_cast<double>(a.values()[i * n + j]);
                for (std::size_t j = 0; j < n; ++j) {
                    const double sj = static_cast<double>(a.values()[i * n + j]);
                    ga[i * n + j] += static_cast<S>(static_cast<double>(g[i * n + j]) * scale +
                                                    dot * dscale * inv_norm * sj);
                }
            }
        });
    }
    return out;
}

} // namespace capsroute

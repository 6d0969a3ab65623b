#pragma once

// Operator-overloading automatic differentiation.
//
//   Dual<T>       forward mode (value + tangent)
//   Var<T>        reverse mode on a Tape<T>
//   Var<Dual<T>>  forward-over-reverse: the reverse sweep is itself
//                 differentiated along the input tangent, which yields
//                 Hessian-vector products and gradients of expressions that
//                 contain first derivatives.
//
// Generic code calls the math functions unqualified (exp, tanh, sigmoid, ...)
// so that the overloads below are picked up by argument-dependent lookup.

#include <cmath>
#include <concepts>
#include <cstddef>
#include <limits>
#include <span>
#include <type_traits>
#include <vector>

#include "thermonet/errors.hpp"

namespace thermonet::ad {

// ---------------------------------------------------------------------------
// Scalar primitives on double

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double relu(double x) { return x > 0.0 ? x : 0.0; }

inline double primal(double x) { return x; }

// ---------------------------------------------------------------------------
// Forward mode

template <class T>
class Dual {
public:
    Dual() = default;
    template <class U>
        requires std::is_constructible_v<T, U>
    Dual(const U& v) : v_(T(v)), d_(T(0.0)) {}  // NOLINT(google-explicit-constructor)
    Dual(const T& v, const T& d) : v_(v), d_(d) {}

    const T& value() const { return v_; }
    const T& tangent() const { return d_; }

    friend Dual operator+(const Dual& a, const Dual& b) { return {a.v_ + b.v_, a.d_ + b.d_}; }
    friend Dual operator-(const Dual& a, const Dual& b) { return {a.v_ - b.v_, a.d_ - b.d_}; }
    friend Dual operator*(const Dual& a, const Dual& b) { return {a.v_ * b.v_, a.d_ * b.v_ + a.v_ * b.d_}; }
    friend Dual operator/(const Dual& a, const Dual& b) {
        const T q = a.v_ / b.v_;
        return {q, (a.d_ - q * b.d_) / b.v_};
    }
    friend Dual operator-(const Dual& a) { return {-a.v_, -a.d_}; }
    Dual& operator+=(const Dual& o) { return *this = *this + o; }
    Dual& operator-=(const Dual& o) { return *this = *this - o; }
    Dual& operator*=(const Dual& o) { return *this = *this * o; }
    Dual& operator/=(const Dual& o) { return *this = *this / o; }

    friend bool operator<(const Dual& a, const Dual& b) { return a.v_ < b.v_; }
    friend bool operator>(const Dual& a, const Dual& b) { return a.v_ > b.v_; }

private:
    T v_{};
    T d_{};
};

template <class T>
double primal(const Dual<T>& x) { return primal(x.value()); }

template <class T>
Dual<T> exp(const Dual<T>& x) {
    using std::exp;
    const T e = exp(x.value());
    return {e, e * x.tangent()};
}
template <class T>
Dual<T> log(const Dual<T>& x) {
    using std::log;
    return {log(x.value()), x.tangent() / x.value()};
}
template <class T>
Dual<T> log1p(const Dual<T>& x) {
    using std::log1p;
    return {log1p(x.value()), x.tangent() / (T(1.0) + x.value())};
}
template <class T>
Dual<T> sqrt(const Dual<T>& x) {
    using std::sqrt;
    const T s = sqrt(x.value());
    return {s, x.tangent() / (T(2.0) * s)};
}
template <class T>
Dual<T> tanh(const Dual<T>& x) {
    using std::tanh;
    const T t = tanh(x.value());
    return {t, (T(1.0) - t * t) * x.tangent()};
}
template <class T>
Dual<T> pow(const Dual<T>& x, double p) {
    using std::pow;
    return {pow(x.value(), p), T(p) * pow(x.value(), p - 1.0) * x.tangent()};
}
template <class T>
Dual<T> abs(const Dual<T>& x) {
    return primal(x) < 0.0 ? -x : x;
}
template <class T>
Dual<T> sigmoid(const Dual<T>& x) {
    const T s = sigmoid(x.value());
    return {s, s * (T(1.0) - s) * x.tangent()};
}
template <class T>
Dual<T> softplus(const Dual<T>& x) {
    return {softplus(x.value()), sigmoid(x.value()) * x.tangent()};
}
template <class T>
Dual<T> relu(const Dual<T>& x) {
    return primal(x) > 0.0 ? x : Dual<T>(T(0.0), T(0.0));
}

// ---------------------------------------------------------------------------
// Reverse mode

template <class T>
class Var;

inline constexpr std::size_t kNoNode = std::numeric_limits<std::size_t>::max();

/// Linear record of elementary operations. Each node keeps at most two
/// parents with the local partial derivatives.
template <class T>
class Tape {
public:
    struct Node {
        std::size_t parent[2];
        T weight[2];
    };

    Var<T> variable(const T& value);

    std::size_t push(std::size_t p0, const T& w0, std::size_t p1, const T& w1) {
        nodes_.push_back({{p0, p1}, {w0, w1}});
        return nodes_.size() - 1;
    }

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

    /// Adjoints of every node with respect to y.
    std::vector<T> adjoints(const Var<T>& y) const;

private:
    std::vector<Node> nodes_;
};

template <class T>
class Var {
public:
    Var() = default;
    template <class U>
        requires std::is_constructible_v<T, U>
    Var(const U& c) : value_(T(c)) {}  // NOLINT(google-explicit-constructor)
    Var(Tape<T>* tape, std::size_t id, const T& value) : tape_(tape), id_(id), value_(value) {}

    const T& value() const { return value_; }
    Tape<T>* tape() const { return tape_; }
    std::size_t id() const { return id_; }
    bool is_constant() const { return tape_ == nullptr; }

    /// Result of a unary elementary op with local derivative dx.
    static Var unary(const Var& x, const T& value, const T& dx) {
        if (x.is_constant()) return Var(value);
        return Var(x.tape_, x.tape_->push(x.id_, dx, kNoNode, T(0.0)), value);
    }

    /// Result of a binary elementary op with local derivatives da, db.
    static Var binary(const Var& a, const Var& b, const T& value, const T& da, const T& db) {
        if (a.is_constant() && b.is_constant()) return Var(value);
        if (a.is_constant()) return unary(b, value, db);
        if (b.is_constant()) return unary(a, value, da);
        if (a.tape_ != b.tape_) throw UsageError("operands recorded on different tapes");
        return Var(a.tape_, a.tape_->push(a.id_, da, b.id_, db), value);
    }

    friend Var operator+(const Var& a, const Var& b) { return binary(a, b, a.value_ + b.value_, T(1.0), T(1.0)); }
    friend Var operator-(const Var& a, const Var& b) { return binary(a, b, a.value_ - b.value_, T(1.0), T(-1.0)); }
    friend Var operator*(const Var& a, const Var& b) { return binary(a, b, a.value_ * b.value_, b.value_, a.value_); }
    friend Var operator/(const Var& a, const Var& b) {
        const T q = a.value_ / b.value_;
        return binary(a, b, q, T(1.0) / b.value_, -q / b.value_);
    }
    friend Var operator-(const Var& a) { return unary(a, -a.value_, T(-1.0)); }
    Var& operator+=(const Var& o) { return *this = *this + o; }
    Var& operator-=(const Var& o) { return *this = *this - o; }
    Var& operator*=(const Var& o) { return *this = *this * o; }
    Var& operator/=(const Var& o) { return *this = *this / o; }

    friend bool operator<(const Var& a, const Var& b) { return primal(a.value_) < primal(b.value_); }
    friend bool operator>(const Var& a, const Var& b) { return primal(a.value_) > primal(b.value_); }

private:
    Tape<T>* tape_ = nullptr;
    std::size_t id_ = kNoNode;
    T value_{};
};

template <class T>
Var<T> Tape<T>::variable(const T& value) {
    return Var<T>(this, push(kNoNode, T(0.0), kNoNode, T(0.0)), value);
}

template <class T>
std::vector<T> Tape<T>::adjoints(const Var<T>& y) const {
    std::vector<T> adj(nodes_.size(), T(0.0));
    if (y.is_constant()) return adj;
    if (y.tape() != this) throw UsageError("target was not recorded on this tape");
    adj[y.id()] = T(1.0);
    for (std::size_t n = y.id() + 1; n-- > 0;) {
        const Node& node = nodes_[n];
        for (int k = 0; k < 2; ++k)
            if (node.parent[k] != kNoNode) adj[node.parent[k]] += adj[n] * node.weight[k];
    }
    return adj;
}

template <class T>
double primal(const Var<T>& x) { return primal(x.value()); }

template <class T>
Var<T> exp(const Var<T>& x) {
    using std::exp;
    const T e = exp(x.value());
    return Var<T>::unary(x, e, e);
}
template <class T>
Var<T> log(const Var<T>& x) {
    using std::log;
    return Var<T>::unary(x, log(x.value()), T(1.0) / x.value());
}
template <class T>
Var<T> log1p(const Var<T>& x) {
    using std::log1p;
    return Var<T>::unary(x, log1p(x.value()), T(1.0) / (T(1.0) + x.value()));
}
template <class T>
Var<T> sqrt(const Var<T>& x) {
    using std::sqrt;
    const T s = sqrt(x.value());
    return Var<T>::unary(x, s, T(0.5) / s);
}
template <class T>
Var<T> tanh(const Var<T>& x) {
    using std::tanh;
    const T t = tanh(x.value());
    return Var<T>::unary(x, t, T(1.0) - t * t);
}
template <class T>
Var<T> pow(const Var<T>& x, double p) {
    using std::pow;
    return Var<T>::unary(x, pow(x.value(), p), T(p) * pow(x.value(), p - 1.0));
}
template <class T>
Var<T> abs(const Var<T>& x) {
    return primal(x) < 0.0 ? -x : x;
}
template <class T>
Var<T> sigmoid(const Var<T>& x) {
    const T s = sigmoid(x.value());
    return Var<T>::unary(x, s, s * (T(1.0) - s));
}
template <class T>
Var<T> softplus(const Var<T>& x) {
    return Var<T>::unary(x, softplus(x.value()), sigmoid(x.value()));
}
template <class T>
Var<T> relu(const Var<T>& x) {
    return primal(x) > 0.0 ? x : Var<T>(T(0.0));
}

// ---------------------------------------------------------------------------
// Drivers

struct GradientResult {
    double value = 0.0;
    std::vector<double> gradient;
};

struct DirectionalResult {
    double value = 0.0;
    double directional = 0.0;          // grad . direction
    std::vector<double> gradient;
    std::vector<double> hessian_vector;  // (d^2 f / dx^2) direction
};

namespace detail {

template <class V, class R>
V scalar_target(R&& r) {
    if constexpr (std::is_same_v<std::decay_t<R>, V>) {
        return r;
    } else {
        if (r.size() != 1) throw UsageError("differentiation target must be a scalar");
        return r[0];
    }
}

}  // namespace detail

/// Value and gradient of fn at x. fn receives std::span<const Var<double>>
/// and returns Var<double> (or a one-element vector of them).
template <class Fn>
GradientResult gradient(Fn&& fn, std::span<const double> x) {
    using V = Var<double>;
    Tape<double> tape;
    std::vector<V> in;
    in.reserve(x.size());
    for (double xi : x) in.push_back(tape.variable(xi));
    const V y = detail::scalar_target<V>(fn(std::span<const V>(in)));
    const std::vector<double> adj = tape.adjoints(y);

    GradientResult out;
    out.value = y.value();
    out.gradient.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out.gradient[i] = adj[in[i].id()];
    return out;
}

/// Forward-over-reverse sweep: the gradient of fn at x together with its
/// derivative along `direction`. fn receives std::span<const Var<Dual<double>>>.
template <class Fn>
DirectionalResult gradient_directional(Fn&& fn, std::span<const double> x, std::span<const double> direction) {
    if (direction.size() != x.size()) throw ShapeError("direction and input sizes differ");
    using D = Dual<double>;
    using V = Var<D>;
    Tape<D> tape;
    std::vector<V> in;
    in.reserve(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) in.push_back(tape.variable(D(x[i], direction[i])));
    const V y = detail::scalar_target<V>(fn(std::span<const V>(in)));
    const std::vector<D> adj = tape.adjoints(y);

    DirectionalResult out;
    out.value = y.value().value();
    out.directional = y.value().tangent();
    out.gradient.resize(x.size());
    out.hessian_vector.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out.gradient[i] = adj[in[i].id()].value();
        out.hessian_vector[i] = adj[in[i].id()].tangent();
    }
    return out;
}

}  // namespace thermonet::ad

#pragma once

// Dense networks and the LSTM cell. Parameters live in one flat vector per
// network; a layout describes how that vector is sliced into weights and
// biases. The forward passes are templated on the scalar type so that the
// same code evaluates with double, Dual or Var scalars.
//
// Storage convention: a weight matrix with `rows` outputs and `cols` inputs is
// stored row-major, W(r, c) = theta[offset + r * cols + c], followed by its
// bias vector.

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "thermonet/autodiff.hpp"
#include "thermonet/errors.hpp"

namespace thermonet::nn {

enum class Activation { sigmoid, tanh, swish, softplus, relu, linear };

inline std::string to_string(Activation a) {
    switch (a) {
        case Activation::sigmoid: return "sigmoid";
        case Activation::tanh: return "tanh";
        case Activation::swish: return "swish";
        case Activation::softplus: return "softplus";
        case Activation::relu: return "relu";
        case Activation::linear: return "linear";
    }
    return "linear";
}

inline Activation activation_from_string(const std::string& s) {
    for (Activation a : {Activation::sigmoid, Activation::tanh, Activation::swish, Activation::softplus,
                         Activation::relu, Activation::linear})
        if (to_string(a) == s) return a;
    throw ConfigError("unknown activation '" + s + "'");
}

template <class S>
S activate(Activation a, const S& x) {
    using std::tanh;
    using ad::relu;
    using ad::sigmoid;
    using ad::softplus;
    switch (a) {
        case Activation::sigmoid: return sigmoid(x);
        case Activation::tanh: return tanh(x);
        case Activation::swish: return x * sigmoid(x);
        case Activation::softplus: return softplus(x);
        case Activation::relu: return relu(x);
        case Activation::linear: return x;
    }
    return x;
}

/// First and second derivative of the activation at x (double only).
struct ActivationDerivatives {
    double value;
    double first;
    double second;
};

inline ActivationDerivatives activation_derivatives(Activation a, double x) {
    switch (a) {
        case Activation::sigmoid: {
            const double s = ad::sigmoid(x);
            return {s, s * (1 - s), s * (1 - s) * (1 - 2 * s)};
        }
        case Activation::tanh: {
            const double t = std::tanh(x);
            return {t, 1 - t * t, -2 * t * (1 - t * t)};
        }
        case Activation::swish: {
            const double s = ad::sigmoid(x);
            const double ds = s * (1 - s);
            return {x * s, s + x * ds, 2 * ds + x * ds * (1 - 2 * s)};
        }
        case Activation::softplus: {
            const double s = ad::sigmoid(x);
            return {ad::softplus(x), s, s * (1 - s)};
        }
        case Activation::relu: return {x > 0 ? x : 0.0, x > 0 ? 1.0 : 0.0, 0.0};
        case Activation::linear: return {x, 1.0, 0.0};
    }
    return {x, 1.0, 0.0};
}

// ---------------------------------------------------------------------------
// Dense networks

struct LayerSpec {
    std::size_t in = 0;
    std::size_t out = 0;
    Activation activation = Activation::linear;
    bool non_negative = false;

    std::size_t weight_count() const { return in * out; }
    std::size_t param_count() const { return in * out + out; }
};

struct DenseLayout {
    std::vector<LayerSpec> layers;

    /// Layers with the given hidden widths; hidden layers use `hidden`, the
    /// output layer `output`.
    static DenseLayout make(std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out,
                            Activation hidden_act, Activation output_act, bool non_negative_output = false) {
        DenseLayout l;
        std::size_t prev = in;
        for (std::size_t w : hidden) {
            if (w == 0) throw ConfigError("layer width must be positive");
            l.layers.push_back({prev, w, hidden_act, false});
            prev = w;
        }
        l.layers.push_back({prev, out, output_act, non_negative_output});
        return l;
    }

    std::size_t input_size() const { return layers.empty() ? 0 : layers.front().in; }
    std::size_t output_size() const { return layers.empty() ? 0 : layers.back().out; }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += l.param_count();
        return n;
    }

    std::size_t offset(std::size_t layer) const {
        std::size_t n = 0;
        for (std::size_t i = 0; i < layer; ++i) n += layers[i].param_count();
        return n;
    }

    void validate() const {
        if (layers.empty()) throw ShapeError("dense network has no layers");
        for (std::size_t i = 1; i < layers.size(); ++i)
            if (layers[i].in != layers[i - 1].out) throw ShapeError("dense layer dimensions do not chain");
    }
};

struct DenseParams {
    DenseLayout layout;
    std::vector<double> values;
};

/// a^l = act(W^l a^{l-1} + b^l), a^0 = x. theta may hold any scalar type
/// convertible into S.
template <class S, class P>
std::vector<S> dense_forward(const DenseLayout& layout, std::span<const P> theta, std::span<const S> x) {
    if (theta.size() != layout.param_count()) throw ShapeError("parameter vector does not match layout");
    if (x.size() != layout.input_size()) throw ShapeError("input size does not match network");
    std::vector<S> a(x.begin(), x.end());
    std::size_t off = 0;
    for (const LayerSpec& l : layout.layers) {
        std::vector<S> next(l.out);
        const std::size_t bias = off + l.weight_count();
        for (std::size_t r = 0; r < l.out; ++r) {
            S acc = S(theta[bias + r]);
            const std::size_t row = off + r * l.in;
            for (std::size_t c = 0; c < l.in; ++c) acc += S(theta[row + c]) * a[c];
            next[r] = activate(l.activation, acc);
        }
        a = std::move(next);
        off += l.param_count();
    }
    return a;
}

inline std::vector<double> dense_forward(const DenseParams& p, std::span<const double> x) {
    return dense_forward<double, double>(p.layout, p.values, x);
}

// ---------------------------------------------------------------------------
// LSTM

/// Stacked LSTM. Per layer: W (4H x in), R (4H x H), b (4H); gate order i, f, g, o.
struct LSTMLayout {
    std::size_t input = 0;
    std::size_t hidden = 0;
    std::size_t layers = 1;

    std::size_t layer_input(std::size_t l) const { return l == 0 ? input : hidden; }
    std::size_t layer_param_count(std::size_t l) const {
        return 4 * hidden * layer_input(l) + 4 * hidden * hidden + 4 * hidden;
    }
    std::size_t param_count() const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < layers; ++l) n += layer_param_count(l);
        return n;
    }
    std::size_t offset(std::size_t layer) const {
        std::size_t n = 0;
        for (std::size_t l = 0; l < layer; ++l) n += layer_param_count(l);
        return n;
    }
};

struct LSTMParams {
    LSTMLayout layout;
    std::vector<double> values;
};

template <class S>
struct RecurrentState {
    std::vector<std::vector<S>> h;  // per layer
    std::vector<std::vector<S>> c;

    static RecurrentState zeros(const LSTMLayout& layout) {
        RecurrentState s;
        s.h.assign(layout.layers, std::vector<S>(layout.hidden, S(0.0)));
        s.c.assign(layout.layers, std::vector<S>(layout.hidden, S(0.0)));
        return s;
    }

    const std::vector<S>& top() const { return h.back(); }
};

/// One timestep through every layer of the stack.
template <class S, class P>
RecurrentState<S> lstm_step(const LSTMLayout& layout, std::span<const P> theta, std::span<const S> x,
                            const RecurrentState<S>& state) {
    using ad::sigmoid;
    using std::tanh;
    if (theta.size() != layout.param_count()) throw ShapeError("LSTM parameters do not match layout");
    if (x.size() != layout.input) throw ShapeError("LSTM input size mismatch");
    if (state.h.size() != layout.layers || state.c.size() != layout.layers)
        throw ShapeError("recurrent state does not match LSTM depth");

    const std::size_t H = layout.hidden;
    RecurrentState<S> next;
    next.h.resize(layout.layers);
    next.c.resize(layout.layers);
    std::vector<S> in(x.begin(), x.end());
    for (std::size_t l = 0; l < layout.layers; ++l) {
        const std::size_t n_in = layout.layer_input(l);
        const std::size_t w_off = layout.offset(l);
        const std::size_t r_off = w_off + 4 * H * n_in;
        const std::size_t b_off = r_off + 4 * H * H;
        const auto& h_prev = state.h[l];
        const auto& c_prev = state.c[l];
        if (h_prev.size() != H || c_prev.size() != H) throw ShapeError("recurrent state width mismatch");

        std::vector<S> pre(4 * H);
        for (std::size_t r = 0; r < 4 * H; ++r) {
            S acc = S(theta[b_off + r]);
            for (std::size_t c = 0; c < n_in; ++c) acc += S(theta[w_off + r * n_in + c]) * in[c];
            for (std::size_t c = 0; c < H; ++c) acc += S(theta[r_off + r * H + c]) * h_prev[c];
            pre[r] = acc;
        }
        next.h[l].resize(H);
        next.c[l].resize(H);
        for (std::size_t k = 0; k < H; ++k) {
            const S i = sigmoid(pre[k]);
            const S f = sigmoid(pre[H + k]);
            const S g = tanh(pre[2 * H + k]);
            const S o = sigmoid(pre[3 * H + k]);
            next.c[l][k] = f * c_prev[k] + i * g;
            next.h[l][k] = o * tanh(next.c[l][k]);
        }
        in = next.h[l];
    }
    return next;
}

inline RecurrentState<double> lstm_step(const LSTMParams& p, std::span<const double> x,
                                        const RecurrentState<double>& state) {
    return lstm_step<double, double>(p.layout, p.values, x, state);
}

// ---------------------------------------------------------------------------
// Initialization

/// Uniform +-sqrt(6 / (fan_in + fan_out)) weights and zero biases. Layers
/// flagged non-negative draw from [0, limit].
inline DenseParams init_dense(const DenseLayout& layout, std::mt19937_64& rng) {
    layout.validate();
    DenseParams p{layout, std::vector<double>(layout.param_count(), 0.0)};
    std::size_t off = 0;
    for (const LayerSpec& l : layout.layers) {
        const double lim = std::sqrt(6.0 / double(l.in + l.out));
        std::uniform_real_distribution<double> dist(l.non_negative ? 0.0 : -lim, lim);
        for (std::size_t k = 0; k < l.weight_count(); ++k) p.values[off + k] = dist(rng);
        off += l.param_count();
    }
    return p;
}

/// Same fan-in scaling as dense layers; forget-gate biases start at 1.
inline LSTMParams init_lstm(const LSTMLayout& layout, std::mt19937_64& rng) {
    LSTMParams p{layout, std::vector<double>(layout.param_count(), 0.0)};
    const std::size_t H = layout.hidden;
    for (std::size_t l = 0; l < layout.layers; ++l) {
        const std::size_t n_in = layout.layer_input(l);
        const std::size_t off = layout.offset(l);
        const double lim_w = std::sqrt(6.0 / double(n_in + H));
        const double lim_r = std::sqrt(6.0 / double(2 * H));
        std::uniform_real_distribution<double> dw(-lim_w, lim_w), dr(-lim_r, lim_r);
        for (std::size_t k = 0; k < 4 * H * n_in; ++k) p.values[off + k] = dw(rng);
        const std::size_t r_off = off + 4 * H * n_in;
        for (std::size_t k = 0; k < 4 * H * H; ++k) p.values[r_off + k] = dr(rng);
        const std::size_t b_off = r_off + 4 * H * H;
        for (std::size_t k = 0; k < H; ++k) p.values[b_off + H + k] = 1.0;
    }
    return p;
}

/// Clamp every layer flagged non-negative at zero.
inline void clamp_non_negative(const DenseLayout& layout, std::span<double> theta) {
    std::size_t off = 0;
    for (const LayerSpec& l : layout.layers) {
        if (l.non_negative)
            for (std::size_t k = 0; k < l.param_count(); ++k) theta[off + k] = std::max(0.0, theta[off + k]);
        off += l.param_count();
    }
}

}  // namespace thermonet::nn

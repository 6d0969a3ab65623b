#pragma once

// Batched evaluation of the model and its loss gradient.
//
// A batch of B sequences padded to T steps is laid out time-major: column
// c = t * B + b. Every network evaluates all T * B columns with one matrix
// product per layer except the LSTM recurrence, which steps through t.
//
// The free-energy head is differentiated twice. Its input gradient G gives
// the stress and the dissipation; the loss depends on G, so the parameter
// gradient needs d/dtheta (V . G) for the loss adjoint V of G. That is the
// tangent of psi along V, which one forward-over-reverse sweep provides:
//
//   forward    pre_l, a_l
//   reverse    delta_l = dpsi/dpre_l,        G  = W_1^T delta_1
//   tangent    pre'_l (input tangent V)
//   tangent of reverse  delta'_l,            G' = W_1^T delta'_1 = H V
//   dW_l = delta'_l a_{l-1}^T + delta_l a'_{l-1}^T,  db_l = delta'_l

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "thermonet/errors.hpp"
#include "thermonet/kinematics.hpp"
#include "thermonet/nn.hpp"
#include "thermonet/pidl.hpp"

namespace thermonet::batch {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstRowMap = Eigen::Map<const RowMat>;
using RowMap = Eigen::Map<RowMat>;

/// Per-sequence data that does not depend on the parameters.
struct PreparedSequence {
    Mat x;         // scaled LSTM input, n_in x T
    Mat mtilde;    // 6 * n_I x T; column t is the 6 x n_I map dpsi/dI_scaled -> Voigt sigma
    Mat target;    // Voigt undamaged stress, 6 x T
    Vec dt;        // T
    Vec d;         // oracle damage, T

    std::size_t size() const { return std::size_t(x.cols()); }
};

inline PreparedSequence prepare(const pathgen::LoadedSequence& seq, const pidl::Model& m) {
    const auto& cfg = m.config;
    const std::size_t nI = cfg.invariant_count();
    const std::size_t T = seq.size();
    if (seq.dt.size() != T || seq.sigma_undamaged.size() != T)
        throw DataError("sequence arrays have inconsistent lengths");
    PreparedSequence p;
    p.x.resize(Eigen::Index(cfg.input_count()), Eigen::Index(T));
    p.mtilde.resize(Eigen::Index(6 * nI), Eigen::Index(T));
    p.target.resize(6, Eigen::Index(T));
    p.dt.resize(Eigen::Index(T));
    p.d.resize(Eigen::Index(T));
    for (std::size_t t = 0; t < T; ++t) {
        const Tensor3& F = seq.F[t];
        const Tensor3 C = right_cauchy_green(F);
        const auto inv = invariants(C, cfg.frame);
        const auto x = m.scalers.input.scale(pidl::raw_features(inv, seq.dt[t], seq.ambient, cfg));
        for (std::size_t k = 0; k < x.size(); ++k) p.x(Eigen::Index(k), Eigen::Index(t)) = x[k];
        const auto dI = invariant_derivatives(C, cfg.frame);
        const double J = F.determinant();
        for (std::size_t a = 0; a < nI; ++a) {
            const Tensor3 s = sym(2.0 / J * F * dI[a] * F.transpose()) / m.scalers.input.half_range(a);
            const auto v = to_voigt(s);
            for (int k = 0; k < 6; ++k) p.mtilde(Eigen::Index(6 * a + k), Eigen::Index(t)) = v[k];
        }
        const auto sv = to_voigt(seq.sigma_undamaged[t]);
        for (int k = 0; k < 6; ++k) p.target(k, Eigen::Index(t)) = sv[k];
        p.dt(Eigen::Index(t)) = seq.dt[t];
        p.d(Eigen::Index(t)) = seq.d.empty() ? 0.0 : seq.d[t];
    }
    return p;
}

inline std::vector<PreparedSequence> prepare(const std::vector<pathgen::LoadedSequence>& data, const pidl::Model& m) {
    std::vector<PreparedSequence> out;
    out.reserve(data.size());
    for (const auto& s : data) out.push_back(prepare(s, m));
    return out;
}

/// Sequences gathered into time-major columns. Shorter sequences repeat
/// their last frame and are masked out past their end.
struct Batch {
    std::size_t T = 0;
    std::size_t B = 0;
    Mat x;
    Mat mtilde;
    Mat target;
    Vec dt;
    Vec mask;
    std::size_t valid = 0;

    std::size_t cols() const { return T * B; }
};

inline Batch gather(const std::vector<PreparedSequence>& data, std::span<const std::size_t> index) {
    if (index.empty()) throw UsageError("empty batch");
    Batch b;
    b.B = index.size();
    for (std::size_t i : index) b.T = std::max(b.T, data.at(i).size());
    const auto N = Eigen::Index(b.cols());
    const auto& first = data[index[0]];
    b.x.resize(first.x.rows(), N);
    b.mtilde.resize(first.mtilde.rows(), N);
    b.target.resize(6, N);
    b.dt.resize(N);
    b.mask.resize(N);
    for (std::size_t j = 0; j < b.B; ++j) {
        const auto& s = data[index[j]];
        if (s.x.rows() != b.x.rows()) throw ShapeError("sequences in a batch have different feature counts");
        for (std::size_t t = 0; t < b.T; ++t) {
            const auto c = Eigen::Index(t * b.B + j);
            const auto src = Eigen::Index(std::min(t, s.size() - 1));
            b.x.col(c) = s.x.col(src);
            b.mtilde.col(c) = s.mtilde.col(src);
            b.target.col(c) = s.target.col(src);
            b.dt(c) = s.dt(src);
            b.mask(c) = t < s.size() ? 1.0 : 0.0;
        }
        b.valid += s.size();
    }
    return b;
}

// ---------------------------------------------------------------------------
// Elementwise activations

inline void activation_eval(nn::Activation act, const Mat& pre, Mat& value, Mat* d1, Mat* d2) {
    value.resize(pre.rows(), pre.cols());
    if (d1) d1->resize(pre.rows(), pre.cols());
    if (d2) d2->resize(pre.rows(), pre.cols());
    const Eigen::Index n = pre.size();
    const double* x = pre.data();
    double* v = value.data();
    double* p1 = d1 ? d1->data() : nullptr;
    double* p2 = d2 ? d2->data() : nullptr;
    switch (act) {
        case nn::Activation::linear:
            value = pre;
            if (d1) d1->setOnes();
            if (d2) d2->setZero();
            return;
        case nn::Activation::softplus:
            for (Eigen::Index k = 0; k < n; ++k) {
                const double s = ad::sigmoid(x[k]);
                v[k] = ad::softplus(x[k]);
                if (p1) p1[k] = s;
                if (p2) p2[k] = s * (1 - s);
            }
            return;
        case nn::Activation::swish:
            for (Eigen::Index k = 0; k < n; ++k) {
                const double s = ad::sigmoid(x[k]);
                const double ds = s * (1 - s);
                v[k] = x[k] * s;
                if (p1) p1[k] = s + x[k] * ds;
                if (p2) p2[k] = 2 * ds + x[k] * ds * (1 - 2 * s);
            }
            return;
        default:
            for (Eigen::Index k = 0; k < n; ++k) {
                const auto r = nn::activation_derivatives(act, x[k]);
                v[k] = r.value;
                if (p1) p1[k] = r.first;
                if (p2) p2[k] = r.second;
            }
            return;
    }
}

inline ConstRowMap weight(const nn::LayerSpec& l, const double* theta) {
    return ConstRowMap(theta, Eigen::Index(l.out), Eigen::Index(l.in));
}
inline Eigen::Map<const Vec> bias(const nn::LayerSpec& l, const double* theta) {
    return Eigen::Map<const Vec>(theta + l.weight_count(), Eigen::Index(l.out));
}

// ---------------------------------------------------------------------------
// Dense network, first order

struct DenseCache {
    std::vector<Mat> act;  // act[0] = input, act[l] = output of layer l
    std::vector<Mat> d1;   // activation derivative per layer
};

inline const Mat& dense_forward(const nn::DenseLayout& layout, const double* theta, const Mat& in, DenseCache& cache,
                                bool keep_derivatives = true) {
    const std::size_t L = layout.layers.size();
    cache.act.resize(L + 1);
    cache.d1.resize(L);
    cache.act[0] = in;
    std::size_t off = 0;
    Mat pre;
    for (std::size_t l = 0; l < L; ++l) {
        const auto& spec = layout.layers[l];
        pre.noalias() = weight(spec, theta + off) * cache.act[l];
        pre.colwise() += bias(spec, theta + off);
        activation_eval(spec.activation, pre, cache.act[l + 1], keep_derivatives ? &cache.d1[l] : nullptr, nullptr);
        off += spec.param_count();
    }
    return cache.act[L];
}

/// Accumulates parameter gradients into grad and returns the input adjoint.
inline Mat dense_backward(const nn::DenseLayout& layout, const double* theta, const DenseCache& cache, const Mat& d_out,
                          double* grad) {
    const std::size_t L = layout.layers.size();
    Mat delta = d_out.cwiseProduct(cache.d1[L - 1]);
    Mat d_in;
    for (std::size_t l = L; l-- > 0;) {
        const auto& spec = layout.layers[l];
        const std::size_t off = layout.offset(l);
        RowMap(grad + off, Eigen::Index(spec.out), Eigen::Index(spec.in)).noalias() +=
            delta * cache.act[l].transpose();
        Eigen::Map<Vec>(grad + off + spec.weight_count(), Eigen::Index(spec.out)) += delta.rowwise().sum();
        d_in.noalias() = weight(spec, theta + off).transpose() * delta;
        if (l > 0) delta = d_in.cwiseProduct(cache.d1[l - 1]);
    }
    return d_in;
}

// ---------------------------------------------------------------------------
// Free-energy head, second order

struct PsiCache {
    std::vector<Mat> act;    // act[0] = input
    std::vector<Mat> d1;
    std::vector<Mat> d2;
    std::vector<Mat> delta;  // dpsi/dpre_l
    Mat G;                   // dpsi/dinput

    const Mat& value() const { return act.back(); }
};

/// Forward pass and input gradient.
inline void psi_forward(const nn::DenseLayout& layout, const double* theta, const Mat& in, PsiCache& c,
                        bool second_order = true) {
    const std::size_t L = layout.layers.size();
    c.act.resize(L + 1);
    c.d1.resize(L);
    c.d2.resize(L);
    c.delta.resize(L);
    c.act[0] = in;
    std::size_t off = 0;
    Mat pre;
    for (std::size_t l = 0; l < L; ++l) {
        const auto& spec = layout.layers[l];
        pre.noalias() = weight(spec, theta + off) * c.act[l];
        pre.colwise() += bias(spec, theta + off);
        activation_eval(spec.activation, pre, c.act[l + 1], &c.d1[l], second_order ? &c.d2[l] : nullptr);
        off += spec.param_count();
    }
    c.delta[L - 1] = c.d1[L - 1];
    for (std::size_t l = L; l-- > 1;) {
        const auto& spec = layout.layers[l];
        c.delta[l - 1].noalias() = weight(spec, theta + layout.offset(l)).transpose() * c.delta[l];
        c.delta[l - 1].array() *= c.d1[l - 1].array();
    }
    c.G.noalias() = weight(layout.layers[0], theta).transpose() * c.delta[0];
}

/// Gradient of sum_c V(:,c) . G(:,c): parameter part accumulated into grad,
/// input part (H V) returned.
inline Mat psi_adjoint(const nn::DenseLayout& layout, const double* theta, const PsiCache& c, const Mat& V,
                       double* grad) {
    const std::size_t L = layout.layers.size();
    std::vector<Mat> pre_t(L);   // tangent of pre_l
    std::vector<Mat> act_t(L);   // tangent of act_l (act_t[0] = V)
    act_t[0] = V;
    for (std::size_t l = 0; l < L; ++l) {
        const auto& spec = layout.layers[l];
        pre_t[l].noalias() = weight(spec, theta + layout.offset(l)) * act_t[l];
        if (l + 1 < L) act_t[l + 1] = c.d1[l].cwiseProduct(pre_t[l]);
    }
    Mat delta_t = c.d2[L - 1].cwiseProduct(pre_t[L - 1]);
    Mat g_t;
    for (std::size_t l = L; l-- > 0;) {
        const auto& spec = layout.layers[l];
        const std::size_t off = layout.offset(l);
        RowMap gw(grad + off, Eigen::Index(spec.out), Eigen::Index(spec.in));
        gw.noalias() += delta_t * c.act[l].transpose();
        gw.noalias() += c.delta[l] * act_t[l].transpose();
        Eigen::Map<Vec>(grad + off + spec.weight_count(), Eigen::Index(spec.out)) += delta_t.rowwise().sum();
        const auto W = weight(spec, theta + off);
        g_t.noalias() = W.transpose() * delta_t;
        if (l > 0) {
            Mat g = W.transpose() * c.delta[l];
            delta_t = g_t.cwiseProduct(c.d1[l - 1]) + g.cwiseProduct(c.d2[l - 1]).cwiseProduct(pre_t[l - 1]);
        }
    }
    return g_t;
}

// ---------------------------------------------------------------------------
// LSTM

struct LSTMCache {
    std::size_t T = 0;
    std::size_t B = 0;
    std::vector<Mat> input;  // per layer, n_in x TB
    std::vector<Mat> gates;  // per layer, 4H x TB (i, f, g, o after activation)
    std::vector<Mat> c;      // per layer, H x TB
    std::vector<Mat> h;      // per layer, H x TB

    const Mat& top() const { return h.back(); }
};

inline void lstm_forward(const nn::LSTMLayout& layout, const double* theta, const Mat& x, std::size_t T,
                         std::size_t B, LSTMCache& cache) {
    const auto H = Eigen::Index(layout.hidden);
    const auto Bi = Eigen::Index(B);
    cache.T = T;
    cache.B = B;
    cache.input.resize(layout.layers);
    cache.gates.resize(layout.layers);
    cache.c.resize(layout.layers);
    cache.h.resize(layout.layers);
    Mat rec(4 * H, Bi);
    for (std::size_t l = 0; l < layout.layers; ++l) {
        const auto n_in = Eigen::Index(layout.layer_input(l));
        const double* w = theta + layout.offset(l);
        const double* r = w + 4 * H * n_in;
        const double* b = r + 4 * H * H;
        cache.input[l] = l == 0 ? x : cache.h[l - 1];
        Mat& gates = cache.gates[l];
        gates.noalias() = ConstRowMap(w, 4 * H, n_in) * cache.input[l];
        gates.colwise() += Eigen::Map<const Vec>(b, 4 * H);
        cache.c[l].resize(H, Eigen::Index(T) * Bi);
        cache.h[l].resize(H, Eigen::Index(T) * Bi);
        const ConstRowMap R(r, 4 * H, H);
        for (std::size_t t = 0; t < T; ++t) {
            const auto c0 = Eigen::Index(t) * Bi;
            auto gt = gates.middleCols(c0, Bi);
            if (t > 0) {
                rec.noalias() = R * cache.h[l].middleCols(c0 - Bi, Bi);
                gt += rec;
            }
            for (Eigen::Index j = 0; j < Bi; ++j)
                for (Eigen::Index k = 0; k < H; ++k) {
                    const double i = ad::sigmoid(gt(k, j));
                    const double f = ad::sigmoid(gt(H + k, j));
                    const double g = std::tanh(gt(2 * H + k, j));
                    const double o = ad::sigmoid(gt(3 * H + k, j));
                    gt(k, j) = i;
                    gt(H + k, j) = f;
                    gt(2 * H + k, j) = g;
                    gt(3 * H + k, j) = o;
                    const double cp = t > 0 ? cache.c[l](k, c0 - Bi + j) : 0.0;
                    const double cn = f * cp + i * g;
                    cache.c[l](k, c0 + j) = cn;
                    cache.h[l](k, c0 + j) = o * std::tanh(cn);
                }
        }
    }
}

/// BPTT from the adjoint of the top hidden states.
inline void lstm_backward(const nn::LSTMLayout& layout, const double* theta, const LSTMCache& cache, Mat d_top,
                          double* grad) {
    const auto H = Eigen::Index(layout.hidden);
    const auto Bi = Eigen::Index(cache.B);
    const std::size_t T = cache.T;
    Mat dh_next(H, Bi), dc_next(H, Bi);
    Mat dpre(4 * H, Eigen::Index(T) * Bi);
    for (std::size_t l = layout.layers; l-- > 0;) {
        const auto n_in = Eigen::Index(layout.layer_input(l));
        const std::size_t off = layout.offset(l);
        const double* w = theta + off;
        const ConstRowMap R(w + 4 * H * n_in, 4 * H, H);
        const Mat& gates = cache.gates[l];
        dh_next.setZero();
        dc_next.setZero();
        for (std::size_t t = T; t-- > 0;) {
            const auto c0 = Eigen::Index(t) * Bi;
            for (Eigen::Index j = 0; j < Bi; ++j)
                for (Eigen::Index k = 0; k < H; ++k) {
                    const double i = gates(k, c0 + j);
                    const double f = gates(H + k, c0 + j);
                    const double g = gates(2 * H + k, c0 + j);
                    const double o = gates(3 * H + k, c0 + j);
                    const double tc = std::tanh(cache.c[l](k, c0 + j));
                    const double cp = t > 0 ? cache.c[l](k, c0 - Bi + j) : 0.0;
                    const double dh = d_top(k, c0 + j) + dh_next(k, j);
                    const double dc = dh * o * (1 - tc * tc) + dc_next(k, j);
                    dpre(k, c0 + j) = dc * g * i * (1 - i);
                    dpre(H + k, c0 + j) = dc * cp * f * (1 - f);
                    dpre(2 * H + k, c0 + j) = dc * i * (1 - g * g);
                    dpre(3 * H + k, c0 + j) = dh * tc * o * (1 - o);
                    dc_next(k, j) = dc * f;
                }
            dh_next.noalias() = R.transpose() * dpre.middleCols(c0, Bi);
        }
        const auto N = Eigen::Index(T) * Bi;
        RowMap(grad + off, 4 * H, n_in).noalias() += dpre * cache.input[l].transpose();
        if (T > 1)
            RowMap(grad + off + 4 * H * n_in, 4 * H, H).noalias() +=
                dpre.rightCols(N - Bi) * cache.h[l].leftCols(N - Bi).transpose();
        Eigen::Map<Vec>(grad + off + 4 * H * n_in + 4 * H * H, 4 * H) += dpre.rowwise().sum();
        if (l > 0) d_top.noalias() = ConstRowMap(w, 4 * H, n_in).transpose() * dpre;
    }
}

// ---------------------------------------------------------------------------
// Model evaluation and loss

struct ParamView {
    const double* lstm;
    const double* znn;
    const double* psi;
};

inline ParamView view(const pidl::Model& m, const Vec& theta) {
    const double* p = theta.data();
    return {p, p + m.lstm.values.size(), p + m.lstm.values.size() + m.znn.values.size()};
}

// Kernels read and accumulate through aligned copies so that vectorized
// reductions do not depend on where the caller's buffer happens to live.
inline Vec aligned_params(const pidl::Model& m, std::span<const double> theta) {
    if (theta.size() != m.param_count()) throw ShapeError("parameter vector does not match model");
    return Eigen::Map<const Vec>(theta.data(), Eigen::Index(theta.size()));
}

struct ForwardCache {
    Vec theta;
    LSTMCache lstm;
    DenseCache znn;
    PsiCache psi;      // columns [actual | identity]
    Mat sigma;         // Voigt, 6 x N
    Mat zdot;          // n_z x N
    Mat dg;            // dpsi/dz (actual - identity), n_z x N
    Vec D;             // N
    Vec psi_value;     // psi(C) - psi(I), N
    Mat residual;      // (sigma - target) / stress half range, 6 x N
};

struct LossValue {
    double stress = 0.0;
    double dissipation = 0.0;
};

inline Vec stress_scale(const pidl::Model& m) {
    Vec h(6);
    for (int k = 0; k < 6; ++k) h(k) = m.scalers.stress.half_range(std::size_t(k));
    return h;
}

inline LossValue forward(const pidl::Model& m, std::span<const double> theta, const Batch& b, ForwardCache& f,
                         bool second_order = true) {
    f.theta = aligned_params(m, theta);
    const ParamView p = view(m, f.theta);
    const std::size_t nz = m.config.n_internal;
    const std::size_t nI = m.config.invariant_count();
    const auto N = Eigen::Index(b.cols());
    const auto Bi = Eigen::Index(b.B);

    lstm_forward(m.lstm.layout, p.lstm, b.x, b.T, b.B, f.lstm);
    const Mat& Z = dense_forward(m.znn.layout, p.znn, f.lstm.top(), f.znn);

    Mat U(Eigen::Index(nz + nI), 2 * N);
    U.topLeftCorner(Eigen::Index(nz), N) = Z;
    U.topRightCorner(Eigen::Index(nz), N) = Z;
    U.bottomLeftCorner(Eigen::Index(nI), N) = b.x.topRows(Eigen::Index(nI));
    const auto x0 = pidl::identity_scaled_invariants(m);
    for (std::size_t a = 0; a < nI; ++a) U.row(Eigen::Index(nz + a)).tail(N).setConstant(x0[a]);
    psi_forward(m.psi.layout, p.psi, U, f.psi, second_order);

    const Mat& G = f.psi.G;
    f.psi_value = (f.psi.value().leftCols(N) - f.psi.value().rightCols(N)).transpose();
    f.dg = G.topLeftCorner(Eigen::Index(nz), N) - G.topRightCorner(Eigen::Index(nz), N);
    f.sigma.resize(6, N);
    for (Eigen::Index c = 0; c < N; ++c)
        f.sigma.col(c).noalias() = Eigen::Map<const Eigen::Matrix<double, 6, Eigen::Dynamic>>(
                                       b.mtilde.col(c).data(), 6, Eigen::Index(nI)) *
                                   G.col(c).segment(Eigen::Index(nz), Eigen::Index(nI));

    f.zdot.setZero(Eigen::Index(nz), N);
    f.D.setZero(N);
    for (Eigen::Index c = Bi; c < N; ++c) {
        f.zdot.col(c) = (Z.col(c) - Z.col(c - Bi)) / b.dt(c);
        f.D(c) = -f.dg.col(c).dot(f.zdot.col(c));
    }

    const Vec h = stress_scale(m);
    f.residual = (f.sigma - b.target).array().colwise() / h.array();
    f.residual.array().rowwise() *= b.mask.transpose().array();

    LossValue L;
    L.stress = f.residual.cwiseAbs().sum() / (6.0 * double(b.valid));
    for (Eigen::Index c = 0; c < N; ++c)
        if (b.mask(c) > 0 && f.D(c) < 0) L.dissipation -= f.D(c);
    L.dissipation /= double(b.valid);
    return L;
}

/// Gradient of stress_weight * L_sigma + dissipation_weight * L_d, accumulated into grad.
inline void backward(const pidl::Model& m, std::span<const double> theta, const Batch& b, const ForwardCache& f,
                     double stress_weight, double dissipation_weight, std::span<double> grad) {
    const Vec th = aligned_params(m, theta);
    const ParamView p = view(m, th);
    if (grad.size() != theta.size()) throw ShapeError("gradient buffer does not match parameters");
    Vec g = Vec::Zero(th.size());
    double* g_lstm = g.data();
    double* g_znn = g_lstm + m.lstm.values.size();
    double* g_psi = g_znn + m.znn.values.size();

    const std::size_t nz = m.config.n_internal;
    const std::size_t nI = m.config.invariant_count();
    const auto N = Eigen::Index(b.cols());
    const auto Bi = Eigen::Index(b.B);
    const Vec h = stress_scale(m);

    Mat V = Mat::Zero(Eigen::Index(nz + nI), 2 * N);
    Mat dZ = Mat::Zero(Eigen::Index(nz), N);
    if (stress_weight != 0.0) {
        const double scale = stress_weight / (6.0 * double(b.valid));
        for (Eigen::Index c = 0; c < N; ++c) {
            if (b.mask(c) == 0.0) continue;
            Eigen::Matrix<double, 6, 1> w;
            for (int k = 0; k < 6; ++k) {
                const double r = f.residual(k, c);
                w(k) = (r > 0 ? scale : r < 0 ? -scale : 0.0) / h(k);
            }
            V.col(c).segment(Eigen::Index(nz), Eigen::Index(nI)).noalias() =
                Eigen::Map<const Eigen::Matrix<double, 6, Eigen::Dynamic>>(b.mtilde.col(c).data(), 6,
                                                                          Eigen::Index(nI))
                    .transpose() *
                w;
        }
    }
    if (dissipation_weight != 0.0) {
        const double q = -dissipation_weight / double(b.valid);
        for (Eigen::Index c = Bi; c < N; ++c) {
            if (b.mask(c) == 0.0 || !(f.D(c) < 0)) continue;
            V.col(c).head(Eigen::Index(nz)) = -q * f.zdot.col(c);
            V.col(N + c).head(Eigen::Index(nz)) = q * f.zdot.col(c);
            const auto s = (q / b.dt(c)) * f.dg.col(c);
            dZ.col(c) -= s;
            dZ.col(c - Bi) += s;
        }
    }

    const Mat HV = psi_adjoint(m.psi.layout, p.psi, f.psi, V, g_psi);
    dZ += HV.topLeftCorner(Eigen::Index(nz), N) + HV.topRightCorner(Eigen::Index(nz), N);
    Mat dH = dense_backward(m.znn.layout, p.znn, f.znn, dZ, g_znn);
    lstm_backward(m.lstm.layout, p.lstm, f.lstm, std::move(dH), g_lstm);
    Eigen::Map<Vec>(grad.data(), g.size()) += g;
}

}  // namespace thermonet::batch

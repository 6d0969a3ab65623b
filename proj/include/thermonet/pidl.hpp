#pragma once

// Physics-informed constitutive model.
//
//   LSTM     scaled [invariants, dt, ambient]    -> h
//   F_znn    h                                   -> z      (swish, linear out)
//   F_psinn  [z, scaled invariants]              -> psi_raw (softplus, W_L, b_L >= 0)
//
//   psi   = psi_raw(I(C), z) - psi_raw(I(1), z)
//   S     = 2 sum_a dpsi/dI_a dI_a/dC
//   sigma = J^-1 F S F^T
//   D     = -sum_a dpsi/dz_a (z_a - z_a,prev) / dt

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "thermonet/autodiff.hpp"
#include "thermonet/errors.hpp"
#include "thermonet/kinematics.hpp"
#include "thermonet/nn.hpp"
#include "thermonet/optimizer.hpp"
#include "thermonet/oracle.hpp"
#include "thermonet/pathgen.hpp"

namespace thermonet::pidl {

using oracle::AmbientState;
using pathgen::LoadedSequence;

inline const std::vector<std::string>& ambient_feature_names() {
    static const std::vector<std::string> names{"dt", "w_w", "v_np", "v_f1", "v_f2", "T"};
    return names;
}

struct PIDLConfig {
    std::size_t n_internal = 10;
    FiberFrame frame = FiberFrame::two_families(Vec3::UnitX(), Vec3::UnitY());
    std::size_t lstm_width = 100;
    std::size_t lstm_layers = 2;
    std::vector<std::size_t> znn_hidden{100, 100};
    std::vector<std::size_t> psi_hidden{100, 100};
    std::vector<std::string> features = ambient_feature_names();

    std::size_t invariant_count() const { return frame.invariant_count(); }
    std::size_t input_count() const { return invariant_count() + features.size(); }

    void validate() const {
        if (n_internal < 1) throw ConfigError("n_internal must be >= 1");
        if (lstm_width < 1 || lstm_layers < 1) throw ConfigError("LSTM width and depth must be positive");
        for (auto w : znn_hidden)
            if (w < 1) throw ConfigError("znn widths must be positive");
        for (auto w : psi_hidden)
            if (w < 1) throw ConfigError("psi widths must be positive");
        for (const auto& f : features) {
            const auto& known = ambient_feature_names();
            if (std::find(known.begin(), known.end(), f) == known.end())
                throw ConfigError("unknown input feature '" + f + "'");
        }
    }
};

inline std::vector<std::string> invariant_names(std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 1; i <= n; ++i) out.push_back("I" + std::to_string(i));
    return out;
}

/// Affine map of each feature onto [-1, 1] from training-set extrema.
struct FeatureScaler {
    std::vector<std::string> names;
    std::vector<double> min;
    std::vector<double> max;

    bool fitted() const { return !names.empty() && min.size() == names.size() && max.size() == names.size(); }
    std::size_t size() const { return names.size(); }

    double center(std::size_t i) const { return 0.5 * (max[i] + min[i]); }
    /// Half range; features that never vary in the data get 1.
    double half_range(std::size_t i) const {
        const double s = 0.5 * (max[i] - min[i]);
        return s > 0.0 ? s : 1.0;
    }

    std::vector<double> scale(std::span<const double> raw) const {
        if (!fitted()) throw UsageError("feature scaler has not been fitted");
        if (raw.size() != size()) throw ShapeError("feature vector size does not match scaler");
        std::vector<double> out(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - center(i)) / half_range(i);
        return out;
    }

    std::vector<double> unscale(std::span<const double> x) const {
        if (!fitted()) throw UsageError("feature scaler has not been fitted");
        if (x.size() != size()) throw ShapeError("feature vector size does not match scaler");
        std::vector<double> out(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * half_range(i) + center(i);
        return out;
    }

    void observe(std::span<const double> raw) {
        if (raw.size() != names.size()) throw ShapeError("feature vector size does not match scaler");
        if (min.empty()) {
            min.assign(raw.begin(), raw.end());
            max.assign(raw.begin(), raw.end());
            return;
        }
        for (std::size_t i = 0; i < raw.size(); ++i) {
            min[i] = std::min(min[i], raw[i]);
            max[i] = std::max(max[i], raw[i]);
        }
    }
};

inline double ambient_feature(const std::string& name, double dt, const AmbientState& a) {
    if (name == "dt") return dt;
    if (name == "w_w") return a.w_w;
    if (name == "v_np") return a.v_np;
    if (name == "v_f1") return a.v_f[0];
    if (name == "v_f2") return a.v_f[1];
    if (name == "T") return a.T;
    throw ConfigError("unknown input feature '" + name + "'");
}

/// Unscaled LSTM input: invariants followed by the configured features.
inline std::vector<double> raw_features(const InvariantVector& inv, double dt, const AmbientState& a,
                                        const PIDLConfig& cfg) {
    std::vector<double> out(inv.span().begin(), inv.span().end());
    for (const auto& f : cfg.features) out.push_back(ambient_feature(f, dt, a));
    return out;
}

struct Scalers {
    FeatureScaler input;   // invariants + features
    FeatureScaler stress;  // Voigt stress components, used only through half_range
};

inline Scalers fit_scalers(const std::vector<LoadedSequence>& data, const PIDLConfig& cfg) {
    Scalers s;
    s.input.names = invariant_names(cfg.invariant_count());
    for (const auto& f : cfg.features) s.input.names.push_back(f);
    s.stress.names = {"s11", "s22", "s33", "s23", "s13", "s12"};
    for (const auto& seq : data) {
        for (std::size_t t = 0; t < seq.size(); ++t) {
            const InvariantVector inv = invariants(right_cauchy_green(seq.F[t]), cfg.frame);
            s.input.observe(raw_features(inv, seq.dt[t], seq.ambient, cfg));
            const auto v = to_voigt(seq.sigma_undamaged[t]);
            s.stress.observe(v);
        }
    }
    if (!s.input.fitted()) throw DataError("cannot fit scalers on an empty dataset");
    return s;
}

struct Model {
    PIDLConfig config;
    Scalers scalers;
    nn::LSTMParams lstm;
    nn::DenseParams znn;
    nn::DenseParams psi;

    std::size_t param_count() const { return lstm.values.size() + znn.values.size() + psi.values.size(); }

    std::vector<double> flatten() const {
        std::vector<double> out;
        out.reserve(param_count());
        out.insert(out.end(), lstm.values.begin(), lstm.values.end());
        out.insert(out.end(), znn.values.begin(), znn.values.end());
        out.insert(out.end(), psi.values.begin(), psi.values.end());
        return out;
    }

    void assign(std::span<const double> theta) {
        if (theta.size() != param_count()) throw ShapeError("parameter vector size does not match model");
        auto it = theta.begin();
        std::copy(it, it + lstm.values.size(), lstm.values.begin());
        it += lstm.values.size();
        std::copy(it, it + znn.values.size(), znn.values.begin());
        it += znn.values.size();
        std::copy(it, it + psi.values.size(), psi.values.begin());
    }

    /// Flat ranges that the optimizer must keep non-negative.
    std::vector<nn::ClampRange> non_negative_ranges() const {
        std::vector<nn::ClampRange> out;
        std::size_t off = lstm.values.size() + znn.values.size();
        for (const auto& l : psi.layout.layers) {
            if (l.non_negative) out.push_back({off, off + l.param_count()});
            off += l.param_count();
        }
        return out;
    }
};

inline nn::DenseLayout znn_layout(const PIDLConfig& cfg) {
    return nn::DenseLayout::make(cfg.lstm_width, cfg.znn_hidden, cfg.n_internal, nn::Activation::swish,
                                 nn::Activation::linear);
}

inline nn::DenseLayout psi_layout(const PIDLConfig& cfg) {
    return nn::DenseLayout::make(cfg.n_internal + cfg.invariant_count(), cfg.psi_hidden, 1,
                                 nn::Activation::softplus, nn::Activation::linear, true);
}

inline Model make_model(const PIDLConfig& cfg, const Scalers& scalers, std::uint64_t seed) {
    cfg.validate();
    if (scalers.input.size() != cfg.input_count()) throw ShapeError("input scaler does not match the model features");
    std::mt19937_64 rng(seed);
    Model m;
    m.config = cfg;
    m.scalers = scalers;
    m.lstm = nn::init_lstm({cfg.input_count(), cfg.lstm_width, cfg.lstm_layers}, rng);
    m.znn = nn::init_dense(znn_layout(cfg), rng);
    m.psi = nn::init_dense(psi_layout(cfg), rng);
    return m;
}

/// Scaled invariants of the undeformed state.
inline std::vector<double> identity_scaled_invariants(const Model& m) {
    const InvariantVector inv = invariants(Tensor3::Identity(), m.config.frame);
    std::vector<double> out(inv.size());
    for (std::size_t i = 0; i < inv.size(); ++i)
        out[i] = (inv[i] - m.scalers.input.center(i)) / m.scalers.input.half_range(i);
    return out;
}

inline std::vector<double> scaled_invariants(const Model& m, const InvariantVector& inv) {
    std::vector<double> out(inv.size());
    for (std::size_t i = 0; i < inv.size(); ++i)
        out[i] = (inv[i] - m.scalers.input.center(i)) / m.scalers.input.half_range(i);
    return out;
}

/// psi_raw and its gradient with respect to [z, scaled invariants].
inline ad::GradientResult free_energy_raw(const Model& m, std::span<const double> z,
                                          std::span<const double> scaled_inv) {
    std::vector<double> x(z.begin(), z.end());
    x.insert(x.end(), scaled_inv.begin(), scaled_inv.end());
    return ad::gradient(
        [&](auto in) {
            using S = typename decltype(in)::value_type;
            return nn::dense_forward<S, double>(m.psi.layout, m.psi.values, in)[0];
        },
        x);
}

/// Normalized free energy psi(C, z).
inline double free_energy(const Model& m, const Tensor3& C, std::span<const double> z) {
    const auto inv = invariants(C, m.config.frame);
    const auto xi = scaled_invariants(m, inv);
    const auto x0 = identity_scaled_invariants(m);
    std::vector<double> a(z.begin(), z.end()), b(z.begin(), z.end());
    a.insert(a.end(), xi.begin(), xi.end());
    b.insert(b.end(), x0.begin(), x0.end());
    return nn::dense_forward(m.psi, a)[0] - nn::dense_forward(m.psi, b)[0];
}

struct StepState {
    nn::RecurrentState<double> recurrent;
    std::optional<std::vector<double>> z_prev;

    static StepState initial(const Model& m) {
        return {nn::RecurrentState<double>::zeros(m.lstm.layout), std::nullopt};
    }
};

struct StepOutput {
    double psi = 0.0;
    double psi_raw = 0.0;
    Tensor3 S = Tensor3::Zero();
    Tensor3 sigma = Tensor3::Zero();
    std::vector<double> z;
    std::vector<double> dpsi_dz;
    std::vector<double> dpsi_dI;
    double D = 0.0;
    nn::RecurrentState<double> state;
};

inline StepState state_after(const StepOutput& out) { return {out.state, out.z}; }

inline StepOutput forward_step(const Tensor3& F, double dt, const AmbientState& ambient, const StepState& prev,
                               const Model& m) {
    if (!(dt > 0.0)) throw InvalidInput("dt must be positive");
    const Tensor3 C = right_cauchy_green(F);
    const InvariantVector inv = invariants(C, m.config.frame);
    const std::size_t nI = inv.size();
    const std::size_t nz = m.config.n_internal;

    const std::vector<double> x = m.scalers.input.scale(raw_features(inv, dt, ambient, m.config));
    StepOutput out;
    out.state = nn::lstm_step(m.lstm, x, prev.recurrent);
    out.z = nn::dense_forward(m.znn, out.state.top());

    const std::vector<double> xi(x.begin(), x.begin() + std::ptrdiff_t(nI));
    const auto actual = free_energy_raw(m, out.z, xi);
    const auto ident = free_energy_raw(m, out.z, identity_scaled_invariants(m));
    out.psi_raw = actual.value;
    out.psi = actual.value - ident.value;

    out.dpsi_dI.resize(nI);
    for (std::size_t a = 0; a < nI; ++a) out.dpsi_dI[a] = actual.gradient[nz + a] / m.scalers.input.half_range(a);
    out.dpsi_dz.resize(nz);
    for (std::size_t k = 0; k < nz; ++k) out.dpsi_dz[k] = actual.gradient[k] - ident.gradient[k];

    const auto dI = invariant_derivatives(C, m.config.frame);
    for (std::size_t a = 0; a < nI; ++a) out.S += 2.0 * out.dpsi_dI[a] * dI[a];
    out.S = sym(out.S);
    out.sigma = sym(F * out.S * F.transpose() / F.determinant());

    const std::vector<double>& zp = prev.z_prev ? *prev.z_prev : out.z;
    if (zp.size() != nz) throw ShapeError("previous internal variables have the wrong size");
    for (std::size_t k = 0; k < nz; ++k) out.D -= out.dpsi_dz[k] * (out.z[k] - zp[k]) / dt;

    if (!std::isfinite(out.psi) || !out.sigma.allFinite() || !std::isfinite(out.D))
        throw NumericError("non-finite network output");
    return out;
}

/// Steps [begin, end) of a sequence starting from `state`.
inline std::vector<StepOutput> rollout(const LoadedSequence& seq, const Model& m, StepState state,
                                       std::size_t begin = 0,
                                       std::size_t end = std::numeric_limits<std::size_t>::max()) {
    end = std::min(end, seq.size());
    std::vector<StepOutput> out;
    out.reserve(end > begin ? end - begin : 0);
    for (std::size_t t = begin; t < end; ++t) {
        out.push_back(forward_step(seq.F[t], seq.dt[t], seq.ambient, state, m));
        state = state_after(out.back());
    }
    return out;
}

inline std::vector<StepOutput> rollout(const LoadedSequence& seq, const Model& m) {
    return rollout(seq, m, StepState::initial(m));
}

/// Hybrid damage: scale the undamaged prediction by (1 - d).
inline Tensor3 apply_damage(const Tensor3& sigma_pred, double d) {
    if (!(d >= 0.0 && d < 1.0)) throw InvalidInput("damage must lie in [0, 1)");
    return (1.0 - d) * sigma_pred;
}

}  // namespace thermonet::pidl

#pragma once

// Loss with the dissipation penalty, adaptive weighting, the training loop,
// the internal-variable sweep and evaluation metrics.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "thermonet/batch.hpp"
#include "thermonet/errors.hpp"
#include "thermonet/optimizer.hpp"
#include "thermonet/pidl.hpp"

namespace thermonet::training {

using pathgen::LoadedSequence;

struct LossBreakdown {
    double stress_loss = 0.0;
    double dissipation_loss = 0.0;
    double beta = 0.0;
    double total = 0.0;
};

inline LossBreakdown make_breakdown(double stress, double dissipation, double beta) {
    return {stress, dissipation, beta, stress + beta * dissipation};
}

/// Mean absolute stress error (each entry divided by scale[k % scale.size()])
/// plus beta times the mean of ReLU(-D).
inline LossBreakdown loss(std::span<const double> predicted, std::span<const double> target,
                          std::span<const double> D, double beta, std::span<const double> scale = {}) {
    if (predicted.size() != target.size()) throw UsageError("prediction and target sizes differ");
    if (predicted.empty() || D.empty()) throw UsageError("loss needs at least one entry");
    double s = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const double h = scale.empty() ? 1.0 : scale[i % scale.size()];
        s += std::abs(predicted[i] - target[i]) / h;
    }
    double d = 0.0;
    for (double x : D) d += std::max(0.0, -x);
    return make_breakdown(s / double(predicted.size()), d / double(D.size()), beta);
}

// ---------------------------------------------------------------------------
// Adaptive weighting

struct BetaSchedule {
    double beta = 1.0;
    double alpha_ema = 0.2;
    double alpha_start = 0.2;
    double alpha_end = 0.05;
    double decay_horizon = 5000.0;
    long long updates = 0;
    long long skipped = 0;

    /// alpha_start * (alpha_end / alpha_start)^(epoch / horizon), floored at alpha_end.
    double alpha_at(double epoch) const {
        const double a = alpha_start * std::pow(alpha_end / alpha_start, epoch / decay_horizon);
        return std::clamp(a, alpha_end, alpha_start);
    }
};

inline BetaSchedule update_beta(BetaSchedule s, std::span<const double> grad_stress,
                                std::span<const double> grad_dissipation, double epoch) {
    if (grad_stress.empty() || grad_dissipation.empty()) throw UsageError("update_beta needs gradients");
    s.alpha_ema = s.alpha_at(epoch);
    double num = 0.0;
    for (double g : grad_stress) num = std::max(num, std::abs(g));
    double den = 0.0;
    for (double g : grad_dissipation) den += std::abs(g);
    den /= double(grad_dissipation.size());
    if (!(den > 0.0) || !std::isfinite(num / den)) {
        ++s.skipped;
        return s;
    }
    const double beta_hat = num / den;
    s.beta = (1.0 - s.alpha_ema) * s.beta + s.alpha_ema * beta_hat;
    ++s.updates;
    return s;
}

// ---------------------------------------------------------------------------
// Training loop

struct TrainConfig {
    double learning_rate = 1e-3;
    std::size_t epochs = 5000;
    std::size_t batch_size = 32;
    std::uint64_t seed = 42;
    double beta_initial = 1.0;
    bool adaptive_beta = true;
    std::size_t beta_update_interval = 10;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (!(beta_initial >= 0.0) || !std::isfinite(beta_initial)) throw ConfigError("beta must be finite and >= 0");
        if (beta_update_interval < 1) throw ConfigError("beta update interval must be >= 1");
    }
};

struct EpochRecord {
    std::size_t epoch = 0;
    double train_stress = 0.0;
    double train_dissipation = 0.0;
    double beta = 0.0;
    double alpha = 0.0;
    double val_stress = 0.0;
};

struct TrainingState {
    std::vector<double> params;
    nn::OptimizerState optimizer;
    BetaSchedule schedule;
    std::size_t next_epoch = 0;
    std::vector<double> best_params;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;
    std::vector<EpochRecord> history;
};

inline TrainingState initial_state(const pidl::Model& model, const TrainConfig& cfg) {
    TrainingState s;
    s.params = model.flatten();
    s.optimizer = nn::OptimizerState::zeros(s.params.size(), cfg.learning_rate);
    s.schedule.beta = cfg.beta_initial;
    s.best_params = s.params;
    return s;
}

/// Non-finite loss or gradient; carries the state before the failing step.
class TrainingAbort : public NumericError {
public:
    TrainingAbort(const std::string& what, TrainingState last_good)
        : NumericError(what), state_(std::move(last_good)) {}
    const TrainingState& state() const { return state_; }

private:
    TrainingState state_;
};

struct TrainResult {
    pidl::Model model;  // best-validation parameters
    TrainingState state;
    LossBreakdown final_train;
};

struct TrainCallbacks {
    /// Called after every epoch; returning false stops the run.
    std::function<bool(const TrainingState&)> on_epoch;
};

inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, std::size_t epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::seed_seq seq{std::uint32_t(seed), std::uint32_t(seed >> 32), std::uint32_t(epoch), std::uint32_t(epoch >> 32)};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

/// Stress and dissipation loss of `theta` over a whole dataset.
inline LossBreakdown dataset_loss(const pidl::Model& m, std::span<const double> theta,
                                  const std::vector<batch::PreparedSequence>& data, double beta,
                                  std::size_t chunk = 32) {
    if (data.empty()) throw DataError("empty dataset");
    double s = 0.0, d = 0.0;
    std::size_t steps = 0;
    batch::ForwardCache f;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < data.size(); i += chunk) {
        idx.resize(std::min(chunk, data.size() - i));
        std::iota(idx.begin(), idx.end(), i);
        const auto b = batch::gather(data, idx);
        const auto L = batch::forward(m, theta, b, f, false);
        s += L.stress * double(b.valid);
        d += L.dissipation * double(b.valid);
        steps += b.valid;
    }
    return make_breakdown(s / double(steps), d / double(steps), beta);
}

inline bool all_finite(std::span<const double> v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline TrainResult train(const pidl::Model& model, const std::vector<LoadedSequence>& train_set,
                         const std::vector<LoadedSequence>& val_set, const TrainConfig& cfg,
                         std::optional<TrainingState> resume = std::nullopt, const TrainCallbacks& callbacks = {}) {
    cfg.validate();
    if (train_set.empty()) throw DataError("training set is empty");
    if (val_set.empty()) throw DataError("validation set is empty");
    const auto train_data = batch::prepare(train_set, model);
    const auto val_data = batch::prepare(val_set, model);
    pidl::Model m = model;
    TrainingState st = resume ? std::move(*resume) : initial_state(model, cfg);
    if (st.params.size() != m.param_count()) throw ShapeError("resume state does not match the model");
    st.optimizer.learning_rate = cfg.learning_rate;
    const auto clamp = m.non_negative_ranges();

    std::vector<double> grad(st.params.size()), grad_d(st.params.size());
    batch::ForwardCache f;
    for (std::size_t epoch = st.next_epoch; epoch < cfg.epochs; ++epoch) {
        const auto order = epoch_order(train_data.size(), cfg.seed, epoch);
        double sum_s = 0.0, sum_d = 0.0;
        std::size_t steps = 0;
        for (std::size_t i = 0; i < order.size(); i += cfg.batch_size) {
            const std::size_t n = std::min(cfg.batch_size, order.size() - i);
            const auto b = batch::gather(train_data, std::span<const std::size_t>(order.data() + i, n));
            const TrainingState last_good = st;
            const auto L = batch::forward(m, st.params, b, f);
            if (!std::isfinite(L.stress) || !std::isfinite(L.dissipation))
                throw TrainingAbort("non-finite loss at epoch " + std::to_string(epoch), last_good);
            sum_s += L.stress * double(b.valid);
            sum_d += L.dissipation * double(b.valid);
            steps += b.valid;

            const double beta = st.schedule.beta;
            std::fill(grad.begin(), grad.end(), 0.0);
            const bool update = cfg.adaptive_beta && st.optimizer.step % static_cast<long long>(cfg.beta_update_interval) == 0;
            if (update) {
                std::fill(grad_d.begin(), grad_d.end(), 0.0);
                batch::backward(m, st.params, b, f, 1.0, 0.0, grad);
                batch::backward(m, st.params, b, f, 0.0, beta, grad_d);
                if (!all_finite(grad) || !all_finite(grad_d))
                    throw TrainingAbort("non-finite gradient at epoch " + std::to_string(epoch), last_good);
                st.schedule = update_beta(st.schedule, grad, grad_d, double(epoch));
                for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += grad_d[k];
            } else {
                batch::backward(m, st.params, b, f, 1.0, beta, grad);
            }
            try {
                nn::optimizer_step(st.optimizer, st.params, grad, clamp);
            } catch (const NumericError& e) {
                throw TrainingAbort(e.what(), last_good);
            }
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_stress = sum_s / double(steps);
        rec.train_dissipation = sum_d / double(steps);
        rec.beta = st.schedule.beta;
        rec.alpha = st.schedule.alpha_at(double(epoch));
        rec.val_stress = dataset_loss(m, st.params, val_data, st.schedule.beta, cfg.batch_size).stress_loss;
        if (!std::isfinite(rec.val_stress)) throw TrainingAbort("non-finite validation loss", st);
        st.history.push_back(rec);
        if (rec.val_stress < st.best_val) {
            st.best_val = rec.val_stress;
            st.best_epoch = epoch;
            st.best_params = st.params;
        }
        st.next_epoch = epoch + 1;
        if (callbacks.on_epoch && !callbacks.on_epoch(st)) break;
    }

    TrainResult out;
    out.model = m;
    out.model.assign(st.best_params);
    out.final_train = dataset_loss(out.model, st.best_params, train_data, st.schedule.beta, cfg.batch_size);
    out.state = std::move(st);
    return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct Metrics {
    double stress_mae = 0.0;                // normalized by the stress scaler
    std::array<double, 6> rmse{};           // MPa, Voigt order
    double dissipation_loss = 0.0;
    double dissipation_violation_rate = 0.0;
    double psi_negativity_rate = 0.0;
    std::size_t steps = 0;
};

inline constexpr double kViolationTolerance = 1e-6;
inline constexpr double kPsiNegativeTolerance = 1e-8;

/// Metrics from per-step Voigt predictions and targets (6 entries per step).
inline Metrics compute_metrics(std::span<const double> predicted, std::span<const double> target,
                               std::span<const double> D, std::span<const double> psi,
                               std::span<const double> stress_scale) {
    if (predicted.size() != target.size() || predicted.size() != 6 * D.size() || psi.size() != D.size())
        throw UsageError("metric inputs have inconsistent sizes");
    if (stress_scale.size() != 6) throw UsageError("stress scale needs 6 entries");
    Metrics m;
    m.steps = D.size();
    if (m.steps == 0) return m;
    std::array<double, 6> sq{};
    double mae = 0.0;
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        const double e = predicted[i] - target[i];
        mae += std::abs(e) / stress_scale[i % 6];
        sq[i % 6] += e * e;
    }
    m.stress_mae = mae / double(predicted.size());
    for (int k = 0; k < 6; ++k) m.rmse[k] = std::sqrt(sq[k] / double(m.steps));
    double dmax = 0.0;
    for (double d : D) dmax = std::max(dmax, std::abs(d));
    std::size_t violations = 0, negative = 0;
    for (std::size_t t = 0; t < D.size(); ++t) {
        if (D[t] < -kViolationTolerance * dmax) ++violations;
        if (psi[t] < -kPsiNegativeTolerance) ++negative;
        m.dissipation_loss += std::max(0.0, -D[t]);
    }
    m.dissipation_loss /= double(m.steps);
    m.dissipation_violation_rate = double(violations) / double(m.steps);
    m.psi_negativity_rate = double(negative) / double(m.steps);
    return m;
}

/// Per-step predictions for a dataset, sequence by sequence.
struct Predictions {
    std::vector<std::vector<std::array<double, 6>>> sigma;
    std::vector<std::vector<double>> D;
    std::vector<std::vector<double>> psi;
    std::vector<std::vector<std::vector<double>>> z;
};

inline Predictions predict(const pidl::Model& m, const std::vector<LoadedSequence>& data, std::size_t chunk = 32) {
    const auto prepared = batch::prepare(data, m);
    const auto theta = m.flatten();
    const std::size_t nz = m.config.n_internal;
    Predictions out;
    batch::ForwardCache f;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < prepared.size(); i += chunk) {
        idx.resize(std::min(chunk, prepared.size() - i));
        std::iota(idx.begin(), idx.end(), i);
        const auto b = batch::gather(prepared, idx);
        batch::forward(m, theta, b, f, false);
        const Eigen::MatrixXd& Z = f.znn.act.back();
        for (std::size_t j = 0; j < b.B; ++j) {
            const std::size_t T = prepared[idx[j]].size();
            std::vector<std::array<double, 6>> s(T);
            std::vector<double> D(T), psi(T);
            std::vector<std::vector<double>> z(T, std::vector<double>(nz));
            for (std::size_t t = 0; t < T; ++t) {
                const auto c = Eigen::Index(t * b.B + j);
                for (int k = 0; k < 6; ++k) s[t][k] = f.sigma(k, c);
                D[t] = f.D(c);
                psi[t] = f.psi_value(c);
                for (std::size_t a = 0; a < nz; ++a) z[t][a] = Z(Eigen::Index(a), c);
            }
            out.sigma.push_back(std::move(s));
            out.D.push_back(std::move(D));
            out.psi.push_back(std::move(psi));
            out.z.push_back(std::move(z));
        }
    }
    return out;
}

inline Metrics evaluate(const pidl::Model& m, const std::vector<LoadedSequence>& data) {
    if (data.empty()) throw DataError("cannot evaluate on an empty dataset");
    const auto p = predict(m, data);
    std::vector<double> pred, target, D, psi;
    for (std::size_t i = 0; i < data.size(); ++i) {
        for (std::size_t t = 0; t < data[i].size(); ++t) {
            const auto v = to_voigt(data[i].sigma_undamaged[t]);
            pred.insert(pred.end(), p.sigma[i][t].begin(), p.sigma[i][t].end());
            target.insert(target.end(), v.begin(), v.end());
        }
        D.insert(D.end(), p.D[i].begin(), p.D[i].end());
        psi.insert(psi.end(), p.psi[i].begin(), p.psi[i].end());
    }
    std::array<double, 6> h{};
    for (std::size_t k = 0; k < 6; ++k) h[k] = m.scalers.stress.half_range(k);
    return compute_metrics(pred, target, D, psi, h);
}

// ---------------------------------------------------------------------------
// Internal-variable sweep

struct SweepRow {
    std::size_t n_internal = 0;
    double final_loss = 0.0;
    double val_loss = 0.0;
};

inline constexpr std::size_t kMaxInternal = 32;

inline void check_sweep_counts(const std::vector<std::size_t>& counts) {
    if (counts.empty()) throw ConfigError("internal-variable sweep has no counts");
    for (auto n : counts)
        if (n < 1 || n > kMaxInternal)
            throw ConfigError("internal-variable count " + std::to_string(n) + " outside [1, 32]");
}

/// One model per count, identical initialization seed and budget. The loss is
/// the training stress loss of the returned (best-validation) parameters.
inline std::vector<SweepRow> sweep_internal_variables(const std::vector<std::size_t>& counts,
                                                      const std::vector<LoadedSequence>& train_set,
                                                      const std::vector<LoadedSequence>& val_set,
                                                      const pidl::PIDLConfig& base, const TrainConfig& cfg,
                                                      const std::function<void(const SweepRow&)>& progress = {}) {
    check_sweep_counts(counts);
    std::vector<SweepRow> rows;
    for (std::size_t n : counts) {
        pidl::PIDLConfig c = base;
        c.n_internal = n;
        const auto scalers = pidl::fit_scalers(train_set, c);
        const auto model = pidl::make_model(c, scalers, cfg.seed);
        const auto r = train(model, train_set, val_set, cfg);
        rows.push_back({n, r.final_train.stress_loss, r.state.best_val});
        if (progress) progress(rows.back());
    }
    return rows;
}

}  // namespace thermonet::training

#include <gtest/gtest.h>

#include "support.hpp"
#include "thermonet/batch.hpp"
#include "thermonet/training.hpp"

using namespace thermonet;
using namespace thermonet::training;

namespace {

struct Setup {
    std::vector<pathgen::LoadedSequence> train, val;
    pidl::Model model;
};

Setup make_setup(std::size_t width = 5, std::size_t nz = 3, std::size_t n_train = 6) {
    Setup s;
    s.train = test::small_dataset(n_train);
    s.val = test::small_dataset(3, 10, 100000);
    const auto cfg = test::tiny_config(width, nz);
    s.model = pidl::make_model(cfg, pidl::fit_scalers(s.train, cfg), 3);
    return s;
}

TrainConfig quick(std::size_t epochs) {
    TrainConfig c;
    c.epochs = epochs;
    c.batch_size = 4;
    c.learning_rate = 5e-3;
    c.seed = 9;
    return c;
}

}  // namespace

TEST(Loss, HandBuiltCase) {
    const std::vector<double> pred{1.0, 3.0}, target{0.0, 0.0}, D{-2.0, 5.0};
    const auto l = loss(pred, target, D, 0.5);
    EXPECT_DOUBLE_EQ(l.stress_loss, 2.0);
    EXPECT_DOUBLE_EQ(l.dissipation_loss, 1.0);
    EXPECT_DOUBLE_EQ(l.total, 2.5);
}

TEST(Loss, TrivialCases) {
    const std::vector<double> y{1.0, -2.0, 3.0}, D{0.0, 1.0};
    EXPECT_EQ(loss(y, y, D, 7.0).total, 0.0);
    const std::vector<double> p{2.0, -2.0, 3.0}, Dn{-1.0, 1.0};
    const auto l = loss(p, y, Dn, 0.0);
    EXPECT_EQ(l.total, l.stress_loss);
    const std::vector<double> scale{2.0};
    EXPECT_DOUBLE_EQ(loss(p, y, Dn, 0.0, scale).stress_loss, 1.0 / 6.0);
    EXPECT_THROW(loss(std::vector<double>{1.0}, y, D, 1.0), UsageError);
}

TEST(BetaSchedule, AlphaDecay) {
    BetaSchedule s;
    EXPECT_NEAR(s.alpha_at(0), 0.2, 1e-12);
    EXPECT_NEAR(s.alpha_at(5000), 0.05, 1e-12);
    EXPECT_NEAR(s.alpha_at(2500), 0.1, 1e-12);
    EXPECT_EQ(s.alpha_at(9000), 0.05);
    double prev = 1.0;
    for (double e = 0; e < 6000; e += 100) {
        const double a = s.alpha_at(e);
        EXPECT_LE(a, prev);
        EXPECT_GE(a, 0.05);
        EXPECT_LE(a, 0.2);
        prev = a;
    }
}

TEST(BetaSchedule, UpdateTowardsRatio) {
    BetaSchedule s;
    s.beta = 3.0;
    const std::vector<double> gs{0.5, -2.0}, gd{2.0, -2.0};
    const auto u = update_beta(s, gs, gd, 0.0);
    EXPECT_DOUBLE_EQ(u.beta, 0.8 * 3.0 + 0.2 * 1.0);
    EXPECT_EQ(u.updates, 1);
}

TEST(BetaSchedule, GeometricConvergence) {
    BetaSchedule s;
    s.beta = 1.0;
    const std::vector<double> gs{8.0}, gd{2.0};  // beta_hat = 4
    for (int k = 1; k <= 60; ++k) {
        s = update_beta(s, gs, gd, 0.0);
        EXPECT_NEAR(4.0 - s.beta, 3.0 * std::pow(0.8, k), 1e-12);
    }
}

TEST(BetaSchedule, ZeroDenominatorSkips) {
    BetaSchedule s;
    s.beta = 2.0;
    const auto u = update_beta(s, std::vector<double>{1.0}, std::vector<double>{0.0, 0.0}, 10.0);
    EXPECT_EQ(u.beta, 2.0);
    EXPECT_EQ(u.skipped, 1);
    EXPECT_THROW(update_beta(s, std::vector<double>{}, std::vector<double>{1.0}, 0.0), UsageError);
}

TEST(Batch, MatchesScalarRollout) {
    const auto s = make_setup();
    const auto prepared = batch::prepare(s.train, s.model);
    std::vector<std::size_t> idx{0, 2, 5};
    const auto b = batch::gather(prepared, idx);
    batch::ForwardCache f;
    batch::forward(s.model, s.model.flatten(), b, f);
    for (std::size_t j = 0; j < idx.size(); ++j) {
        const auto out = pidl::rollout(s.train[idx[j]], s.model);
        for (std::size_t t = 0; t < out.size(); ++t) {
            const auto c = Eigen::Index(t * b.B + j);
            const auto v = to_voigt(out[t].sigma);
            for (int k = 0; k < 6; ++k) EXPECT_NEAR(f.sigma(k, c), v[k], 1e-10 * std::max(1.0, std::abs(v[k])));
            EXPECT_NEAR(f.D(c), out[t].D, 1e-10 * std::max(1.0, std::abs(out[t].D)));
            EXPECT_NEAR(f.psi_value(c), out[t].psi, 1e-12);
        }
    }
}

TEST(Batch, GradientMatchesFiniteDifferences) {
    const auto s = make_setup(4, 2, 4);
    const auto prepared = batch::prepare(s.train, s.model);
    std::vector<std::size_t> idx{0, 1, 2, 3};
    const auto b = batch::gather(prepared, idx);
    auto theta = s.model.flatten();
    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0.0, 0.3);
    for (double& v : theta) v += n(rng);
    for (const auto& r : s.model.non_negative_ranges())
        for (std::size_t k = r.begin; k < r.end; ++k) theta[k] = std::abs(theta[k]);

    const double beta = 3.0;
    batch::ForwardCache f;
    batch::forward(s.model, theta, b, f);
    std::vector<double> grad(theta.size(), 0.0);
    batch::backward(s.model, theta, b, f, 1.0, beta, grad);
    auto L = [&](const std::vector<double>& th) {
        batch::ForwardCache g;
        const auto v = batch::forward(s.model, th, b, g);
        return v.stress + beta * v.dissipation;
    };
    const double h = 1e-6;
    std::size_t checked = 0;
    for (std::size_t k = 0; k < theta.size(); k += 3) {
        auto p = theta, m = theta;
        p[k] += h;
        m[k] -= h;
        const double fd = (L(p) - L(m)) / (2 * h);
        EXPECT_LT(std::abs(fd - grad[k]), 1e-4 * std::max(1e-2, std::abs(fd))) << "param " << k;
        ++checked;
    }
    EXPECT_GT(checked, 50u);
}

TEST(Metrics, PerfectPredictionAndViolations) {
    const std::vector<double> y{1, 2, 3, 4, 5, 6, -1, -2, -3, -4, -5, -6};
    const std::vector<double> D{1.0, 2.0}, psi{0.0, 1.0}, h{1, 1, 1, 1, 1, 1};
    const auto m = compute_metrics(y, y, D, psi, h);
    EXPECT_EQ(m.stress_mae, 0.0);
    EXPECT_EQ(m.dissipation_violation_rate, 0.0);
    EXPECT_EQ(m.psi_negativity_rate, 0.0);
    const std::vector<double> D2{-1.0, 100.0}, psi2{-1e-3, 0.0};
    const auto m2 = compute_metrics(y, y, D2, psi2, h);
    EXPECT_EQ(m2.dissipation_violation_rate, 0.5);
    EXPECT_EQ(m2.psi_negativity_rate, 0.5);
    EXPECT_DOUBLE_EQ(m2.dissipation_loss, 0.5);
}

TEST(Train, EvaluateMatchesFinalTrainingLoss) {
    const auto s = make_setup();
    const auto r = train(s.model, s.train, s.val, quick(4));
    EXPECT_EQ(r.state.history.size(), 4u);
    const auto m = evaluate(r.model, s.train);
    EXPECT_NEAR(m.stress_mae, r.final_train.stress_loss, 1e-12);
    EXPECT_NEAR(m.dissipation_loss, r.final_train.dissipation_loss, 1e-12);
    EXPECT_NEAR(evaluate(r.model, s.val).stress_mae, r.state.best_val, 1e-12);
    EXPECT_EQ(r.model.flatten(), r.state.best_params);
}

TEST(Train, BetaStaysPositiveAndFinite) {
    const auto s = make_setup();
    const auto r = train(s.model, s.train, s.val, quick(6));
    for (const auto& rec : r.state.history) {
        EXPECT_GT(rec.beta, 0.0);
        EXPECT_TRUE(std::isfinite(rec.beta));
    }
    EXPECT_GT(r.state.schedule.updates + r.state.schedule.skipped, 0);
}

TEST(Train, ResumeReproducesUninterruptedRun) {
    const auto s = make_setup();
    const auto full = train(s.model, s.train, s.val, quick(6));

    TrainCallbacks stop;
    stop.on_epoch = [](const TrainingState& st) { return st.next_epoch < 3; };
    const auto part = train(s.model, s.train, s.val, quick(6), std::nullopt, stop);
    ASSERT_EQ(part.state.next_epoch, 3u);
    const auto resumed = train(s.model, s.train, s.val, quick(6), part.state);

    ASSERT_EQ(resumed.state.history.size(), full.state.history.size());
    for (std::size_t e = 0; e < full.state.history.size(); ++e) {
        EXPECT_EQ(resumed.state.history[e].train_stress, full.state.history[e].train_stress);
        EXPECT_EQ(resumed.state.history[e].val_stress, full.state.history[e].val_stress);
        EXPECT_EQ(resumed.state.history[e].beta, full.state.history[e].beta);
    }
    EXPECT_EQ(resumed.state.params, full.state.params);
}

TEST(Train, ShuffleIsSeededPermutation) {
    const auto a = epoch_order(20, 1, 0);
    EXPECT_EQ(a, epoch_order(20, 1, 0));
    EXPECT_NE(a, epoch_order(20, 1, 1));
    auto sorted = a;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Train, RejectsBadInput) {
    const auto s = make_setup();
    EXPECT_THROW(train(s.model, {}, s.val, quick(1)), DataError);
    EXPECT_THROW(train(s.model, s.train, {}, quick(1)), DataError);
    auto c = quick(1);
    c.learning_rate = 0.0;
    EXPECT_THROW(train(s.model, s.train, s.val, c), ConfigError);
    EXPECT_THROW(check_sweep_counts({0}), ConfigError);
    EXPECT_THROW(check_sweep_counts({2, 33}), ConfigError);
    EXPECT_NO_THROW(check_sweep_counts({1, 10, 32}));
}

TEST(Train, NonFiniteParametersAbortWithLastGoodState) {
    const auto s = make_setup();
    auto st = initial_state(s.model, quick(2));
    st.params[0] = std::numeric_limits<double>::quiet_NaN();
    try {
        train(s.model, s.train, s.val, quick(2), st);
        FAIL() << "expected TrainingAbort";
    } catch (const TrainingAbort& e) {
        EXPECT_EQ(e.state().next_epoch, 0u);
        EXPECT_TRUE(std::isnan(e.state().params[0]));
    }
}

TEST(Train, DissipationPenaltyAblation) {
    const auto s = make_setup(6, 3, 8);
    auto adaptive = quick(40);
    auto off = adaptive;
    off.adaptive_beta = false;
    off.beta_initial = 0.0;
    const auto a = train(s.model, s.train, s.val, adaptive);
    const auto b = train(s.model, s.train, s.val, off);
    const double va = evaluate(a.model, s.train).dissipation_loss;
    const double vb = evaluate(b.model, s.train).dissipation_loss;
    EXPECT_LT(va, vb);
}

TEST(Sweep, OneRowPerCount) {
    const auto s = make_setup();
    const auto rows = sweep_internal_variables({1, 2}, s.train, s.val, test::tiny_config(4, 1), quick(2));
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].n_internal, 1u);
    EXPECT_EQ(rows[1].n_internal, 2u);
    for (const auto& r : rows) EXPECT_TRUE(std::isfinite(r.final_loss));
}

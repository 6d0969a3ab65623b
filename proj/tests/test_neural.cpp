#include <gtest/gtest.h>

#include "support.hpp"
#include "thermonet/autodiff.hpp"
#include "thermonet/nn.hpp"
#include "thermonet/optimizer.hpp"

using namespace thermonet;
using namespace thermonet::nn;

namespace {

std::vector<double> uniform(std::mt19937_64& rng, std::size_t n, double amp = 1.0) {
    std::uniform_real_distribution<double> u(-amp, amp);
    std::vector<double> v(n);
    for (double& x : v) x = u(rng);
    return v;
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Gate-by-gate scalar LSTM layer with explicit W, R, b blocks.
void reference_lstm_layer(const std::vector<double>& theta, std::size_t off, std::size_t n_in, std::size_t H,
                          const std::vector<double>& x, std::vector<double>& h, std::vector<double>& c) {
    auto W = [&](std::size_t gate, std::size_t k, std::size_t j) { return theta[off + (gate * H + k) * n_in + j]; };
    auto R = [&](std::size_t gate, std::size_t k, std::size_t j) {
        return theta[off + 4 * H * n_in + (gate * H + k) * H + j];
    };
    auto b = [&](std::size_t gate, std::size_t k) { return theta[off + 4 * H * n_in + 4 * H * H + gate * H + k]; };
    auto pre = [&](std::size_t gate, std::size_t k) {
        double s = b(gate, k);
        for (std::size_t j = 0; j < n_in; ++j) s += W(gate, k, j) * x[j];
        for (std::size_t j = 0; j < H; ++j) s += R(gate, k, j) * h[j];
        return s;
    };
    std::vector<double> hn(H), cn(H);
    for (std::size_t k = 0; k < H; ++k) {
        const double ig = sig(pre(0, k)), fg = sig(pre(1, k)), gg = std::tanh(pre(2, k)), og = sig(pre(3, k));
        cn[k] = fg * c[k] + ig * gg;
        hn[k] = og * std::tanh(cn[k]);
    }
    h = hn;
    c = cn;
}

template <class V>
V small_net(const DenseLayout& layout, std::span<const V> all) {
    const std::size_t n = layout.param_count();
    return dense_forward<V, V>(layout, all.subspan(0, n), all.subspan(n))[0];
}

}  // namespace

TEST(Activations, Identities) {
    EXPECT_DOUBLE_EQ(activate(Activation::softplus, 0.0), std::log(2.0));
    EXPECT_DOUBLE_EQ(activate(Activation::swish, 0.0), 0.0);
    for (double x : {-5.0, -0.1, 0.0, 2.0}) EXPECT_GE(activate(Activation::relu, x), 0.0);
    EXPECT_GT(activate(Activation::softplus, -800.0), -1e-300);
    EXPECT_TRUE(std::isfinite(activate(Activation::softplus, 800.0)));
    for (auto a : {Activation::sigmoid, Activation::tanh, Activation::swish, Activation::softplus, Activation::linear}) {
        EXPECT_EQ(activation_from_string(to_string(a)), a);
        for (double x : {-1.3, 0.2, 2.1}) {
            const double h = 1e-5;
            const auto d = activation_derivatives(a, x);
            EXPECT_NEAR(d.value, activate(a, x), 1e-15);
            EXPECT_NEAR(d.first, (activate(a, x + h) - activate(a, x - h)) / (2 * h), 1e-8);
            EXPECT_NEAR(d.second, (activation_derivatives(a, x + h).first - activation_derivatives(a, x - h).first) / (2 * h),
                        1e-8);
        }
    }
    EXPECT_THROW(activation_from_string("gelu"), ConfigError);
}

TEST(DenseForward, ZeroParametersTanh) {
    const auto layout = DenseLayout::make(3, {4}, 2, Activation::tanh, Activation::tanh);
    const std::vector<double> theta(layout.param_count(), 0.0);
    const std::vector<double> x{0.3, -1.0, 2.0};
    for (double y : dense_forward<double, double>(layout, theta, x)) EXPECT_EQ(y, 0.0);
}

TEST(DenseForward, LinearLayerMatchesMatVec) {
    std::mt19937_64 rng(1);
    const auto layout = DenseLayout::make(5, {}, 3, Activation::linear, Activation::linear);
    const auto theta = uniform(rng, layout.param_count());
    const auto x = uniform(rng, 5);
    const auto y = dense_forward<double, double>(layout, theta, x);
    for (std::size_t r = 0; r < 3; ++r) {
        double s = theta[15 + r];
        for (std::size_t c = 0; c < 5; ++c) s += theta[r * 5 + c] * x[c];
        EXPECT_NEAR(y[r], s, 1e-14);
    }
}

TEST(DenseForward, SoftplusPositiveAndShapeErrors) {
    std::mt19937_64 rng(2);
    const auto layout = DenseLayout::make(2, {3}, 2, Activation::softplus, Activation::softplus);
    const auto p = init_dense(layout, rng);
    for (int n = 0; n < 50; ++n)
        for (double y : dense_forward(p, uniform(rng, 2, 50.0))) EXPECT_GT(y, 0.0);
    EXPECT_THROW(dense_forward(p, std::vector<double>(3, 0.0)), ShapeError);
    const std::vector<double> short_theta(2, 0.0), x2(2, 0.0);
    EXPECT_THROW((dense_forward<double, double>(layout, short_theta, x2)), ShapeError);
}

TEST(InitDense, NonNegativeLayer) {
    std::mt19937_64 rng(3);
    const auto layout = DenseLayout::make(4, {6, 6}, 1, Activation::softplus, Activation::linear, true);
    const auto p = init_dense(layout, rng);
    const std::size_t off = layout.offset(2);
    for (std::size_t k = off; k < p.values.size(); ++k) EXPECT_GE(p.values[k], 0.0);
}

TEST(LSTMStep, ZeroParameters) {
    const LSTMLayout layout{3, 4, 1};
    const std::vector<double> theta(layout.param_count(), 0.0);
    auto st = RecurrentState<double>::zeros(layout);
    st.c[0] = {0.5, -1.0, 2.0, 0.0};
    const std::vector<double> x{1.0, 2.0, 3.0};
    const auto next = lstm_step<double, double>(layout, theta, x, st);
    for (std::size_t k = 0; k < 4; ++k) {
        EXPECT_DOUBLE_EQ(next.c[0][k], 0.5 * st.c[0][k]);
        EXPECT_DOUBLE_EQ(next.h[0][k], 0.5 * std::tanh(0.5 * st.c[0][k]));
    }
}

TEST(LSTMStep, MatchesGateOracle) {
    std::mt19937_64 rng(4);
    const LSTMLayout layout{3, 5, 2};
    const auto theta = uniform(rng, layout.param_count());
    auto st = RecurrentState<double>::zeros(layout);
    for (std::size_t l = 0; l < 2; ++l) {
        st.h[l] = uniform(rng, 5, 0.9);
        st.c[l] = uniform(rng, 5, 2.0);
    }
    auto ref = st;
    for (int t = 0; t < 5; ++t) {
        const auto x = uniform(rng, 3, 2.0);
        st = lstm_step<double, double>(layout, theta, x, st);
        reference_lstm_layer(theta, layout.offset(0), 3, 5, x, ref.h[0], ref.c[0]);
        reference_lstm_layer(theta, layout.offset(1), 5, 5, ref.h[0], ref.h[1], ref.c[1]);
        for (std::size_t l = 0; l < 2; ++l)
            for (std::size_t k = 0; k < 5; ++k) {
                EXPECT_NEAR(st.h[l][k], ref.h[l][k], 1e-14);
                EXPECT_NEAR(st.c[l][k], ref.c[l][k], 1e-14);
                EXPECT_GT(st.h[l][k], -1.0);
                EXPECT_LT(st.h[l][k], 1.0);
            }
    }
}

TEST(LSTMStep, DeterministicAndShapeChecked) {
    std::mt19937_64 rng(5);
    const LSTMLayout layout{2, 3, 2};
    const auto p = init_lstm(layout, rng);
    const std::vector<double> x{0.1, 0.2};
    const auto a = lstm_step(p, x, RecurrentState<double>::zeros(layout));
    const auto b = lstm_step(p, x, RecurrentState<double>::zeros(layout));
    EXPECT_EQ(a.h, b.h);
    EXPECT_EQ(a.c, b.c);
    EXPECT_THROW(lstm_step(p, std::vector<double>{0.1}, RecurrentState<double>::zeros(layout)), ShapeError);
    EXPECT_THROW(lstm_step(p, x, RecurrentState<double>::zeros(LSTMLayout{2, 3, 1})), ShapeError);
}

TEST(Autodiff, CubeIsExact) {
    for (double x : {-2.0, 0.3, 1.7}) {
        const std::vector<double> in{x};
        const auto r = ad::gradient([](auto v) { return v[0] * v[0] * v[0]; }, in);
        EXPECT_EQ(r.value, x * x * x);
        EXPECT_NEAR(r.gradient[0], 3 * x * x, 4 * std::numeric_limits<double>::epsilon() * 3 * x * x);
        const std::vector<double> dir{1.0};
        const auto d = ad::gradient_directional([](auto v) { return v[0] * v[0] * v[0]; }, in, dir);
        EXPECT_NEAR(d.hessian_vector[0], 6 * x, 1e-14);
    }
}

TEST(Autodiff, LinearLayerInputGradientIsWeightRow) {
    std::mt19937_64 rng(6);
    const auto layout = DenseLayout::make(4, {}, 3, Activation::linear, Activation::linear);
    const auto theta = uniform(rng, layout.param_count());
    for (std::size_t row = 0; row < 3; ++row) {
        const auto r = ad::gradient(
            [&](auto x) { return dense_forward<ad::Var<double>, double>(layout, theta, x)[row]; },
            std::vector<double>{0.1, 0.2, 0.3, 0.4});
        for (std::size_t c = 0; c < 4; ++c) EXPECT_EQ(r.gradient[c], theta[row * 4 + c]);
    }
}

TEST(Autodiff, NetworkGradientMatchesFiniteDifferences) {
    std::mt19937_64 rng(7);
    for (auto act : {Activation::softplus, Activation::tanh, Activation::swish}) {
        const auto layout = DenseLayout::make(3, {5, 4}, 1, act, Activation::linear);
        auto all = init_dense(layout, rng).values;
        for (double& b : all) b += 0.1;
        const auto x = uniform(rng, 3);
        all.insert(all.end(), x.begin(), x.end());
        const auto r = ad::gradient([&](auto v) { return small_net(layout, v); }, all);
        auto f = [&](const std::vector<double>& v) { return small_net<double>(layout, v); };
        const double h = 1e-6;
        for (std::size_t k = 0; k < all.size(); ++k) {
            auto p = all, m = all;
            p[k] += h;
            m[k] -= h;
            const double fd = (f(p) - f(m)) / (2 * h);
            EXPECT_LT(std::abs(fd - r.gradient[k]), 1e-5 * std::max(1.0, std::abs(fd)));
        }
    }
}

TEST(Autodiff, NestedDerivativeMatchesDoubleFiniteDifferences) {
    // d/dtheta of dpsi/dx0 for a softplus network.
    std::mt19937_64 rng(8);
    const auto layout = DenseLayout::make(2, {4, 4}, 1, Activation::softplus, Activation::linear);
    auto all = init_dense(layout, rng).values;
    const std::size_t n = all.size();
    all.push_back(0.4);
    all.push_back(-0.3);
    std::vector<double> dir(all.size(), 0.0);
    dir[n] = 1.0;
    const auto r = ad::gradient_directional([&](auto v) { return small_net(layout, v); }, all, dir);

    auto f = [&](const std::vector<double>& v) { return small_net<double>(layout, v); };
    auto dfdx0 = [&](std::vector<double> v) {
        const double h = 1e-4;
        v[n] += h;
        const double a = f(v);
        v[n] -= 2 * h;
        return (a - f(v)) / (2 * h);
    };
    EXPECT_NEAR(r.directional, dfdx0(all), 1e-6);
    for (std::size_t k = 0; k < n; ++k) {
        const double h = 1e-4;
        auto p = all, m = all;
        p[k] += h;
        m[k] -= h;
        const double fd = (dfdx0(p) - dfdx0(m)) / (2 * h);
        EXPECT_LT(std::abs(fd - r.hessian_vector[k]), 1e-3 * std::max(1e-2, std::abs(fd))) << k;
    }
}

TEST(Autodiff, NonScalarTargetRejected) {
    const std::vector<double> x{1.0, 2.0};
    EXPECT_THROW(ad::gradient([](auto v) { return std::vector<ad::Var<double>>(v.begin(), v.end()); }, x),
                 UsageError);
}

TEST(Optimizer, ZeroGradientKeepsParameters) {
    auto opt = OptimizerState::zeros(3, 1e-3);
    std::vector<double> p{1.0, -2.0, 3.0};
    const auto before = p;
    optimizer_step(opt, p, std::vector<double>(3, 0.0));
    EXPECT_EQ(p, before);
    EXPECT_EQ(opt.step, 1);
}

TEST(Optimizer, FirstStepIsLearningRate) {
    auto opt = OptimizerState::zeros(1, 1e-3);
    std::vector<double> p{0.0};
    optimizer_step(opt, p, std::vector<double>{1.0});
    // m_hat = v_hat = 1, step = lr / (1 + eps).
    EXPECT_NEAR(p[0], -1e-3 / (1.0 + 1e-8), 1e-18);
    for (int k = 0; k < 9; ++k) optimizer_step(opt, p, std::vector<double>{1.0});
    EXPECT_NEAR(p[0], -1e-2, 1e-9);
}

TEST(Optimizer, ClampAndErrors) {
    auto opt = OptimizerState::zeros(4, 0.5);
    std::vector<double> p{0.1, 0.1, 0.1, 0.1};
    const std::vector<ClampRange> clamp{{2, 4}};
    for (int k = 0; k < 5; ++k) {
        optimizer_step(opt, p, std::vector<double>{1, 1, 1, 1}, clamp);
        EXPECT_GE(p[2], 0.0);
        EXPECT_GE(p[3], 0.0);
    }
    EXPECT_LT(p[0], 0.0);
    EXPECT_THROW(optimizer_step(opt, p, std::vector<double>{1, std::nan(""), 1, 1}), NumericError);
    EXPECT_THROW(optimizer_step(opt, p, std::vector<double>{1, 1}), ShapeError);
}

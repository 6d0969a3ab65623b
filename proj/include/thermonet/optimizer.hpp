#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "thermonet/errors.hpp"

namespace thermonet::nn {

/// Index range [begin, end) of a flat parameter vector that must stay >= 0.
struct ClampRange {
    std::size_t begin;
    std::size_t end;
};

/// Adaptive-moment (Adam) optimizer state over one flat parameter vector.
struct OptimizerState {
    std::vector<double> m;
    std::vector<double> v;
    long long step = 0;
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static OptimizerState zeros(std::size_t n, double lr) {
        OptimizerState s;
        s.m.assign(n, 0.0);
        s.v.assign(n, 0.0);
        s.learning_rate = lr;
        return s;
    }
};

inline void optimizer_step(OptimizerState& opt, std::span<double> params, std::span<const double> grads,
                           std::span<const ClampRange> non_negative = {}) {
    if (params.size() != grads.size() || opt.m.size() != params.size())
        throw ShapeError("gradient/optimizer shape does not match parameters");
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!std::isfinite(grads[i]))
            throw NumericError("non-finite gradient at parameter index " + std::to_string(i) + " (step " +
                               std::to_string(opt.step) + ")");

    ++opt.step;
    const double c1 = 1.0 - std::pow(opt.beta1, double(opt.step));
    const double c2 = 1.0 - std::pow(opt.beta2, double(opt.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * g;
        opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * g * g;
        const double m_hat = opt.m[i] / c1;
        const double v_hat = opt.v[i] / c2;
        params[i] -= opt.learning_rate * m_hat / (std::sqrt(v_hat) + opt.epsilon);
    }
    for (const ClampRange& r : non_negative)
        for (std::size_t i = r.begin; i < r.end; ++i) params[i] = std::max(0.0, params[i]);
}

}  // namespace thermonet::nn

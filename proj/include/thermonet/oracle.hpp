#pragma once

// Finite-strain viscoelastic-viscoplastic damage model for fiber and
// nanoparticle reinforced epoxy. Used as the ground-truth generator for the
// synthetic training data.
//
// Kinematics: F = J^{1/3} F_iso, J = J_m J_w, F_iso = F_ve F_vp, F_ve = F_e F_v.
// The equilibrium branch is driven by F_ve, the non-equilibrium branch by F_e.
// Total stress is (1 - d)(sigma_eq + sigma_neq).

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "thermonet/errors.hpp"
#include "thermonet/kinematics.hpp"

namespace thermonet::oracle {

inline constexpr double kBoltzmann = 1.380649e-23;  // J/K

/// Calibrated parameter set of the classical model plus fiber geometry.
struct MaterialParams {
    double mu_eq = 525.0;       // MPa
    double mu_neq = 295.0;      // MPa
    double kappa_v = 1311.0;    // MPa
    double eps0_dot = 1.0447e12;  // 1/s
    double deltaH = 1.977e-19;  // J
    double m = 0.837;
    double y0 = 80.0;           // MPa
    double x0 = 1.72;
    double b_s = 0.394;
    double a_s = -40.17;        // MPa
    double a = 48.37;
    double b = 1.02;
    double sigma0 = 5.5;        // MPa
    double A_damage = 943.87;
    double alpha_w = 0.039;
    double a1 = 9.0;
    double a2 = 1.0;
    double a3 = 1.0;
    double k_b = kBoltzmann;
    // Effective strain at which viscoplastic flow starts.
    double eps_activation = 0.0;
    double zeta_inplane = 1.0;
    double zeta_transverse = 0.4;
    Vec3 a0 = Vec3::UnitX();
    Vec3 g0 = Vec3::UnitY();

    void validate() const {
        if (!(mu_eq > 0 && mu_neq > 0 && kappa_v > 0))
            throw InvalidParameter("mu_eq, mu_neq and kappa_v must be positive");
        if (!(a1 > 0 && a2 > 0 && a3 > 0)) throw InvalidParameter("a1, a2 and a3 must be positive");
        if (!(sigma0 > 0)) throw InvalidParameter("sigma0 must be positive");
        if (!(eps0_dot > 0 && deltaH > 0 && k_b > 0 && m > 0))
            throw InvalidParameter("Argon flow parameters must be positive");
        if (!(A_damage >= 0)) throw InvalidParameter("A_damage must be non-negative");
        if (std::abs(a0.norm() - 1.0) > 1e-12 || std::abs(g0.norm() - 1.0) > 1e-12)
            throw InvalidParameter("fiber directions must be unit vectors");
    }
};

/// Moisture, filler content and temperature of one material point.
struct AmbientState {
    double w_w = 0.0;                    // moisture mass fraction, [0, 0.1]
    double v_np = 0.0;                   // nanoparticle volume fraction
    std::array<double, 2> v_f{0.0, 0.0};  // fiber volume fraction per family
    double T = 296.0;                    // K

    double v_matrix() const { return 1.0 - v_f[0] - v_f[1]; }

    void validate() const {
        if (!(w_w >= 0.0 && w_w <= 0.1)) throw InvalidInput("w_w must lie in [0, 0.1]");
        if (!(v_np >= 0.0 && v_np < 1.0)) throw InvalidInput("v_np must lie in [0, 1)");
        for (double v : v_f)
            if (!(v >= 0.0 && v < 1.0)) throw InvalidInput("v_f must lie in [0, 1)");
        if (!(v_matrix() > 0.0)) throw InvalidInput("fiber volume fractions must sum below 1");
        if (!(T > 0.0)) throw InvalidInput("temperature must be positive");
    }

    bool operator==(const AmbientState&) const = default;
};

struct OracleState {
    Tensor3 F_v = Tensor3::Identity();
    Tensor3 F_vp = Tensor3::Identity();
    double d = 0.0;
    double lambda_chain_max = 1.0;
    Tensor3 E_prev = Tensor3::Zero();
};

struct IntegratorSettings {
    double tolerance = 1e-8;  // on the Newton increment (max norm)
    int max_iterations = 50;
    // Driving stresses below this (MPa) produce no flow.
    double min_driving_stress = 1e-9;
};

// ---------------------------------------------------------------------------
// Scalar constitutive ingredients

inline constexpr double kMinAmplification = 0.01;

/// Guth-Gold type stiffness amplification with a moisture correction.
inline double amplification_factor(double v_np, double w_w) {
    const double x = (1.0 + 5.0 * v_np + 18.0 * v_np * v_np) * (1.0 + 0.057 * w_w * w_w - 9.5 * w_w);
    return std::max(x, kMinAmplification);
}

struct VolumetricSplit {
    double J_m;
    Tensor3 F_iso;
    double J_w;
};

inline VolumetricSplit volumetric_split(const Tensor3& F, double w_w, double alpha_w) {
    const double J = F.determinant();
    if (!(J > kDegenerateDet)) throw DegenerateDeformation("det F = " + std::to_string(J) + " is not positive");
    const double J_w = 1.0 + alpha_w * w_w;
    return {J / J_w, std::pow(J, -1.0 / 3.0) * F, J_w};
}

/// Fiber-to-matrix stiffness ratio f(I4).
inline double stiffness_ratio(double I4, const MaterialParams& p) {
    return p.a1 + p.a2 * std::exp(p.a3 * (I4 - 1.0));
}

inline double stiffness_ratio_derivative(double I4, const MaterialParams& p) {
    return p.a2 * p.a3 * std::exp(p.a3 * (I4 - 1.0));
}

/// Composite-to-matrix effective shear modulus ratio g(f, v_f, zeta).
inline double shear_ratio(double f, double v_f, double zeta) {
    const double den = (1.0 - v_f) * f + (zeta + v_f);
    if (!(den > 0.0)) throw InvalidParameter("shear ratio denominator is not positive");
    return ((1.0 + zeta * v_f) * f + (1.0 - v_f) * zeta) / den;
}

/// dg/df of shear_ratio.
inline double shear_ratio_df(double f, double v_f, double zeta) {
    const double A = 1.0 + zeta * v_f, B = (1.0 - v_f) * zeta;
    const double C = 1.0 - v_f, D = zeta + v_f;
    const double den = C * f + D;
    if (!(den > 0.0)) throw InvalidParameter("shear ratio denominator is not positive");
    return (A * D - B * C) / (den * den);
}

/// dpsi/dI1, dpsi/dI4, dpsi/dI5 of one fiber family.
struct FamilyEnergyDerivatives {
    double d1;
    double d4;
    double d5;
};

/// The dpsi/dI4 expression is kept term for term as published, including the
/// grouping of the in-plane (zeta = 1) and transverse (zeta = 0.4) ratios.
inline FamilyEnergyDerivatives family_energy_derivatives(double I1, double I4, double I5, double mu,
                                                         double v_f, double v_m, const MaterialParams& p) {
    if (!(I4 > 0.0)) throw InvalidInput("I4 must be positive");
    const double f = stiffness_ratio(I4, p);
    const double df = stiffness_ratio_derivative(I4, p);
    const double g_in = shear_ratio(f, v_f, p.zeta_inplane);
    const double g_tr = shear_ratio(f, v_f, p.zeta_transverse);
    const double dg_tr = shear_ratio_df(f, v_f, p.zeta_transverse) * df;

    const double sqrtI4 = std::sqrt(I4);
    const double I4m32 = 1.0 / (I4 * sqrtI4);
    const double I4m2 = 1.0 / (I4 * I4);

    FamilyEnergyDerivatives out{};
    out.d1 = 0.5 * g_tr * mu;
    out.d4 = 0.5 * mu *
             (v_f * df * (I4 + 2.0 / sqrtI4 - 3.0) + (v_m + v_f * f) * (1.0 - I4m32) -
              g_in * (I5 * I4m2 + 1.0) + g_tr * (I5 * I4m2 + I4m32) +
              (I5 - I4 * I4) / (2.0 * I4) * dg_tr + 0.5 * (I1 - (I5 + 2.0 * sqrtI4) / I4) * dg_tr);
    out.d5 = (g_in - g_tr) * mu / (2.0 * I4);
    return out;
}

// ---------------------------------------------------------------------------
// Branch stresses

enum class BranchTag { equilibrium, non_equilibrium };

struct FamilyKinematics {
    double I4;
    double I5;
    Vec3 direction;  // current fiber direction F a0 / sqrt(I4)
};

struct BranchKinematics {
    Tensor3 B;  // F F^T of the branch deformation
    double J;
    double I1;
    std::array<FamilyKinematics, 2> families;
};

inline BranchKinematics branch_kinematics(const Tensor3& F_branch, const MaterialParams& p) {
    const Tensor3 C = F_branch.transpose() * F_branch;
    const Tensor3 C2 = C * C;
    BranchKinematics k;
    k.B = F_branch * F_branch.transpose();
    k.J = F_branch.determinant();
    k.I1 = C.trace();
    const std::array<Vec3, 2> dirs{p.a0, p.g0};
    for (std::size_t i = 0; i < 2; ++i) {
        const double I4 = dirs[i].dot(C * dirs[i]);
        if (!(I4 > 0.0)) throw InvalidInput("I4 must be positive");
        k.families[i] = {I4, dirs[i].dot(C2 * dirs[i]), (F_branch * dirs[i]) / std::sqrt(I4)};
    }
    return k;
}

/// Cauchy stress of one branch, summed over both fiber families. The
/// non-equilibrium branch carries the volumetric term kappa (J_m - 1/J_m) I.
inline Tensor3 branch_stress(const BranchKinematics& k, const MaterialParams& p, const AmbientState& amb,
                             BranchTag tag, double J_m = 1.0) {
    const double X = amplification_factor(amb.v_np, amb.w_w);
    const bool eq = tag == BranchTag::equilibrium;
    const double mu = X * (eq ? p.mu_eq : p.mu_neq);
    const Tensor3 I = Tensor3::Identity();
    const Tensor3 devB = dev(k.B);

    Tensor3 sum = Tensor3::Zero();
    for (std::size_t i = 0; i < 2; ++i) {
        const FamilyKinematics& fam = k.families[i];
        const auto dpsi = family_energy_derivatives(k.I1, fam.I4, fam.I5, mu, amb.v_f[i], amb.v_matrix(), p);
        const Vec3& a = fam.direction;
        const Vec3 Ba = k.B * a;
        const Tensor3 aa = a * a.transpose();
        sum += dpsi.d1 * devB + dpsi.d4 * fam.I4 * (aa - I / 3.0) +
               dpsi.d5 * (fam.I4 * (a * Ba.transpose() + Ba * a.transpose()) - (2.0 / 3.0) * fam.I5 * I);
    }
    Tensor3 sigma = (2.0 / k.J) * sum;
    if (!eq) sigma += p.kappa_v * (J_m - 1.0 / J_m) * I;
    return sym(sigma);
}

// ---------------------------------------------------------------------------
// Flow rules and damage

/// Athermal yield stress, modulated by the maximum chain stretch.
inline double athermal_yield(double lambda_chain_max, const MaterialParams& p) {
    const double tau0 = p.y0 + p.a_s / (1.0 + std::exp(-(lambda_chain_max - p.x0) / p.b_s));
    if (!(tau0 > 0.0)) throw InvalidParameter("athermal yield stress is not positive");
    return tau0;
}

/// Argon-type thermally activated viscous flow rate (1/s).
inline double viscous_flow(double tau_neq, double lambda_chain_max, double T, const MaterialParams& p) {
    const double tau0 = athermal_yield(lambda_chain_max, p);
    const double expo = p.deltaH / (p.k_b * T) * (std::pow(tau_neq / tau0, p.m) - 1.0);
    return p.eps0_dot * std::exp(std::min(expo, 200.0));
}

/// Phenomenological viscoplastic flow rate (1/s).
inline double viscoplastic_flow(double tau_tot, double eps_eff, double eps_eff_rate, const MaterialParams& p) {
    if (tau_tot < p.sigma0 || eps_eff <= p.eps_activation) return 0.0;
    return p.a * std::pow(eps_eff - p.eps_activation, p.b) * eps_eff_rate;
}

struct DamageUpdate {
    double d;
    double lambda_chain_max;
};

/// Exact integration of d' = A (1 - d) dLambda_max over one increment.
inline DamageUpdate damage_increment(double d, double lambda_chain, double lambda_chain_max, double A) {
    if (!(d >= 0.0 && d < 1.0)) throw InvalidInput("damage must lie in [0, 1)");
    if (lambda_chain < lambda_chain_max) return {d, lambda_chain_max};
    const double dd = 1.0 - (1.0 - d) * std::exp(-A * (lambda_chain - lambda_chain_max));
    return {std::min(dd, std::nextafter(1.0, 0.0)), lambda_chain};
}

inline double chain_stretch(const Tensor3& F_iso) {
    return std::sqrt((F_iso * F_iso.transpose()).trace() / 3.0);
}

// ---------------------------------------------------------------------------
// Material point update

/// Stresses and flow rates for a trial pair (F_v, F_vp).
struct FlowEvaluation {
    Tensor3 sigma_eq;
    Tensor3 sigma_neq;
    Tensor3 F_v_rate;
    Tensor3 F_vp_rate;
    double tau_neq = 0.0;
    double tau_tot = 0.0;
};

struct StepContext {
    Tensor3 F_iso;
    double J_m;
    double lambda_chain_max;
    double eps_eff;
    double eps_eff_rate;
    const AmbientState* ambient;
    const MaterialParams* params;
    const IntegratorSettings* settings;
};

inline FlowEvaluation evaluate_flow(const StepContext& ctx, const Tensor3& F_v, const Tensor3& F_vp,
                                    bool viscoplastic_active) {
    const MaterialParams& p = *ctx.params;
    const Tensor3 F_ve = ctx.F_iso * F_vp.inverse();
    const Tensor3 F_e = F_ve * F_v.inverse();

    FlowEvaluation out;
    out.sigma_eq = branch_stress(branch_kinematics(F_ve, p), p, *ctx.ambient, BranchTag::equilibrium);
    out.sigma_neq = branch_stress(branch_kinematics(F_e, p), p, *ctx.ambient, BranchTag::non_equilibrium, ctx.J_m);

    out.tau_neq = frobenius(dev(out.sigma_neq));
    out.F_v_rate.setZero();
    if (out.tau_neq > ctx.settings->min_driving_stress) {
        const Tensor3 R_e = polar_rotation(F_e);
        const Tensor3 relaxed = R_e.transpose() * out.sigma_neq * R_e;
        const double rate = viscous_flow(out.tau_neq, ctx.lambda_chain_max, ctx.ambient->T, p);
        out.F_v_rate = F_e.inverse() * ((rate / out.tau_neq) * dev(relaxed)) * F_ve;
    }

    const Tensor3 sigma_tot = out.sigma_eq + out.sigma_neq;
    out.tau_tot = frobenius(dev(sigma_tot));
    out.F_vp_rate.setZero();
    if (viscoplastic_active && out.tau_tot > ctx.settings->min_driving_stress) {
        const double rate = ctx.eps_eff > p.eps_activation
                                ? p.a * std::pow(ctx.eps_eff - p.eps_activation, p.b) * ctx.eps_eff_rate
                                : 0.0;
        if (rate > 0.0) {
            const Tensor3 R_ve = polar_rotation(F_ve);
            const Tensor3 relaxed = R_ve.transpose() * sigma_tot * R_ve;
            out.F_vp_rate = F_ve.inverse() * ((rate / out.tau_tot) * dev(relaxed)) * ctx.F_iso;
        }
    }
    return out;
}

struct StepResult {
    OracleState state;
    Tensor3 sigma_total;
    Tensor3 sigma_undamaged;
    int iterations = 0;
};

namespace detail {

using Vec18 = Eigen::Matrix<double, 18, 1>;
using Mat18 = Eigen::Matrix<double, 18, 18>;

inline Vec18 pack(const Tensor3& a, const Tensor3& b) {
    Vec18 x;
    x.head<9>() = Eigen::Map<const Eigen::Matrix<double, 9, 1>>(a.data());
    x.tail<9>() = Eigen::Map<const Eigen::Matrix<double, 9, 1>>(b.data());
    return x;
}

inline Tensor3 unpack(const Vec18& x, int block) {
    Tensor3 t;
    Eigen::Map<Eigen::Matrix<double, 9, 1>>(t.data()) = x.segment<9>(9 * block);
    return t;
}

struct NewtonOutcome {
    Vec18 x;
    double residual;
    int iterations;
    bool converged;
};

/// Backward Euler: solve x = x_n + dt * rate(x) with Newton's method,
/// finite-difference Jacobian and a backtracking line search.
inline NewtonOutcome solve_backward_euler(const StepContext& ctx, const Vec18& x_n, double dt, bool vp_active) {
    auto residual = [&](const Vec18& x) -> Vec18 {
        const Tensor3 F_v = unpack(x, 0), F_vp = unpack(x, 1);
        if (!(F_v.determinant() > kDegenerateDet) || !(F_vp.determinant() > kDegenerateDet))
            return Vec18::Constant(std::numeric_limits<double>::infinity());
        const FlowEvaluation ev = evaluate_flow(ctx, F_v, F_vp, vp_active);
        return x - x_n - dt * pack(ev.F_v_rate, ev.F_vp_rate);
    };
    auto finite_norm = [](const Vec18& r) {
        const double n = r.norm();
        return std::isfinite(n) ? n : std::numeric_limits<double>::infinity();
    };

    const IntegratorSettings& s = *ctx.settings;
    Vec18 x = x_n;
    Vec18 r = residual(x);
    double rnorm = finite_norm(r);
    if (rnorm <= 1e-14) return {x, rnorm, 0, true};

    for (int it = 1; it <= s.max_iterations; ++it) {
        Mat18 J;
        for (int j = 0; j < 18; ++j) {
            const double h = 1e-7 * std::max(1.0, std::abs(x[j]));
            Vec18 xp = x;
            xp[j] += h;
            J.col(j) = (residual(xp) - r) / h;
        }
        const Vec18 delta = -J.partialPivLu().solve(r);
        if (!delta.allFinite()) return {x, rnorm, it, false};

        double alpha = 1.0;
        Vec18 x_try = x + delta;
        Vec18 r_try = residual(x_try);
        double n_try = finite_norm(r_try);
        for (int k = 0; k < 40 && !(n_try <= (1.0 - 1e-4 * alpha) * rnorm); ++k) {
            alpha *= 0.5;
            x_try = x + alpha * delta;
            r_try = residual(x_try);
            n_try = finite_norm(r_try);
        }
        if (!std::isfinite(n_try)) return {x, rnorm, it, false};
        const double step = (alpha * delta).cwiseAbs().maxCoeff();
        x = x_try;
        r = r_try;
        rnorm = n_try;
        if (step < s.tolerance || rnorm <= 1e-14) return {x, rnorm, it, true};
    }
    return {x, rnorm, s.max_iterations, false};
}

}  // namespace detail

/// Advance the material point to F_next over dt.
inline StepResult step(const OracleState& state, const Tensor3& F_next, double dt, const AmbientState& ambient,
                       const MaterialParams& params, const IntegratorSettings& settings = {}) {
    if (!(dt > 0.0)) throw InvalidInput("dt must be positive");
    const VolumetricSplit split = volumetric_split(F_next, ambient.w_w, params.alpha_w);

    const Tensor3 E_next = green_strain(F_next);
    const double eps = frobenius(E_next);
    const double eps_rate = std::max(0.0, (eps - frobenius(state.E_prev)) / dt);
    const double lambda_chain = chain_stretch(split.F_iso);
    const double lambda_max_next = std::max(state.lambda_chain_max, lambda_chain);

    const StepContext ctx{split.F_iso, split.J_m, lambda_max_next, eps, eps_rate, &ambient, &params, &settings};
    const detail::Vec18 x_n = detail::pack(state.F_v, state.F_vp);

    // The viscoplastic switch is frozen during the Newton solve. It is taken
    // from the trial state and re-checked at the solution.
    auto active_at = [&](const Tensor3& F_v, const Tensor3& F_vp) {
        const FlowEvaluation ev = evaluate_flow(ctx, F_v, F_vp, false);
        return ev.tau_tot >= params.sigma0;
    };
    bool active = active_at(state.F_v, state.F_vp);
    auto sol = detail::solve_backward_euler(ctx, x_n, dt, active);
    if (sol.converged) {
        const bool active_sol = active_at(detail::unpack(sol.x, 0), detail::unpack(sol.x, 1));
        if (active_sol != active) {
            auto retry = detail::solve_backward_euler(ctx, x_n, dt, active_sol);
            if (retry.converged) {
                retry.iterations += sol.iterations;
                sol = retry;
                active = active_sol;
            }
        }
    }
    if (!sol.converged) throw IntegrationFailure("backward Euler update did not converge", sol.residual);

    StepResult out;
    out.iterations = sol.iterations;
    out.state.F_v = detail::unpack(sol.x, 0);
    out.state.F_vp = detail::unpack(sol.x, 1);
    const FlowEvaluation ev = evaluate_flow(ctx, out.state.F_v, out.state.F_vp, active);
    out.sigma_undamaged = sym(ev.sigma_eq + ev.sigma_neq);

    const DamageUpdate dmg = damage_increment(state.d, lambda_chain, state.lambda_chain_max, params.A_damage);
    out.state.d = dmg.d;
    out.state.lambda_chain_max = dmg.lambda_chain_max;
    out.state.E_prev = E_next;
    out.sigma_total = (1.0 - out.state.d) * out.sigma_undamaged;
    return out;
}

}  // namespace thermonet::oracle

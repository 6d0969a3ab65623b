#pragma once

// Finite-deformation kinematics: deformation measures, the invariants of the
// right Cauchy-Green tensor for isotropic and two-fiber-family materials, and
// their analytic derivatives.

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "thermonet/errors.hpp"

namespace thermonet {

using Tensor3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

inline constexpr double kDegenerateDet = 1e-12;
inline constexpr double kSymmetryTol = 1e-12;

enum class SymmetryClass { isotropic, transversely_isotropic };

/// Reference fiber directions. Both absent for the isotropic class.
struct FiberFrame {
    std::optional<Vec3> a0;
    std::optional<Vec3> g0;

    static FiberFrame isotropic() { return {}; }

    static FiberFrame two_families(const Vec3& a, const Vec3& g) {
        if (std::abs(a.norm() - 1.0) > 1e-12 || std::abs(g.norm() - 1.0) > 1e-12)
            throw InvalidInput("fiber directions must be unit vectors");
        return {a, g};
    }

    bool has_fibers() const { return a0.has_value() && g0.has_value(); }
    SymmetryClass symmetry() const {
        return has_fibers() ? SymmetryClass::transversely_isotropic : SymmetryClass::isotropic;
    }
    std::size_t invariant_count() const { return has_fibers() ? 8 : 3; }
};

/// I1..I3 (isotropic) or I1..I8 (two fiber families).
struct InvariantVector {
    std::array<double, 8> values{};
    std::size_t count = 0;

    double operator[](std::size_t i) const { return values[i]; }
    double& operator[](std::size_t i) { return values[i]; }
    std::size_t size() const { return count; }
    std::span<const double> span() const { return {values.data(), count}; }
};

inline double frobenius(const Tensor3& t) { return t.norm(); }

inline Tensor3 dev(const Tensor3& t) { return t - (t.trace() / 3.0) * Tensor3::Identity(); }

inline Tensor3 sym(const Tensor3& t) { return 0.5 * (t + t.transpose()); }

inline bool is_symmetric(const Tensor3& t, double tol = kSymmetryTol) {
    const double scale = std::max(1.0, t.norm());
    return (t - t.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

inline void require_invertible(const Tensor3& F) {
    const double J = F.determinant();
    if (!(J > kDegenerateDet)) throw DegenerateDeformation("det F = " + std::to_string(J) + " is not positive");
}

inline Tensor3 right_cauchy_green(const Tensor3& F) {
    require_invertible(F);
    return F.transpose() * F;
}

inline Tensor3 left_cauchy_green(const Tensor3& F) { return F * F.transpose(); }

inline Tensor3 green_strain(const Tensor3& F) {
    return 0.5 * (F.transpose() * F - Tensor3::Identity());
}

inline InvariantVector invariants(const Tensor3& C_in, const FiberFrame& frame) {
    if (!is_symmetric(C_in)) throw InvalidInput("right Cauchy-Green tensor is not symmetric");
    const Tensor3 C = sym(C_in);
    const Tensor3 C2 = C * C;
    const double trC = C.trace();

    InvariantVector out;
    out.count = frame.invariant_count();
    out[0] = trC;
    out[1] = 0.5 * (trC * trC - C2.trace());
    out[2] = C.determinant();
    if (frame.has_fibers()) {
        const Vec3& a = *frame.a0;
        const Vec3& g = *frame.g0;
        out[3] = a.dot(C * a);
        out[4] = a.dot(C2 * a);
        out[5] = g.dot(C * g);
        out[6] = g.dot(C2 * g);
        out[7] = a.dot(g) * a.dot(C * g);
    }
    return out;
}

/// dI_k/dC for each invariant in the order of invariants(). Every entry is symmetric.
inline std::vector<Tensor3> invariant_derivatives(const Tensor3& C_in, const FiberFrame& frame) {
    if (!is_symmetric(C_in)) throw InvalidInput("right Cauchy-Green tensor is not symmetric");
    const Tensor3 C = sym(C_in);
    const Tensor3 I = Tensor3::Identity();
    const double I3 = C.determinant();
    if (!(std::abs(I3) > kDegenerateDet)) throw DegenerateDeformation("C is singular; cannot form C^-1");

    std::vector<Tensor3> d;
    d.reserve(frame.invariant_count());
    d.push_back(I);
    d.push_back(C.trace() * I - C);
    d.push_back(sym(I3 * C.inverse()));
    if (frame.has_fibers()) {
        const Vec3& a = *frame.a0;
        const Vec3& g = *frame.g0;
        const Vec3 Ca = C * a;
        const Vec3 Cg = C * g;
        d.push_back(a * a.transpose());
        d.push_back(a * Ca.transpose() + Ca * a.transpose());
        d.push_back(g * g.transpose());
        d.push_back(g * Cg.transpose() + Cg * g.transpose());
        d.push_back(0.5 * a.dot(g) * (a * g.transpose() + g * a.transpose()));
    }
    return d;
}

/// Rotation R of the polar decomposition F = R U, with U = C^{1/2} from the
/// eigendecomposition of C.
inline Tensor3 polar_rotation(const Tensor3& F) {
    const Tensor3 C = right_cauchy_green(F);
    Eigen::SelfAdjointEigenSolver<Tensor3> eig(C);
    const Vec3 inv_sqrt = eig.eigenvalues().cwiseSqrt().cwiseInverse();
    const Tensor3 U_inv = eig.eigenvectors() * inv_sqrt.asDiagonal() * eig.eigenvectors().transpose();
    return F * U_inv;
}

/// Symmetric stretch U of F = R U.
inline Tensor3 polar_stretch(const Tensor3& F) {
    const Tensor3 C = right_cauchy_green(F);
    Eigen::SelfAdjointEigenSolver<Tensor3> eig(C);
    return eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
}

/// Voigt order (11, 22, 33, 23, 13, 12).
inline std::array<double, 6> to_voigt(const Tensor3& t) {
    return {t(0, 0), t(1, 1), t(2, 2), t(1, 2), t(0, 2), t(0, 1)};
}

inline Tensor3 from_voigt(std::span<const double> v) {
    Tensor3 t;
    t << v[0], v[5], v[4],
         v[5], v[1], v[3],
         v[4], v[3], v[2];
    return t;
}

inline constexpr std::array<std::array<int, 2>, 6> kVoigtIndex{{{0, 0}, {1, 1}, {2, 2}, {1, 2}, {0, 2}, {0, 1}}};

}  // namespace thermonet

#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "thermonet/kinematics.hpp"
#include "thermonet/oracle.hpp"
#include "thermonet/pathgen.hpp"
#include "thermonet/pidl.hpp"

namespace thermonet::test {

inline Tensor3 random_matrix(std::mt19937_64& rng, double amp) {
    std::uniform_real_distribution<double> u(-amp, amp);
    Tensor3 t;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) t(i, j) = u(rng);
    return t;
}

/// Near-identity deformation gradient with positive determinant.
inline Tensor3 random_F(std::mt19937_64& rng, double amp = 0.1) {
    return Tensor3::Identity() + random_matrix(rng, amp);
}

inline Tensor3 random_spd(std::mt19937_64& rng, double amp = 0.2) {
    const Tensor3 F = random_F(rng, amp);
    return F.transpose() * F;
}

/// Rotation from a random unit quaternion.
inline Tensor3 random_rotation(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
    q.normalize();
    return q.toRotationMatrix();
}

inline double rel_err(double a, double b, double floor = 1e-12) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

/// Short labeled sequences for model tests.
inline std::vector<pathgen::LoadedSequence> small_dataset(std::size_t count, std::size_t steps = 10,
                                                          std::uint64_t offset = 0, double dt = 10.0) {
    pathgen::PathConfig pc;
    pc.sequence_count = count;
    pc.steps_per_segment = steps;
    pc.dt = dt;
    pc.halton_seed_offset = offset;
    return pathgen::generate_dataset(pc, oracle::MaterialParams{}).sequences;
}

inline pidl::PIDLConfig tiny_config(std::size_t width = 4, std::size_t nz = 3) {
    pidl::PIDLConfig c;
    c.n_internal = nz;
    c.lstm_width = width;
    c.znn_hidden = {width, width};
    c.psi_hidden = {width, width};
    return c;
}

}  // namespace thermonet::test

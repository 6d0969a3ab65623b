#pragma once

// Quasi-random loading paths and labeled dataset generation.
//
// One sequence: draw P target deformation gradients from a Halton stream,
// connect I -> target_1 -> ... -> target_P linearly, reject the draw if the
// representative strain rate falls outside (rate_min, rate_max), then
// integrate the classical model along the accepted path.

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <thread>
#include <vector>

#include "thermonet/errors.hpp"
#include "thermonet/kinematics.hpp"
#include "thermonet/oracle.hpp"

namespace thermonet::pathgen {

using oracle::AmbientState;
using oracle::MaterialParams;

inline constexpr std::array<unsigned, 9> kHaltonPrimes{2, 3, 5, 7, 11, 13, 17, 19, 23};

/// Radical inverse of `index` in `base`, rounded once from the exact fraction.
inline double halton(std::uint64_t index, unsigned base) {
    if (index < 1) throw InvalidInput("Halton index must be >= 1");
    if (base < 2) throw InvalidInput("Halton base must be >= 2");
    std::uint64_t num = 0, den = 1;
    for (std::uint64_t i = index; i > 0; i /= base) {
        num = num * base + i % base;
        den *= base;
    }
    return double(num) / double(den);
}

struct Interval {
    double lo;
    double hi;
    bool operator==(const Interval&) const = default;
};

inline std::vector<AmbientState> default_ambient_grid() {
    // Two specimen compositions (5 % BNP / 25 % GF and 20 % BNP / 20 % GF,
    // fibers split over both families) at dry and saturated moisture.
    std::vector<AmbientState> grid;
    for (double w : {0.0, 0.05}) {
        grid.push_back({w, 0.05, {0.125, 0.125}, 296.0});
        grid.push_back({w, 0.20, {0.10, 0.10}, 296.0});
    }
    return grid;
}

struct PathConfig {
    Interval bounds_diag{0.98, 1.02};
    Interval bounds_offdiag{-0.02, 0.02};
    std::size_t points = 2;
    std::size_t steps_per_segment = 100;
    double dt = 1.0;
    double rate_min = 1e-5;
    double rate_max = 1e-3;
    std::vector<AmbientState> ambient_grid = default_ambient_grid();
    std::size_t sequence_count = 1000;
    std::uint64_t halton_seed_offset = 0;
    std::size_t max_draws_per_sequence = 1000;

    /// Wider bounds used to probe extrapolation.
    void use_extrapolation_bounds() {
        bounds_diag = {0.97, 1.03};
        bounds_offdiag = {-0.03, 0.03};
    }

    void validate() const {
        if (!(bounds_diag.lo < bounds_diag.hi) || !(bounds_offdiag.lo < bounds_offdiag.hi))
            throw ConfigError("path bounds must be non-empty intervals");
        if (!(bounds_diag.lo > 0.0)) throw ConfigError("diagonal bounds must stay positive");
        if (points < 1) throw ConfigError("points_P must be >= 1");
        if (steps_per_segment < 1) throw ConfigError("steps_per_segment must be >= 1");
        if (!(dt > 0.0)) throw ConfigError("dt must be positive");
        if (!(rate_min < rate_max)) throw ConfigError("rate_min must be below rate_max");
        if (ambient_grid.empty()) throw ConfigError("ambient_grid is empty");
        for (const auto& a : ambient_grid) a.validate();
    }
};

/// F(t), dt and ambient features with the oracle labels.
struct LoadedSequence {
    std::vector<Tensor3> F;
    std::vector<double> dt;
    AmbientState ambient;
    std::vector<Tensor3> sigma;
    std::vector<Tensor3> sigma_undamaged;
    std::vector<double> d;

    std::size_t size() const { return F.size(); }
};

using Target = std::array<double, 9>;  // row-major F components

inline bool is_diagonal_component(std::size_t k) { return k == 0 || k == 4 || k == 8; }

/// P targets for draw number `draw_index`; coordinate k uses the k-th prime base.
inline std::vector<Target> sample_targets(const PathConfig& cfg, std::uint64_t draw_index) {
    std::vector<Target> out(cfg.points);
    for (std::size_t p = 0; p < cfg.points; ++p) {
        const std::uint64_t idx = cfg.halton_seed_offset + draw_index * cfg.points + p + 1;
        for (std::size_t k = 0; k < 9; ++k) {
            const Interval& b = is_diagonal_component(k) ? cfg.bounds_diag : cfg.bounds_offdiag;
            const double u = halton(idx, kHaltonPrimes[k]);
            out[p][k] = std::clamp(b.lo + (b.hi - b.lo) * u, b.lo, b.hi);
        }
    }
    return out;
}

inline Tensor3 target_to_tensor(const Target& t) {
    Tensor3 F;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) F(i, j) = t[3 * i + j];
    return F;
}

/// Piecewise-linear path starting at I, steps_per_segment frames per segment.
inline std::vector<Tensor3> build_path(const std::vector<Target>& targets, const PathConfig& cfg) {
    if (targets.empty()) throw InvalidInput("a path needs at least one target");
    const std::size_t n = cfg.steps_per_segment;
    std::vector<Tensor3> path;
    path.reserve(1 + targets.size() * n);
    path.push_back(Tensor3::Identity());
    Tensor3 prev = Tensor3::Identity();
    for (const Target& t : targets) {
        const Tensor3 next = target_to_tensor(t);
        for (std::size_t k = 1; k <= n; ++k) {
            const double s = double(k) / double(n);
            path.push_back((1.0 - s) * prev + s * next);
        }
        prev = next;
    }
    return path;
}

/// Largest per-step change of ||E||_F divided by dt.
inline double effective_rate(const std::vector<Tensor3>& path, double dt) {
    if (path.size() < 2) throw InvalidInput("effective rate needs at least two frames");
    double rate = 0.0;
    double prev = frobenius(green_strain(path.front()));
    for (std::size_t k = 1; k < path.size(); ++k) {
        const double e = frobenius(green_strain(path[k]));
        rate = std::max(rate, std::abs(e - prev) / dt);
        prev = e;
    }
    return rate;
}

/// Integrate the classical model along a path (frame 0 included).
inline LoadedSequence label_path(const std::vector<Tensor3>& path, double dt, const AmbientState& ambient,
                                 const MaterialParams& params, const oracle::IntegratorSettings& settings = {}) {
    LoadedSequence seq;
    seq.F = path;
    seq.dt.assign(path.size(), dt);
    seq.ambient = ambient;
    seq.sigma.reserve(path.size());
    seq.sigma_undamaged.reserve(path.size());
    seq.d.reserve(path.size());
    oracle::OracleState state;
    for (const Tensor3& F : path) {
        if (!(F.determinant() > kDegenerateDet)) throw DegenerateDeformation("path frame with det F <= 0");
        const auto r = oracle::step(state, F, dt, ambient, params, settings);
        state = r.state;
        seq.sigma.push_back(r.sigma_total);
        seq.sigma_undamaged.push_back(r.sigma_undamaged);
        seq.d.push_back(r.state.d);
    }
    return seq;
}

struct GenerationStats {
    std::size_t kept = 0;
    std::size_t rejected_by_rate = 0;
    std::size_t failed_integration = 0;
    double rate_min_seen = 0.0;
    double rate_max_seen = 0.0;
    std::vector<std::string> diagnostics;
};

struct Dataset {
    std::vector<LoadedSequence> sequences;
    GenerationStats stats;
};

struct GenerationOptions {
    unsigned threads = 0;  // 0: hardware concurrency
};

inline unsigned resolve_threads(unsigned requested) {
    if (requested > 0) return requested;
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Run fn(i) for i in [0, n) over a worker pool. Results are written by index.
template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
    const unsigned workers = std::min<unsigned>(resolve_threads(threads), unsigned(std::max<std::size_t>(n, 1)));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) fn(i);
        });
}

inline Dataset generate_dataset(const PathConfig& cfg, const MaterialParams& params,
                                const GenerationOptions& opts = {}) {
    cfg.validate();
    params.validate();

    Dataset out;
    GenerationStats& st = out.stats;
    st.rate_min_seen = std::numeric_limits<double>::infinity();
    std::uint64_t draw = 0;
    std::size_t attempted = 0;

    struct Candidate {
        std::vector<Tensor3> path;
        std::uint64_t draw;
        double rate;
    };

    while (out.sequences.size() < cfg.sequence_count) {
        // Draws are sequential so the Halton stream is consumed contiguously.
        const std::size_t need = cfg.sequence_count - out.sequences.size();
        std::vector<Candidate> batch;
        batch.reserve(need);
        for (std::size_t s = 0; s < need; ++s) {
            std::size_t tries = 0;
            for (;;) {
                if (++tries > cfg.max_draws_per_sequence)
                    throw GenerationFailure("no loading path satisfied the strain-rate window");
                const auto path = build_path(sample_targets(cfg, draw), cfg);
                const double rate = effective_rate(path, cfg.dt);
                const std::uint64_t this_draw = draw++;
                if (rate > cfg.rate_min && rate < cfg.rate_max) {
                    batch.push_back({path, this_draw, rate});
                    break;
                }
                ++st.rejected_by_rate;
            }
        }

        // Ambient states cycle over integration attempts.
        const std::size_t base = attempted;
        std::vector<LoadedSequence> labeled(batch.size());
        std::vector<std::string> errors(batch.size());
        parallel_for(batch.size(), opts.threads, [&](std::size_t i) {
            const AmbientState& amb = cfg.ambient_grid[(base + i) % cfg.ambient_grid.size()];
            try {
                labeled[i] = label_path(batch[i].path, cfg.dt, amb, params);
            } catch (const Error& e) {
                errors[i] = e.what();
            }
        });

        for (std::size_t i = 0; i < batch.size(); ++i) {
            ++attempted;
            if (!errors[i].empty()) {
                ++st.failed_integration;
                st.diagnostics.push_back("draw " + std::to_string(batch[i].draw) + ": " + errors[i]);
                continue;
            }
            if (out.sequences.size() < cfg.sequence_count) {
                st.rate_min_seen = std::min(st.rate_min_seen, batch[i].rate);
                st.rate_max_seen = std::max(st.rate_max_seen, batch[i].rate);
                out.sequences.push_back(std::move(labeled[i]));
            }
        }
        if (st.failed_integration * 2 > attempted)
            throw GenerationFailure("more than half of the generated paths failed to integrate (" +
                                    std::to_string(st.failed_integration) + " of " + std::to_string(attempted) +
                                    ")");
    }
    st.kept = out.sequences.size();
    if (st.kept == 0) st.rate_min_seen = 0.0;
    return out;
}

}  // namespace thermonet::pathgen

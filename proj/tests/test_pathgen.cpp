#include <gtest/gtest.h>

#include <set>

#include "support.hpp"
#include "thermonet/io.hpp"
#include "thermonet/pathgen.hpp"

using namespace thermonet;
using namespace thermonet::pathgen;

namespace {

/// Digit reversal with exact rational arithmetic.
double radical_inverse(std::uint64_t n, unsigned base) {
    double inv = 1.0 / base, out = 0.0;
    while (n > 0) {
        out += double(n % base) * inv;
        n /= base;
        inv /= base;
    }
    return out;
}

}  // namespace

TEST(Halton, KnownValues) {
    const double b2[] = {0.5, 0.25, 0.75, 0.125};
    for (int i = 0; i < 4; ++i) EXPECT_EQ(halton(std::uint64_t(i + 1), 2), b2[i]);
    EXPECT_EQ(halton(1, 3), 1.0 / 3.0);
    EXPECT_EQ(halton(2, 3), 2.0 / 3.0);
    EXPECT_EQ(halton(3, 3), 1.0 / 9.0);
}

TEST(Halton, MatchesRadicalInverseAndRange) {
    for (unsigned base : kHaltonPrimes)
        for (std::uint64_t i = 1; i < 2000; ++i) {
            const double h = halton(i, base);
            EXPECT_GE(h, 0.0);
            EXPECT_LT(h, 1.0);
            EXPECT_NEAR(h, radical_inverse(i, base), 1e-15);
        }
    EXPECT_THROW(halton(0, 2), InvalidInput);
    EXPECT_THROW(halton(1, 1), InvalidInput);
}

TEST(Halton, LowerGapThanPseudoRandom) {
    // Largest gap between sorted coordinates along each axis, 10000 points.
    auto max_gap = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        double g = v.front();
        for (std::size_t i = 1; i < v.size(); ++i) g = std::max(g, v[i] - v[i - 1]);
        return std::max(g, 1.0 - v.back());
    };
    std::vector<double> hx, hy, rx, ry;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (std::uint64_t i = 1; i <= 10000; ++i) {
        hx.push_back(halton(i, 2));
        hy.push_back(halton(i, 3));
        rx.push_back(u(rng));
        ry.push_back(u(rng));
    }
    EXPECT_LT(max_gap(hx), max_gap(rx));
    EXPECT_LT(max_gap(hy), max_gap(ry));
}

TEST(SampleTargets, RespectBounds) {
    PathConfig cfg;
    cfg.points = 3;
    for (std::uint64_t s = 0; s < 300; ++s)
        for (const auto& t : sample_targets(cfg, s))
            for (std::size_t k = 0; k < 9; ++k) {
                const auto& b = is_diagonal_component(k) ? cfg.bounds_diag : cfg.bounds_offdiag;
                EXPECT_GE(t[k], b.lo);
                EXPECT_LE(t[k], b.hi);
            }
    EXPECT_NE(sample_targets(cfg, 0), sample_targets(cfg, 1));
}

TEST(SampleTargets, ExtrapolationBounds) {
    PathConfig cfg;
    cfg.use_extrapolation_bounds();
    EXPECT_EQ(cfg.bounds_diag, (Interval{0.97, 1.03}));
    EXPECT_EQ(cfg.bounds_offdiag, (Interval{-0.03, 0.03}));
}

TEST(BuildPath, Interpolation) {
    PathConfig cfg;
    cfg.steps_per_segment = 10;
    Target id{1, 0, 0, 0, 1, 0, 0, 0, 1};
    for (const auto& F : build_path({id}, cfg)) EXPECT_EQ(F, Tensor3::Identity());

    const auto targets = sample_targets(cfg, 5);
    const auto path = build_path(targets, cfg);
    ASSERT_EQ(path.size(), 1 + 2 * cfg.steps_per_segment);
    EXPECT_EQ(path.front(), Tensor3::Identity());
    EXPECT_EQ(path.back(), target_to_tensor(targets.back()));
    EXPECT_EQ(path[10], target_to_tensor(targets[0]));
    const Tensor3 mid = 0.5 * (target_to_tensor(targets[0]) + target_to_tensor(targets[1]));
    EXPECT_LT((path[15] - mid).cwiseAbs().maxCoeff(), 1e-15);
    EXPECT_THROW(build_path({}, cfg), InvalidInput);
}

TEST(EffectiveRate, Values) {
    PathConfig cfg;
    cfg.steps_per_segment = 20;
    EXPECT_EQ(effective_rate(std::vector<Tensor3>(5, Tensor3::Identity()), 1.0), 0.0);
    Target t{1.02, 0, 0, 0, 1, 0, 0, 0, 1};
    const auto path = build_path({t}, cfg);
    // Hand computation: largest step of E11 = ((1 + 0.001k)^2 - 1) / 2.
    double expected = 0.0;
    for (int k = 1; k <= 20; ++k) {
        const double a = 1.0 + 0.001 * k, b = 1.0 + 0.001 * (k - 1);
        expected = std::max(expected, 0.5 * (a * a - 1) - 0.5 * (b * b - 1));
    }
    EXPECT_NEAR(effective_rate(path, 1.0), expected, 1e-15);
    EXPECT_NEAR(effective_rate(path, 2.0), expected / 2, 1e-15);
    EXPECT_THROW(effective_rate({Tensor3::Identity()}, 1.0), InvalidInput);
}

TEST(GenerateDataset, RateWindowAndStructure) {
    PathConfig cfg;
    cfg.sequence_count = 8;
    cfg.steps_per_segment = 20;
    cfg.dt = 5.0;
    const auto ds = generate_dataset(cfg, oracle::MaterialParams{});
    ASSERT_EQ(ds.sequences.size(), 8u);
    for (std::size_t i = 0; i < ds.sequences.size(); ++i) {
        const auto& s = ds.sequences[i];
        EXPECT_EQ(s.F.front(), Tensor3::Identity());
        const double r = effective_rate(s.F, cfg.dt);
        EXPECT_GT(r, cfg.rate_min);
        EXPECT_LT(r, cfg.rate_max);
        EXPECT_EQ(s.ambient, cfg.ambient_grid[i % cfg.ambient_grid.size()]);
        for (const auto& F : s.F) EXPECT_GT(F.determinant(), 0.0);
        for (std::size_t t = 1; t < s.size(); ++t) EXPECT_GE(s.d[t], s.d[t - 1]);
    }
}

TEST(GenerateDataset, RejectsAndRedraws) {
    PathConfig cfg;
    cfg.sequence_count = 3;
    cfg.steps_per_segment = 20;
    cfg.rate_min = 5e-4;  // only the steeper draws pass
    cfg.dt = 1.0;
    const auto ds = generate_dataset(cfg, oracle::MaterialParams{});
    EXPECT_EQ(ds.sequences.size(), 3u);
    EXPECT_GT(ds.stats.rejected_by_rate, 0u);
    EXPECT_GT(ds.stats.rate_min_seen, cfg.rate_min);
}

TEST(GenerateDataset, ImpossibleWindowFails) {
    PathConfig cfg;
    cfg.sequence_count = 1;
    cfg.rate_min = 10.0;
    cfg.rate_max = 20.0;
    cfg.max_draws_per_sequence = 20;
    EXPECT_THROW(generate_dataset(cfg, oracle::MaterialParams{}), GenerationFailure);
}

TEST(GenerateDataset, DeterministicAndThreadIndependent) {
    PathConfig cfg;
    cfg.sequence_count = 6;
    cfg.steps_per_segment = 15;
    cfg.dt = 5.0;
    const auto a = generate_dataset(cfg, oracle::MaterialParams{}, {1});
    const auto b = generate_dataset(cfg, oracle::MaterialParams{}, {3});
    std::string sa, sb;
    for (const auto& s : a.sequences) sa += io::to_json(s).dump();
    for (const auto& s : b.sequences) sb += io::to_json(s).dump();
    EXPECT_EQ(sa, sb);
}

TEST(PathConfig, Validation) {
    PathConfig cfg;
    cfg.rate_min = 1.0;
    cfg.rate_max = 0.5;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = PathConfig{};
    cfg.ambient_grid.clear();
    EXPECT_THROW(cfg.validate(), ConfigError);
}

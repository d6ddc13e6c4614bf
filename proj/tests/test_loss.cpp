#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "ssp/loss.hpp"
#include "ssp/synthetic.hpp"

using namespace ssp;
using oracle::to_vec;

namespace {

struct Case {
    FeatureMap query;
    Prototype fg;
    PrototypeField bg;
    Mask gt;
};

Case random_case(std::uint64_t seed, std::size_t C = 3, std::size_t S = 4) {
    std::mt19937_64 rng(seed);
    return {FeatureMap(C, S, S, oracle::gaussian(rng, C * S * S)), Prototype(oracle::gaussian(rng, C)),
            PrototypeField(C, S, S, oracle::gaussian(rng, C * S * S)), Mask::binary(S, S, oracle::bits(rng, S * S))};
}

double oracle_loss(const Case& k, double t) {
    const std::size_t C = k.query.channels(), HW = k.query.pixels();
    const auto q = to_vec(k.query.data());
    return oracle::bce(oracle::cosine_map(to_vec(k.fg.values()), q, C, HW),
                       oracle::field_cosine_map(to_vec(k.bg.data()), q, C, HW), to_vec(k.gt.data()), t);
}

/// Query columns are +-v, prototypes v and -v.
Case separable(double scale) {
    const std::vector<float> v{0.6f, -0.3f, 0.74f};
    const std::vector<std::uint8_t> bits{1, 0, 1, 1, 0, 0, 1, 0, 1};
    std::vector<float> q(27), nb(27);
    for (std::size_t i = 0; i < 9; ++i) {
        for (std::size_t c = 0; c < 3; ++c) {
            q[c * 9 + i] = static_cast<float>(scale) * (bits[i] ? v[c] : -v[c]);
            nb[c * 9 + i] = -v[c];
        }
    }
    return {FeatureMap(3, 3, 3, q), Prototype(v), PrototypeField(3, 3, 3, nb), Mask::binary(3, 3, bits)};
}

} // namespace

TEST(LossMatching, UniformPredictionIsLn2) {
    std::mt19937_64 rng(1);
    const FeatureMap q(4, 5, 5, oracle::gaussian(rng, 100));
    const Prototype p(oracle::gaussian(rng, 4));
    const Mask gt = Mask::binary(5, 5, oracle::bits(rng, 25));
    EXPECT_NEAR(loss_matching(p, PrototypeField::broadcast(p, q.extent()), q, gt), std::log(2.0), 1e-12);
}

TEST(LossMatching, PerfectSeparationLimit) {
    const Case k = separable(1.0);
    double prev = INFINITY;
    for (double t : {1.0, 5.0, 20.0, 50.0}) {
        const double l = loss_matching(k.fg, k.bg, k.query, k.gt, t);
        EXPECT_LT(l, prev);
        prev = l;
    }
    EXPECT_LT(prev, 1e-30);
}

TEST(LossMatching, OracleParity) {
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        const Case k = random_case(seed, 2 + seed % 5, 3 + seed % 4);
        const double t = 0.5 + static_cast<double>(seed % 7);
        EXPECT_LT(oracle::rel_err(loss_matching(k.fg, k.bg, k.query, k.gt, t), oracle_loss(k, t)), 1e-6) << seed;
    }
}

TEST(LossMatching, RequiresBinaryGroundTruth) {
    const Case k = random_case(3);
    try {
        loss_matching(k.fg, k.bg, k.query, Mask::probability(k.query.extent()));
        ADD_FAILURE();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidValue);
    }
}

TEST(LossSelf, TwoClusterBelowLn2) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> n(0.0, 0.2);
    const auto bits = oracle::mixed_bits(rng, 36);
    std::vector<float> data(4 * 36);
    for (std::size_t i = 0; i < 36; ++i)
        for (std::size_t c = 0; c < 4; ++c)
            data[c * 36 + i] = static_cast<float>((bits[i] ? (c == 0) : (c == 2)) + n(rng));
    const FeatureMap f(4, 6, 6, data);
    const Mask gt = Mask::binary(6, 6, bits);
    const Prototype fg = masked_average_pooling(f, gt);
    const Prototype bg = masked_average_pooling(f, gt.complement(), PrototypeRole::background);
    EXPECT_LT(loss_self(fg, bg, f, gt), std::log(2.0));
    EXPECT_LT(loss_self(fg, adaptive_bg_prototype(f, gt.complement()), f, gt), std::log(2.0));
}

TEST(LossSelf, AllForegroundAlignedLimit) {
    const std::vector<float> v{1.0f, 2.0f};
    std::vector<float> data(8);
    for (std::size_t i = 0; i < 4; ++i) {
        data[i] = v[0];
        data[4 + i] = v[1];
    }
    const FeatureMap f(2, 2, 2, data);
    const Mask gt = Mask::binary(2, 2, {1, 1, 1, 1});
    const double l = loss_self(Prototype(v), Prototype({-1.0f, -2.0f}), f, gt, 50.0);
    EXPECT_LT(l, 1e-30);
}

TEST(LossSelf, OracleParity) {
    for (std::uint64_t seed = 100; seed < 120; ++seed) {
        const Case k = random_case(seed);
        EXPECT_LT(oracle::rel_err(loss_self(k.fg, k.bg, k.query, k.gt), oracle_loss(k, 1.0)), 1e-6);
    }
}

TEST(LossTotal, Arithmetic) {
    const SspConfig cfg;
    EXPECT_NEAR(loss_total(1.0, 1.0, 1.0, cfg), 2.2, 1e-15);
    EXPECT_EQ(loss_total(0.0, 0.0, 0.0, cfg), 0.0);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    for (int i = 0; i < 20; ++i) {
        const double a = u(rng), b = u(rng), c = u(rng);
        EXPECT_NEAR(loss_total(a, b, c, cfg), a + b + 0.2 * c, 1e-12);
    }
}

TEST(SupportSelfLoss, SkipsFullFrameSupports) {
    const Episode ep = generate_episode(SyntheticSpec{}, 2, 0);
    const auto l = support_self_loss(ep.supports, 1.0);
    ASSERT_TRUE(l);
    EXPECT_TRUE(std::isfinite(*l));
    EXPECT_LT(*l, std::log(2.0));
    SupportSample full = ep.supports[0];
    for (std::size_t i = 0; i < full.mask.pixels(); ++i) full.mask.set(i, 1.0f);
    const SupportSample only_full[] = {full};
    EXPECT_FALSE(support_self_loss(only_full, 1.0));
}

TEST(LossGradQuery, ConstantFeaturesFinite) {
    const FeatureMap q(3, 4, 4, std::vector<float>(48, 0.5f));
    const Mask gt = Mask::binary(4, 4, std::vector<std::uint8_t>(16, 1));
    const Prototype p({1.0f, 0.0f, -1.0f});
    const FeatureMap g = loss_grad_query(p, PrototypeField::broadcast(p.scaled(-1.0f), q.extent()), q, gt);
    for (float v : g.data()) EXPECT_TRUE(std::isfinite(v));
    const FeatureMap z = loss_grad_query(p, PrototypeField::broadcast(p, q.extent()), FeatureMap(3, 4, 4), gt);
    for (float v : z.data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(LossGradQuery, CentralDifferences) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Case k = random_case(1000 + seed);
        const FeatureMap g = loss_grad_query(k.fg, k.bg, k.query, k.gt);
        for (std::size_t i = 0; i < k.query.data().size(); ++i) {
            const float orig = k.query.data()[i];
            const float up = orig + 1e-3f, down = orig - 1e-3f;
            k.query.data()[i] = up;
            const double lp = loss_matching(k.fg, k.bg, k.query, k.gt);
            k.query.data()[i] = down;
            const double lm = loss_matching(k.fg, k.bg, k.query, k.gt);
            k.query.data()[i] = orig;
            const double fd = (lp - lm) / (static_cast<double>(up) - static_cast<double>(down));
            const double an = g.data()[i];
            if (std::abs(an) < 1e-6) continue;
            EXPECT_LT(std::abs(fd - an) / std::abs(an), 1e-3) << "seed " << seed << " component " << i;
        }
    }
}

TEST(LossGradQuery, ZeroAtSeparableOptimum) {
    for (double scale : {0.5, 1.0, 3.0}) {
        const Case k = separable(scale);
        const FeatureMap g = loss_grad_query(k.fg, k.bg, k.query, k.gt, 4.0);
        for (float v : g.data()) EXPECT_LT(std::abs(v), 1e-6);
    }
}

#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

using namespace csvscale;

TEST(PredictAccuracy, HandValues) {
    EXPECT_EQ(predict_accuracy({-7.0, 2.0, 0.25}, 2.0), 0.625);
    EXPECT_EQ(predict_accuracy({1.0, 0.0, 0.0}, 0.0), 0.5);
    EXPECT_NEAR(predict_accuracy({1.0, 0.0, 0.0}, 2.0), 0.8807971, 5e-8);
    EXPECT_NEAR(predict_accuracy({1.0, 0.0, 0.0}, 2.0), 1.0 / (1.0 + std::exp(-2.0)), 1e-16);
}

TEST(PredictAccuracy, RangeAndMonotonicity) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(-5.0, 5.0);
    for (int k = 0; k < 2000; ++k) {
        const ScalingLawParams p{u(rng), u(rng), k % 2 ? 0.25 : 0.0};
        const double a = u(rng), b = a + 0.01 + std::abs(u(rng)) * 0.1;
        const double pa = predict_accuracy(p, a), pb = predict_accuracy(p, b);
        EXPECT_GE(pa, p.gamma);
        EXPECT_LE(pa, 1.0);
        if (std::abs(p.alpha) > 0.1 && std::abs(p.alpha * (a - p.beta)) < 20.0) {
            EXPECT_GT(pa, p.gamma);
            EXPECT_LT(pa, 1.0);
            if (p.alpha > 0) {
                EXPECT_LT(pa, pb);
            } else {
                EXPECT_GT(pa, pb);
            }
        }
    }
    EXPECT_TRUE(std::isfinite(predict_accuracy({-1000.0, 0.0, 0.25}, 5.0)));
}

TEST(PredictAccuracy, AffineReparameterization) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    for (int k = 0; k < 1000; ++k) {
        const ScalingLawParams p{u(rng), u(rng), 0.25};
        const double a = std::exp(u(rng)), b = u(rng);
        const ScalingLawParams q{p.alpha / a, a * p.beta + b, p.gamma};
        const double c = u(rng);
        EXPECT_NEAR(predict_accuracy(q, a * c + b), predict_accuracy(p, c), 1e-9);
    }
}

TEST(LmFit, RecoversEvenlySpacedExample) {
    std::vector<double> scores, observed;
    const ScalingLawParams truth{-4.0, 1.0, 0.25};
    for (int k = 0; k <= 8; ++k) {
        scores.push_back(0.25 * k);
        observed.push_back(predict_accuracy(truth, scores.back()));
    }
    auto r = fit_levenberg_marquardt(scores, observed, 0.25);
    EXPECT_LE(std::abs(r.params.alpha + 4.0) / 4.0, 1e-6);
    EXPECT_LE(std::abs(r.params.beta - 1.0), 1e-6);
    EXPECT_EQ(r.params.gamma, 0.25);
    EXPECT_TRUE(r.converged);
    EXPECT_LT(r.mse, 1e-20);
}

TEST(LmFit, TwoDistinctScoresFitExactly) {
    // A(0) = 0.85 and A(2) = 0.4 under gamma 0.25 pin alpha = -ln 4, beta = 1.
    std::vector<double> scores = {0.0, 2.0, 0.0, 2.0};
    std::vector<double> observed = {0.85, 0.4, 0.85, 0.4};
    auto r = fit_multistart(scores, observed, 0.25);
    EXPECT_LE(r.mse, 1e-20);
    EXPECT_NEAR(r.params.alpha, -std::log(4.0), 1e-8);
    EXPECT_NEAR(r.params.beta, 1.0, 1e-8);
}

TEST(LmFit, RandomizedRecoveryAndDescent) {
    for (std::uint64_t seed = 100; seed < 140; ++seed) {
        auto out = testing_support::lm_recovery_instance(seed);
        EXPECT_LE(out.rel_error_alpha, 1e-6) << seed;
        EXPECT_LE(out.rel_error_beta, 1e-6) << seed;
        EXPECT_TRUE(out.monotone) << seed;
    }
}

TEST(LmFit, DescentUnderNoise) {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> noise(0.0, 0.05);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<double> scores, observed;
        for (int m = 0; m < 15; ++m) {
            scores.push_back(0.1 * m);
            observed.push_back(std::clamp(predict_accuracy({-3.0, 0.7, 0.25}, 0.1 * m) + noise(rng), 0.0, 1.0));
        }
        auto r = fit_multistart(scores, observed, 0.25);
        for (std::size_t k = 1; k < r.accepted_mse.size(); ++k)
            EXPECT_LE(r.accepted_mse[k], r.accepted_mse[k - 1]);
        EXPECT_EQ(r.mse, r.accepted_mse.back());
    }
}

TEST(LmFit, DegenerateInputs) {
    std::vector<double> scores = {0.1, 0.5, 0.9};
    std::vector<double> flat = {0.25, 0.25, 0.25};
    EXPECT_THROW(fit_levenberg_marquardt(scores, flat, 0.25), FitError);
    EXPECT_THROW(fit_multistart(scores, flat, 0.25), FitError);
    std::vector<double> same = {0.5, 0.5, 0.5};
    std::vector<double> obs = {0.3, 0.5, 0.7};
    EXPECT_THROW(fit_levenberg_marquardt(same, obs, 0.25), FitError);
    std::vector<double> two = {0.1, 0.2};
    EXPECT_THROW(fit_levenberg_marquardt(two, std::vector<double>{0.3, 0.4}, 0.0), FitError);
    EXPECT_THROW(fit_levenberg_marquardt(scores, obs, 1.0), ValidationError);
    EXPECT_THROW(fit_levenberg_marquardt(scores, std::vector<double>{0.3, NAN, 0.4}, 0.0), ValidationError);
}

TEST(LmFit, IterationCapReportsNotConverged) {
    std::vector<double> scores, observed;
    for (int k = 0; k <= 8; ++k) {
        scores.push_back(0.25 * k);
        observed.push_back(predict_accuracy({-4.0, 1.0, 0.25}, scores.back()));
    }
    LmFitConfig cfg;
    cfg.max_iters = 1;
    auto r = fit_levenberg_marquardt(scores, observed, 0.25, cfg, std::make_pair(-0.5, 0.2));
    EXPECT_FALSE(r.converged);
    EXPECT_EQ(r.iterations, 1u);
    EXPECT_LT(r.mse, r.accepted_mse.front());
}

TEST(LmFit, BelowGammaObservationsCounted) {
    std::vector<double> scores = {0.0, 1.0, 2.0, 3.0};
    std::vector<double> observed = {0.9, 0.6, 0.3, 0.2};
    auto r = fit_multistart(scores, observed, 0.25);
    EXPECT_EQ(r.below_gamma, 1u);
}

TEST(Multistart, SignFollowsData) {
    std::vector<double> scores = {0.0, 0.5, 1.0, 1.5, 2.0};
    std::vector<double> down = {0.9, 0.8, 0.6, 0.4, 0.3};
    std::vector<double> up(down.rbegin(), down.rend());
    EXPECT_LT(fit_multistart(scores, down, 0.25).params.alpha, 0.0);
    EXPECT_GT(fit_multistart(scores, up, 0.25).params.alpha, 0.0);
}

TEST(Multistart, ScaleEquivariantUnderPowerOfTwo) {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> scores, observed;
    for (int m = 0; m < 12; ++m) {
        scores.push_back(1.0 + u(rng));
        observed.push_back(0.25 + 0.7 * u(rng));
    }
    auto a = fit_multistart(scores, observed, 0.25);
    std::vector<double> half;
    for (double s : scores) half.push_back(0.5 * s);
    auto b = fit_multistart(half, observed, 0.25);
    EXPECT_EQ(b.params.alpha, 2.0 * a.params.alpha);
    EXPECT_EQ(b.params.beta, 0.5 * a.params.beta);
    EXPECT_EQ(b.mse, a.mse);
}

TEST(Median, OddEven) {
    EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
    EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
}

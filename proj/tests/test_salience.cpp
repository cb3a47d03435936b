#include <gtest/gtest.h>

#include <random>

#include "test_support.hpp"

using namespace csvscale;

namespace {

Corpus two_token_corpus(std::vector<double> rows, std::size_t d) {
    Corpus c;
    auto s = testing_support::ascii_sample("s", 4, {{0, 2}, {2, 4}});
    c.features.push_back({"s", d, std::move(rows)});
    c.samples.push_back(std::move(s));
    finalize_corpus(c);
    return c;
}

}  // namespace

TEST(ScoreWeights, ZeroScorerGivesHalf) {
    auto c = two_token_corpus({1, 2, 3, 4}, 2);
    auto w = score_weights(SalienceScorer::zeros(2), c);
    EXPECT_EQ(w[0], (std::vector<double>{0.5, 0.5}));
}

TEST(ScoreWeights, PreActivationForcedToZero) {
    auto c = two_token_corpus({1, 0, 0, 1}, 2);
    SalienceScorer s{{2.0, 5.0}, -2.0, Activation::sigmoid};
    EXPECT_EQ(score_weights(s, c)[0][0], 0.5);
}

TEST(ScoreWeights, LargeBias) {
    auto c = two_token_corpus({1, 0, 0, 1}, 2);
    SalienceScorer s{{0.0, 0.0}, 10.0, Activation::sigmoid};
    // 1 / (1 + e^-10) to 7 significant digits.
    EXPECT_NEAR(score_weights(s, c)[0][1], 0.9999546, 5e-8);
    EXPECT_NEAR(score_weights(s, c)[0][1], 1.0 / (1.0 + std::exp(-10.0)), 1e-16);
}

TEST(ScoreWeights, SoftplusAndErrors) {
    auto c = two_token_corpus({1, 0, 0, 1}, 2);
    SalienceScorer s{{0.0, 0.0}, 0.0, Activation::softplus};
    EXPECT_NEAR(score_weights(s, c)[0][0], std::log(2.0), 1e-15);
    EXPECT_NEAR(activate(Activation::softplus, 800.0), 800.0, 1e-12);
    EXPECT_EQ(activate(Activation::softplus, -800.0), 0.0);
    SalienceScorer wrong{{1.0}, 0.0, Activation::sigmoid};
    EXPECT_THROW(score_weights(wrong, c), ValidationError);
    EXPECT_THROW(parse_activation("relu"), ValidationError);
}

TEST(CapabilityScore, HandExamples) {
    std::vector<std::vector<double>> losses = {{0.5, 1.5}};
    EXPECT_EQ(capability_score({{1.0, 1.0}}, losses, 4), 0.5);
    EXPECT_EQ(capability_score({{0.0, 0.0}}, losses, 4), 0.0);
    EXPECT_EQ(capability_score({{2.0, 0.0}}, losses, 4), 0.25);
    EXPECT_THROW(capability_score({{1.0}}, losses, 4), ValidationError);
    EXPECT_THROW(capability_score({{1.0, 1.0}}, losses, 0), ValidationError);
}

TEST(CapabilityScore, LinearityPermutationMonotonicity) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t samples = 1 + rng() % 6;
        WeightVector w(samples);
        std::vector<std::vector<double>> l(samples);
        std::size_t n_chars = 0;
        for (std::size_t s = 0; s < samples; ++s) {
            const std::size_t t = 1 + rng() % 5;
            for (std::size_t i = 0; i < t; ++i) {
                w[s].push_back(0.01 + u(rng));
                l[s].push_back(u(rng));
            }
            n_chars += t + rng() % 3;
        }
        const double base = capability_score(w, l, n_chars);
        const double c = u(rng) * 3.0;
        WeightVector scaled = w;
        for (auto& ws : scaled)
            for (auto& x : ws) x *= c;
        EXPECT_NEAR(capability_score(scaled, l, n_chars), c * base, 1e-12 * (1.0 + c * base));

        std::vector<std::size_t> perm(samples);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        WeightVector wp;
        std::vector<std::vector<double>> lp;
        for (auto k : perm) {
            wp.push_back(w[k]);
            lp.push_back(l[k]);
        }
        EXPECT_NEAR(capability_score(wp, lp, n_chars), base, 1e-12);

        auto bumped = l;
        bumped[rng() % samples][0] += 0.1;
        EXPECT_GT(capability_score(w, bumped, n_chars), base);
    }
}

TEST(CapabilityScore, UnitWeightsEqualAllTokenBaseline) {
    auto fam = generate_family(testing_support::small_spec(4));
    WeightVector ones;
    for (const auto& s : fam.corpus.samples) ones.emplace_back(s.target_spans.size(), 1.0);
    const auto c = capability_scores(ones, fam.mapped, fam.corpus.n_chars);
    for (std::size_t m = 0; m < fam.mapped.size(); ++m)
        EXPECT_LE(std::abs(c[m] - all_token_score(fam.mapped[m], fam.corpus.n_chars)), 1e-12);
}

TEST(Gradient, ZeroWhenPredictionsMatch) {
    std::mt19937_64 rng(2);
    auto corpus = testing_support::random_corpus(3, 10, 3, rng);
    auto models = testing_support::random_mapped(corpus, 5, rng);
    SalienceScorer s{{0.3, -0.2, 0.5}, 0.1, Activation::sigmoid};
    ScalingLawParams p{-2.0, 1.0, 0.25};
    std::vector<double> observed;
    for (double c : capability_scores(score_weights(s, corpus), models, corpus.n_chars))
        observed.push_back(predict_accuracy(p, c));
    auto g = mse_gradient_theta(s, corpus, models, p, observed);
    for (double x : g.theta) EXPECT_EQ(x, 0.0);
    EXPECT_EQ(g.bias, 0.0);
}

TEST(Gradient, SingleTokenHandDerivation) {
    // One sample, one token, one model: C = w * l / N, w = sigmoid(t*h + b).
    Corpus c;
    c.samples.push_back(testing_support::ascii_sample("s", 2, {{0, 2}}));
    c.features.push_back({"s", 1, {1.5}});
    finalize_corpus(c);
    std::vector<MappedModel> models = {{"m", {{0.8}}}};
    SalienceScorer s{{0.4}, -0.3, Activation::sigmoid};
    ScalingLawParams p{-3.0, 0.2, 0.25};
    std::vector<double> observed = {0.6};

    const double u = 0.4 * 1.5 - 0.3;
    const double w = 1.0 / (1.0 + std::exp(-u));
    const double C = w * 0.8 / 2.0;
    const double z = 1.0 / (1.0 + std::exp(3.0 * (C - 0.2)));
    const double A = 0.25 + 0.75 * z;
    const double dA_dC = 0.75 * -3.0 * z * (1.0 - z);
    const double dC_du = 0.8 / 2.0 * w * (1.0 - w);
    const double dL_du = 2.0 * (A - 0.6) * dA_dC * dC_du;

    auto g = mse_gradient_theta(s, c, models, p, observed);
    EXPECT_NEAR(g.theta[0], dL_du * 1.5, 1e-15);
    EXPECT_NEAR(g.bias, dL_du, 1e-15);
}

TEST(Gradient, CentralDifferencesOn100Configurations) {
    for (std::uint64_t seed = 0; seed < 100; ++seed)
        EXPECT_LE(testing_support::gradient_check_instance(seed), 1e-5) << "seed " << seed;
}

TEST(Gradient, ThreadCountDoesNotChangeResult) {
    std::mt19937_64 rng(8);
    auto corpus = testing_support::random_corpus(5, 20, 4, rng);
    auto models = testing_support::random_mapped(corpus, 9, rng);
    SalienceScorer s{{0.1, 0.2, -0.3, 0.4}, 0.0, Activation::sigmoid};
    ScalingLawParams p{-2.0, 0.5, 0.25};
    std::vector<double> observed(9, 0.5);
    auto a = mse_gradient_theta(s, corpus, models, p, observed, 1);
    auto b = mse_gradient_theta(s, corpus, models, p, observed, 3);
    EXPECT_EQ(a.theta, b.theta);
    EXPECT_EQ(a.bias, b.bias);
}

TEST(Checkpoint, RoundTripIsExact) {
    auto dir = testing_support::scratch_dir("scorer_ckpt");
    SalienceScorer s{{0.1, -1.0 / 3.0, 2e-300}, 0.7, Activation::softplus};
    save_scorer(s, dir / "s.json");
    auto back = load_scorer(dir / "s.json");
    EXPECT_EQ(back.theta, s.theta);
    EXPECT_EQ(back.bias, s.bias);
    EXPECT_EQ(back.activation, s.activation);
    write_text_file(dir / "bad.json", R"({"d":3,"activation":"sigmoid","bias":0,"theta":[1,2]})");
    EXPECT_THROW(load_scorer(dir / "bad.json"), ValidationError);
}

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "soclab/soclab.hpp"

using namespace soclab;

namespace {

TokenMdp small_mdp(std::size_t vocab = 2, std::size_t max_len = 3) {
    TokenMdp m;
    m.vocab = {vocab, std::nullopt};
    m.max_len = max_len;
    m.prompts = {Context::prompt({0})};
    return m;
}

LogitModel with_row(Logits row) {
    auto model = init_model(small_mdp(row.size()), InitSpec{});
    model.set_row({0}, std::move(row));
    return model;
}

const Context s0 = Context::prompt({0});

} // namespace

TEST(Rng, SplitMix64ReferenceVector) {
    // Published outputs of the reference splitmix64.c for seed 1234567.
    SplitMix64 g(1234567);
    EXPECT_EQ(g(), 6457827717110365317ULL);
    EXPECT_EQ(g(), 3203168211198807973ULL);
    EXPECT_EQ(g(), 9817491932198370423ULL);
    EXPECT_EQ(g(), 4593380528125082431ULL);
    EXPECT_EQ(g(), 16408922859458223821ULL);
}

TEST(Rng, BelowStaysInRangeAndNormalHasUnitMoments) {
    SplitMix64 g(9);
    double sum = 0, sq = 0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        EXPECT_LT(g.below(7), 7u);
        const double z = g.normal();
        sum += z;
        sq += z * z;
    }
    EXPECT_NEAR(sum / n, 0.0, 0.01);
    EXPECT_NEAR(sq / n, 1.0, 0.02);
}

TEST(Logits, ZeroInitIsAllZeros) {
    const auto model = init_model(small_mdp(3), InitSpec{InitScheme::zeros, 0.0, 5});
    EXPECT_EQ(logits(model, s0), (Logits{0, 0, 0}));
    const auto p = policy(model, Context{{0, 2, 1}, 1});
    for (std::size_t a = 0; a < 3; ++a) EXPECT_DOUBLE_EQ(p[a], 1.0 / 3.0);
}

TEST(Logits, GaussianIsSeededPerContext) {
    const auto m = small_mdp(4);
    const auto a = init_model(m, InitSpec{InitScheme::gaussian, 2.0, 42});
    const auto b = init_model(m, InitSpec{InitScheme::gaussian, 2.0, 42});
    const Context c{{0, 1}, 1};
    EXPECT_EQ(logits(a, c), logits(a, c));
    EXPECT_EQ(logits(a, c), logits(b, c));
    EXPECT_NE(logits(a, c), logits(a, s0));
    EXPECT_NE(logits(a, c), logits(init_model(m, InitSpec{InitScheme::gaussian, 2.0, 43}), c));
}

TEST(Logits, GaussianSigmaZeroEqualsZeros) {
    const auto m = small_mdp(4);
    const auto g = init_model(m, InitSpec{InitScheme::gaussian, 0.0, 42});
    const auto z = init_model(m, InitSpec{InitScheme::zeros, 0.0, 42});
    for (const auto& c : {s0, Context{{0, 3}, 1}, Context{{0, 3, 1}, 1}}) EXPECT_EQ(logits(g, c), logits(z, c));
}

TEST(Logits, GoldenGaussianSigmaTwo) {
    std::ifstream in(std::string(SOCLAB_TEST_DATA) + "/gaussian_sigma2_logits.json");
    ASSERT_TRUE(in) << "golden file missing";
    const auto golden = nlohmann::json::parse(in);
    TokenMdp m = small_mdp(golden.at("vocab_size").get<std::size_t>(), 8);
    const auto model = init_model(m, InitSpec{InitScheme::gaussian, golden.at("sigma").get<double>(), golden.at("seed").get<std::uint64_t>()});
    for (const auto& e : golden.at("contexts")) {
        const Context c{e.at("context").get<TokenSeq>(), 1};
        EXPECT_EQ(logits(model, c), e.at("logits").get<Logits>()) << format_tokens(c.tokens);
    }
}

TEST(Logits, TerminalContextIsAnError) {
    TokenMdp m = small_mdp(3, 1);
    m.vocab.eos = 2;
    const auto model = init_model(m, InitSpec{});
    EXPECT_THROW(logits(model, Context{{0, 1}, 1}), Error);
    EXPECT_THROW(soft_value(model, Context{{0, 2}, 1}), Error);
    EXPECT_THROW(policy(model, Context{{0, 2}, 1}), Error);
}

TEST(Policy, HandValues) {
    const auto half = policy(with_row({0, 0}), s0);
    EXPECT_DOUBLE_EQ(half[0], 0.5);
    EXPECT_DOUBLE_EQ(half[1], 0.5);

    const auto p = policy(with_row({1, 0}), s0);
    const double e = std::numbers::e;
    EXPECT_NEAR(p[0], e / (e + 1), 1e-15);
    EXPECT_NEAR(p[1], 1 / (e + 1), 1e-15);
    EXPECT_NEAR(p[0], 0.73106, 1e-5);

    const auto big = policy(with_row({1000, 0}), s0);
    EXPECT_EQ(big[0], 1.0);
    EXPECT_GE(big[1], 0.0);
    EXPECT_LT(big[1], 1e-300);
    const auto lp = log_policy(with_row({1000, 0}), s0);
    EXPECT_DOUBLE_EQ(lp[1], -1000.0);
}

TEST(SoftValue, HandValues) {
    EXPECT_NEAR(soft_value(with_row({0, 0}), s0), std::log(2.0), 1e-15);
    EXPECT_NEAR(soft_value(with_row({1, 0}), s0), std::log(std::numbers::e + 1), 1e-15);
    EXPECT_NEAR(soft_value(with_row({1, 0}), s0), 1.313262, 1e-6);
    for (double c : {-30.0, 0.5, 7.0, 650.0})
        EXPECT_NEAR(soft_value(with_row({c, c, c, c, c}), s0), c + std::log(5.0), 1e-12 * std::max(1.0, std::abs(c)));
}

TEST(Entropy, HandValues) {
    EXPECT_NEAR(entropy(ProbVector({0.5, 0.5})), std::log(2.0), 1e-15);
    EXPECT_EQ(entropy(ProbVector({1.0, 0.0, 0.0})), 0.0);
    EXPECT_NEAR(entropy(ProbVector({0.73106, 0.26894})), 0.58220, 1e-5);
    const auto p = policy(with_row({0.3, -1.2, 2.0}), s0);
    EXPECT_GE(entropy(p), 0.0);
    EXPECT_LE(entropy(p), std::log(3.0));
}

TEST(ProbVector, RejectsInvalidEntries) {
    EXPECT_THROW(ProbVector({0.5, 0.6}), Error);
    EXPECT_THROW(ProbVector({-0.1, 1.1}), Error);
    EXPECT_NO_THROW(ProbVector({0.25, 0.75}));
}

TEST(Policy, PropertiesOnRandomLogits) {
    SplitMix64 g(17);
    for (int i = 0; i < 2000; ++i) {
        const std::size_t n = 2 + g.below(6);
        Logits q(n);
        for (auto& v : q) v = g.uniform(-40, 40);
        const auto model = with_row(q);
        const auto p = policy(model, s0);
        const auto lp = log_policy(model, s0);
        const double v = soft_value(model, s0);
        double sum = 0;
        for (std::size_t a = 0; a < n; ++a) {
            sum += p[a];
            EXPECT_NEAR(lp[a], q[a] - v, 1e-10);
        }
        EXPECT_NEAR(sum, 1.0, 1e-12);
        const double mx = *std::ranges::max_element(q);
        EXPECT_GE(v, mx);
        EXPECT_LE(v, mx + std::log(static_cast<double>(n)));

        // Independent evaluation without the max shift (safe for |q| <= 40).
        double z = 0;
        for (double x : q) z += std::exp(x);
        EXPECT_NEAR(v, std::log(z), 1e-12 * std::max(1.0, std::abs(v)));

        const double c = g.uniform(-100, 100);
        Logits shifted = q;
        for (auto& x : shifted) x += c;
        const auto ms = with_row(shifted);
        const auto ps = policy(ms, s0);
        for (std::size_t a = 0; a < n; ++a) EXPECT_NEAR(ps[a], p[a], 1e-12);
        EXPECT_NEAR(soft_value(ms, s0), v + c, 1e-10);

        Logits bumped = q;
        bumped[static_cast<std::size_t>(std::ranges::max_element(q) - q.begin())] += 0.5;
        EXPECT_GT(soft_value(with_row(bumped), s0), v);
    }
}

TEST(LogitModel, MaterializeAndSetRow) {
    auto model = init_model(small_mdp(3), InitSpec{InitScheme::gaussian, 1.0, 3});
    const TokenSeq key{0, 2};
    EXPECT_FALSE(model.is_materialized(key));
    const auto before = model.row(key);
    EXPECT_EQ(model.materialize(key), before);
    EXPECT_TRUE(model.is_materialized(key));
    EXPECT_THROW(model.set_row(key, {1.0, 2.0}), Error);
    EXPECT_THROW(model.set_row(key, {1.0, 2.0, std::nan("")}), Error);
    EXPECT_THROW(model.set_row(key, {1.0, 2.0, INFINITY}), Error);
}

TEST(InitModel, RejectsBadSigmaAndStrayRows) {
    const auto m = small_mdp(3);
    EXPECT_THROW(init_model(m, InitSpec{InitScheme::gaussian, -1.0, 0}), Error);
    EXPECT_THROW(init_model(m, InitSpec{InitScheme::gaussian, NAN, 0}), Error);
    EXPECT_THROW(init_model(m, InitSpec{InitScheme::gaussian, 1.0, 0}, {{TokenSeq{0}, Logits{1, 2, 3}}}), Error);
    const auto t = init_model(m, InitSpec{InitScheme::from_table, 0.0, 0}, {{TokenSeq{0}, Logits{1, 2, 3}}});
    EXPECT_EQ(logits(t, s0), (Logits{1, 2, 3}));
    EXPECT_EQ(logits(t, Context{{0, 1}, 1}), (Logits{0, 0, 0}));
}

#include <gtest/gtest.h>

#include "soclab/soclab.hpp"

using namespace soclab;

TEST(SinglePath, SeedZeroDepthThreeBinary) {
    auto p = default_params(Family::single_path);
    p.seed = 0;
    p.depth = 3;
    p.vocab_size = 2;
    const auto task = generate_task(p);
    ASSERT_EQ(task.mdp.reward.rewarded().size(), 1u);
    ASSERT_EQ(task.demos.trajectories().size(), 1u);
    const auto& expert = task.demos.trajectories().front();
    EXPECT_EQ(expert.actions.size(), 3u);
    EXPECT_EQ(*task.mdp.reward.rewarded().begin(), expert.final().tokens);
    EXPECT_TRUE(task.prior.empty());
}

TEST(BranchyTrap, BranchesAreNeverSupervised) {
    auto p = default_params(Family::branchy_trap);
    p.seed = 7;
    p.depth = 5;
    p.branches = 2;
    const auto task = generate_task(p);
    const auto keys = task.demos.supervised_keys();

    std::set<TokenSeq> expert_prefixes;
    for (const auto& t : task.demos.trajectories())
        for (std::size_t i = 0; i + 1 < t.contexts.size(); ++i) expert_prefixes.insert(t.contexts[i].tokens);
    EXPECT_EQ(keys, expert_prefixes);

    // Every prior row off the expert prefixes is a decoy row, and decoy rows
    // exist for each prompt.
    std::size_t decoys = 0;
    for (const auto& [key, row] : task.prior)
        if (!expert_prefixes.contains(key)) {
            ++decoys;
            EXPECT_FALSE(keys.contains(key));
        }
    EXPECT_GE(decoys, task.mdp.prompts.size() * p.branches);

    // Each branch point carries a positive logit on exactly `branches` decoy tokens.
    for (const auto& t : task.demos.trajectories()) {
        const auto& row = task.prior.at(t.initial().tokens);
        std::size_t positive = 0;
        for (std::size_t a = 0; a < row.size(); ++a)
            if (a != t.actions[0] && row[a] > 0) ++positive;
        EXPECT_LE(positive, p.branches);
        EXPECT_EQ(terminal_reward(task.mdp, t.final()), 1);
    }
    EXPECT_EQ(task.mdp.reward.rewarded().size(), task.mdp.prompts.size());
}

TEST(Tasks, AreDeterministic) {
    for (auto f : {Family::single_path, Family::branchy_trap, Family::random_dag})
        for (std::uint64_t seed : {0u, 7u, 123u}) {
            const auto a = generate_task(f, seed);
            const auto b = generate_task(f, seed);
            EXPECT_EQ(a.mdp.prompts, b.mdp.prompts);
            EXPECT_EQ(a.mdp.reward.rewarded(), b.mdp.reward.rewarded());
            EXPECT_EQ(a.demos.pairs(), b.demos.pairs());
            EXPECT_EQ(a.prior, b.prior);
        }
    EXPECT_NE(generate_task(Family::branchy_trap, 1).prior, generate_task(Family::branchy_trap, 2).prior);
}

TEST(RandomDag, CountsAndDemoSubset) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto p = default_params(Family::random_dag);
        p.seed = seed;
        p.rewarded = 4;
        p.demonstrated = 2;
        const auto task = generate_task(p);
        EXPECT_EQ(task.mdp.reward.rewarded().size(), p.prompts * 4);
        EXPECT_EQ(task.demos.trajectories().size(), p.prompts * 2);
        for (const auto& t : task.demos.trajectories()) EXPECT_TRUE(task.mdp.reward.rewarded().contains(t.final().tokens));
    }
}

TEST(Tasks, InvalidParamsAreRejected) {
    const auto bad = [](auto mutate) {
        auto p = default_params(Family::branchy_trap);
        mutate(p);
        try {
            generate_task(p);
        } catch (const Error& e) {
            return e.kind() == ErrorKind::invalid_parameter;
        }
        return false;
    };
    EXPECT_TRUE(bad([](TaskParams& p) { p.vocab_size = 1; }));
    EXPECT_TRUE(bad([](TaskParams& p) { p.depth = 0; }));
    EXPECT_TRUE(bad([](TaskParams& p) { p.prompts = 0; }));
    EXPECT_TRUE(bad([](TaskParams& p) { p.branch_depth = p.depth + 1; }));
    EXPECT_TRUE(bad([](TaskParams& p) { p.branches = p.vocab_size; }));
    EXPECT_TRUE(bad([](TaskParams& p) {
        p.family = Family::random_dag;
        p.demonstrated = p.rewarded + 1;
    }));
}

TEST(Family, NamesRoundTrip) {
    for (auto f : {Family::single_path, Family::branchy_trap, Family::random_dag}) EXPECT_EQ(parse_family(to_string(f)), f);
    EXPECT_EQ(parse_family("branchy-trap"), Family::branchy_trap);
    EXPECT_THROW(parse_family("spiral"), Error);
}

TEST(InitialModel, OverlaysThePriorOnSeededDefaults) {
    const auto task = generate_task(Family::branchy_trap, 3);
    const auto m = initial_model(task, InitSpec{InitScheme::gaussian, 2.0, 11});
    for (const auto& [key, row] : task.prior) EXPECT_EQ(m.row(key), row);
    const auto z = initial_model(task, InitSpec{InitScheme::zeros, 5.0, 11});
    EXPECT_EQ(z.init_spec().sigma, 0.0);
}

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "soclab/soclab.hpp"

using namespace soclab;

namespace {

std::filesystem::path scratch(const std::string& name) {
    return std::filesystem::temp_directory_path() / ("soclab-harness-" + std::to_string(::getpid())) / name;
}

ExperimentConfig small_config() {
    ExperimentConfig cfg;
    cfg.task = default_params(Family::single_path);
    cfg.seeds = {0, 1};
    cfg.variants = {{"sft", TrainConfig{.lambda = 0.0, .lr = 1.0, .epochs = 40, .init = {InitScheme::gaussian, 1.0, 0}}},
                    {"soc", TrainConfig{.lambda = 0.2, .lr = 1.0, .epochs = 40, .init = {InitScheme::gaussian, 1.0, 0}}}};
    cfg.widths = {1, 3};
    return cfg;
}

} // namespace

TEST(ValueGap, ConstantLogitsGiveZeroGaps) {
    const auto task = generate_task(Family::random_dag, 1);
    const auto model = init_model(task.mdp, InitSpec{});
    for (const auto& t : task.demos.trajectories())
        for (double g : value_gap_series(model, t)) EXPECT_EQ(g, 0.0);
    EXPECT_EQ(mean_value_gap(model, task.demos), 0.0);
}

TEST(ValueGap, OracleGapsAreValueDifferences) {
    const auto task = generate_task(Family::single_path, 0);
    const auto t = soft_q_backward(task.mdp);
    const auto pi = optimal_policy(t, task.mdp);
    const auto& traj = task.demos.trajectories().front();
    const auto gaps = value_gap_series(pi, traj);
    ASSERT_EQ(gaps.size(), traj.actions.size() - 1);
    for (std::size_t i = 0; i < gaps.size(); ++i)
        EXPECT_NEAR(gaps[i], std::abs(t.value(task.mdp, traj.contexts[i]) - t.value(task.mdp, traj.contexts[i + 1])), 1e-12);
}

TEST(ValueGap, RejectsBrokenTrajectories) {
    const auto task = generate_task(Family::single_path, 0);
    auto traj = task.demos.trajectories().front();
    traj.contexts.pop_back();
    EXPECT_THROW(value_gap_series(init_model(task.mdp, InitSpec{}), traj), Error);
}

TEST(Config, ValidationRules) {
    auto cfg = small_config();
    EXPECT_NO_THROW(cfg.validate());
    auto a = cfg;
    a.seeds.clear();
    EXPECT_THROW(run_experiment(a), Error);
    auto b = cfg;
    b.widths = {0};
    EXPECT_THROW(b.validate(), Error);
    auto c = cfg;
    c.variants[1].name = "sft";
    EXPECT_THROW(c.validate(), Error);
    auto d = cfg;
    d.variants[0].name = "a,b";
    EXPECT_THROW(d.validate(), Error);
    auto e = cfg;
    e.variants.clear();
    EXPECT_THROW(e.validate(), Error);
}

TEST(Config, EmptySeedsWriteNothing) {
    const auto dir = scratch("empty");
    auto cfg = small_config();
    cfg.seeds.clear();
    try {
        emit_report(run_experiment(cfg), dir);
        FAIL();
    } catch (const Error&) {
    }
    EXPECT_FALSE(std::filesystem::exists(dir));
}

TEST(Config, JsonRoundTripAndSeedRange) {
    const auto j = json::parse(R"({"task": {"family": "branchy-trap"}, "seeds": {"first": 3, "count": 4},
        "init": {"scheme": "gaussian", "sigma": 1.5},
        "variants": [{"lambda": 0}, {"name": "soc", "lambda": 0.2, "lr": 0.5, "epochs": 7, "init": {"sigma": 0.5}}],
        "widths": [2, 4], "workers": 3})");
    const auto cfg = experiment_config_from_json(j);
    EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{3, 4, 5, 6}));
    EXPECT_EQ(cfg.variants[0].name, "lambda=0");
    EXPECT_EQ(cfg.variants[0].train.init.sigma, 1.5);
    EXPECT_EQ(cfg.variants[1].train.init.sigma, 0.5);
    EXPECT_EQ(cfg.variants[1].train.epochs, 7);
    EXPECT_EQ(cfg.widths, (std::vector<std::size_t>{2, 4}));
    EXPECT_EQ(cfg.workers, 3u);
    const auto back = experiment_config_from_json(to_json(cfg));
    EXPECT_EQ(back.seeds, cfg.seeds);
    EXPECT_EQ(back.task, cfg.task);
    EXPECT_EQ(back.variants[1].train.lr, 0.5);
}

TEST(Experiment, CartesianRowsAndTrivialTaskIsSolved) {
    const auto report = run_experiment(small_config());
    ASSERT_FALSE(report.failure);
    EXPECT_EQ(report.rows.size(), 8u);
    EXPECT_EQ(report.logs.size(), 4u);
    for (const auto& r : report.rows) {
        EXPECT_EQ(r.greedy_acc, 1.0);
        EXPECT_EQ(r.beam_acc, 1.0);
        for (double x : {r.greedy_acc, r.beam_acc, r.expected_reward, r.overopt_rate}) {
            EXPECT_GE(x, 0.0);
            EXPECT_LE(x, 1.0);
        }
    }
    for (const auto& log : report.logs) EXPECT_EQ(log.epochs.size(), 41u);
}

TEST(Experiment, WidthOneBeamEqualsGreedy) {
    auto cfg = small_config();
    cfg.task = default_params(Family::branchy_trap);
    cfg.widths = {1};
    cfg.seeds = {0, 1, 2, 3};
    for (const auto& r : run_experiment(cfg).rows) EXPECT_EQ(r.beam_acc, r.greedy_acc);
}

TEST(Experiment, AggregatesEqualRecomputation) {
    auto cfg = small_config();
    cfg.task = default_params(Family::branchy_trap);
    cfg.seeds = {0, 1, 2};
    const auto report = run_experiment(cfg);
    for (const auto& a : report.aggregates) {
        double beam = 0, gap = 0;
        std::size_t n = 0;
        for (const auto& r : report.rows)
            if (r.variant == a.variant && r.width == a.width) {
                beam += r.beam_acc;
                gap += r.value_gap;
                ++n;
            }
        EXPECT_EQ(a.n, n);
        EXPECT_NEAR(a.beam_acc, beam / double(n), 1e-15);
        EXPECT_NEAR(a.value_gap, gap / double(n), 1e-15);
    }
}

TEST(Experiment, WorkerCountDoesNotChangeRows) {
    auto cfg = small_config();
    cfg.task = default_params(Family::branchy_trap);
    cfg.seeds = {0, 1, 2, 3, 4};
    const auto one = rows_csv(run_experiment(cfg).rows);
    cfg.workers = 4;
    EXPECT_EQ(rows_csv(run_experiment(cfg).rows), one);
}

TEST(Experiment, SftLeavesUnsupervisedErrorUnchanged) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto task = generate_task(Family::branchy_trap, seed);
        const auto table = soft_q_backward(task.mdp);
        auto model = initial_model(task, InitSpec{InitScheme::gaussian, 2.0, init_seed(seed)});
        const auto keys = task.demos.supervised_keys();
        const double before = estimation_error(model, table, task.mdp, keys).mean_unsupervised;
        train(model, task.demos, TrainConfig{.lambda = 0.0, .lr = 1.0, .epochs = 60});
        EXPECT_EQ(estimation_error(model, table, task.mdp, keys).mean_unsupervised, before);
    }
}

TEST(Experiment, ValueGapShrinksUnderTheVLoss) {
    ExperimentConfig cfg;
    cfg.task = default_params(Family::branchy_trap);
    for (std::uint64_t s = 0; s < 20; ++s) cfg.seeds.push_back(s);
    cfg.variants = {{"soc", TrainConfig{.lambda = 0.2, .lr = 1.0, .epochs = 60, .init = {InitScheme::gaussian, 2.0, 0}}}};
    cfg.widths = {1};
    cfg.workers = 4;
    std::size_t shrank = 0;
    const auto report = run_experiment(cfg);
    for (const auto& r : report.rows) shrank += r.value_gap <= r.value_gap_init;
    EXPECT_GE(static_cast<double>(shrank) / static_cast<double>(report.rows.size()), 0.9);
}

TEST(Report, GoldenRowsCsv) {
    const auto csv = rows_csv(run_experiment(small_config()).rows);
    const std::string path = std::string(SOCLAB_TEST_DATA) + "/rows_single_path.csv";
    if (std::getenv("SOCLAB_UPDATE_GOLDEN")) write_file(path, csv);
    std::ifstream in(path);
    ASSERT_TRUE(in) << "golden file missing; rerun with SOCLAB_UPDATE_GOLDEN=1";
    EXPECT_EQ(csv, read_file(path));
}

TEST(Report, EmitWritesFilesAndFailureMarker) {
    const auto dir = scratch("emit");
    auto report = run_experiment(small_config());
    emit_report(report, dir);
    EXPECT_TRUE(std::filesystem::exists(dir / "rows.csv"));
    EXPECT_FALSE(std::filesystem::exists(dir / "FAILED"));
    const auto summary = json::parse(read_file(dir / "summary.json"));
    EXPECT_EQ(summary.at("status"), "ok");
    EXPECT_EQ(summary.at("aggregates").size(), 4u);
    const auto log = read_file(dir / "runs" / "soc-seed1" / "training_log.csv");
    EXPECT_EQ(log.substr(0, log.find('\n')), "epoch,sft,v,overall,mean_soft_value_supervised,mean_value_gap");
    EXPECT_EQ(std::ranges::count(log, '\n'), 42);

    report.failure = "seed 1 variant soc: boom";
    emit_report(report, dir);
    EXPECT_EQ(read_file(dir / "FAILED"), "seed 1 variant soc: boom\n");
    EXPECT_EQ(json::parse(read_file(dir / "summary.json")).at("status"), "failed");
    report.failure.reset();
    emit_report(report, dir);
    EXPECT_FALSE(std::filesystem::exists(dir / "FAILED"));
    std::filesystem::remove_all(dir.parent_path());
}

#pragma once

// Experiment driver: for every seed, generate a task, train each variant from
// the same initial model, then decode greedily and with each beam width and
// score everything against the exact oracle.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "soclab/decoder.hpp"
#include "soclab/error.hpp"
#include "soclab/io.hpp"
#include "soclab/mdp.hpp"
#include "soclab/model.hpp"
#include "soclab/objectives.hpp"
#include "soclab/oracle.hpp"
#include "soclab/tasks.hpp"

namespace soclab {

inline constexpr const char* version = "0.1.0";

/// |V(s_t) - V(s_{t+1})| for each adjacent pair of non-terminal states.
inline std::vector<double> value_gap_series(const LogitModel& model, const Trajectory& traj) {
    detail::require_path(model, traj);
    std::vector<double> gaps;
    for (std::size_t t = 0; t + 1 < traj.contexts.size(); ++t) {
        if (model.is_terminal(traj.contexts[t + 1])) break;
        gaps.push_back(std::abs(soft_value(model, traj.contexts[t]) - soft_value(model, traj.contexts[t + 1])));
    }
    return gaps;
}

/// Mean over every adjacent gap of every demonstration; 0 when there are none.
inline double mean_value_gap(const LogitModel& model, const DemoSet& demos) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& t : demos.trajectories())
        for (double g : value_gap_series(model, t)) {
            sum += g;
            ++n;
        }
    return n ? sum / static_cast<double>(n) : 0.0;
}

inline double mean_supervised_value(const LogitModel& model, const DemoSet& demos) {
    double sum = 0.0;
    for (const auto& p : demos.pairs()) sum += soft_value(model, p.context);
    return sum / static_cast<double>(demos.pairs().size());
}

/// Mean over supervision pairs of pi(a*|s).
inline double expert_step_prob(const LogitModel& model, const DemoSet& demos) {
    double sum = 0.0;
    for (const auto& [ctx, a] : demos.pairs()) sum += std::exp(log_policy(model, ctx)[a]);
    return sum / static_cast<double>(demos.pairs().size());
}

struct Variant {
    std::string name;
    TrainConfig train;
};

struct ExperimentConfig {
    TaskParams task = default_params(Family::branchy_trap);
    std::vector<std::uint64_t> seeds;
    std::vector<Variant> variants;
    std::vector<std::size_t> widths{1, 2, 5, 10};
    std::filesystem::path out;
    unsigned workers = 1;

    void validate() const {
        if (seeds.empty()) throw Error(ErrorKind::invalid_parameter, "config has no seeds");
        if (variants.empty()) throw Error(ErrorKind::invalid_parameter, "config has no training variants");
        if (widths.empty()) throw Error(ErrorKind::invalid_parameter, "config has no beam widths");
        for (auto w : widths)
            if (w < 1) throw Error(ErrorKind::invalid_parameter, "beam widths must be >= 1");
        if (workers < 1) throw Error(ErrorKind::invalid_parameter, "workers must be >= 1");
        std::set<std::string> names;
        for (const auto& v : variants) {
            v.train.validate();
            if (v.name.empty() || v.name.find_first_of(",\"\n/") != std::string::npos)
                throw Error(ErrorKind::invalid_parameter, "variant names must be non-empty and free of , \" / and newlines");
            if (!names.insert(v.name).second) throw Error(ErrorKind::invalid_parameter, "duplicate variant '" + v.name + "'");
        }
        TaskParams probe = task;
        probe.seed = seeds.front();
        generate_task(probe).mdp.check_enumeration_cap(default_enumeration_cap);
    }
};

struct RunRow {
    std::uint64_t seed = 0;
    std::string variant;
    double lambda = 0.0;
    double lr = 0.0;
    int epochs = 0;
    std::size_t width = 1;
    double greedy_acc = 0.0;
    double beam_acc = 0.0;
    double expected_reward = 0.0;
    double est_err_sup = 0.0;
    double est_err_unsup = 0.0;
    double value_gap = 0.0;
    double value_gap_init = 0.0;
    double expert_step_prob = 0.0;
    double overopt_rate = 0.0;
};

struct EpochLog {
    int epoch = 0;
    LossReport loss;
    double mean_soft_value_supervised = 0.0;
    double mean_value_gap = 0.0;
};

struct TrainingLog {
    std::uint64_t seed = 0;
    std::string variant;
    std::vector<EpochLog> epochs;
};

struct Aggregate {
    std::string variant;
    double lambda = 0.0;
    std::size_t width = 1;
    std::size_t n = 0;
    double greedy_acc = 0.0;
    double beam_acc = 0.0;
    double expected_reward = 0.0;
    double est_err_sup = 0.0;
    double est_err_unsup = 0.0;
    double value_gap = 0.0;
    double value_gap_init = 0.0;
    double expert_step_prob = 0.0;
    double overopt_rate = 0.0;
};

struct RunReport {
    ExperimentConfig config;
    /// Ordered by (seed position, variant position, width position).
    std::vector<RunRow> rows;
    std::vector<TrainingLog> logs;
    std::vector<Aggregate> aggregates;
    std::optional<std::string> failure;
};

inline std::vector<Aggregate> aggregate_rows(const ExperimentConfig& cfg, const std::vector<RunRow>& rows) {
    std::vector<Aggregate> out;
    for (const auto& v : cfg.variants)
        for (auto w : cfg.widths) {
            Aggregate a;
            a.variant = v.name;
            a.lambda = v.train.lambda;
            a.width = w;
            for (const auto& r : rows) {
                if (r.variant != v.name || r.width != w) continue;
                ++a.n;
                a.greedy_acc += r.greedy_acc;
                a.beam_acc += r.beam_acc;
                a.expected_reward += r.expected_reward;
                a.est_err_sup += r.est_err_sup;
                a.est_err_unsup += r.est_err_unsup;
                a.value_gap += r.value_gap;
                a.value_gap_init += r.value_gap_init;
                a.expert_step_prob += r.expert_step_prob;
                a.overopt_rate += r.overopt_rate;
            }
            if (a.n) {
                const double k = static_cast<double>(a.n);
                for (double* f : {&a.greedy_acc, &a.beam_acc, &a.expected_reward, &a.est_err_sup, &a.est_err_unsup, &a.value_gap,
                                  &a.value_gap_init, &a.expert_step_prob, &a.overopt_rate})
                    *f /= k;
            }
            out.push_back(a);
        }
    return out;
}

/// Trains in place and records epoch 0 (the initial model) through cfg.epochs.
inline TrainingLog train_with_log(LogitModel& model, const DemoSet& demos, const TrainConfig& cfg) {
    TrainingLog log;
    auto record = [&](int e, const LogitModel& m) {
        log.epochs.push_back({e, loss_report(m, demos, cfg.lambda), mean_supervised_value(m, demos), mean_value_gap(m, demos)});
    };
    record(0, model);
    train(model, demos, cfg, record);
    return log;
}

/// Seed of the initial model for a row; task generation uses the root seed itself.
inline std::uint64_t init_seed(std::uint64_t root) { return derive_seed(root, 0x1417); }

struct JobResult {
    std::vector<RunRow> rows;
    TrainingLog log;
};

/// One (seed, variant) job: train, then evaluate at every width.
inline JobResult run_job(const ExperimentConfig& cfg, std::uint64_t seed, const Variant& variant) {
    TaskParams params = cfg.task;
    params.seed = seed;
    const Task task = generate_task(params);
    const auto& mdp = task.mdp;
    const auto& demos = task.demos;
    const SoftQTable table = soft_q_backward(mdp);
    const auto supervised = demos.supervised_keys();
    const auto& tc = variant.train;

    LogitModel model = initial_model(task, InitSpec{tc.init.scheme, tc.init.sigma, init_seed(seed)});
    const double gap_init = mean_value_gap(model, demos);

    JobResult res;
    res.log = train_with_log(model, demos, tc);
    res.log.seed = seed;
    res.log.variant = variant.name;

    const double n_prompts = static_cast<double>(mdp.prompts.size());
    double greedy = 0.0, expected = 0.0;
    for (const auto& p : mdp.prompts) {
        greedy += greedy_decode(model, mdp, p).reward;
        expected += policy_expected_reward(model, mdp, p);
    }
    const auto err = estimation_error(model, table, mdp, supervised);

    RunRow base;
    base.seed = seed;
    base.variant = variant.name;
    base.lambda = tc.lambda;
    base.lr = tc.lr;
    base.epochs = tc.epochs;
    base.greedy_acc = greedy / n_prompts;
    base.expected_reward = expected / n_prompts;
    base.est_err_sup = err.mean_supervised;
    base.est_err_unsup = err.mean_unsupervised;
    base.value_gap = mean_value_gap(model, demos);
    base.value_gap_init = gap_init;
    base.expert_step_prob = expert_step_prob(model, demos);

    for (auto w : cfg.widths) {
        RunRow row = base;
        row.width = w;
        double beam = 0.0, flagged = 0.0;
        for (const auto& p : mdp.prompts) {
            const auto rep = over_optimism_report(model, mdp, p, w, table);
            beam += rep.beam.reward;
            flagged += rep.over_optimistic_win ? 1.0 : 0.0;
        }
        row.beam_acc = beam / n_prompts;
        row.overopt_rate = flagged / n_prompts;
        res.rows.push_back(row);
    }
    return res;
}

/// Jobs run on `cfg.workers` threads; results are merged in config order, so
/// the report does not depend on the worker count.
inline RunReport run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::size_t nv = cfg.variants.size();
    const std::size_t jobs = cfg.seeds.size() * nv;
    std::vector<std::optional<JobResult>> results(jobs);
    std::vector<std::string> errors(jobs);
    std::atomic<std::size_t> next{0};

    auto worker = [&] {
        for (std::size_t i = next++; i < jobs; i = next++) {
            try {
                results[i] = run_job(cfg, cfg.seeds[i / nv], cfg.variants[i % nv]);
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        }
    };
    const unsigned n_threads = static_cast<unsigned>(std::min<std::size_t>(cfg.workers, jobs));
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    RunReport report;
    report.config = cfg;
    for (std::size_t i = 0; i < jobs; ++i) {
        if (!results[i]) {
            if (!report.failure)
                report.failure = "seed " + std::to_string(cfg.seeds[i / nv]) + " variant " + cfg.variants[i % nv].name + ": " + errors[i];
            continue;
        }
        std::ranges::move(results[i]->rows, std::back_inserter(report.rows));
        report.logs.push_back(std::move(results[i]->log));
    }
    report.aggregates = aggregate_rows(cfg, report.rows);
    return report;
}

// ---- config and report files -----------------------------------------------

inline json to_json(const ExperimentConfig& cfg) {
    json variants = json::array();
    for (const auto& v : cfg.variants)
        variants.push_back({{"name", v.name},
                            {"lambda", v.train.lambda},
                            {"lr", v.train.lr},
                            {"epochs", v.train.epochs},
                            {"init", {{"scheme", to_string(v.train.init.scheme)}, {"sigma", v.train.init.sigma}}}});
    return json{{"task", to_json(cfg.task)}, {"seeds", cfg.seeds}, {"variants", variants}, {"widths", cfg.widths}};
}

/// Seeds are a list or {"first": s, "count": n}. A top-level "init" applies to
/// every variant that does not carry its own.
inline ExperimentConfig experiment_config_from_json(const json& j) {
    ExperimentConfig cfg;
    cfg.task = task_params_from_json(j.at("task"));
    const json& seeds = j.at("seeds");
    if (seeds.is_array()) {
        cfg.seeds = seeds.get<std::vector<std::uint64_t>>();
    } else {
        const auto first = detail::get_field<std::uint64_t>(seeds, "first");
        const auto count = detail::get_field<std::uint64_t>(seeds, "count");
        for (std::uint64_t s = 0; s < count; ++s) cfg.seeds.push_back(first + s);
    }
    InitSpec shared{InitScheme::gaussian, 2.0, 0};
    auto read_init = [](const json& ij, InitSpec fallback) {
        fallback.scheme = parse_init_scheme(detail::get_or<std::string>(ij, "scheme", to_string(fallback.scheme)));
        fallback.sigma = detail::get_or(ij, "sigma", fallback.sigma);
        return fallback;
    };
    if (j.contains("init")) shared = read_init(j.at("init"), shared);
    for (const auto& vj : j.at("variants")) {
        Variant v;
        v.train.lambda = detail::get_field<double>(vj, "lambda");
        v.name = detail::get_or<std::string>(vj, "name", "lambda=" + format_real(v.train.lambda));
        v.train.lr = detail::get_or(vj, "lr", v.train.lr);
        v.train.epochs = detail::get_or(vj, "epochs", v.train.epochs);
        v.train.init = vj.contains("init") ? read_init(vj.at("init"), shared) : shared;
        cfg.variants.push_back(v);
    }
    if (j.contains("widths")) cfg.widths = j.at("widths").get<std::vector<std::size_t>>();
    if (j.contains("out")) cfg.out = j.at("out").get<std::string>();
    if (j.contains("workers")) cfg.workers = j.at("workers").get<unsigned>();
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    try {
        return experiment_config_from_json(parse_json(read_file(path), path.string()));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::parse, path.string() + ": " + e.what());
    }
}

inline std::string rows_csv(const std::vector<RunRow>& rows) {
    std::string out = "seed,variant,lambda,lr,epochs,width,greedy_acc,beam_acc,expected_reward,est_err_sup,est_err_unsup,"
                      "value_gap,value_gap_init,expert_step_prob,overopt_rate\n";
    for (const auto& r : rows) {
        out += std::to_string(r.seed) + "," + r.variant + "," + format_real(r.lambda) + "," + format_real(r.lr) + "," +
               std::to_string(r.epochs) + "," + std::to_string(r.width);
        for (double x : {r.greedy_acc, r.beam_acc, r.expected_reward, r.est_err_sup, r.est_err_unsup, r.value_gap, r.value_gap_init,
                         r.expert_step_prob, r.overopt_rate})
            out += "," + format_real(x);
        out += "\n";
    }
    return out;
}

inline std::string training_log_csv(const TrainingLog& log) {
    std::string out = "epoch,sft,v,overall,mean_soft_value_supervised,mean_value_gap\n";
    for (const auto& e : log.epochs)
        out += std::to_string(e.epoch) + "," + format_real(e.loss.sft) + "," + format_real(e.loss.v) + "," + format_real(e.loss.overall) +
               "," + format_real(e.mean_soft_value_supervised) + "," + format_real(e.mean_value_gap) + "\n";
    return out;
}

inline json summary_json(const RunReport& report) {
    json aggs = json::array();
    for (const auto& a : report.aggregates)
        aggs.push_back({{"variant", a.variant},
                        {"lambda", a.lambda},
                        {"width", a.width},
                        {"n", a.n},
                        {"greedy_acc", a.greedy_acc},
                        {"beam_acc", a.beam_acc},
                        {"expected_reward", a.expected_reward},
                        {"est_err_sup", a.est_err_sup},
                        {"est_err_unsup", a.est_err_unsup},
                        {"value_gap", a.value_gap},
                        {"value_gap_init", a.value_gap_init},
                        {"expert_step_prob", a.expert_step_prob},
                        {"overopt_rate", a.overopt_rate}});
    return json{{"version", version},
                {"status", report.failure ? "failed" : "ok"},
                {"failure", report.failure ? json(*report.failure) : json(nullptr)},
                {"config", to_json(report.config)},
                {"aggregates", aggs}};
}

/// rows.csv, summary.json and runs/<variant>-seed<seed>/training_log.csv.
/// A FAILED file marks a report with missing jobs.
inline void emit_report(const RunReport& report, const std::filesystem::path& dir) {
    write_file(dir / "rows.csv", rows_csv(report.rows));
    write_file(dir / "summary.json", summary_json(report).dump(2) + "\n");
    for (const auto& log : report.logs)
        write_file(dir / "runs" / (log.variant + "-seed" + std::to_string(log.seed)) / "training_log.csv", training_log_csv(log));
    if (report.failure)
        write_file(dir / "FAILED", *report.failure + "\n");
    else
        std::filesystem::remove(dir / "FAILED");
}

} // namespace soclab

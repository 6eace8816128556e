// soclab: command-line front end for task generation, training, decoding,
// oracle dumps, invariant checks and experiments.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "soclab/soclab.hpp"

using namespace soclab;

namespace {

void print_check(const CheckResult& r) {
    std::printf("%-22s %s  instances=%zu violations=%zu worst=%.3g time=%.2fs%s%s\n", r.name.c_str(), r.passed ? "PASS" : "FAIL",
                r.instances, r.violations, r.worst, r.seconds, r.detail.empty() ? "" : "  ", r.detail.c_str());
}

struct GenerateOpts {
    std::string family = "branchy-trap";
    std::uint64_t seed = 0;
    std::string out;
    std::size_t vocab = 0, depth = 0, prompts = 0, prompt_len = 0, branches = 0, branch_depth = 0, rewarded = 0, demonstrated = 0;
    bool no_eos = false;
};

int cmd_generate(const GenerateOpts& o) {
    TaskParams p = default_params(parse_family(o.family));
    p.seed = o.seed;
    if (o.vocab) p.vocab_size = o.vocab;
    if (o.depth) p.depth = o.depth;
    if (o.prompts) p.prompts = o.prompts;
    if (o.prompt_len) p.prompt_len = o.prompt_len;
    if (o.branches) p.branches = o.branches;
    if (o.branch_depth) p.branch_depth = o.branch_depth;
    if (o.rewarded) p.rewarded = o.rewarded;
    if (o.demonstrated) p.demonstrated = o.demonstrated;
    if (o.no_eos) p.use_eos = false;
    const Task task = generate_task(p);
    if (o.out.empty()) {
        std::cout << to_json(task).dump(2) << "\n";
    } else {
        save_task(task, o.out);
        std::printf("wrote %s: %zu prompts, %zu rewarded sequences, %zu supervision pairs\n", o.out.c_str(), task.mdp.prompts.size(),
                    task.mdp.reward.rewarded().size(), task.demos.pairs().size());
    }
    return 0;
}

struct TrainOpts {
    std::string task, out, log, init = "gaussian";
    double lambda = default_lambda, lr = 1.0, sigma = 2.0;
    int epochs = 60;
    std::uint64_t seed = 0;
};

int cmd_train(const TrainOpts& o) {
    const Task task = load_task(o.task);
    TrainConfig cfg{o.lambda, o.lr, o.epochs, InitSpec{parse_init_scheme(o.init), o.sigma, o.seed}, o.seed};
    cfg.validate();
    LogitModel model = initial_model(task, cfg.init);
    const auto log = train_with_log(model, task.demos, cfg);
    save_model(model, o.out);
    if (!o.log.empty()) write_file(o.log, training_log_csv(log));
    const auto& last = log.epochs.back();
    std::printf("epoch %d  sft %.6f  v %.6f  overall %.6f  expert-step-prob %.4f\n", last.epoch, last.loss.sft, last.loss.v,
                last.loss.overall, expert_step_prob(model, task.demos));
    return 0;
}

struct DecodeOpts {
    std::string model, task, trace, decomposition, expand = "global";
    std::size_t prompt = 0, beam = 5;
};

int cmd_decode(const DecodeOpts& o) {
    const Task task = load_task(o.task);
    const LogitModel model = load_model(o.model);
    if (o.prompt >= task.mdp.prompts.size())
        throw Error(ErrorKind::invalid_parameter, "prompt index " + std::to_string(o.prompt) + " out of range");
    const auto& prompt = task.mdp.prompts[o.prompt];
    const auto res = beam_search(model, task.mdp, prompt, o.beam, parse_expand_mode(o.expand));
    const auto greedy = greedy_decode(model, task.mdp, prompt);
    const auto d = score_decomposition(model, res.trajectory);
    std::printf("beam(k=%zu, %s): [%s] score %.6f reward %d\n", o.beam, o.expand.c_str(),
                format_tokens(res.trajectory.final().tokens).c_str(), res.trace.chosen_score, res.trajectory.reward);
    std::printf("greedy:        [%s] reward %d\n", format_tokens(greedy.final().tokens).c_str(), greedy.reward);
    std::printf("decomposition: q_terminal %.6f  v_initial %.6f  residual sum %.6f\n", d.q_terminal, d.v_initial, d.residual_sum());
    if (!o.trace.empty()) write_file(o.trace, to_json(res.trace).dump(2) + "\n");
    if (!o.decomposition.empty()) write_file(o.decomposition, decomposition_csv(d));
    return 0;
}

struct OracleOpts {
    std::string task, out, model;
};

int cmd_oracle(const OracleOpts& o) {
    const Task task = load_task(o.task);
    const auto table = soft_q_backward(task.mdp);
    if (!o.out.empty()) write_file(o.out, oracle_csv(table));
    std::printf("%zu states, max bellman residual %.3g\n", table.q.size(), max_bellman_residual(table, task.mdp));
    for (std::size_t i = 0; i < task.mdp.prompts.size(); ++i)
        std::printf("prompt %zu: V* = %.6f\n", i, table.value(task.mdp, task.mdp.prompts[i]));
    if (!o.model.empty()) {
        const auto err = estimation_error(load_model(o.model), table, task.mdp, task.demos.supervised_keys());
        std::printf("estimation error: supervised %.6f (%zu states)  unsupervised %.6f (%zu states)  max %.6f\n", err.mean_supervised,
                    err.n_supervised, err.mean_unsupervised, err.n_unsupervised, err.max_error);
    }
    return 0;
}

int cmd_check(const std::string& suite, std::uint64_t seed) {
    std::vector<CheckResult> results;
    const bool all = suite == "all";
    if (all || suite == "gradients") results.push_back(check_gradients(seed));
    if (all || suite == "identities") results.push_back(check_identities(seed));
    if (all || suite == "telescoping") results.push_back(check_telescoping(seed));
    if (all || suite == "contraction") results.push_back(check_contraction(seed));
    if (all || suite == "beam") {
        auto b = check_beam(seed);
        for (auto* r : {&b.width_one, &b.exhaustive, &b.integrity, &b.monotone}) results.push_back(*r);
    }
    if (all || suite == "oracle") results.push_back(check_oracle(seed));
    if (all || suite == "soc") results.push_back(check_soc_boost(seed));
    bool ok = true;
    for (const auto& r : results) {
        print_check(r);
        ok = ok && r.passed;
    }
    return ok ? 0 : 1;
}

struct ExperimentOpts {
    std::string config, out;
    std::optional<std::uint64_t> seed;
    unsigned workers = 0;
};

int cmd_experiment(const ExperimentOpts& o) {
    ExperimentConfig cfg = load_experiment_config(o.config);
    if (o.seed)
        for (std::size_t i = 0; i < cfg.seeds.size(); ++i) cfg.seeds[i] = *o.seed + i;
    if (!o.out.empty()) cfg.out = o.out;
    if (o.workers) cfg.workers = o.workers;
    if (cfg.out.empty()) throw Error(ErrorKind::invalid_parameter, "no output directory (use --out or \"out\" in the config)");
    const auto report = run_experiment(cfg);
    emit_report(report, cfg.out);
    std::printf("%-12s %6s %5s %8s %8s %8s %8s %8s\n", "variant", "lambda", "width", "greedy", "beam", "E[R]", "p(a*)", "overopt");
    for (const auto& a : report.aggregates)
        std::printf("%-12s %6.2f %5zu %8.3f %8.3f %8.3f %8.3f %8.3f\n", a.variant.c_str(), a.lambda, a.width, a.greedy_acc, a.beam_acc,
                    a.expected_reward, a.expert_step_prob, a.overopt_rate);
    std::printf("wrote %s\n", (cfg.out / "rows.csv").string().c_str());
    if (report.failure) {
        std::fprintf(stderr, "experiment failed: %s\n", report.failure->c_str());
        return 1;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Token-level MDP laboratory: implicit Q, beam search over-optimism and the V-loss"};
    app.require_subcommand(1);
    int rc = 0;

    GenerateOpts g;
    auto* gen = app.add_subcommand("generate", "Generate a synthetic task with its demonstrations");
    gen->add_option("--family", g.family, "single-path | branchy-trap | random-dag")->capture_default_str();
    gen->add_option("--seed", g.seed)->capture_default_str();
    gen->add_option("--out", g.out, "Task JSON path (stdout when omitted)");
    gen->add_option("--vocab", g.vocab, "Vocabulary size");
    gen->add_option("--depth", g.depth, "max_len and expert length");
    gen->add_option("--prompts", g.prompts);
    gen->add_option("--prompt-len", g.prompt_len);
    gen->add_option("--branches", g.branches);
    gen->add_option("--branch-depth", g.branch_depth);
    gen->add_option("--rewarded", g.rewarded);
    gen->add_option("--demonstrated", g.demonstrated);
    gen->add_flag("--no-eos", g.no_eos, "End sequences only by length");
    gen->callback([&] { rc = cmd_generate(g); });

    TrainOpts t;
    auto* tr = app.add_subcommand("train", "Train a model on a task's demonstrations");
    tr->add_option("--task", t.task)->required();
    tr->add_option("--out", t.out, "Model JSON path")->required();
    tr->add_option("--lambda", t.lambda, "V-loss weight")->capture_default_str();
    tr->add_option("--lr", t.lr)->capture_default_str();
    tr->add_option("--epochs", t.epochs)->capture_default_str();
    tr->add_option("--init", t.init, "zeros | gaussian | from_table")->capture_default_str();
    tr->add_option("--sigma", t.sigma)->capture_default_str();
    tr->add_option("--seed", t.seed, "Seed of the default rows")->capture_default_str();
    tr->add_option("--log", t.log, "Training log CSV path");
    tr->callback([&] { rc = cmd_train(t); });

    DecodeOpts d;
    auto* de = app.add_subcommand("decode", "Beam-search and greedy decode one prompt");
    de->add_option("--model", d.model)->required();
    de->add_option("--task", d.task)->required();
    de->add_option("--prompt", d.prompt, "Prompt index")->capture_default_str();
    de->add_option("--beam", d.beam, "Beam width")->capture_default_str();
    de->add_option("--expand", d.expand, "global | per-parent")->capture_default_str();
    de->add_option("--trace", d.trace, "Decode trace JSON path");
    de->add_option("--decomposition", d.decomposition, "Score decomposition CSV path");
    de->callback([&] { rc = cmd_decode(d); });

    OracleOpts o;
    auto* orc = app.add_subcommand("oracle", "Exact soft Q*/V*/pi* of a task");
    orc->add_option("--task", o.task)->required();
    orc->add_option("--out", o.out, "Oracle CSV path");
    orc->add_option("--model", o.model, "Report this model's estimation error");
    orc->callback([&] { rc = cmd_oracle(o); });

    std::string suite;
    std::uint64_t check_seed = 1;
    auto* ch = app.add_subcommand("check", "Run invariant suites");
    ch->add_option("suite", suite, "gradients | identities | telescoping | contraction | beam | oracle | soc | all")
        ->required()
        ->check(CLI::IsMember({"gradients", "identities", "telescoping", "contraction", "beam", "oracle", "soc", "all"}));
    ch->add_option("--seed", check_seed)->capture_default_str();
    ch->callback([&] { rc = cmd_check(suite, check_seed); });

    ExperimentOpts e;
    auto* ex = app.add_subcommand("experiment", "Run an experiment config and write its report");
    ex->add_option("--config", e.config)->required();
    ex->add_option("--seed", e.seed, "Replace the seed list by seed, seed+1, ... (same count)");
    ex->add_option("--out", e.out, "Output directory");
    ex->add_option("--workers", e.workers, "Worker threads");
    ex->callback([&] { rc = cmd_experiment(e); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err);
    } catch (const Error& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 2;
    } catch (const std::exception& err) {
        std::fprintf(stderr, "error: %s\n", err.what());
        return 2;
    }
    return rc;
}

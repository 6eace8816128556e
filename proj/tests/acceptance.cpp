// Acceptance suite: one PASS/FAIL line per criterion A1..A9.
// Exit code 0 only when every criterion passes.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>

#include <unistd.h>

#include <CLI11.hpp>

#include "soclab/soclab.hpp"

using namespace soclab;

namespace {

int failures = 0;

void line(const char* id, bool ok, const std::string& what) {
    std::printf("%s %s  %s\n", id, ok ? "PASS" : "FAIL", what.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
}

std::string summary(const CheckResult& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s: %zu instances, %zu violations, worst %.3g, %.2fs", r.name.c_str(), r.instances, r.violations,
                  r.worst, r.seconds);
    return std::string(buf) + (r.detail.empty() ? "" : " (" + r.detail + ")");
}

double mean_of(const std::map<std::uint64_t, double>& m) {
    double s = 0.0;
    for (const auto& [k, v] : m) s += v;
    return m.empty() ? 0.0 : s / static_cast<double>(m.size());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance suite"};
    std::string config = "configs/a7_branchy_trap.json";
    std::uint64_t seed = 1;
    app.add_option("--config", config, "Over-optimism experiment config")->capture_default_str();
    app.add_option("--seed", seed, "Seed of the random-instance suites")->capture_default_str();
    CLI11_PARSE(app, argc, argv);

    {
        const auto r = check_gradients(seed, 200, 1e-6, 1e-6);
        line("A1", r.passed && r.seconds < 10.0, summary(r));
    }
    {
        const auto r = check_identities(seed, 10000);
        line("A2", r.passed && r.seconds < 5.0, summary(r));
    }
    {
        const auto r = check_telescoping(seed, 100, 1e-8);
        line("A3", r.passed, summary(r));
    }
    {
        const auto b = check_beam(seed, 1000);
        line("A4", b.width_one.passed && b.exhaustive.passed && b.integrity.passed && b.monotone.passed,
             summary(b.width_one) + "; " + summary(b.exhaustive) + "; " + summary(b.integrity) + "; " + summary(b.monotone));
    }
    {
        const auto r = check_contraction(seed, 100000);
        line("A5", r.passed, summary(r));
    }
    {
        const auto r = check_soc_boost(seed, 100, {0.1, 0.2, 0.3});
        line("A6", r.passed, summary(r));
    }

    const auto a8 = check_oracle(seed, 100);
    auto report_a8 = [&] { line("A8", a8.passed, summary(a8)); };

    ExperimentConfig cfg;
    try {
        cfg = load_experiment_config(config);
    } catch (const std::exception& e) {
        line("A7", false, std::string("cannot load config: ") + e.what());
        report_a8();
        line("A9", false, "no config");
        cfg.seeds.clear();
    }

    if (!cfg.seeds.empty()) {
        cfg.workers = 1;
        const auto t0 = std::chrono::steady_clock::now();
        const auto report = run_experiment(cfg);
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        std::map<std::uint64_t, double> sft_greedy, sft_b5, soc_b5, soc_b2;
        for (const auto& r : report.rows) {
            if (r.lambda == 0.0 && r.width == 5) {
                sft_greedy[r.seed] = r.greedy_acc;
                sft_b5[r.seed] = r.beam_acc;
            }
            if (r.lambda == 0.2 && r.width == 5) soc_b5[r.seed] = r.beam_acc;
            if (r.lambda == 0.2 && r.width == 2) soc_b2[r.seed] = r.beam_acc;
        }
        std::size_t ge = 0;
        for (const auto& [s, v] : sft_b5) ge += soc_b5.count(s) && soc_b5.at(s) >= v;
        const double frac = sft_b5.empty() ? 0.0 : static_cast<double>(ge) / static_cast<double>(sft_b5.size());
        const bool complete = !report.failure && sft_b5.size() == cfg.seeds.size() && soc_b5.size() == cfg.seeds.size() &&
                              soc_b2.size() == cfg.seeds.size();
        const bool a = mean_of(sft_b5) < mean_of(sft_greedy);
        const bool b = frac >= 0.8 && mean_of(soc_b5) > mean_of(sft_b5);
        const bool c = mean_of(soc_b2) >= mean_of(sft_b5);
        char buf[512];
        std::snprintf(buf, sizeof buf,
                      "%zu seeds, %.1fs: (a) sft beam@5 %.3f vs greedy %.3f %s; (b) soc beam@5 %.3f, soc>=sft on %.0f%% of seeds %s; "
                      "(c) soc beam@2 %.3f vs sft beam@5 %.3f %s",
                      sft_b5.size(), secs, mean_of(sft_b5), mean_of(sft_greedy), a ? "ok" : "NO", mean_of(soc_b5), 100 * frac,
                      b ? "ok" : "NO", mean_of(soc_b2), mean_of(sft_b5), c ? "ok" : "NO");
        line("A7", complete && a && b && c && secs < 300.0, buf + (report.failure ? " failure: " + *report.failure : std::string()));

        report_a8();

        std::string detail;
        bool same = !report.failure;
        const auto tmp = std::filesystem::temp_directory_path() / ("soclab-acceptance-" + std::to_string(::getpid()));
        try {
            ExperimentConfig par = cfg;
            par.workers = 4;
            const auto again = run_experiment(par);
            emit_report(report, tmp / "w1");
            emit_report(again, tmp / "w4");
            same = same && read_file(tmp / "w1" / "rows.csv") == read_file(tmp / "w4" / "rows.csv") &&
                   rows_csv(run_experiment(cfg).rows) == rows_csv(report.rows);
            detail = std::to_string(report.rows.size()) + " rows; workers 1 vs 4 and a repeated run compared byte for byte";
        } catch (const std::exception& e) {
            same = false;
            detail = e.what();
        }
        std::error_code ec;
        std::filesystem::remove_all(tmp, ec);
        line("A9", same, detail);
    }

    std::printf("%s: %d criteria failed\n", failures ? "FAIL" : "PASS", failures);
    return failures ? 1 : 0;
}

// Walks through one branchy-trap task: train with and without the V-loss,
// then compare greedy and beam decoding on each prompt and show where the
// beam winner's score comes from.

#include <cstdio>
#include <cstdlib>

#include "soclab/soclab.hpp"

using namespace soclab;

static void show(const char* label, const LogitModel& model, const Task& task, const SoftQTable& table) {
    std::printf("\n== %s  (expert-step prob %.3f)\n", label, expert_step_prob(model, task.demos));
    for (std::size_t i = 0; i < task.mdp.prompts.size(); ++i) {
        const auto& p = task.mdp.prompts[i];
        const auto rep = over_optimism_report(model, task.mdp, p, 5, table);
        std::printf("prompt %zu  greedy [%s] r=%d   beam@5 [%s] r=%d score %.3f%s\n", i, format_tokens(rep.greedy.final().tokens).c_str(),
                    rep.greedy.reward, format_tokens(rep.beam.final().tokens).c_str(), rep.beam.reward, rep.beam_score,
                    rep.over_optimistic_win ? "  <- over-optimistic win" : "");
        if (rep.over_optimistic_win) {
            const auto& d = rep.decomposition;
            std::printf("    Q(s_T,a_T) %.3f - V(s_0) %.3f + residuals %.3f = %.3f; best rewarded in pool %.3f\n", d.q_terminal, d.v_initial,
                        d.residual_sum(), d.reconstructed(), *rep.best_rewarded_pool_score);
        }
    }
}

int main(int argc, char** argv) {
    const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 3;
    auto params = default_params(Family::branchy_trap);
    params.seed = seed;
    const Task task = generate_task(params);
    const auto table = soft_q_backward(task.mdp);
    const InitSpec init{InitScheme::gaussian, 2.0, init_seed(seed)};

    for (double lambda : {0.0, 0.2}) {
        LogitModel model = initial_model(task, init);
        train(model, task.demos, TrainConfig{lambda, 1.0, 60, init, seed});
        show(lambda == 0.0 ? "SFT" : "SFT + V-loss (lambda 0.2)", model, task, table);
    }
}

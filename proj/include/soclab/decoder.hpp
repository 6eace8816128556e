#pragma once

// Greedy decoding and beam search over a LogitModel, plus the
// Q/V decomposition of a trajectory's accumulated log-probability.

#include <algorithm>
#include <cstdint>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "soclab/error.hpp"
#include "soclab/math.hpp"
#include "soclab/mdp.hpp"
#include "soclab/model.hpp"
#include "soclab/oracle.hpp"

namespace soclab {

struct BeamHypothesis {
    Context ctx;
    /// Accumulated sum_t log pi(a_t|s_t) over the generated tokens.
    double score = 0.0;
    bool finished = false;
};

inline bool ranks_before(const BeamHypothesis& a, const BeamHypothesis& b) {
    return ranks_before(a.score, a.ctx.tokens, b.score, b.ctx.tokens);
}

/// Top-k over the union of all expansions (global), or the literal reading
/// where every parent keeps its own top-k children and nothing else is pruned.
enum class ExpandMode { global, per_parent };

inline ExpandMode parse_expand_mode(const std::string& s) {
    if (s == "global") return ExpandMode::global;
    if (s == "per-parent" || s == "per_parent") return ExpandMode::per_parent;
    throw Error(ErrorKind::parse, "unknown expand mode '" + s + "'");
}

struct DecodeTrace {
    struct Entry {
        TokenSeq tokens;
        double score = 0.0;
        std::size_t rank = 0;
        bool finished = false;
    };
    /// Hypotheses kept at each expansion step, in rank order.
    std::vector<std::vector<Entry>> steps;
    /// Every finished hypothesis, best first.
    std::vector<BeamHypothesis> final_pool;
    Trajectory chosen;
    double chosen_score = 0.0;
    std::size_t width = 1;
    ExpandMode mode = ExpandMode::global;
};

struct BeamResult {
    Trajectory trajectory;
    DecodeTrace trace;
};

/// Argmax-logit decoding; ties go to the smallest token id.
inline Trajectory greedy_decode(const LogitModel& model, const TokenMdp& mdp, const Context& prompt) {
    if (!mdp.prompt_index_of(prompt.tokens) || prompt.prompt_len != prompt.tokens.size())
        throw Error(ErrorKind::invalid_parameter, "prompt does not belong to the mdp");
    Trajectory traj;
    traj.contexts.push_back(prompt);
    while (!mdp.is_terminal(traj.final())) {
        const auto q = logits(model, traj.final());
        const auto a = static_cast<TokenId>(argmax(q));
        traj.contexts.push_back(traj.final().extended(a));
        traj.actions.push_back(a);
    }
    traj.reward = mdp.reward(traj.final().tokens);
    return traj;
}

inline BeamResult beam_search(const LogitModel& model, const TokenMdp& mdp, const Context& prompt, std::size_t k,
                              ExpandMode mode = ExpandMode::global) {
    if (k < 1) throw Error(ErrorKind::invalid_parameter, "beam width must be >= 1");
    if (mdp.is_terminal(prompt)) throw Error(ErrorKind::terminal_context, "prompt is terminal");

    BeamResult result;
    DecodeTrace& trace = result.trace;
    trace.width = k;
    trace.mode = mode;

    std::vector<BeamHypothesis> active{{prompt, 0.0, false}};
    std::vector<BeamHypothesis> finished;
    const auto by_rank = [](const BeamHypothesis& a, const BeamHypothesis& b) { return ranks_before(a, b); };

    while (!active.empty()) {
        std::vector<BeamHypothesis> kept;
        for (const auto& parent : active) {
            const auto lp = log_policy(model, parent.ctx);
            std::vector<BeamHypothesis> children;
            children.reserve(lp.size());
            for (TokenId a = 0; a < lp.size(); ++a) {
                Context next = parent.ctx.extended(a);
                const bool done = mdp.is_terminal(next);
                children.push_back({std::move(next), parent.score + lp[a], done});
            }
            if (mode == ExpandMode::per_parent) {
                const auto keep = std::min(k, children.size());
                std::partial_sort(children.begin(), children.begin() + static_cast<std::ptrdiff_t>(keep), children.end(), by_rank);
                children.resize(keep);
            }
            std::ranges::move(children, std::back_inserter(kept));
        }
        std::ranges::sort(kept, by_rank);
        if (mode == ExpandMode::global && kept.size() > k) kept.resize(k);

        auto& step = trace.steps.emplace_back();
        active.clear();
        for (std::size_t r = 0; r < kept.size(); ++r) {
            step.push_back({kept[r].ctx.tokens, kept[r].score, r, kept[r].finished});
            (kept[r].finished ? finished : active).push_back(std::move(kept[r]));
        }
    }

    trace.final_pool = finished;
    std::ranges::sort(trace.final_pool, by_rank);
    const BeamHypothesis& best = trace.final_pool.front();
    trace.chosen_score = best.score;
    trace.chosen = replay(mdp, prompt, best.ctx.generated_tokens());
    result.trajectory = trace.chosen;
    return result;
}

/// sum_t log pi = Q(s_T, a_T) - V(s_0) + sum_{t<T} (Q(s_t, a_t) - V(s_{t+1})).
struct ScoreDecomposition {
    double sum_logpi = 0.0;
    double q_terminal = 0.0;
    double v_initial = 0.0;
    /// Per step t < T: Q(s_t, a_t), V(s_{t+1}) and their difference.
    std::vector<double> q;
    std::vector<double> v_next;
    std::vector<double> residuals;

    double residual_sum() const {
        double s = 0.0;
        for (double r : residuals) s += r;
        return s;
    }
    double reconstructed() const { return q_terminal - v_initial + residual_sum(); }
};

namespace detail {
inline void require_path(const LogitModel& model, const Trajectory& traj) {
    if (traj.actions.empty() || traj.contexts.size() != traj.actions.size() + 1)
        throw Error(ErrorKind::invalid_trajectory, "context/action count mismatch");
    for (std::size_t t = 0; t < traj.actions.size(); ++t) {
        if (traj.contexts[t + 1] != traj.contexts[t].extended(traj.actions[t]))
            throw Error(ErrorKind::invalid_trajectory, "contexts do not follow the actions");
        if (model.is_terminal(traj.contexts[t])) throw Error(ErrorKind::invalid_trajectory, "interior context is terminal");
        if (traj.actions[t] >= model.vocab_size()) throw Error(ErrorKind::invalid_trajectory, "action outside vocabulary");
    }
}
} // namespace detail

inline ScoreDecomposition score_decomposition(const LogitModel& model, const Trajectory& traj) {
    detail::require_path(model, traj);
    ScoreDecomposition d;
    const std::size_t last = traj.actions.size() - 1;
    for (std::size_t t = 0; t <= last; ++t) {
        const auto q = logits(model, traj.contexts[t]);
        const double v = logsumexp(q);
        const double qa = q[traj.actions[t]];
        d.sum_logpi += qa - v;
        if (t == 0) d.v_initial = v;
        if (t == last) {
            d.q_terminal = qa;
        } else {
            const double vn = soft_value(model, traj.contexts[t + 1]);
            d.q.push_back(qa);
            d.v_next.push_back(vn);
            d.residuals.push_back(qa - vn);
        }
    }
    return d;
}

/// Independent recomputation of a hypothesis score from its tokens.
inline double sequence_log_prob(const LogitModel& model, const Context& prompt, std::span<const TokenId> actions) {
    double score = 0.0;
    Context s = prompt;
    for (TokenId a : actions) {
        score += log_policy(model, s)[a];
        s = s.extended(a);
    }
    return score;
}

struct OverOptimismReport {
    Trajectory beam;
    Trajectory greedy;
    double beam_score = 0.0;
    ScoreDecomposition decomposition;
    /// Oracle L1 policy error at each state along the beam winner.
    std::vector<double> path_estimation_error;
    /// Best-scoring rewarded hypothesis in the final pool, if any.
    std::optional<double> best_rewarded_pool_score;
    /// The unrewarded winner outscored a rewarded hypothesis present in the final pool.
    bool over_optimistic_win = false;
};

inline OverOptimismReport over_optimism_report(const LogitModel& model, const TokenMdp& mdp, const Context& prompt,
                                               std::size_t k, const SoftQTable& table) {
    OverOptimismReport r;
    auto br = beam_search(model, mdp, prompt, k);
    r.beam = br.trajectory;
    r.beam_score = br.trace.chosen_score;
    r.greedy = greedy_decode(model, mdp, prompt);
    r.decomposition = score_decomposition(model, r.beam);
    for (std::size_t t = 0; t + 1 < r.beam.contexts.size(); ++t)
        r.path_estimation_error.push_back(policy_l1(model, table, r.beam.contexts[t]));
    for (const auto& h : br.trace.final_pool)
        if (mdp.reward(h.ctx.tokens) == 1) {
            r.best_rewarded_pool_score = h.score;
            break;
        }
    r.over_optimistic_win = r.beam.reward == 0 && r.best_rewarded_pool_score.has_value();
    return r;
}

inline OverOptimismReport over_optimism_report(const LogitModel& model, const TokenMdp& mdp, const Context& prompt,
                                               std::size_t k) {
    return over_optimism_report(model, mdp, prompt, k, soft_q_backward(mdp));
}

} // namespace soclab

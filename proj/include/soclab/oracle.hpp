#pragma once

// Exact ground truth for small token MDPs. The soft-optimal Q*/V* come from
// backward induction over the full token tree (gamma = 1, reward only on the
// transition into a terminal context, V = 0 at terminal contexts).

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "soclab/error.hpp"
#include "soclab/math.hpp"
#include "soclab/mdp.hpp"
#include "soclab/model.hpp"

namespace soclab {

struct SoftQTable {
    /// Q*(s, .) for every non-terminal s reachable from a prompt.
    std::map<TokenSeq, std::vector<double>> q;
    /// V*(s) for the same states; terminal states are implicitly 0.
    std::map<TokenSeq, double> v;

    bool covers(const Context& ctx) const { return q.contains(ctx.tokens); }

    double value(const TokenMdp& mdp, const Context& ctx) const {
        if (mdp.is_terminal(ctx)) return 0.0;
        auto it = v.find(ctx.tokens);
        if (it == v.end()) throw Error(ErrorKind::coverage, "state [" + format_tokens(ctx.tokens) + "] not in table");
        return it->second;
    }

    const std::vector<double>& q_row(const Context& ctx) const {
        auto it = q.find(ctx.tokens);
        if (it == q.end()) throw Error(ErrorKind::coverage, "state [" + format_tokens(ctx.tokens) + "] not in table");
        return it->second;
    }
};

namespace detail {

inline double soft_backup(const TokenMdp& mdp, const Context& s, SoftQTable& table) {
    std::vector<double> qrow(mdp.vocab.size);
    for (TokenId a = 0; a < mdp.vocab.size; ++a) {
        const Context next = s.extended(a);
        qrow[a] = mdp.is_terminal(next) ? static_cast<double>(mdp.reward(next.tokens)) : soft_backup(mdp, next, table);
    }
    const double v = logsumexp(qrow);
    table.q.emplace(s.tokens, std::move(qrow));
    table.v.emplace(s.tokens, v);
    return v;
}

inline void require_coverage(const SoftQTable& table, const TokenMdp& mdp) {
    for (const auto& p : mdp.prompts)
        if (!table.covers(p)) throw Error(ErrorKind::coverage, "table does not cover prompt [" + format_tokens(p.tokens) + "]");
}

} // namespace detail

inline SoftQTable soft_q_backward(const TokenMdp& mdp, std::uint64_t cap = default_enumeration_cap) {
    mdp.check_enumeration_cap(cap);
    SoftQTable table;
    for (const auto& p : mdp.prompts) detail::soft_backup(mdp, p, table);
    return table;
}

/// Model whose logits are exactly Q*, hence whose policy is pi*.
inline LogitModel optimal_policy(const SoftQTable& table, const TokenMdp& mdp) {
    detail::require_coverage(table, mdp);
    LogitModel model = init_model(mdp, InitSpec{InitScheme::from_table, 0.0, 0});
    for (const auto& [key, row] : table.q) model.set_row(key, row);
    return model;
}

struct EstimationErrorReport {
    /// L1 distance sum_a |pi_theta(a|s) - pi*(a|s)| per covered state.
    std::map<TokenSeq, double> per_state;
    double mean_supervised = 0.0;
    double mean_unsupervised = 0.0;
    std::size_t n_supervised = 0;
    std::size_t n_unsupervised = 0;
    double max_error = 0.0;
};

inline double policy_l1(const LogitModel& model, const SoftQTable& table, const Context& ctx) {
    const auto p = softmax(logits(model, ctx));
    const auto ps = softmax(table.q_row(ctx));
    double l1 = 0.0;
    for (std::size_t a = 0; a < p.size(); ++a) l1 += std::abs(p[a] - ps[a]);
    return l1;
}

/// Normalized estimation error pi_theta - pi* at every state of the table,
/// split by membership in `supervised` (context keys of the DemoSet).
inline EstimationErrorReport estimation_error(const LogitModel& model, const SoftQTable& table, const TokenMdp& mdp,
                                              const std::set<TokenSeq>& supervised = {}) {
    detail::require_coverage(table, mdp);
    EstimationErrorReport r;
    double sup = 0.0, unsup = 0.0;
    for (const auto& [key, qrow] : table.q) {
        const auto p = softmax(model.row(key));
        const auto ps = softmax(qrow);
        double l1 = 0.0;
        for (std::size_t a = 0; a < p.size(); ++a) l1 += std::abs(p[a] - ps[a]);
        r.per_state.emplace(key, l1);
        r.max_error = std::max(r.max_error, l1);
        if (supervised.contains(key)) {
            sup += l1;
            ++r.n_supervised;
        } else {
            unsup += l1;
            ++r.n_unsupervised;
        }
    }
    if (r.n_supervised) r.mean_supervised = sup / static_cast<double>(r.n_supervised);
    if (r.n_unsupervised) r.mean_unsupervised = unsup / static_cast<double>(r.n_unsupervised);
    return r;
}

/// Sequence order used for every tie-break: higher score first, then the
/// lexicographically smaller token sequence.
inline bool ranks_before(double score_a, const TokenSeq& a, double score_b, const TokenSeq& b) {
    if (score_a != score_b) return score_a > score_b;
    return a < b;
}

/// Exhaustive argmax of sum_t log pi(a_t|s_t) over all terminal trajectories.
/// Scores are accumulated left to right exactly as beam search accumulates them.
inline Trajectory brute_force_best_sequence(const LogitModel& model, const TokenMdp& mdp, const Context& prompt,
                                            std::uint64_t cap = default_enumeration_cap) {
    mdp.check_enumeration_cap(cap);
    if (mdp.is_terminal(prompt)) throw Error(ErrorKind::terminal_context, "prompt is terminal");
    std::optional<TokenSeq> best;
    double best_score = -std::numeric_limits<double>::infinity();

    std::function<void(const Context&, double)> rec = [&](const Context& s, double score) {
        if (mdp.is_terminal(s)) {
            if (!best || ranks_before(score, s.tokens, best_score, *best)) {
                best = s.tokens;
                best_score = score;
            }
            return;
        }
        const auto lp = log_policy(model, s);
        for (TokenId a = 0; a < mdp.vocab.size; ++a) rec(s.extended(a), score + lp[a]);
    };
    rec(prompt, 0.0);
    return replay(mdp, prompt, std::span<const TokenId>(*best).subspan(prompt.tokens.size()));
}

/// Exact probability that sampling from the model earns reward 1.
inline double policy_expected_reward(const LogitModel& model, const TokenMdp& mdp, const Context& prompt,
                                     std::uint64_t cap = default_enumeration_cap) {
    mdp.check_enumeration_cap(cap);
    std::function<double(const Context&)> rec = [&](const Context& s) -> double {
        if (mdp.is_terminal(s)) return static_cast<double>(mdp.reward(s.tokens));
        const auto p = softmax(logits(model, s));
        double total = 0.0;
        for (TokenId a = 0; a < mdp.vocab.size; ++a)
            if (p[a] > 0.0) total += p[a] * rec(s.extended(a));
        return total;
    };
    return rec(prompt);
}

/// Largest soft-Bellman residual over the table: |q(s,a) - r - v(s')| and |v(s) - lse q(s,.)|.
inline double max_bellman_residual(const SoftQTable& table, const TokenMdp& mdp) {
    double worst = 0.0;
    for (const auto& [key, qrow] : table.q) {
        worst = std::max(worst, std::abs(table.v.at(key) - logsumexp(qrow)));
        for (TokenId a = 0; a < qrow.size(); ++a) {
            TokenSeq next = key;
            next.push_back(a);
            const auto idx = mdp.prompt_index_of(next);
            const Context succ{next, mdp.prompts.at(idx.value()).prompt_len};
            const double target = mdp.is_terminal(succ) ? static_cast<double>(mdp.reward(next)) : table.v.at(next);
            worst = std::max(worst, std::abs(qrow[a] - target));
        }
    }
    return worst;
}

} // namespace soclab

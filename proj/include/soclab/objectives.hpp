#pragma once

// Training objectives over a DemoSet: cross-entropy (SFT), the value loss
// -logsumexp Q at supervised states, their weighted sum, and the analytic
// gradients for the tabular parameterization. Every expectation is the mean
// over supervision pairs, so a context supervised twice carries twice the weight.

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "soclab/error.hpp"
#include "soclab/math.hpp"
#include "soclab/mdp.hpp"
#include "soclab/model.hpp"

namespace soclab {

inline constexpr double default_lambda = 0.2;

struct TrainConfig {
    double lambda = default_lambda;
    double lr = 0.1;
    int epochs = 1;
    InitSpec init{};
    std::uint64_t seed = 0;

    void validate() const {
        if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error(ErrorKind::invalid_parameter, "lambda must be >= 0");
        if (!(lr > 0.0 && lr <= 1.0)) throw Error(ErrorKind::invalid_parameter, "lr must lie in (0, 1]");
        if (epochs < 1) throw Error(ErrorKind::invalid_parameter, "epochs must be >= 1");
    }
};

struct LossReport {
    double sft = 0.0;
    double v = 0.0;
    double overall = 0.0;
};

namespace detail {

inline void require_demos(const DemoSet& demos) {
    if (demos.empty()) throw Error(ErrorKind::empty_demos, "demonstration set has no supervision pairs");
}

inline double pair_weight(const DemoSet& demos) { return 1.0 / static_cast<double>(demos.pairs().size()); }

} // namespace detail

/// Mean of -log pi(a*|s), computed as V(s) - Q(s, a*).
inline double sft_loss(const LogitModel& model, const DemoSet& demos) {
    detail::require_demos(demos);
    double total = 0.0;
    for (const auto& [ctx, a] : demos.pairs()) {
        const auto q = logits(model, ctx);
        total += logsumexp(q) - q.at(a);
    }
    return total * detail::pair_weight(demos);
}

/// grad(s, a) = w * (pi(a|s) - 1[a = a*]).
inline GradientTable sft_grad(const LogitModel& model, const DemoSet& demos) {
    detail::require_demos(demos);
    const double w = detail::pair_weight(demos);
    GradientTable g(model.vocab_size());
    for (const auto& [ctx, a] : demos.pairs()) {
        const auto p = softmax(logits(model, ctx));
        auto& row = g.row(ctx.tokens);
        for (std::size_t b = 0; b < p.size(); ++b) row[b] += w * (p[b] - (b == a ? 1.0 : 0.0));
    }
    return g;
}

/// Mean of -V(s) over supervision pairs.
inline double v_loss(const LogitModel& model, const DemoSet& demos) {
    detail::require_demos(demos);
    double total = 0.0;
    for (const auto& pair : demos.pairs()) total -= soft_value(model, pair.context);
    return total * detail::pair_weight(demos);
}

/// grad(s, a) = -w * pi(a|s); each supervised row sums to -w per pair.
inline GradientTable v_grad(const LogitModel& model, const DemoSet& demos) {
    detail::require_demos(demos);
    const double w = detail::pair_weight(demos);
    GradientTable g(model.vocab_size());
    for (const auto& pair : demos.pairs()) {
        const auto p = softmax(logits(model, pair.context));
        auto& row = g.row(pair.context.tokens);
        for (std::size_t b = 0; b < p.size(); ++b) row[b] -= w * p[b];
    }
    return g;
}

/// Mean of sum_t log pi(a_t|s_t) over rewarded demonstrations (policy-gradient objective).
inline double reinforce_objective(const LogitModel& model, const DemoSet& demos) {
    return -sft_loss(model, demos);
}

/// Ascent direction of the policy-gradient objective on rewarded demos.
inline GradientTable reinforce_grad(const LogitModel& model, const DemoSet& demos) {
    detail::require_demos(demos);
    for (const auto& t : demos.trajectories())
        if (t.reward != 1) throw Error(ErrorKind::reward_not_one, "trajectory [" + format_tokens(t.final().tokens) + "] has reward 0");
    const double w = detail::pair_weight(demos);
    GradientTable g(model.vocab_size());
    for (const auto& [ctx, a] : demos.pairs()) {
        const auto p = softmax(logits(model, ctx));
        auto& row = g.row(ctx.tokens);
        for (std::size_t b = 0; b < p.size(); ++b) row[b] += w * ((b == a ? 1.0 : 0.0) - p[b]);
    }
    return g;
}

inline LossReport loss_report(const LogitModel& model, const DemoSet& demos, double lambda) {
    LossReport r;
    r.sft = sft_loss(model, demos);
    r.v = v_loss(model, demos);
    r.overall = r.sft + lambda * r.v;
    return r;
}

inline GradientTable overall_grad(const LogitModel& model, const DemoSet& demos, double lambda) {
    auto g = sft_grad(model, demos);
    if (lambda != 0.0) g.add_scaled(v_grad(model, demos), lambda);
    return g;
}

/// theta <- theta - lr * grad, materializing every touched row.
inline void apply_gradient(LogitModel& model, const GradientTable& grad, double lr) {
    for (const auto& [key, g] : grad.rows()) {
        auto& row = model.materialize(key);
        for (std::size_t a = 0; a < row.size(); ++a) row[a] -= lr * g[a];
    }
}

/// One full-batch gradient-descent step on L_sft + lambda * L_v.
inline LogitModel train_step(const LogitModel& model, const DemoSet& demos, const TrainConfig& cfg) {
    cfg.validate();
    LogitModel next = model;
    apply_gradient(next, overall_grad(model, demos, cfg.lambda), cfg.lr);
    return next;
}

/// Runs cfg.epochs steps in place; `on_epoch(epoch, model)` fires after each step.
template <class OnEpoch>
void train(LogitModel& model, const DemoSet& demos, const TrainConfig& cfg, OnEpoch&& on_epoch) {
    cfg.validate();
    for (int e = 1; e <= cfg.epochs; ++e) {
        apply_gradient(model, overall_grad(model, demos, cfg.lambda), cfg.lr);
        on_epoch(e, static_cast<const LogitModel&>(model));
    }
}

inline void train(LogitModel& model, const DemoSet& demos, const TrainConfig& cfg) {
    train(model, demos, cfg, [](int, const LogitModel&) {});
}

enum class LossKind { sft, v, overall, reinforce_objective };

struct LossSelector {
    LossKind kind = LossKind::sft;
    double lambda = 0.0;
};

namespace detail {

/// Contribution of one supervision pair to the selected loss, evaluated on a
/// long-double copy of the row.
inline long double pair_term(const LossSelector& sel, std::span<const long double> row, TokenId a) {
    const long double lse = logsumexp(row);
    switch (sel.kind) {
    case LossKind::sft: return lse - row[a];
    case LossKind::v: return -lse;
    case LossKind::overall: return (lse - row[a]) - static_cast<long double>(sel.lambda) * lse;
    case LossKind::reinforce_objective: return row[a] - lse;
    }
    return 0.0L;
}

} // namespace detail

/// Central finite differences (L(theta + eps) - L(theta - eps)) / (2 eps) over
/// every materialized parameter and every parameter of a supervised context.
/// Pair terms that do not involve the perturbed row cancel exactly in the
/// difference and are skipped; the rest is evaluated in long double.
inline GradientTable finite_diff_grad(const LossSelector& sel, const LogitModel& model, const DemoSet& demos, double eps) {
    detail::require_demos(demos);
    if (!(eps > 0.0 && eps <= 1e-2)) throw Error(ErrorKind::invalid_parameter, "eps must lie in (0, 1e-2]");

    std::map<TokenSeq, std::vector<TokenId>> actions_at;
    for (const auto& [ctx, a] : demos.pairs()) actions_at[ctx.tokens].push_back(a);
    for (const auto& [key, row] : model.entries()) actions_at.try_emplace(key);

    const long double w = 1.0L / static_cast<long double>(demos.pairs().size());
    const long double h = eps;
    GradientTable g(model.vocab_size());
    for (const auto& [key, acts] : actions_at) {
        const Logits base = model.row(key);
        std::vector<long double> row(base.begin(), base.end());
        auto& out = g.row(key);
        for (std::size_t j = 0; j < row.size(); ++j) {
            const long double keep = row[j];
            long double plus = 0.0L, minus = 0.0L;
            row[j] = keep + h;
            for (TokenId a : acts) plus += detail::pair_term(sel, row, a);
            row[j] = keep - h;
            for (TokenId a : acts) minus += detail::pair_term(sel, row, a);
            row[j] = keep;
            out[j] = static_cast<double>(w * (plus - minus) / (2.0L * h));
        }
    }
    return g;
}

/// One gradient step of -log V on a directly parameterized positive value
/// function: V' = V + alpha / V, elementwise.
inline std::vector<double> direct_v_update(std::span<const double> values, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorKind::invalid_parameter, "alpha must lie in [0, 1]");
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(values[i] > 0.0)) throw Error(ErrorKind::invalid_parameter, "values must be strictly positive");
        out[i] = values[i] + alpha / values[i];
    }
    return out;
}

inline std::vector<double> direct_v_update(const std::vector<double>& values, double alpha) {
    return direct_v_update(std::span<const double>(values), alpha);
}

/// The factor the adjacent gap is multiplied by: 1 - alpha / (V_t V_{t+1}).
inline double gap_factor(double v_t, double v_next, double alpha) { return 1.0 - alpha / (v_t * v_next); }

} // namespace soclab

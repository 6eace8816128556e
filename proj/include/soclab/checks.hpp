#pragma once

// Invariant suites over randomly generated instances. Each suite returns a
// CheckResult; the CLI `check` command and the acceptance binary both use them.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "soclab/decoder.hpp"
#include "soclab/math.hpp"
#include "soclab/mdp.hpp"
#include "soclab/model.hpp"
#include "soclab/objectives.hpp"
#include "soclab/oracle.hpp"
#include "soclab/rng.hpp"

namespace soclab {

struct CheckResult {
    explicit CheckResult(std::string n = {}) : name(std::move(n)) {}

    std::string name;
    bool passed = true;
    std::size_t instances = 0;
    std::size_t violations = 0;
    double worst = 0.0;
    double seconds = 0.0;
    std::string detail;

    void fail(const std::string& why) {
        if (passed) detail = why;
        passed = false;
        ++violations;
    }
    void observe(double err) { worst = std::max(worst, err); }
};

struct InstanceLimits {
    std::size_t max_vocab = 4;
    std::size_t max_depth = 4;
    std::size_t max_prompts = 3;
};

struct Instance {
    TokenMdp mdp;
    DemoSet demos;
    LogitModel model;
};

namespace detail {

inline std::size_t pick(SplitMix64& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

inline TokenSeq random_rollout(SplitMix64& rng, const TokenMdp& mdp, const Context& prompt) {
    Context c = prompt;
    while (!mdp.is_terminal(c)) c = c.extended(static_cast<TokenId>(rng.below(mdp.vocab.size)));
    return c.tokens;
}

inline double rel_err(double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    if (scale <= 1e-10) return std::abs(a - b) <= 1e-10 ? 0.0 : std::numeric_limits<double>::infinity();
    return std::abs(a - b) / scale;
}

class Stopwatch {
public:
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count(); }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

} // namespace detail

/// Random MDP with prompts of one shared length (hence prefix-free) and a
/// random, possibly empty, rewarded set.
inline TokenMdp random_mdp(SplitMix64& rng, const InstanceLimits& lim) {
    TokenMdp mdp;
    mdp.vocab.size = detail::pick(rng, 2, lim.max_vocab);
    if (rng.below(2) == 0) mdp.vocab.eos = static_cast<TokenId>(mdp.vocab.size - 1);
    mdp.max_len = detail::pick(rng, 1, lim.max_depth);
    const auto content = mdp.vocab.content_tokens();
    const std::size_t plen = detail::pick(rng, 1, 2);
    const std::size_t want = std::min<std::size_t>(detail::pick(rng, 1, lim.max_prompts), plen == 1 ? content.size() : content.size() * content.size());
    std::set<TokenSeq> seen;
    while (mdp.prompts.size() < want) {
        TokenSeq t;
        for (std::size_t i = 0; i < plen; ++i) t.push_back(content[rng.below(content.size())]);
        if (seen.insert(t).second) mdp.prompts.push_back(Context::prompt(t));
    }
    for (const auto& p : mdp.prompts) {
        const std::size_t n = detail::pick(rng, 0, 3);
        for (std::size_t i = 0; i < n; ++i) mdp.reward.add(detail::random_rollout(rng, mdp, p));
    }
    mdp.validate();
    return mdp;
}

/// Adds a non-empty demo subset and a gaussian model with a few explicitly written rows.
inline Instance random_instance(SplitMix64& rng, const InstanceLimits& lim = {}) {
    Instance inst;
    inst.mdp = random_mdp(rng, lim);
    const auto& p0 = inst.mdp.prompts[rng.below(inst.mdp.prompts.size())];
    inst.mdp.reward.add(detail::random_rollout(rng, inst.mdp, p0));

    std::vector<TokenSeq> demos;
    for (const auto& s : inst.mdp.reward.rewarded())
        if (demos.empty() || rng.below(2) == 0) demos.push_back(s);
    // Occasionally demonstrate the same sequence twice so contexts carry several pairs.
    if (rng.below(4) == 0) demos.push_back(demos.front());
    inst.demos = DemoSet::from_sequences(inst.mdp, demos);

    inst.model = init_model(inst.mdp, InitSpec{InitScheme::gaussian, rng.uniform(0.5, 3.0), rng()});
    const std::size_t extra = detail::pick(rng, 0, 3);
    for (std::size_t i = 0; i < extra; ++i) {
        const auto seq = detail::random_rollout(rng, inst.mdp, inst.mdp.prompts[rng.below(inst.mdp.prompts.size())]);
        TokenSeq key(seq.begin(), seq.end() - 1);
        Logits row(inst.mdp.vocab.size);
        for (auto& v : row) v = rng.uniform(-6.0, 6.0);
        inst.model.set_row(key, row);
    }
    return inst;
}

/// Analytic gradients against central differences, plus the row identities.
inline CheckResult check_gradients(std::uint64_t seed, std::size_t n = 200, double eps = 1e-6, double tol = 1e-6) {
    CheckResult r{"gradients"};
    detail::Stopwatch sw;
    SplitMix64 rng(derive_seed(seed, 0x6A));
    for (std::size_t i = 0; i < n; ++i, ++r.instances) {
        const auto inst = random_instance(rng);
        const auto& m = inst.model;
        const auto& d = inst.demos;
        const double w = 1.0 / static_cast<double>(d.pairs().size());

        const GradientTable analytic[] = {sft_grad(m, d), v_grad(m, d), reinforce_grad(m, d)};
        const LossKind kinds[] = {LossKind::sft, LossKind::v, LossKind::reinforce_objective};
        const char* names[] = {"sft", "v", "reinforce"};
        for (int k = 0; k < 3; ++k) {
            // reinforce_grad ascends; the numeric derivative of the objective has the same sign.
            const auto fd = finite_diff_grad({kinds[k], 0.0}, m, d, eps);
            for (const auto& [key, row] : fd.rows())
                for (TokenId a = 0; a < row.size(); ++a) {
                    const double e = detail::rel_err(analytic[k].at(key, a), row[a]);
                    r.observe(e);
                    if (e > tol) r.fail(std::string(names[k]) + " mismatch at [" + format_tokens(key) + "] a=" + std::to_string(a));
                }
        }

        std::map<TokenSeq, std::vector<TokenId>> acts;
        for (const auto& [ctx, a] : d.pairs()) acts[ctx.tokens].push_back(a);
        for (const auto& [key, as] : acts) {
            const auto p = softmax(m.row(key));
            const auto g = analytic[0].row(key);
            const auto gv = analytic[1].row(key);
            double s = 0.0, sv = 0.0;
            for (TokenId a = 0; a < p.size(); ++a) {
                double expected = 0.0;
                for (TokenId b : as) expected += w * (p[a] - (a == b ? 1.0 : 0.0));
                if (std::abs(g[a] - expected) > 1e-12) r.fail("sft_grad differs from policy minus one-hot");
                if (std::abs(analytic[2].at(key, a) + g[a]) > 1e-12) r.fail("reinforce_grad != -sft_grad");
                s += g[a];
                sv += gv[a];
            }
            if (std::abs(s) > 1e-12) r.fail("sft row does not sum to 0");
            if (std::abs(sv + w * static_cast<double>(as.size())) > 1e-12) r.fail("v row does not sum to -weight");
        }

        const auto fine = finite_diff_grad({LossKind::sft, 0.0}, m, d, eps / 10);
        const auto coarse = finite_diff_grad({LossKind::sft, 0.0}, m, d, eps);
        for (const auto& [key, row] : fine.rows())
            for (TokenId a = 0; a < row.size(); ++a)
                if (detail::rel_err(row[a], coarse.at(key, a)) > 1e-4) r.fail("finite differences depend on the step size");
    }
    r.seconds = sw.seconds();
    return r;
}

/// Softmax / logsumexp identities on random logit vectors.
inline CheckResult check_identities(std::uint64_t seed, std::size_t n = 10000) {
    CheckResult r{"identities"};
    detail::Stopwatch sw;
    SplitMix64 rng(derive_seed(seed, 0x1D));
    for (std::size_t i = 0; i < n; ++i, ++r.instances) {
        const std::size_t len = detail::pick(rng, 2, 8);
        const double scale = i % 10 == 0 ? 700.0 : rng.uniform(0.1, 20.0);
        std::vector<double> q(len);
        for (auto& v : q) v = rng.uniform(-scale, scale);
        const auto p = softmax(q);
        const auto lp = log_softmax(q);
        const double v = logsumexp(q);
        const double mx = *std::ranges::max_element(q);

        double sum = 0.0;
        for (double x : p) sum += x;
        r.observe(std::abs(sum - 1.0));
        if (std::abs(sum - 1.0) > 1e-12) r.fail("policy does not sum to 1");
        for (std::size_t a = 0; a < len; ++a) {
            if (std::abs(lp[a] - (q[a] - v)) > 1e-10) r.fail("log pi != Q - V");
            if (p[a] > 1e-300 && std::abs(lp[a] - std::log(p[a])) > 1e-10) r.fail("log pi disagrees with log of the policy");
        }
        if (!(v >= mx && v <= mx + std::log(static_cast<double>(len)) + 1e-12)) r.fail("soft value outside its bounds");

        const double c = rng.uniform(-50.0, 50.0);
        auto shifted = q;
        for (auto& x : shifted) x += c;
        const auto ps = softmax(shifted);
        for (std::size_t a = 0; a < len; ++a)
            if (std::abs(ps[a] - p[a]) > 1e-12) r.fail("policy not shift invariant");
        if (std::abs(logsumexp(shifted) - v - c) > 1e-10) r.fail("soft value does not shift by c");

        const std::size_t j = rng.below(len);
        auto bumped = q;
        bumped[j] += rng.uniform(0.01, 1.0);
        const double vb = logsumexp(bumped);
        if (vb < v || (p[j] > 1e-12 && !(vb > v))) r.fail("soft value not increasing in a logit");
    }
    r.seconds = sw.seconds();
    return r;
}

/// Exact telescoping for oracle models and the algebraic identity for any model.
inline CheckResult check_telescoping(std::uint64_t seed, std::size_t n = 100, double tol = 1e-8) {
    CheckResult r{"telescoping"};
    detail::Stopwatch sw;
    SplitMix64 rng(derive_seed(seed, 0x7E));
    for (std::size_t i = 0; i < n; ++i, ++r.instances) {
        const auto mdp = random_mdp(rng, {4, 5, 2});
        const auto table = soft_q_backward(mdp);
        const auto oracle = optimal_policy(table, mdp);
        const auto random_model = init_model(mdp, InitSpec{InitScheme::gaussian, rng.uniform(0.5, 3.0), rng()});
        for (const auto& p : mdp.prompts)
            for_each_trajectory(mdp, p, [&](const Trajectory& t) {
                const auto d = score_decomposition(oracle, t);
                const double expected = table.q_row(t.contexts[t.actions.size() - 1])[t.actions.back()] - table.value(mdp, t.initial());
                const double e = std::abs(d.sum_logpi - expected);
                r.observe(e);
                if (e > tol) r.fail("oracle sum log pi != Q*(s_T,a_T) - V*(s_0) on [" + format_tokens(t.final().tokens) + "]");
                for (double res : d.residuals) {
                    r.observe(std::abs(res));
                    if (std::abs(res) > tol) r.fail("nonzero oracle residual");
                }
                const auto dr = score_decomposition(random_model, t);
                const double er = std::abs(dr.sum_logpi - dr.reconstructed());
                r.observe(er);
                if (er > tol) r.fail("decomposition identity broken for a random model");
            });
    }
    r.seconds = sw.seconds();
    return r;
}

/// The direct value update V + alpha / V under alpha / (V_t V_{t+1}) <= 2.
inline CheckResult check_contraction(std::uint64_t seed, std::size_t n = 100000) {
    CheckResult r{"contraction"};
    detail::Stopwatch sw;
    SplitMix64 rng(derive_seed(seed, 0xC0));
    std::size_t outside = 0, outside_growth = 0;
    while (r.instances < n) {
        const double v0 = std::exp(rng.uniform(std::log(1e-2), std::log(1e2)));
        const double v1 = std::exp(rng.uniform(std::log(1e-2), std::log(1e2)));
        const double alpha = rng.uniform01();
        const auto next = direct_v_update(std::vector<double>{v0, v1}, alpha);
        const double before = std::abs(v0 - v1), after = std::abs(next[0] - next[1]);
        if (alpha / (v0 * v1) > 2.0) {
            ++outside;
            if (after > before) ++outside_growth;
            continue;
        }
        ++r.instances;
        // Rounding slack only: at the boundary the factor is exactly -1.
        const double slack = 4 * std::numeric_limits<double>::epsilon() * (std::abs(next[0]) + std::abs(next[1]));
        r.observe(std::max(0.0, after - before));
        if (after > before + slack) r.fail("gap grew inside the contraction condition");
    }
    const auto cex = direct_v_update(std::vector<double>{0.1, 0.2}, 1.0);
    if (std::abs(cex[0] - 10.1) > 1e-12 || std::abs(cex[1] - 5.2) > 1e-12 || !(std::abs(cex[0] - cex[1]) > 0.1))
        r.fail("counterexample [0.1, 0.2], alpha=1 did not reproduce");
    r.detail += (r.detail.empty() ? "" : "; ") + std::string("outside the condition: ") + std::to_string(outside_growth) + "/" +
                std::to_string(outside) + " pairs grew";
    r.seconds = sw.seconds();
    return r;
}

struct BeamCheckResults {
    CheckResult width_one{"beam-width-1"};
    CheckResult exhaustive{"beam-exhaustive"};
    CheckResult integrity{"beam-score-integrity"};
    CheckResult monotone{"beam-monotone-width"};
};

/// Width-1 equals greedy, exhaustive beam equals brute force, scores are
/// recomputable, and best final score against width {1, 2, 3, 5, 10, |A|^T}.
inline BeamCheckResults check_beam(std::uint64_t seed, std::size_t n = 1000) {
    BeamCheckResults out;
    detail::Stopwatch sw;
    SplitMix64 rng(derive_seed(seed, 0xBE));
    for (std::size_t i = 0; i < n; ++i) {
        const auto mdp = random_mdp(rng, {3, 5, 2});
        const auto model = init_model(mdp, InitSpec{InitScheme::gaussian, rng.uniform(0.5, 3.0), rng()});
        const auto full = static_cast<std::size_t>(mdp.tree_size_bound());
        for (const auto& p : mdp.prompts) {
            ++out.width_one.instances;
            if (beam_search(model, mdp, p, 1).trajectory.final() != greedy_decode(model, mdp, p).final())
                out.width_one.fail("k=1 differs from greedy at prompt [" + format_tokens(p.tokens) + "]");

            ++out.exhaustive.instances;
            const auto exhaustive = beam_search(model, mdp, p, full);
            if (exhaustive.trajectory.final() != brute_force_best_sequence(model, mdp, p).final())
                out.exhaustive.fail("exhaustive beam differs from brute force at prompt [" + format_tokens(p.tokens) + "]");

            ++out.monotone.instances;
            double prev = -std::numeric_limits<double>::infinity();
            for (std::size_t k : {std::size_t{1}, std::size_t{2}, std::size_t{3}, std::size_t{5}, std::size_t{10}, full}) {
                const auto res = beam_search(model, mdp, p, k);
                ++out.integrity.instances;
                for (const auto& h : res.trace.final_pool) {
                    const double e = std::abs(h.score - sequence_log_prob(model, p, h.ctx.generated_tokens()));
                    out.integrity.observe(e);
                    if (e > 1e-10) out.integrity.fail("hypothesis score differs from recomputation");
                }
                if (res.trace.chosen_score < prev) {
                    out.monotone.observe(prev - res.trace.chosen_score);
                    out.monotone.fail("best score dropped at k=" + std::to_string(k) + " on prompt [" + format_tokens(p.tokens) +
                                      "] |A|=" + std::to_string(mdp.vocab.size) + " T=" + std::to_string(mdp.max_len));
                }
                prev = std::max(prev, res.trace.chosen_score);
            }
        }
    }
    const double s = sw.seconds();
    for (auto* c : {&out.width_one, &out.exhaustive, &out.integrity, &out.monotone}) c->seconds = s;
    return out;
}

/// Soft Bellman residuals of the oracle and zero estimation error of its policy.
inline CheckResult check_oracle(std::uint64_t seed, std::size_t n = 100) {
    CheckResult r{"oracle"};
    detail::Stopwatch sw;
    SplitMix64 rng(derive_seed(seed, 0x0A));
    for (std::size_t i = 0; i < n; ++i, ++r.instances) {
        const auto mdp = random_mdp(rng, {4, 5, 2});
        const auto table = soft_q_backward(mdp);
        const double res = max_bellman_residual(table, mdp);
        r.observe(res);
        if (res > 1e-10) r.fail("bellman residual " + std::to_string(res));
        const auto err = estimation_error(optimal_policy(table, mdp), table, mdp);
        r.observe(err.max_error);
        if (err.max_error > 1e-12) r.fail("oracle policy has nonzero estimation error");
    }
    r.seconds = sw.seconds();
    return r;
}

/// One combined step with lambda > 0 raises V at every supervised context
/// above the lambda = 0 step.
inline CheckResult check_soc_boost(std::uint64_t seed, std::size_t n = 100, std::vector<double> lambdas = {0.1, 0.2, 0.3}) {
    CheckResult r{"soc-boost"};
    detail::Stopwatch sw;
    SplitMix64 rng(derive_seed(seed, 0x50));
    double min_gain = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i, ++r.instances) {
        const auto inst = random_instance(rng);
        TrainConfig base{.lambda = 0.0, .lr = rng.uniform(0.01, 1.0)};
        const auto sft = train_step(inst.model, inst.demos, base);
        for (double lam : lambdas) {
            TrainConfig cfg = base;
            cfg.lambda = lam;
            const auto soc = train_step(inst.model, inst.demos, cfg);
            for (const auto& key : inst.demos.supervised_keys()) {
                const double gain = logsumexp(soc.row(key)) - logsumexp(sft.row(key));
                min_gain = std::min(min_gain, gain);
                if (!(gain > 0.0)) r.fail("V did not increase at [" + format_tokens(key) + "] for lambda " + std::to_string(lam));
            }
        }
    }
    r.detail += (r.detail.empty() ? "" : "; ") + std::string("min gain ") + std::to_string(min_gain);
    r.seconds = sw.seconds();
    return r;
}

} // namespace soclab

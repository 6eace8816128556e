#pragma once

// Synthetic task families. Each generator is a pure function of
// (family, seed, params) and returns the MDP, its demonstrations and an
// optional table of prior logit rows (a stand-in for a pretrained model).

#include <algorithm>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "soclab/error.hpp"
#include "soclab/mdp.hpp"
#include "soclab/model.hpp"
#include "soclab/rng.hpp"

namespace soclab {

enum class Family { single_path, branchy_trap, random_dag };

inline std::string to_string(Family f) {
    switch (f) {
    case Family::single_path: return "single-path";
    case Family::branchy_trap: return "branchy-trap";
    case Family::random_dag: return "random-dag";
    }
    return "single-path";
}

inline Family parse_family(const std::string& s) {
    if (s == "single-path" || s == "single_path") return Family::single_path;
    if (s == "branchy-trap" || s == "branchy_trap") return Family::branchy_trap;
    if (s == "random-dag" || s == "random_dag") return Family::random_dag;
    throw Error(ErrorKind::parse, "unknown task family '" + s + "'");
}

struct TaskParams {
    Family family = Family::single_path;
    std::uint64_t seed = 0;
    std::size_t vocab_size = 4;
    /// When set, the last token id is eos and expert paths end with it.
    bool use_eos = true;
    /// max_len; also the generated length of every expert path.
    std::size_t depth = 5;
    std::size_t prompts = 1;
    std::size_t prompt_len = 2;

    // branchy-trap
    std::size_t branches = 2;
    /// Generated length of each decoy, counted from the branch point.
    std::size_t branch_depth = 5;
    /// Expert-step prior logit drawn from U(0, 2 * expert_prior).
    double expert_prior = 0.5;
    /// Decoy logit at the branch point drawn from U(0, decoy_bias_max).
    double decoy_bias_max = 3.0;
    /// Decoy continuation logit drawn from U(decoy_sharp_lo, decoy_sharp_hi).
    double decoy_sharp_lo = 2.0;
    double decoy_sharp_hi = 8.0;

    // random-dag
    std::size_t rewarded = 3;
    std::size_t demonstrated = 1;

    bool operator==(const TaskParams&) const = default;
};

inline TaskParams default_params(Family family) {
    TaskParams p;
    p.family = family;
    switch (family) {
    case Family::single_path:
        p.vocab_size = 2;
        p.depth = 3;
        p.prompts = 1;
        p.prompt_len = 1;
        break;
    case Family::branchy_trap:
        p.vocab_size = 4;
        p.depth = 5;
        p.prompts = 4;
        p.prompt_len = 2;
        p.branches = 2;
        p.branch_depth = 5;
        break;
    case Family::random_dag:
        p.vocab_size = 3;
        p.depth = 4;
        p.prompts = 2;
        p.prompt_len = 1;
        p.rewarded = 3;
        p.demonstrated = 1;
        break;
    }
    return p;
}

struct Task {
    TaskParams params;
    TokenMdp mdp;
    DemoSet demos;
    /// Explicit initial rows; empty for families without a prior.
    LogitModel::Table prior;
};

namespace detail {

inline std::size_t content_count(const TaskParams& p) { return p.use_eos ? p.vocab_size - 1 : p.vocab_size; }

inline void validate_params(const TaskParams& p) {
    auto bad = [](const std::string& m) { throw Error(ErrorKind::invalid_parameter, m); };
    if (p.vocab_size < 2) bad("vocab_size must be >= 2");
    if (p.depth < 1) bad("depth must be >= 1");
    if (p.prompts < 1) bad("prompts must be >= 1");
    if (p.prompt_len < 1) bad("prompt_len must be >= 1");
    std::uint64_t distinct = 1;
    for (std::size_t i = 0; i < p.prompt_len && distinct < p.prompts; ++i) distinct *= content_count(p);
    if (distinct < p.prompts) bad("not enough distinct prompts of the requested length");
    switch (p.family) {
    case Family::single_path:
        if (p.prompts != 1) bad("single-path tasks have exactly one prompt");
        break;
    case Family::branchy_trap:
        if (p.branches < 1) bad("branches must be >= 1");
        if (p.branch_depth < 1 || p.branch_depth > p.depth) bad("branch_depth must lie in [1, depth]");
        if (p.use_eos && p.branch_depth == 1) {
            if (p.branches > content_count(p)) bad("too many branches for the vocabulary");
        } else if (p.branches + 1 > content_count(p)) {
            bad("too many branches for the vocabulary");
        }
        if (!(p.expert_prior >= 0.0) || !(p.decoy_bias_max >= 0.0) || !(p.decoy_sharp_lo <= p.decoy_sharp_hi))
            bad("invalid prior ranges");
        break;
    case Family::random_dag:
        if (p.rewarded < 1) bad("rewarded must be >= 1");
        if (p.demonstrated < 1 || p.demonstrated > p.rewarded) bad("demonstrated must lie in [1, rewarded]");
        break;
    }
}

class TaskRng {
public:
    TaskRng(std::uint64_t seed, const TaskParams& p) : gen_(derive_seed(seed, 0x7A5C0000ULL + static_cast<std::uint64_t>(p.family))), p_(p) {}

    TokenId content() { return static_cast<TokenId>(gen_.below(content_count(p_))); }
    double uniform(double lo, double hi) { return gen_.uniform(lo, hi); }
    std::uint64_t below(std::uint64_t n) { return gen_.below(n); }

    /// A generated suffix of exactly `len` tokens: eos-terminated when eos is in use.
    TokenSeq path(std::size_t len) {
        TokenSeq out;
        for (std::size_t i = 0; i + 1 < len; ++i) out.push_back(content());
        out.push_back(p_.use_eos ? static_cast<TokenId>(p_.vocab_size - 1) : content());
        return out;
    }

private:
    SplitMix64 gen_;
    const TaskParams& p_;
};

inline TokenMdp base_mdp(const TaskParams& p, TaskRng& rng) {
    TokenMdp mdp;
    mdp.vocab.size = p.vocab_size;
    if (p.use_eos) mdp.vocab.eos = static_cast<TokenId>(p.vocab_size - 1);
    mdp.max_len = p.depth;
    std::set<TokenSeq> seen;
    while (mdp.prompts.size() < p.prompts) {
        TokenSeq t;
        for (std::size_t i = 0; i < p.prompt_len; ++i) t.push_back(rng.content());
        if (seen.insert(t).second) mdp.prompts.push_back(Context::prompt(t));
    }
    return mdp;
}

inline TokenSeq concat(const TokenSeq& a, const TokenSeq& b) {
    TokenSeq out = a;
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

} // namespace detail

inline Task generate_task(const TaskParams& params) {
    detail::validate_params(params);
    detail::TaskRng rng(params.seed, params);
    Task task;
    task.params = params;
    task.mdp = detail::base_mdp(params, rng);
    const std::size_t A = params.vocab_size;
    std::vector<TokenSeq> demos;

    switch (params.family) {
    case Family::single_path: {
        const auto seq = detail::concat(task.mdp.prompts[0].tokens, rng.path(params.depth));
        task.mdp.reward.add(seq);
        demos.push_back(seq);
        break;
    }
    case Family::branchy_trap: {
        const std::size_t j = params.depth - params.branch_depth;
        for (const auto& prompt : task.mdp.prompts) {
            const TokenSeq expert = rng.path(params.depth);
            const auto seq = detail::concat(prompt.tokens, expert);
            task.mdp.reward.add(seq);
            demos.push_back(seq);

            TokenSeq ctx = prompt.tokens;
            for (std::size_t t = 0; t < params.depth; ++t) {
                Logits row(A, 0.0);
                row[expert[t]] = rng.uniform(0.0, 2.0 * params.expert_prior);
                task.prior[ctx] = row;
                ctx.push_back(expert[t]);
            }

            TokenSeq branch_point(prompt.tokens);
            branch_point.insert(branch_point.end(), expert.begin(), expert.begin() + static_cast<std::ptrdiff_t>(j));
            std::vector<TokenId> others;
            for (TokenId b = 0; b < detail::content_count(params); ++b)
                if (b != expert[j]) others.push_back(b);
            for (std::size_t i = others.size(); i > 1; --i) std::swap(others[i - 1], others[rng.below(i)]);

            for (std::size_t d = 0; d < params.branches; ++d) {
                const TokenId b = others[d];
                task.prior[branch_point][b] = rng.uniform(0.0, params.decoy_bias_max);
                TokenSeq c = branch_point;
                c.push_back(b);
                if (params.branch_depth < 2) continue;
                for (TokenId tok : rng.path(params.branch_depth - 1)) {
                    Logits row(A, 0.0);
                    row[tok] = rng.uniform(params.decoy_sharp_lo, params.decoy_sharp_hi);
                    task.prior[c] = row;
                    c.push_back(tok);
                }
            }
        }
        break;
    }
    case Family::random_dag: {
        for (const auto& prompt : task.mdp.prompts) {
            std::vector<TokenSeq> suffixes{rng.path(params.depth)};
            std::size_t attempts = 0;
            while (suffixes.size() < params.rewarded) {
                if (++attempts > 1000 * params.rewarded)
                    throw Error(ErrorKind::invalid_parameter, "cannot place the requested number of distinct rewarded suffixes");
                const TokenSeq& base = suffixes[rng.below(suffixes.size())];
                const std::size_t split = rng.below(params.depth);
                TokenSeq s(base.begin(), base.begin() + static_cast<std::ptrdiff_t>(split));
                const std::size_t rest = params.depth - split;
                for (TokenId t : rng.path(rest)) s.push_back(t);
                if (s[split] == base[split] || std::ranges::find(suffixes, s) != suffixes.end()) continue;
                suffixes.push_back(std::move(s));
            }
            for (std::size_t i = 0; i < suffixes.size(); ++i) {
                const auto seq = detail::concat(prompt.tokens, suffixes[i]);
                task.mdp.reward.add(seq);
                if (i < params.demonstrated) demos.push_back(seq);
            }
        }
        break;
    }
    }

    task.mdp.validate();
    task.demos = DemoSet::from_sequences(task.mdp, demos);
    return task;
}

inline Task generate_task(Family family, std::uint64_t seed) {
    auto p = default_params(family);
    p.seed = seed;
    return generate_task(p);
}

/// Initial model for a task. A task prior is installed over defaults drawn
/// from `spec` (zeros meaning sigma 0); otherwise `spec` is used as is.
inline LogitModel initial_model(const Task& task, InitSpec spec) {
    if (task.prior.empty()) return init_model(task.mdp, spec);
    const double sigma = spec.scheme == InitScheme::zeros ? 0.0 : spec.sigma;
    return init_model(task.mdp, InitSpec{InitScheme::from_table, sigma, spec.seed}, task.prior);
}

} // namespace soclab

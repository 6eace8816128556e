#pragma once

// Token-level MDP: states are token prefixes, actions are vocabulary tokens,
// transitions append the chosen token, and the only reward is a 0/1 outcome on
// the terminal sequence. The discount is fixed at 1 and is never stored.

#include <algorithm>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "soclab/error.hpp"

namespace soclab {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

inline constexpr std::uint64_t default_enumeration_cap = 1'000'000;

inline std::string format_tokens(std::span<const TokenId> tokens, char sep = ' ') {
    std::string out;
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        if (i) out += sep;
        out += std::to_string(tokens[i]);
    }
    return out;
}

struct Vocabulary {
    std::size_t size = 2;
    /// Absent means sequences end only by reaching max_len.
    std::optional<TokenId> eos;

    bool is_eos(TokenId t) const noexcept { return eos && *eos == t; }

    void validate() const {
        if (size < 2) throw Error(ErrorKind::invalid_parameter, "vocabulary size must be >= 2");
        if (eos && *eos >= size) throw Error(ErrorKind::invalid_parameter, "eos id outside vocabulary");
    }

    /// Tokens other than eos, in increasing id order.
    std::vector<TokenId> content_tokens() const {
        std::vector<TokenId> out;
        for (TokenId t = 0; t < size; ++t)
            if (!is_eos(t)) out.push_back(t);
        return out;
    }

    bool operator==(const Vocabulary&) const = default;
};

/// A state: the prompt followed by the tokens generated so far.
struct Context {
    TokenSeq tokens;
    std::size_t prompt_len = 0;

    static Context prompt(TokenSeq tokens) {
        const auto n = tokens.size();
        return Context{std::move(tokens), n};
    }

    std::size_t generated() const noexcept { return tokens.size() - prompt_len; }
    std::span<const TokenId> generated_tokens() const noexcept {
        return std::span<const TokenId>(tokens).subspan(prompt_len);
    }
    Context extended(TokenId action) const {
        Context next{tokens, prompt_len};
        next.tokens.push_back(action);
        return next;
    }

    auto operator<=>(const Context&) const = default;
    bool operator==(const Context&) const = default;
};

/// Declarative reward: the set of full terminal token sequences that earn 1.
class RewardSpec {
public:
    RewardSpec() = default;
    explicit RewardSpec(std::set<TokenSeq> rewarded) : rewarded_(std::move(rewarded)) {}

    int operator()(const TokenSeq& terminal_sequence) const {
        return rewarded_.contains(terminal_sequence) ? 1 : 0;
    }
    const std::set<TokenSeq>& rewarded() const noexcept { return rewarded_; }
    void add(TokenSeq seq) { rewarded_.insert(std::move(seq)); }

    bool operator==(const RewardSpec&) const = default;

private:
    std::set<TokenSeq> rewarded_;
};

struct TokenMdp {
    Vocabulary vocab;
    std::size_t max_len = 1;
    std::vector<Context> prompts;
    RewardSpec reward;

    bool operator==(const TokenMdp&) const = default;

    bool is_terminal(const Context& ctx) const noexcept {
        if (ctx.generated() >= max_len) return true;
        return ctx.generated() > 0 && vocab.is_eos(ctx.tokens.back());
    }

    /// Checks the Context invariants against this MDP.
    void validate_context(const Context& ctx) const {
        if (ctx.prompt_len > ctx.tokens.size())
            throw Error(ErrorKind::invalid_parameter, "prompt_len exceeds context length");
        if (ctx.generated() > max_len)
            throw Error(ErrorKind::invalid_parameter, "context longer than max_len");
        for (std::size_t i = 0; i < ctx.tokens.size(); ++i) {
            const TokenId t = ctx.tokens[i];
            if (t >= vocab.size) throw Error(ErrorKind::token_out_of_range, "token " + std::to_string(t));
            if (vocab.is_eos(t) && i + 1 != ctx.tokens.size())
                throw Error(ErrorKind::invalid_parameter, "eos before the final position");
            if (vocab.is_eos(t) && i < ctx.prompt_len)
                throw Error(ErrorKind::invalid_parameter, "eos inside the prompt");
        }
    }

    void validate() const {
        vocab.validate();
        if (max_len < 1) throw Error(ErrorKind::invalid_parameter, "max_len must be >= 1");
        if (prompts.empty()) throw Error(ErrorKind::invalid_parameter, "mdp has no prompts");
        for (const auto& p : prompts) {
            if (p.prompt_len < 1 || p.prompt_len != p.tokens.size())
                throw Error(ErrorKind::invalid_parameter, "prompt must be a non-empty prompt-only context");
            validate_context(p);
        }
        for (std::size_t i = 0; i < prompts.size(); ++i)
            for (std::size_t j = 0; j < prompts.size(); ++j)
                if (i != j && std::ranges::mismatch(prompts[i].tokens, prompts[j].tokens).in1 == prompts[i].tokens.end())
                    throw Error(ErrorKind::invalid_parameter, "prompts must be distinct and prefix-free");
    }

    /// The prompt that prefixes `sequence`, if any.
    std::optional<std::size_t> prompt_index_of(std::span<const TokenId> sequence) const {
        for (std::size_t i = 0; i < prompts.size(); ++i) {
            const auto& p = prompts[i].tokens;
            if (p.size() <= sequence.size() && std::equal(p.begin(), p.end(), sequence.begin())) return i;
        }
        return std::nullopt;
    }

    std::uint64_t tree_size_bound() const noexcept {
        std::uint64_t leaves = 1;
        for (std::size_t t = 0; t < max_len; ++t) {
            if (leaves > std::numeric_limits<std::uint64_t>::max() / vocab.size) return std::numeric_limits<std::uint64_t>::max();
            leaves *= vocab.size;
        }
        return leaves;
    }

    void check_enumeration_cap(std::uint64_t cap) const {
        if (tree_size_bound() > cap)
            throw Error(ErrorKind::cap_exceeded, std::to_string(vocab.size) + "^" + std::to_string(max_len) +
                                                     " exceeds enumeration cap " + std::to_string(cap));
    }
};

inline Context step(const TokenMdp& mdp, const Context& ctx, TokenId action) {
    if (mdp.is_terminal(ctx)) throw Error(ErrorKind::terminal_context, "step from terminal context [" + format_tokens(ctx.tokens) + "]");
    if (action >= mdp.vocab.size) throw Error(ErrorKind::token_out_of_range, "action " + std::to_string(action));
    return ctx.extended(action);
}

inline int terminal_reward(const TokenMdp& mdp, const Context& ctx) {
    if (!mdp.is_terminal(ctx)) throw Error(ErrorKind::non_terminal, "reward requested for [" + format_tokens(ctx.tokens) + "]");
    return mdp.reward(ctx.tokens);
}

struct Trajectory {
    /// s_0 .. s_T; contexts[t+1] == contexts[t] + actions[t], the last one terminal.
    std::vector<Context> contexts;
    TokenSeq actions;
    int reward = 0;

    const Context& initial() const { return contexts.front(); }
    const Context& final() const { return contexts.back(); }
    bool operator==(const Trajectory&) const = default;
};

/// Replays `actions` from `prompt`; the result must end exactly at a terminal context.
inline Trajectory replay(const TokenMdp& mdp, const Context& prompt, std::span<const TokenId> actions) {
    Trajectory traj;
    traj.contexts.push_back(prompt);
    for (TokenId a : actions) {
        if (mdp.is_terminal(traj.contexts.back()))
            throw Error(ErrorKind::invalid_trajectory, "actions continue past a terminal context");
        traj.contexts.push_back(step(mdp, traj.contexts.back(), a));
        traj.actions.push_back(a);
    }
    if (!mdp.is_terminal(traj.final())) throw Error(ErrorKind::invalid_trajectory, "trajectory does not reach a terminal context");
    traj.reward = terminal_reward(mdp, traj.final());
    return traj;
}

/// Replays a full token sequence (prompt included) from whichever prompt prefixes it.
inline Trajectory replay_sequence(const TokenMdp& mdp, std::span<const TokenId> sequence) {
    const auto idx = mdp.prompt_index_of(sequence);
    if (!idx) throw Error(ErrorKind::invalid_trajectory, "sequence does not start with a prompt");
    const auto& prompt = mdp.prompts[*idx];
    return replay(mdp, prompt, sequence.subspan(prompt.tokens.size()));
}

/// Structural check of the Trajectory invariants.
inline void validate_trajectory(const TokenMdp& mdp, const Trajectory& traj) {
    if (traj.contexts.size() != traj.actions.size() + 1 || traj.actions.empty())
        throw Error(ErrorKind::invalid_trajectory, "context/action count mismatch");
    for (std::size_t t = 0; t < traj.actions.size(); ++t) {
        if (mdp.is_terminal(traj.contexts[t]))
            throw Error(ErrorKind::invalid_trajectory, "interior context is terminal");
        if (traj.contexts[t + 1] != traj.contexts[t].extended(traj.actions[t]))
            throw Error(ErrorKind::invalid_trajectory, "contexts do not follow the actions");
    }
    if (!mdp.is_terminal(traj.final())) throw Error(ErrorKind::invalid_trajectory, "final context not terminal");
    if (traj.reward != mdp.reward(traj.final().tokens)) throw Error(ErrorKind::invalid_trajectory, "stored reward disagrees with reward spec");
}

struct SupervisionPair {
    Context context;
    TokenId action = 0;
    bool operator==(const SupervisionPair&) const = default;
};

/// Expert demonstrations and the (state, action) pairs they induce, the
/// prompt-only state included.
class DemoSet {
public:
    DemoSet() = default;

    /// Builds from trajectories. With `require_rewarded`, every trajectory must earn reward 1.
    static DemoSet from_trajectories(const TokenMdp& mdp, std::vector<Trajectory> trajectories, bool require_rewarded = true) {
        DemoSet d;
        for (auto& traj : trajectories) {
            validate_trajectory(mdp, traj);
            if (require_rewarded && traj.reward != 1)
                throw Error(ErrorKind::reward_not_one, "demonstration [" + format_tokens(traj.final().tokens) + "] is unrewarded");
            for (std::size_t t = 0; t < traj.actions.size(); ++t) d.pairs_.push_back({traj.contexts[t], traj.actions[t]});
        }
        d.trajectories_ = std::move(trajectories);
        return d;
    }

    static DemoSet from_sequences(const TokenMdp& mdp, const std::vector<TokenSeq>& sequences, bool require_rewarded = true) {
        std::vector<Trajectory> trajs;
        for (const auto& s : sequences) trajs.push_back(replay_sequence(mdp, s));
        return from_trajectories(mdp, std::move(trajs), require_rewarded);
    }

    const std::vector<Trajectory>& trajectories() const noexcept { return trajectories_; }
    const std::vector<SupervisionPair>& pairs() const noexcept { return pairs_; }
    bool empty() const noexcept { return pairs_.empty(); }

    /// Distinct supervised context keys.
    std::set<TokenSeq> supervised_keys() const {
        std::set<TokenSeq> keys;
        for (const auto& p : pairs_) keys.insert(p.context.tokens);
        return keys;
    }

    std::vector<TokenSeq> sequences() const {
        std::vector<TokenSeq> out;
        for (const auto& t : trajectories_) out.push_back(t.final().tokens);
        return out;
    }

    bool operator==(const DemoSet&) const = default;

private:
    std::vector<Trajectory> trajectories_;
    std::vector<SupervisionPair> pairs_;
};

/// Depth-first walk over every terminal trajectory from `prompt`, in
/// lexicographic token order. `visit(const Trajectory&)` is called per leaf.
template <class Visitor>
void for_each_trajectory(const TokenMdp& mdp, const Context& prompt, Visitor&& visit) {
    Trajectory cur;
    cur.contexts.push_back(prompt);
    std::function<void()> rec = [&] {
        if (mdp.is_terminal(cur.contexts.back())) {
            cur.reward = mdp.reward(cur.contexts.back().tokens);
            visit(static_cast<const Trajectory&>(cur));
            return;
        }
        for (TokenId a = 0; a < mdp.vocab.size; ++a) {
            cur.contexts.push_back(cur.contexts.back().extended(a));
            cur.actions.push_back(a);
            rec();
            cur.contexts.pop_back();
            cur.actions.pop_back();
        }
    };
    rec();
}

inline std::vector<Trajectory> enumerate_trajectories(const TokenMdp& mdp, const Context& prompt,
                                                      std::uint64_t cap = default_enumeration_cap) {
    mdp.check_enumeration_cap(cap);
    if (mdp.is_terminal(prompt)) throw Error(ErrorKind::terminal_context, "prompt is terminal");
    std::vector<Trajectory> out;
    for_each_trajectory(mdp, prompt, [&](const Trajectory& t) { out.push_back(t); });
    return out;
}

} // namespace soclab

#pragma once

// Tabular implicit-Q model: one logit per (context, token). The logits are
// read as Q_theta(s, .), their softmax is the policy and their log-sum-exp is
// the soft value. Contexts never written to fall back to a seeded default row.

#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "soclab/error.hpp"
#include "soclab/math.hpp"
#include "soclab/mdp.hpp"
#include "soclab/rng.hpp"

namespace soclab {

using Logits = std::vector<double>;

/// A probability vector over the vocabulary (also the normalized Q of a state).
class ProbVector {
public:
    ProbVector() = default;
    explicit ProbVector(std::vector<double> p) : p_(std::move(p)) {
        double sum = 0;
        for (double v : p_) {
            if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorKind::invalid_parameter, "probability outside [0, 1]");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-9) throw Error(ErrorKind::invalid_parameter, "probabilities do not sum to 1");
    }

    std::size_t size() const noexcept { return p_.size(); }
    double operator[](std::size_t i) const { return p_[i]; }
    std::span<const double> values() const noexcept { return p_; }
    const std::vector<double>& vector() const noexcept { return p_; }

private:
    std::vector<double> p_;
};

inline double entropy(const ProbVector& p) { return entropy(p.values()); }

enum class InitScheme { zeros, gaussian, from_table };

inline std::string to_string(InitScheme s) {
    switch (s) {
    case InitScheme::zeros: return "zeros";
    case InitScheme::gaussian: return "gaussian";
    case InitScheme::from_table: return "from_table";
    }
    return "zeros";
}

inline InitScheme parse_init_scheme(const std::string& s) {
    if (s == "zeros") return InitScheme::zeros;
    if (s == "gaussian") return InitScheme::gaussian;
    if (s == "from_table") return InitScheme::from_table;
    throw Error(ErrorKind::parse, "unknown init scheme '" + s + "'");
}

/// How default rows are produced. `from_table` starts from explicit rows and
/// uses gaussian(sigma) defaults (zeros when sigma == 0) everywhere else.
struct InitSpec {
    InitScheme scheme = InitScheme::zeros;
    double sigma = 0.0;
    std::uint64_t seed = 0;

    bool operator==(const InitSpec&) const = default;
};

class LogitModel {
public:
    using Table = std::map<TokenSeq, Logits>;

    LogitModel() = default;
    LogitModel(Vocabulary vocab, std::size_t max_len, InitSpec init) : vocab_(vocab), max_len_(max_len), init_(init) {
        vocab_.validate();
        if (!(init_.sigma >= 0.0) || !std::isfinite(init_.sigma))
            throw Error(ErrorKind::invalid_parameter, "sigma must be finite and >= 0");
    }

    const Vocabulary& vocab() const noexcept { return vocab_; }
    std::size_t vocab_size() const noexcept { return vocab_.size; }
    std::size_t max_len() const noexcept { return max_len_; }
    const InitSpec& init_spec() const noexcept { return init_; }
    const Table& entries() const noexcept { return table_; }

    bool is_terminal(const Context& ctx) const noexcept {
        if (ctx.generated() >= max_len_) return true;
        return ctx.generated() > 0 && vocab_.is_eos(ctx.tokens.back());
    }

    /// The row a context gets when it has never been materialized.
    Logits default_row(std::span<const TokenId> key) const {
        Logits row(vocab_.size, 0.0);
        if (init_.scheme == InitScheme::zeros || init_.sigma == 0.0) return row;
        SplitMix64 gen(hash_sequence(init_.seed, key));
        for (auto& v : row) v = init_.sigma * gen.normal();
        return row;
    }

    /// Total lookup: the stored row or the default row.
    Logits row(std::span<const TokenId> key) const {
        const TokenSeq k(key.begin(), key.end());
        if (auto it = table_.find(k); it != table_.end()) return it->second;
        return default_row(key);
    }

    bool is_materialized(const TokenSeq& key) const { return table_.contains(key); }

    Logits& materialize(const TokenSeq& key) {
        auto it = table_.find(key);
        if (it == table_.end()) it = table_.emplace(key, default_row(key)).first;
        return it->second;
    }

    void set_row(const TokenSeq& key, Logits row) {
        if (row.size() != vocab_.size) throw Error(ErrorKind::invalid_parameter, "row length differs from vocabulary size");
        for (double v : row)
            if (!std::isfinite(v)) throw Error(ErrorKind::invalid_parameter, "non-finite logit");
        table_[key] = std::move(row);
    }

    bool operator==(const LogitModel&) const = default;

private:
    Vocabulary vocab_;
    std::size_t max_len_ = 1;
    InitSpec init_;
    Table table_;
};

namespace detail {
inline void require_non_terminal(const LogitModel& model, const Context& ctx) {
    if (model.is_terminal(ctx)) throw Error(ErrorKind::terminal_context, "no logits at terminal context [" + format_tokens(ctx.tokens) + "]");
}
} // namespace detail

inline Logits logits(const LogitModel& model, const Context& ctx) {
    detail::require_non_terminal(model, ctx);
    return model.row(ctx.tokens);
}

inline ProbVector policy(const LogitModel& model, const Context& ctx) {
    return ProbVector(softmax(logits(model, ctx)));
}

/// log pi(.|s) = Q(s, .) - V(s).
inline std::vector<double> log_policy(const LogitModel& model, const Context& ctx) {
    return log_softmax(logits(model, ctx));
}

inline double soft_value(const LogitModel& model, const Context& ctx) {
    return logsumexp(logits(model, ctx));
}

/// Builds a model over `mdp`. For `from_table`, `table` rows are installed verbatim.
inline LogitModel init_model(const TokenMdp& mdp, InitSpec spec, const LogitModel::Table& table = {}) {
    if (!(spec.sigma >= 0.0) || !std::isfinite(spec.sigma)) throw Error(ErrorKind::invalid_parameter, "sigma must be finite and >= 0");
    if (spec.scheme == InitScheme::zeros) spec.sigma = 0.0;
    LogitModel model(mdp.vocab, mdp.max_len, spec);
    if (spec.scheme == InitScheme::from_table)
        for (const auto& [key, row] : table) model.set_row(key, row);
    else if (!table.empty())
        throw Error(ErrorKind::invalid_parameter, "explicit rows require the from_table scheme");
    return model;
}

/// Sparse gradient over tabular parameters; absent rows are zero.
class GradientTable {
public:
    using Rows = std::map<TokenSeq, std::vector<double>>;

    GradientTable() = default;
    explicit GradientTable(std::size_t vocab_size) : vocab_size_(vocab_size) {}

    std::size_t vocab_size() const noexcept { return vocab_size_; }
    const Rows& rows() const noexcept { return rows_; }

    std::vector<double>& row(const TokenSeq& key) {
        auto it = rows_.find(key);
        if (it == rows_.end()) it = rows_.emplace(key, std::vector<double>(vocab_size_, 0.0)).first;
        return it->second;
    }

    std::vector<double> row(const TokenSeq& key) const {
        if (auto it = rows_.find(key); it != rows_.end()) return it->second;
        return std::vector<double>(vocab_size_, 0.0);
    }

    double at(const TokenSeq& key, TokenId a) const {
        auto it = rows_.find(key);
        return it == rows_.end() ? 0.0 : it->second.at(a);
    }

    bool contains(const TokenSeq& key) const { return rows_.contains(key); }

    GradientTable& add_scaled(const GradientTable& other, double scale) {
        for (const auto& [key, r] : other.rows_) {
            auto& mine = row(key);
            for (std::size_t a = 0; a < r.size(); ++a) mine[a] += scale * r[a];
        }
        return *this;
    }

    GradientTable scaled(double s) const {
        GradientTable out(vocab_size_);
        out.add_scaled(*this, s);
        return out;
    }

private:
    std::size_t vocab_size_ = 0;
    Rows rows_;
};

} // namespace soclab

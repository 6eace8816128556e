#pragma once

// JSON and CSV formats: tasks with their demonstrations, models, decode
// traces, oracle dumps and score decompositions. Reals are printed with 17
// significant digits so every write/read cycle is lossless.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "soclab/decoder.hpp"
#include "soclab/error.hpp"
#include "soclab/mdp.hpp"
#include "soclab/model.hpp"
#include "soclab/oracle.hpp"
#include "soclab/tasks.hpp"

namespace soclab {

using json = nlohmann::json;

inline std::string format_real(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

namespace detail {

template <class T>
T get_field(const json& j, const char* key) {
    if (!j.contains(key)) throw Error(ErrorKind::parse, std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::parse, std::string("field '") + key + "': " + e.what());
    }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    return j.contains(key) ? get_field<T>(j, key) : fallback;
}

} // namespace detail

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec) throw Error(ErrorKind::io, "cannot create " + path.parent_path().string() + ": " + ec.message());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
    out << content;
    if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

inline json parse_json(const std::string& text, const std::string& what = "document") {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw Error(ErrorKind::parse, what + ": " + e.what());
    }
}

// ---- task params -----------------------------------------------------------

inline json to_json(const TaskParams& p) {
    return json{{"family", to_string(p.family)},
                {"seed", p.seed},
                {"vocab_size", p.vocab_size},
                {"use_eos", p.use_eos},
                {"depth", p.depth},
                {"prompts", p.prompts},
                {"prompt_len", p.prompt_len},
                {"branches", p.branches},
                {"branch_depth", p.branch_depth},
                {"expert_prior", p.expert_prior},
                {"decoy_bias_max", p.decoy_bias_max},
                {"decoy_sharp_lo", p.decoy_sharp_lo},
                {"decoy_sharp_hi", p.decoy_sharp_hi},
                {"rewarded", p.rewarded},
                {"demonstrated", p.demonstrated}};
}

/// Missing fields take the family defaults.
inline TaskParams task_params_from_json(const json& j) {
    using detail::get_or;
    TaskParams p = default_params(parse_family(detail::get_field<std::string>(j, "family")));
    p.seed = get_or(j, "seed", p.seed);
    p.vocab_size = get_or(j, "vocab_size", p.vocab_size);
    p.use_eos = get_or(j, "use_eos", p.use_eos);
    p.depth = get_or(j, "depth", p.depth);
    p.prompts = get_or(j, "prompts", p.prompts);
    p.prompt_len = get_or(j, "prompt_len", p.prompt_len);
    p.branches = get_or(j, "branches", p.branches);
    p.branch_depth = get_or(j, "branch_depth", p.branch_depth);
    p.expert_prior = get_or(j, "expert_prior", p.expert_prior);
    p.decoy_bias_max = get_or(j, "decoy_bias_max", p.decoy_bias_max);
    p.decoy_sharp_lo = get_or(j, "decoy_sharp_lo", p.decoy_sharp_lo);
    p.decoy_sharp_hi = get_or(j, "decoy_sharp_hi", p.decoy_sharp_hi);
    p.rewarded = get_or(j, "rewarded", p.rewarded);
    p.demonstrated = get_or(j, "demonstrated", p.demonstrated);
    return p;
}

// ---- task ------------------------------------------------------------------

inline json rows_to_json(const LogitModel::Table& table) {
    json arr = json::array();
    for (const auto& [key, row] : table) arr.push_back({{"context", key}, {"logits", row}});
    return arr;
}

inline LogitModel::Table rows_from_json(const json& arr) {
    LogitModel::Table table;
    for (const auto& e : arr) table[detail::get_field<TokenSeq>(e, "context")] = detail::get_field<Logits>(e, "logits");
    return table;
}

inline json to_json(const Task& task) {
    json prompts = json::array();
    for (const auto& p : task.mdp.prompts) prompts.push_back(p.tokens);
    return json{{"vocab_size", task.mdp.vocab.size},
                {"eos", task.mdp.vocab.eos ? json(*task.mdp.vocab.eos) : json(nullptr)},
                {"max_len", task.mdp.max_len},
                {"prompts", prompts},
                {"reward", {{"rewarded", task.mdp.reward.rewarded()}, {"params", to_json(task.params)}}},
                {"demos", task.demos.sequences()},
                {"prior", rows_to_json(task.prior)}};
}

inline Task task_from_json(const json& j) {
    Task task;
    task.mdp.vocab.size = detail::get_field<std::size_t>(j, "vocab_size");
    if (j.contains("eos") && !j.at("eos").is_null()) task.mdp.vocab.eos = detail::get_field<TokenId>(j, "eos");
    task.mdp.max_len = detail::get_field<std::size_t>(j, "max_len");
    for (auto& p : detail::get_field<std::vector<TokenSeq>>(j, "prompts")) task.mdp.prompts.push_back(Context::prompt(std::move(p)));
    const json& reward = j.at("reward");
    if (reward.contains("params")) task.params = task_params_from_json(reward.at("params"));
    if (reward.contains("rewarded")) {
        for (auto& s : detail::get_field<std::vector<TokenSeq>>(reward, "rewarded")) task.mdp.reward.add(std::move(s));
    } else if (reward.contains("params")) {
        task.mdp.reward = generate_task(task.params).mdp.reward;
    } else {
        throw Error(ErrorKind::parse, "reward needs 'rewarded' or 'params'");
    }
    task.mdp.validate();
    for (const auto& s : task.mdp.reward.rewarded()) {
        if (!task.mdp.prompt_index_of(s)) throw Error(ErrorKind::parse, "rewarded sequence outside every prompt");
        replay_sequence(task.mdp, s);
    }
    task.demos = DemoSet::from_sequences(task.mdp, detail::get_or(j, "demos", std::vector<TokenSeq>{}));
    if (j.contains("prior")) task.prior = rows_from_json(j.at("prior"));
    return task;
}

inline void save_task(const Task& task, const std::filesystem::path& path) { write_file(path, to_json(task).dump(2) + "\n"); }
inline Task load_task(const std::filesystem::path& path) { return task_from_json(parse_json(read_file(path), path.string())); }

// ---- model -----------------------------------------------------------------

inline json to_json(const LogitModel& model) {
    const auto& v = model.vocab();
    return json{{"vocab_size", v.size},
                {"eos", v.eos ? json(*v.eos) : json(nullptr)},
                {"max_len", model.max_len()},
                {"init_spec", {{"scheme", to_string(model.init_spec().scheme)}, {"sigma", model.init_spec().sigma}, {"seed", model.init_spec().seed}}},
                {"entries", rows_to_json(model.entries())}};
}

inline LogitModel model_from_json(const json& j) {
    Vocabulary vocab;
    vocab.size = detail::get_field<std::size_t>(j, "vocab_size");
    if (j.contains("eos") && !j.at("eos").is_null()) vocab.eos = detail::get_field<TokenId>(j, "eos");
    const json& spec = j.at("init_spec");
    InitSpec init{parse_init_scheme(detail::get_field<std::string>(spec, "scheme")), detail::get_field<double>(spec, "sigma"),
                  detail::get_field<std::uint64_t>(spec, "seed")};
    LogitModel model(vocab, detail::get_field<std::size_t>(j, "max_len"), init);
    for (auto& [key, row] : rows_from_json(j.at("entries"))) model.set_row(key, std::move(row));
    return model;
}

inline void save_model(const LogitModel& model, const std::filesystem::path& path) { write_file(path, to_json(model).dump(2) + "\n"); }
inline LogitModel load_model(const std::filesystem::path& path) { return model_from_json(parse_json(read_file(path), path.string())); }

// ---- decoding artifacts ----------------------------------------------------

inline json to_json(const DecodeTrace& trace) {
    json steps = json::array();
    for (const auto& step : trace.steps) {
        json s = json::array();
        for (const auto& e : step) s.push_back({{"tokens", e.tokens}, {"score", e.score}, {"rank", e.rank}, {"finished", e.finished}});
        steps.push_back(std::move(s));
    }
    json pool = json::array();
    for (const auto& h : trace.final_pool) pool.push_back({{"tokens", h.ctx.tokens}, {"score", h.score}});
    return json{{"width", trace.width},
                {"expand", trace.mode == ExpandMode::global ? "global" : "per-parent"},
                {"steps", steps},
                {"final_pool", pool},
                {"chosen", {{"tokens", trace.chosen.final().tokens}, {"score", trace.chosen_score}, {"reward", trace.chosen.reward}}}};
}

inline std::string decomposition_csv(const ScoreDecomposition& d) {
    std::string out = "step,q,v_next,residual\n";
    for (std::size_t t = 0; t < d.residuals.size(); ++t)
        out += std::to_string(t) + "," + format_real(d.q[t]) + "," + format_real(d.v_next[t]) + "," + format_real(d.residuals[t]) + "\n";
    return out;
}

/// One row per (state, action) of the oracle table, states in key order.
inline std::string oracle_csv(const SoftQTable& table) {
    std::string out = "context,action,q_star,v_star,pi_star\n";
    for (const auto& [key, qrow] : table.q) {
        const double v = table.v.at(key);
        const auto pi = softmax(qrow);
        for (std::size_t a = 0; a < qrow.size(); ++a)
            out += format_tokens(key) + "," + std::to_string(a) + "," + format_real(qrow[a]) + "," + format_real(v) + "," + format_real(pi[a]) + "\n";
    }
    return out;
}

} // namespace soclab

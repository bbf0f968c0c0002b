#pragma once

// Run configuration read from "section.key = value" text. Blank lines and
// lines starting with '#' are ignored. data.profile is applied before any
// other key regardless of position, so explicit data.* keys refine it.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "sit/eval.hpp"

namespace sit {

struct EvalOptions {
    InferMode mode = InferMode::deterministic;
    std::size_t n = 20;
    std::vector<double> horizons;  // seconds; empty: full window
    BestOfSelect select = BestOfSelect::by_mad;
};

struct RunConfig {
    std::string profile_name = "eth_ucy";
    DatasetProfile profile;
    ModelConfig model;
    TrainConfig train;
    EvalOptions eval;
    std::vector<std::filesystem::path> train_paths;
    std::vector<std::filesystem::path> test_paths;
    std::filesystem::path out = "out";
    std::uint64_t seed = 42;

    // Window lengths always follow the dataset profile.
    ModelConfig resolved_model() const {
        ModelConfig m = model;
        m.obs_len = profile.obs_len;
        m.pred_len = profile.pred_len;
        return m;
    }

    void validate() const {
        validate_profile(profile);
        resolved_model().validate();
        train.validate();
        if (eval.n < 1) throw ConfigError("eval.n must be >= 1");
    }
};

namespace settings {

inline std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream is(v);
    while (std::getline(is, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline std::vector<double> parse_horizons(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const auto& item : split_list(v)) {
        const double h = parse_real(key, item);
        if (!(h > 0.0)) throw ConfigError(key + " entries must be > 0");
        out.push_back(h);
    }
    return out;
}

inline BestOfSelect parse_select(const std::string& key, const std::string& v) {
    if (v == "mad") return BestOfSelect::by_mad;
    if (v == "per_metric") return BestOfSelect::per_metric;
    throw ConfigError("invalid value for " + key + ": '" + v + "' (mad|per_metric)");
}

}  // namespace settings

// Applies one key; throws ConfigError naming an unknown key.
inline void apply_run_setting(RunConfig& c, const std::string& key, const std::string& value) {
    using namespace settings;
    if (key == "data.profile") {
        c.profile_name = value;
        c.profile = dataset_profile(value);
    } else if (apply_profile_setting(c.profile, key, value) || apply_model_setting(c.model, key, value)) {
        // data.* / model.* key handled above
    } else if (key == "train.batch_size") c.train.batch_size = parse_count(key, value);
    else if (key == "train.epochs") c.train.epochs = parse_count(key, value);
    else if (key == "train.lr0") c.train.lr0 = parse_real(key, value);
    else if (key == "train.decay_rate") c.train.decay_rate = parse_real(key, value);
    else if (key == "train.augment") c.train.augment = parse_flag(key, value);
    else if (key == "train.checkpoint_interval") c.train.checkpoint_interval = parse_count(key, value);
    else if (key == "eval.mode") c.eval.mode = parse_mode(key, value);
    else if (key == "eval.n") c.eval.n = parse_count(key, value);
    else if (key == "eval.horizons") c.eval.horizons = parse_horizons(key, value);
    else if (key == "eval.select") c.eval.select = parse_select(key, value);
    else if (key == "paths.train") {
        c.train_paths.clear();
        for (const auto& p : split_list(value)) c.train_paths.emplace_back(p);
    } else if (key == "paths.test") {
        c.test_paths.clear();
        for (const auto& p : split_list(value)) c.test_paths.emplace_back(p);
    } else if (key == "paths.out") c.out = value;
    else if (key == "run.seed") c.seed = parse_seed(key, value);
    else throw ConfigError("unknown configuration key '" + key + "'");
}

inline KeyValues parse_key_values(const std::string& text) {
    KeyValues out;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        line = settings::trim(line);
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": expected 'section.key = value'");
        }
        std::string key = settings::trim(line.substr(0, eq));
        std::string value = settings::trim(line.substr(eq + 1));
        if (key.find('.') == std::string::npos) {
            throw ConfigError("line " + std::to_string(lineno) + ": key '" + key + "' has no section");
        }
        out.emplace_back(std::move(key), std::move(value));
    }
    return out;
}

// Applies `kv` on top of `base`; data.profile entries go first.
inline RunConfig apply_run_settings(RunConfig base, const KeyValues& kv) {
    for (const auto& [k, v] : kv)
        if (k == "data.profile") apply_run_setting(base, k, v);
    for (const auto& [k, v] : kv)
        if (k != "data.profile") apply_run_setting(base, k, v);
    return base;
}

inline RunConfig parse_run_config(const std::string& text, RunConfig base = {}) {
    return apply_run_settings(std::move(base), parse_key_values(text));
}

inline RunConfig load_run_config(const std::filesystem::path& path, RunConfig base = {}) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read config", path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    try {
        return parse_run_config(ss.str(), std::move(base));
    } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

}  // namespace sit

#pragma once

// String key/value conversion for model and dataset settings, shared by the
// configuration file reader and the checkpoint format.

#include <charconv>
#include <string>
#include <utility>
#include <vector>

#include "sit/model.hpp"

namespace sit {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

namespace settings {

inline std::string real(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

inline std::string flag(bool v) { return v ? "true" : "false"; }

inline double parse_real(const std::string& key, const std::string& value) {
    double out = 0.0;
    const auto* end = value.data() + value.size();
    auto [p, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || p != end) throw ConfigError("invalid number for " + key + ": '" + value + "'");
    return out;
}

inline std::size_t parse_count(const std::string& key, const std::string& value) {
    std::size_t out = 0;
    const auto* end = value.data() + value.size();
    auto [p, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || p != end) throw ConfigError("invalid integer for " + key + ": '" + value + "'");
    return out;
}

inline std::uint64_t parse_seed(const std::string& key, const std::string& value) {
    std::uint64_t out = 0;
    const auto* end = value.data() + value.size();
    auto [p, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || p != end) throw ConfigError("invalid seed for " + key + ": '" + value + "'");
    return out;
}

inline bool parse_flag(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "on" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "off" || value == "no") return false;
    throw ConfigError("invalid boolean for " + key + ": '" + value + "'");
}

inline const char* name(LatentSource s) { return s == LatentSource::posterior ? "posterior" : "prior"; }
inline const char* name(LossKind k) { return k == LossKind::squared ? "squared" : "norm"; }
inline const char* name(InferMode m) { return m == InferMode::deterministic ? "deterministic" : "stochastic"; }

inline LatentSource parse_latent_source(const std::string& key, const std::string& v) {
    if (v == "posterior") return LatentSource::posterior;
    if (v == "prior") return LatentSource::prior;
    throw ConfigError("invalid value for " + key + ": '" + v + "' (posterior|prior)");
}

inline LossKind parse_loss(const std::string& key, const std::string& v) {
    if (v == "squared") return LossKind::squared;
    if (v == "norm") return LossKind::norm;
    throw ConfigError("invalid value for " + key + ": '" + v + "' (squared|norm)");
}

inline InferMode parse_mode(const std::string& key, const std::string& v) {
    if (v == "deterministic") return InferMode::deterministic;
    if (v == "stochastic") return InferMode::stochastic;
    throw ConfigError("invalid value for " + key + ": '" + v + "' (deterministic|stochastic)");
}

}  // namespace settings

inline KeyValues model_settings(const ModelConfig& c) {
    using namespace settings;
    return {{"model.d_model", std::to_string(c.d_model)},
            {"model.heads", std::to_string(c.heads)},
            {"model.enc_layers", std::to_string(c.enc_layers)},
            {"model.dec_layers", std::to_string(c.dec_layers)},
            {"model.latent_dim", std::to_string(c.latent_dim)},
            {"model.ff_width", std::to_string(c.ff_width)},
            {"model.use_edge", flag(c.use_edge)},
            {"model.use_latent", flag(c.use_latent)},
            {"model.teacher_forcing", flag(c.teacher_forcing)},
            {"model.train_latent", name(c.train_latent)},
            {"model.loss", name(c.loss)}};
}

// Returns false when `key` is not a model setting.
inline bool apply_model_setting(ModelConfig& c, const std::string& key, const std::string& value) {
    using namespace settings;
    if (key == "model.d_model") c.d_model = parse_count(key, value);
    else if (key == "model.heads") c.heads = parse_count(key, value);
    else if (key == "model.enc_layers") c.enc_layers = parse_count(key, value);
    else if (key == "model.dec_layers") c.dec_layers = parse_count(key, value);
    else if (key == "model.layers") c.enc_layers = c.dec_layers = parse_count(key, value);
    else if (key == "model.latent_dim") c.latent_dim = parse_count(key, value);
    else if (key == "model.ff_width") c.ff_width = parse_count(key, value);
    else if (key == "model.use_edge") c.use_edge = parse_flag(key, value);
    else if (key == "model.use_latent") c.use_latent = parse_flag(key, value);
    else if (key == "model.teacher_forcing") c.teacher_forcing = parse_flag(key, value);
    else if (key == "model.train_latent") c.train_latent = parse_latent_source(key, value);
    else if (key == "model.loss") c.loss = parse_loss(key, value);
    else return false;
    return true;
}

// Named dataset profiles. The *_literal variants swap the observed and
// predicted window lengths of their base profile.
inline DatasetProfile dataset_profile(const std::string& name) {
    if (name == "eth_ucy") return {0.4, 8, 12, kDefaultAttentionRadius};
    if (name == "eth_ucy_literal") return {0.4, 12, 8, kDefaultAttentionRadius};
    if (name == "nuscenes") return {0.5, 8, 6, kDefaultAttentionRadius};
    if (name == "nuscenes_literal") return {0.5, 6, 8, kDefaultAttentionRadius};
    if (name == "desk") return {0.4, 4, 3, kDefaultAttentionRadius};
    throw ConfigError("unknown dataset profile '" + name +
                      "' (eth_ucy|eth_ucy_literal|nuscenes|nuscenes_literal|desk)");
}

inline KeyValues profile_settings(const DatasetProfile& p) {
    using namespace settings;
    return {{"data.dt", real(p.dt)},
            {"data.obs_len", std::to_string(p.obs_len)},
            {"data.pred_len", std::to_string(p.pred_len)},
            {"data.attention_radius", real(p.attention_radius)}};
}

inline bool apply_profile_setting(DatasetProfile& p, const std::string& key, const std::string& value) {
    using namespace settings;
    if (key == "data.dt") p.dt = parse_real(key, value);
    else if (key == "data.obs_len") p.obs_len = parse_count(key, value);
    else if (key == "data.pred_len") p.pred_len = parse_count(key, value);
    else if (key == "data.attention_radius") p.attention_radius = parse_real(key, value);
    else return false;
    return true;
}

inline void validate_profile(const DatasetProfile& p) {
    if (!(p.dt > 0.0)) throw ConfigError("data.dt must be > 0");
    if (p.obs_len < 2) throw ConfigError("data.obs_len must be >= 2");
    if (p.pred_len < 1) throw ConfigError("data.pred_len must be >= 1");
    if (!(p.attention_radius > 0.0)) throw ConfigError("data.attention_radius must be > 0");
}

}  // namespace sit

#pragma once

// Text checkpoint: a header, "key = value" settings (model + dataset
// profile), then one block per named parameter:
//
//   sit-checkpoint 1
//   model.d_model = 16
//   ...
//   param traj_enc.embed.weight 2 6 16
//   <values, whitespace separated, shortest round-trip decimal>
//   end
//
// Values are written with std::to_chars, so save -> load is bit-exact.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "sit/settings.hpp"

namespace sit {

inline constexpr const char* kCheckpointMagic = "sit-checkpoint 1";

struct Checkpoint {
    ModelConfig config;
    DatasetProfile profile;
    SitModel model;
};

inline std::string format_checkpoint(const SitModel& model, const DatasetProfile& profile) {
    std::string out = std::string(kCheckpointMagic) + "\n";
    for (const auto& [k, v] : model_settings(model.config())) out += k + " = " + v + "\n";
    for (const auto& [k, v] : profile_settings(profile)) out += k + " = " + v + "\n";
    for (const auto& [name, t] : model.params().entries()) {
        out += "param " + name + " " + std::to_string(t.rank());
        for (std::size_t d : t.shape()) out += " " + std::to_string(d);
        out += "\n";
        std::size_t col = 0;
        for (double v : t.data()) {
            out += settings::real(v);
            out += (++col % 8 == 0) ? '\n' : ' ';
        }
        if (col % 8 != 0) out.back() = '\n';
    }
    out += "end\n";
    return out;
}

inline void save_checkpoint(const std::filesystem::path& path, const SitModel& model, const DatasetProfile& profile) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint", path.string());
    os << format_checkpoint(model, profile);
    if (!os) throw IoError("failed writing checkpoint", path.string());
}

namespace detail {

inline Checkpoint parse_checkpoint_text(const std::string& text) {
    std::istringstream is(text);
    std::string line;
    if (!std::getline(is, line) || line != kCheckpointMagic) throw DataError("not a sit checkpoint (bad header)");
    ModelConfig config;
    DatasetProfile profile;
    std::streampos params_start = is.tellg();
    while (std::getline(is, line)) {
        if (line.rfind("param ", 0) == 0 || line == "end") break;
        const auto eq = line.find(" = ");
        if (eq == std::string::npos) throw DataError("malformed checkpoint setting: " + line);
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 3);
        if (!apply_model_setting(config, key, value) && !apply_profile_setting(profile, key, value)) {
            throw DataError("unknown checkpoint setting " + key);
        }
        params_start = is.tellg();
    }
    config.obs_len = profile.obs_len;
    config.pred_len = profile.pred_len;
    SitModel model(config, 0);

    is.clear();
    is.seekg(params_start);
    std::size_t loaded = 0;
    std::string tag;
    while (is >> tag) {
        if (tag == "end") break;
        if (tag != "param") throw DataError("expected 'param' in checkpoint, found '" + tag + "'");
        std::string name;
        std::size_t rank = 0;
        is >> name >> rank;
        Shape shape(rank);
        for (auto& d : shape) is >> d;
        if (!is) throw DataError("truncated checkpoint header for parameter " + name);
        if (!model.params().contains(name)) {
            throw DataError("checkpoint parameter " + name + " does not exist in the configured model");
        }
        Tensor& t = model.params().get(name);
        if (t.shape() != shape) {
            throw DataError("checkpoint parameter " + name + " has shape " + shape_str(shape) +
                            " but the configured model expects " + shape_str(t.shape()));
        }
        auto values = t.mutable_data();
        for (auto& v : values) {
            std::string tok;
            if (!(is >> tok)) throw DataError("checkpoint is truncated inside parameter " + name);
            v = settings::parse_real(name, tok);
        }
        ++loaded;
    }
    if (tag != "end") throw DataError("checkpoint is truncated (missing 'end')");
    if (loaded != model.params().size()) {
        throw DataError("checkpoint holds " + std::to_string(loaded) + " parameters, model expects " +
                        std::to_string(model.params().size()));
    }
    return {config, profile, std::move(model)};
}

}  // namespace detail

inline Checkpoint parse_checkpoint(const std::string& text) {
    try {
        return detail::parse_checkpoint_text(text);
    } catch (const ConfigError& e) {
        throw DataError(std::string("invalid checkpoint: ") + e.what());
    }
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot read checkpoint", path.string());
    std::ostringstream ss;
    ss << is.rdbuf();
    try {
        return parse_checkpoint(ss.str());
    } catch (const DataError& e) {
        throw DataError(path.string() + ": " + e.what());
    }
}

}  // namespace sit

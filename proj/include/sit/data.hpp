#pragma once

// Scenes, observation/prediction windows, kinematic features, per-sample
// normalization and rotation augmentation.

#include <cctype>
#include <charconv>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sit/errors.hpp"

namespace sit {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
    friend Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
    friend Vec2 operator*(double s, Vec2 a) { return {a.x * s, a.y * s}; }
    friend Vec2 operator/(Vec2 a, double s) { return {a.x / s, a.y / s}; }
    Vec2& operator+=(Vec2 o) {
        x += o.x;
        y += o.y;
        return *this;
    }
    friend bool operator==(Vec2, Vec2) = default;
};

inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }
inline double distance(Vec2 a, Vec2 b) { return norm(a - b); }

inline Vec2 rotate(Vec2 v, double radians) {
    const double c = std::cos(radians);
    const double s = std::sin(radians);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}

// One observed timestep: position, velocity and acceleration.
struct StateVector {
    Vec2 pos;
    Vec2 vel;
    Vec2 acc;
    friend bool operator==(const StateVector&, const StateVector&) = default;
};

inline constexpr std::size_t kStateDim = 6;

using FrameId = long;
using PedId = long;

class Scene {
public:
    Scene() = default;
    Scene(std::string id, double dt, FrameId frame_step = 0) : id_(std::move(id)), dt_(dt), frame_step_(frame_step) {
        if (!(dt > 0.0)) throw ContractError("scene dt must be > 0");
    }

    void add(FrameId frame, PedId ped, Vec2 pos) {
        auto [it, inserted] = by_frame_[frame].emplace(ped, pos);
        if (!inserted) {
            throw DataError("duplicate record for frame " + std::to_string(frame) + ", pedestrian " +
                            std::to_string(ped));
        }
        by_ped_[ped].emplace(frame, pos);
        ++size_;
    }

    const std::string& id() const { return id_; }
    double dt() const { return dt_; }
    std::size_t size() const { return size_; }
    bool empty() const { return size_ == 0; }

    // Frame-id increment between consecutive frames. Inferred from the data
    // (gcd of gaps between distinct frame ids) unless given explicitly.
    FrameId frame_step() const {
        if (frame_step_ > 0) return frame_step_;
        FrameId step = 0;
        FrameId prev = 0;
        bool first = true;
        for (const auto& [frame, _] : by_frame_) {
            if (!first) step = std::gcd(step, frame - prev);
            prev = frame;
            first = false;
        }
        return step > 0 ? step : 1;
    }

    std::optional<Vec2> position(PedId ped, FrameId frame) const {
        const auto f = by_frame_.find(frame);
        if (f == by_frame_.end()) return std::nullopt;
        const auto p = f->second.find(ped);
        if (p == f->second.end()) return std::nullopt;
        return p->second;
    }

    const std::map<PedId, Vec2>& at_frame(FrameId frame) const {
        static const std::map<PedId, Vec2> none;
        const auto f = by_frame_.find(frame);
        return f == by_frame_.end() ? none : f->second;
    }

    const std::map<FrameId, std::map<PedId, Vec2>>& frames() const { return by_frame_; }
    const std::map<PedId, std::map<FrameId, Vec2>>& tracks() const { return by_ped_; }

private:
    std::string id_;
    double dt_ = 1.0;
    FrameId frame_step_ = 0;
    std::size_t size_ = 0;
    std::map<FrameId, std::map<PedId, Vec2>> by_frame_;
    std::map<PedId, std::map<FrameId, Vec2>> by_ped_;
};

namespace detail {

inline bool parse_real(std::string_view tok, double& out) {
    const auto* end = tok.data() + tok.size();
    auto [p, ec] = std::from_chars(tok.data(), end, out);
    return ec == std::errc() && p == end && std::isfinite(out);
}

// Ids may be written as integers or integral reals ("780.0").
inline bool parse_id(std::string_view tok, long& out) {
    double v = 0.0;
    if (!parse_real(tok, v) || v != std::floor(v)) return false;
    out = static_cast<long>(v);
    return true;
}

}  // namespace detail

// Whitespace-separated "frame ped x y" records, one per line. Blank lines
// and lines starting with '#' are skipped.
inline Scene parse_trajectory_file(std::string_view text, double dt, std::string scene_id = "scene",
                                   FrameId frame_step = 0) {
    Scene scene(std::move(scene_id), dt, frame_step);
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;

        std::vector<std::string_view> fields;
        std::size_t i = 0;
        while (i < line.size()) {
            while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
            const auto start = i;
            while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
            if (i > start) fields.push_back(line.substr(start, i - start));
        }
        if (fields.empty() || fields.front().front() == '#') continue;
        if (fields.size() != 4) {
            throw ParseError("expected 4 fields (frame ped x y), found " + std::to_string(fields.size()), line_no);
        }
        long frame = 0;
        long ped = 0;
        double x = 0.0;
        double y = 0.0;
        if (!detail::parse_id(fields[0], frame)) throw ParseError("bad frame id '" + std::string(fields[0]) + "'", line_no);
        if (!detail::parse_id(fields[1], ped)) throw ParseError("bad pedestrian id '" + std::string(fields[1]) + "'", line_no);
        if (!detail::parse_real(fields[2], x)) throw ParseError("non-numeric x '" + std::string(fields[2]) + "'", line_no);
        if (!detail::parse_real(fields[3], y)) throw ParseError("non-numeric y '" + std::string(fields[3]) + "'", line_no);
        try {
            scene.add(frame, ped, {x, y});
        } catch (const DataError& e) {
            throw DataError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return scene;
}

namespace detail {

inline std::string format_real(double v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

}  // namespace detail

// Inverse of parse_trajectory_file; reals are written in shortest round-trip form.
inline std::string format_trajectory_file(const Scene& scene) {
    std::string out;
    for (const auto& [frame, peds] : scene.frames())
        for (const auto& [ped, p] : peds) {
            out += std::to_string(frame);
            out += '\t';
            out += std::to_string(ped);
            out += '\t';
            out += detail::format_real(p.x);
            out += '\t';
            out += detail::format_real(p.y);
            out += '\n';
        }
    return out;
}

// Backward differences; the first step copies the first computable value.
inline std::vector<StateVector> derive_kinematics(std::span<const Vec2> positions, double dt) {
    if (positions.size() < 2) throw ContractError("derive_kinematics needs at least 2 positions");
    if (!(dt > 0.0)) throw ContractError("derive_kinematics needs dt > 0");
    const std::size_t n = positions.size();
    std::vector<StateVector> states(n);
    for (std::size_t t = 0; t < n; ++t) states[t].pos = positions[t];
    for (std::size_t t = 1; t < n; ++t) states[t].vel = (positions[t] - positions[t - 1]) / dt;
    states[0].vel = states[1].vel;
    for (std::size_t t = 1; t < n; ++t) states[t].acc = (states[t].vel - states[t - 1].vel) / dt;
    states[0].acc = states[1].acc;
    return states;
}

struct NormalizationSpec {
    Vec2 anchor;
    double scale = 1.0;
};

struct TrajectorySample {
    std::string scene_id;
    PedId ped_id = 0;
    FrameId t_last = 0;
    std::vector<StateVector> obs;
    std::vector<Vec2> future;
    Vec2 anchor;  // world position of the last observed step
    std::optional<NormalizationSpec> norm;  // set once normalized

    std::size_t obs_len() const { return obs.size(); }
    std::size_t pred_len() const { return future.size(); }
};

// One sample per pedestrian per start frame with obs_len + pred_len
// consecutive frames present. Output is ordered by pedestrian, then frame.
inline std::vector<TrajectorySample> extract_windows(const Scene& scene, std::size_t obs_len, std::size_t pred_len) {
    if (obs_len < 2) throw ContractError("extract_windows needs obs_len >= 2");
    if (pred_len < 1) throw ContractError("extract_windows needs pred_len >= 1");
    const FrameId step = scene.frame_step();
    const std::size_t span = obs_len + pred_len;
    std::vector<TrajectorySample> out;
    for (const auto& [ped, track] : scene.tracks()) {
        for (const auto& [start, _] : track) {
            std::vector<Vec2> pts;
            pts.reserve(span);
            for (std::size_t k = 0; k < span; ++k) {
                const auto it = track.find(start + static_cast<FrameId>(k) * step);
                if (it == track.end()) break;
                pts.push_back(it->second);
            }
            if (pts.size() != span) continue;
            TrajectorySample s;
            s.scene_id = scene.id();
            s.ped_id = ped;
            s.t_last = start + static_cast<FrameId>(obs_len - 1) * step;
            s.obs = derive_kinematics(std::span<const Vec2>(pts).first(obs_len), scene.dt());
            s.future.assign(pts.begin() + static_cast<std::ptrdiff_t>(obs_len), pts.end());
            s.anchor = pts[obs_len - 1];
            out.push_back(std::move(s));
        }
    }
    return out;
}

inline StateVector normalize_state(const StateVector& s, const NormalizationSpec& spec) {
    return {(s.pos - spec.anchor) / spec.scale, s.vel / spec.scale, s.acc / spec.scale};
}

inline TrajectorySample normalize_sample(TrajectorySample sample, const NormalizationSpec& spec) {
    if (!(spec.scale > 0.0)) throw ContractError("normalization scale must be > 0");
    if (sample.norm) throw ContractError("sample is already normalized");
    for (auto& s : sample.obs) s = normalize_state(s, spec);
    for (auto& p : sample.future) p = (p - spec.anchor) / spec.scale;
    sample.norm = spec;
    return sample;
}

inline Vec2 denormalize_point(Vec2 p, const NormalizationSpec& spec) { return p * spec.scale + spec.anchor; }

inline std::vector<Vec2> denormalize_prediction(std::span<const Vec2> pred, const NormalizationSpec& spec) {
    std::vector<Vec2> out;
    out.reserve(pred.size());
    for (const auto& p : pred) out.push_back(denormalize_point(p, spec));
    return out;
}

inline TrajectorySample denormalize_sample(TrajectorySample sample) {
    if (!sample.norm) throw ContractError("sample is not normalized");
    const auto spec = *sample.norm;
    for (auto& s : sample.obs) s = {denormalize_point(s.pos, spec), s.vel * spec.scale, s.acc * spec.scale};
    for (auto& p : sample.future) p = denormalize_point(p, spec);
    sample.norm.reset();
    return sample;
}

inline double degrees_to_radians(double deg) { return deg * std::numbers::pi / 180.0; }

inline StateVector rotate_state(const StateVector& s, double radians) {
    return {rotate(s.pos, radians), rotate(s.vel, radians), rotate(s.acc, radians)};
}

// Rotation about the origin of the normalized frame.
inline TrajectorySample rotate_augment(TrajectorySample sample, double angle_degrees) {
    if (!sample.norm) throw ContractError("rotate_augment expects a normalized sample");
    const double rad = degrees_to_radians(angle_degrees);
    for (auto& s : sample.obs) s = rotate_state(s, rad);
    for (auto& p : sample.future) p = rotate(p, rad);
    return sample;
}

// 0, 15, ..., 345 degrees.
inline std::vector<double> augmentation_angles(double step_degrees = 15.0) {
    std::vector<double> out;
    for (int k = 0; k * step_degrees < 360.0; ++k) out.push_back(k * step_degrees);
    return out;
}

}  // namespace sit

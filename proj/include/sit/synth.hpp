#pragma once

// Deterministic synthetic scenes for tests and experiments.
//
//   linear      constant-velocity walkers
//   turning     walkers that make one sudden turn
//   mixed       half linear, half turning
//   crossing    pairs walking toward each other with a small lateral
//               offset; both sidestep away from the other once they get
//               close (an odd agent count is rounded up)
//   multimodal  walkers that turn hard left or hard right (coin flip) at a
//               fixed frame
//
// Groups that are meant to be independent (crossing pairs, multimodal
// walkers) are placed far outside each other's attention radius.

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "sit/data.hpp"

namespace sit {

struct SynthConfig {
    std::string scenario = "linear";
    std::size_t agents = 8;
    std::size_t frames = 40;
    double dt = 0.4;
    FrameId frame_step = 10;
    double noise = 0.0;  // std-dev of additive position noise, meters
    double speed_min = 0.8;
    double speed_max = 1.6;
    std::uint64_t seed = 1;
    // Frame index of the turn for "turning"/"multimodal"; negative: random
    // for turning, frames / 2 for multimodal.
    long turn_frame = -1;
    double turn_degrees = 90.0;  // multimodal branch angle
    // crossing: separation below which both agents sidestep, and the
    // lateral speed of the sidestep.
    double trigger_distance = 4.0;
    double sidestep_speed = 1.0;
    double group_spacing = 100.0;
};

inline const std::vector<std::string>& synth_scenarios() {
    static const std::vector<std::string> names{"linear", "turning", "mixed", "crossing", "multimodal"};
    return names;
}

namespace detail {

struct SynthContext {
    const SynthConfig& cfg;
    std::mt19937_64 rng;
    Scene scene;

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
    bool coin() { return std::bernoulli_distribution(0.5)(rng); }
    Vec2 noise() {
        if (cfg.noise <= 0.0) return {};
        std::normal_distribution<double> n(0.0, cfg.noise);
        return {n(rng), n(rng)};
    }
    void emit(PedId ped, std::size_t frame, Vec2 p) {
        scene.add(static_cast<FrameId>(frame) * cfg.frame_step, ped, p + noise());
    }
    double speed() { return uniform(cfg.speed_min, cfg.speed_max); }
    Vec2 heading() {
        const double a = uniform(0.0, 2.0 * std::numbers::pi);
        return {std::cos(a), std::sin(a)};
    }
    // Free walkers share an area that keeps some of them within range.
    Vec2 start() {
        const double side = 20.0 * std::sqrt(static_cast<double>(cfg.agents));
        return {uniform(0.0, side), uniform(0.0, side)};
    }
};

inline void walk_linear(SynthContext& c, PedId ped) {
    Vec2 p = c.start();
    const Vec2 v = c.heading() * c.speed();
    for (std::size_t f = 0; f < c.cfg.frames; ++f) {
        c.emit(ped, f, p);
        p = p + v * c.cfg.dt;
    }
}

inline void walk_turning(SynthContext& c, PedId ped) {
    Vec2 p = c.start();
    Vec2 v = c.heading() * c.speed();
    const std::size_t turn = c.cfg.turn_frame >= 0
                                 ? static_cast<std::size_t>(c.cfg.turn_frame)
                                 : static_cast<std::size_t>(c.uniform(1.0, static_cast<double>(c.cfg.frames)));
    const double angle = degrees_to_radians(c.uniform(30.0, 90.0)) * (c.coin() ? 1.0 : -1.0);
    for (std::size_t f = 0; f < c.cfg.frames; ++f) {
        if (f == turn) v = rotate(v, angle);
        c.emit(ped, f, p);
        p = p + v * c.cfg.dt;
    }
}

inline void walk_multimodal(SynthContext& c, PedId ped, std::size_t i) {
    Vec2 p{0.0, static_cast<double>(i) * c.cfg.group_spacing};
    Vec2 v = c.heading() * c.speed();
    const std::size_t turn =
        c.cfg.turn_frame >= 0 ? static_cast<std::size_t>(c.cfg.turn_frame) : c.cfg.frames / 2;
    const double angle = degrees_to_radians(c.cfg.turn_degrees) * (c.coin() ? 1.0 : -1.0);
    for (std::size_t f = 0; f < c.cfg.frames; ++f) {
        if (f == turn) v = rotate(v, angle);
        c.emit(ped, f, p);
        p = p + v * c.cfg.dt;
    }
}

// Two agents meet head-on near the middle of the sequence. The lateral
// offset's sign is random; each agent steps away from the other while they
// are within trigger distance and still approaching.
inline void walk_crossing_pair(SynthContext& c, PedId a, PedId b, std::size_t pair) {
    const double speed_a = c.speed();
    const double speed_b = c.speed();
    const double offset = c.uniform(0.2, 0.8) * (c.coin() ? 1.0 : -1.0);
    const double meet = static_cast<double>(c.cfg.frames) * c.cfg.dt * c.uniform(0.4, 0.6);
    const Vec2 dir = c.heading();
    const Vec2 side = rotate(dir, std::numbers::pi / 2);
    const Vec2 origin{static_cast<double>(pair) * c.cfg.group_spacing, 0.0};

    // Along-track coordinates chosen so the agents would meet at t = meet.
    double xa = -speed_a * meet, ya = 0.0;
    double xb = speed_b * meet, yb = offset;
    for (std::size_t f = 0; f < c.cfg.frames; ++f) {
        c.emit(a, f, origin + dir * xa + side * ya);
        c.emit(b, f, origin + dir * xb + side * yb);
        const double gap = std::hypot(xb - xa, yb - ya);
        const bool approaching = xb > xa;
        double lat = 0.0;
        if (approaching && gap < c.cfg.trigger_distance) lat = c.cfg.sidestep_speed * c.cfg.dt;
        const double away = yb >= ya ? 1.0 : -1.0;
        xa += speed_a * c.cfg.dt;
        xb -= speed_b * c.cfg.dt;
        ya -= away * lat;
        yb += away * lat;
    }
}

}  // namespace detail

inline Scene synthesize(const SynthConfig& cfg, std::string scene_id = "synth") {
    bool known = false;
    std::string names;
    for (const auto& n : synth_scenarios()) {
        known = known || n == cfg.scenario;
        names += (names.empty() ? "" : ", ") + n;
    }
    if (!known) throw ConfigError("unknown scenario '" + cfg.scenario + "' (available: " + names + ")");
    if (cfg.frames < 2) throw ConfigError("synthetic scenes need at least 2 frames");
    if (cfg.agents < 1) throw ConfigError("synthetic scenes need at least 1 agent");
    if (cfg.frame_step < 1) throw ConfigError("frame step must be >= 1");
    if (!(cfg.speed_min >= 0.0 && cfg.speed_max >= cfg.speed_min)) throw ConfigError("invalid speed range");

    std::seed_seq seq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32), 0x5eedu};
    detail::SynthContext c{cfg, std::mt19937_64(seq), Scene(std::move(scene_id), cfg.dt, cfg.frame_step)};

    if (cfg.scenario == "crossing") {
        const std::size_t pairs = (cfg.agents + 1) / 2;
        for (std::size_t k = 0; k < pairs; ++k) {
            detail::walk_crossing_pair(c, static_cast<PedId>(2 * k + 1), static_cast<PedId>(2 * k + 2), k);
        }
        return std::move(c.scene);
    }
    for (std::size_t i = 0; i < cfg.agents; ++i) {
        const auto ped = static_cast<PedId>(i + 1);
        if (cfg.scenario == "linear") detail::walk_linear(c, ped);
        else if (cfg.scenario == "turning") detail::walk_turning(c, ped);
        else if (cfg.scenario == "mixed") (i % 2 == 0) ? detail::walk_linear(c, ped) : detail::walk_turning(c, ped);
        else detail::walk_multimodal(c, ped, i);
    }
    return std::move(c.scene);
}

}  // namespace sit

#pragma once

// Neighbor selection within the attention radius and the fixed-shape edge
// sequence obtained by summing neighbor states.

#include <algorithm>
#include <span>
#include <vector>

#include "sit/data.hpp"

namespace sit {

inline constexpr double kDefaultAttentionRadius = 10.0;

// Directed edges j -> i for every pedestrian i at one frame.
struct SocialGraph {
    FrameId frame = 0;
    std::vector<PedId> nodes;
    std::vector<std::pair<PedId, PedId>> edges;  // (from j, to i)
};

using EdgeSequence = std::vector<StateVector>;

// Pedestrians other than `ped` within `radius` (inclusive) at `frame`, ascending ids.
inline std::vector<PedId> find_neighbors(const Scene& scene, PedId ped, FrameId frame, double radius) {
    if (!(radius > 0.0)) throw ContractError("attention radius must be > 0");
    const auto& present = scene.at_frame(frame);
    const auto self = present.find(ped);
    if (self == present.end()) {
        throw ContractError("pedestrian " + std::to_string(ped) + " is not present at frame " + std::to_string(frame));
    }
    std::vector<PedId> out;
    for (const auto& [other, pos] : present) {
        if (other != ped && distance(self->second, pos) <= radius) out.push_back(other);
    }
    return out;
}

inline SocialGraph build_social_graph(const Scene& scene, FrameId frame, double radius) {
    SocialGraph g;
    g.frame = frame;
    for (const auto& [ped, _] : scene.at_frame(frame)) {
        g.nodes.push_back(ped);
        for (PedId j : find_neighbors(scene, ped, frame, radius)) g.edges.emplace_back(j, ped);
    }
    return g;
}

// States of one pedestrian over `frames`, in world units. Absent frames stay
// zero and are flagged false. Kinematics are taken per run of consecutive
// present frames; an isolated single frame gets zero velocity/acceleration.
inline std::vector<StateVector> track_states(const Scene& scene, PedId ped, std::span<const FrameId> frames,
                                             std::vector<bool>& present) {
    const std::size_t n = frames.size();
    std::vector<StateVector> out(n);
    present.assign(n, false);
    std::vector<Vec2> pos(n);
    for (std::size_t t = 0; t < n; ++t) {
        if (auto p = scene.position(ped, frames[t])) {
            present[t] = true;
            pos[t] = *p;
        }
    }
    std::size_t t = 0;
    while (t < n) {
        if (!present[t]) {
            ++t;
            continue;
        }
        std::size_t end = t;
        while (end < n && present[end]) ++end;
        if (end - t >= 2) {
            const auto run = derive_kinematics(std::span<const Vec2>(pos).subspan(t, end - t), scene.dt());
            std::copy(run.begin(), run.end(), out.begin() + static_cast<std::ptrdiff_t>(t));
        } else {
            out[t].pos = pos[t];
        }
        t = end;
    }
    return out;
}

// Sum of neighbor state sequences over the sample's observed frames. Neighbors
// are chosen at the last observed frame; each is normalized with the target's
// anchor and scale (`radius`). Absent neighbor frames contribute zero.
inline EdgeSequence build_edge_sequence(const Scene& scene, const TrajectorySample& sample, double radius) {
    const std::size_t obs_len = sample.obs_len();
    EdgeSequence edge(obs_len);
    const FrameId step = scene.frame_step();
    std::vector<FrameId> frames(obs_len);
    for (std::size_t t = 0; t < obs_len; ++t) {
        frames[t] = sample.t_last - static_cast<FrameId>(obs_len - 1 - t) * step;
    }
    const NormalizationSpec spec{sample.anchor, radius};
    std::vector<bool> present;
    for (PedId j : find_neighbors(scene, sample.ped_id, sample.t_last, radius)) {
        const auto states = track_states(scene, j, frames, present);
        for (std::size_t t = 0; t < obs_len; ++t) {
            if (!present[t]) continue;
            const auto s = normalize_state(states[t], spec);
            edge[t].pos += s.pos;
            edge[t].vel += s.vel;
            edge[t].acc += s.acc;
        }
    }
    return edge;
}

inline EdgeSequence rotate_edge(EdgeSequence edge, double angle_degrees) {
    const double rad = degrees_to_radians(angle_degrees);
    for (auto& s : edge) s = rotate_state(s, rad);
    return edge;
}

}  // namespace sit

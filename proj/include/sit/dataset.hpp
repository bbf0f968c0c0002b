#pragma once

// Model-ready examples (normalized sample + edge sequence) and batching.

#include <span>
#include <string>
#include <vector>

#include "sit/social.hpp"
#include "sit/tensor.hpp"

namespace sit {

struct Example {
    TrajectorySample sample;  // normalized
    EdgeSequence edge;        // same frame as sample
};

struct DatasetProfile {
    double dt = 0.4;
    std::size_t obs_len = 8;
    std::size_t pred_len = 12;
    double attention_radius = kDefaultAttentionRadius;
};

// Windows, edges and normalization (anchor = last observed position,
// scale = attention radius) for every sample of a scene.
inline std::vector<Example> prepare_examples(const Scene& scene, std::size_t obs_len, std::size_t pred_len,
                                             double radius) {
    std::vector<Example> out;
    for (auto& raw : extract_windows(scene, obs_len, pred_len)) {
        EdgeSequence edge = build_edge_sequence(scene, raw, radius);
        const NormalizationSpec spec{raw.anchor, radius};
        out.push_back({normalize_sample(std::move(raw), spec), std::move(edge)});
    }
    return out;
}

inline std::vector<Example> prepare_examples(const Scene& scene, const DatasetProfile& profile) {
    return prepare_examples(scene, profile.obs_len, profile.pred_len, profile.attention_radius);
}

inline Example rotate_example(const Example& ex, double angle_degrees) {
    return {rotate_augment(ex.sample, angle_degrees), rotate_edge(ex.edge, angle_degrees)};
}

// Each example followed by its rotated copies (one per angle, 0 included).
inline std::vector<Example> augment_rotations(std::span<const Example> examples,
                                              const std::vector<double>& angles = augmentation_angles()) {
    std::vector<Example> out;
    out.reserve(examples.size() * angles.size());
    for (const auto& ex : examples)
        for (double a : angles) out.push_back(a == 0.0 ? ex : rotate_example(ex, a));
    return out;
}

struct Batch {
    Tensor obs;       // [B, H, 6]
    Tensor edge;      // [B, H, 6]
    Tensor future;    // [B, P, 2]
    Tensor last_pos;  // [B, 2]
    std::size_t size() const { return obs.dim(0); }
};

namespace detail {

inline void push_state(std::vector<double>& v, const StateVector& s) {
    v.insert(v.end(), {s.pos.x, s.pos.y, s.vel.x, s.vel.y, s.acc.x, s.acc.y});
}

}  // namespace detail

inline Batch make_batch(std::span<const Example* const> examples) {
    if (examples.empty()) throw ContractError("make_batch on empty selection");
    const std::size_t obs_len = examples.front()->sample.obs_len();
    const std::size_t pred_len = examples.front()->sample.pred_len();
    std::vector<double> obs;
    std::vector<double> edge;
    std::vector<double> future;
    std::vector<double> last;
    for (const Example* ex : examples) {
        if (ex->sample.obs_len() != obs_len || ex->edge.size() != obs_len || ex->sample.pred_len() != pred_len) {
            throw DimensionError("examples in one batch must share observation and prediction lengths");
        }
        for (const auto& s : ex->sample.obs) detail::push_state(obs, s);
        for (const auto& s : ex->edge) detail::push_state(edge, s);
        for (const auto& p : ex->sample.future) future.insert(future.end(), {p.x, p.y});
        const Vec2 lp = ex->sample.obs.back().pos;
        last.insert(last.end(), {lp.x, lp.y});
    }
    const std::size_t b = examples.size();
    return {Tensor({b, obs_len, kStateDim}, std::move(obs)), Tensor({b, obs_len, kStateDim}, std::move(edge)),
            Tensor({b, pred_len, 2}, std::move(future)), Tensor({b, 2}, std::move(last))};
}

inline Batch make_batch(std::span<const Example> examples) {
    std::vector<const Example*> ptrs;
    ptrs.reserve(examples.size());
    for (const auto& e : examples) ptrs.push_back(&e);
    return make_batch(std::span<const Example* const>(ptrs));
}

// [B, P, 2] tensor rows as points.
inline std::vector<std::vector<Vec2>> to_points(const Tensor& t) {
    if (t.rank() != 3 || t.dim(2) != 2) throw DimensionError("expected [B, P, 2], got " + shape_str(t.shape()));
    std::vector<std::vector<Vec2>> out(t.dim(0));
    const auto d = t.data();
    for (std::size_t b = 0; b < t.dim(0); ++b)
        for (std::size_t p = 0; p < t.dim(1); ++p) {
            const std::size_t i = (b * t.dim(1) + p) * 2;
            out[b].push_back({d[i], d[i + 1]});
        }
    return out;
}

}  // namespace sit

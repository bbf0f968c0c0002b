#pragma once

// Parameter storage and the transformer building blocks: linear maps,
// layer norm, feed-forward, multi-head attention, encoder/decoder layers.

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "sit/ops.hpp"

namespace sit {

// Named, ordered collection of learnable tensors.
class ParamStore {
public:
    Tensor create(const std::string& name, Shape shape, std::vector<double> values) {
        if (index_.count(name)) throw ContractError("duplicate parameter name " + name);
        Tensor t(std::move(shape), std::move(values), /*requires_grad=*/true);
        index_.emplace(name, entries_.size());
        entries_.emplace_back(name, t);
        return t;
    }

    // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)].
    Tensor create_uniform(const std::string& name, Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        std::vector<double> values(shape_numel(shape));
        for (auto& v : values) v = dist(rng);
        return create(name, std::move(shape), std::move(values));
    }

    Tensor create_constant(const std::string& name, Shape shape, double value) {
        const auto n = shape_numel(shape);
        return create(name, std::move(shape), std::vector<double>(n, value));
    }

    const Tensor& get(const std::string& name) const {
        const auto it = index_.find(name);
        if (it == index_.end()) throw ContractError("unknown parameter " + name);
        return entries_[it->second].second;
    }
    Tensor& get(const std::string& name) {
        return const_cast<Tensor&>(static_cast<const ParamStore&>(*this).get(name));
    }
    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
    std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
    std::size_t size() const { return entries_.size(); }

    std::size_t numel() const {
        std::size_t n = 0;
        for (const auto& [_, t] : entries_) n += t.numel();
        return n;
    }

    void zero_grad() {
        for (auto& [_, t] : entries_) t.zero_grad();
    }

private:
    std::vector<std::pair<std::string, Tensor>> entries_;
    std::map<std::string, std::size_t> index_;
};

struct Linear {
    Tensor weight;  // [in, out]
    Tensor bias;    // [out]

    static Linear make(ParamStore& store, const std::string& name, std::size_t in, std::size_t out,
                       std::mt19937_64& rng) {
        return {store.create_uniform(name + ".weight", {in, out}, in, rng),
                store.create_uniform(name + ".bias", {out}, in, rng)};
    }

    Tensor operator()(const Tensor& x) const { return add(matmul(x, weight), bias); }
};

struct LayerNorm {
    Tensor gain;
    Tensor bias;

    static LayerNorm make(ParamStore& store, const std::string& name, std::size_t width) {
        return {store.create_constant(name + ".gain", {width}, 1.0),
                store.create_constant(name + ".bias", {width}, 0.0)};
    }

    Tensor operator()(const Tensor& x) const { return layer_norm(x, gain, bias); }
};

struct FeedForward {
    Linear hidden;
    Linear out;

    static FeedForward make(ParamStore& store, const std::string& name, std::size_t width, std::size_t ff_width,
                            std::mt19937_64& rng) {
        return {Linear::make(store, name + ".hidden", width, ff_width, rng),
                Linear::make(store, name + ".out", ff_width, width, rng)};
    }

    Tensor operator()(const Tensor& x) const { return out(relu(hidden(x))); }
};

// Scaled dot-product attention over [batch, steps, width] inputs, split
// into `heads` column blocks, concatenated and projected back to `width`.
struct MultiHeadAttention {
    Linear query;
    Linear key;
    Linear value;
    Linear output;
    std::size_t heads = 1;

    static MultiHeadAttention make(ParamStore& store, const std::string& name, std::size_t width,
                                   std::size_t heads, std::mt19937_64& rng) {
        if (heads == 0 || width % heads != 0) {
            throw DimensionError("attention width " + std::to_string(width) + " not divisible by " +
                                 std::to_string(heads) + " heads");
        }
        return {Linear::make(store, name + ".query", width, width, rng),
                Linear::make(store, name + ".key", width, width, rng),
                Linear::make(store, name + ".value", width, width, rng),
                Linear::make(store, name + ".output", width, width, rng), heads};
    }

    // `weights`, when given, receives one [batch, q_steps, kv_steps] tensor per head.
    Tensor operator()(const Tensor& queries, const Tensor& keys_values, bool causal,
                      std::vector<Tensor>* weights = nullptr) const {
        const std::size_t width = query.weight.dim(1);
        if (queries.rank() != 3 || keys_values.rank() != 3 || queries.dim(2) != width ||
            keys_values.dim(2) != width || queries.dim(0) != keys_values.dim(0)) {
            throw DimensionError("attention inputs " + shape_str(queries.shape()) + " and " +
                                 shape_str(keys_values.shape()) + " do not match width " + std::to_string(width));
        }
        const std::size_t head_width = width / heads;
        const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_width));
        const Tensor q = query(queries);
        const Tensor k = key(keys_values);
        const Tensor v = value(keys_values);
        std::vector<Tensor> per_head;
        per_head.reserve(heads);
        if (weights) weights->clear();
        for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t b = h * head_width;
            const std::size_t e = b + head_width;
            Tensor scores = scale(matmul(slice(q, 2, b, e), transpose(slice(k, 2, b, e))), inv_sqrt);
            if (causal) scores = causal_mask(scores);
            const Tensor attn = softmax(scores, 2);
            if (weights) weights->push_back(attn);
            per_head.push_back(matmul(attn, slice(v, 2, b, e)));
        }
        return output(heads == 1 ? per_head.front() : concat(per_head, 2));
    }
};

// Post-norm self-attention + feed-forward block.
struct EncoderLayer {
    MultiHeadAttention attention;
    FeedForward ff;
    LayerNorm norm1;
    LayerNorm norm2;

    static EncoderLayer make(ParamStore& store, const std::string& name, std::size_t width, std::size_t heads,
                             std::size_t ff_width, std::mt19937_64& rng) {
        return {MultiHeadAttention::make(store, name + ".attn", width, heads, rng),
                FeedForward::make(store, name + ".ff", width, ff_width, rng), LayerNorm::make(store, name + ".norm1", width),
                LayerNorm::make(store, name + ".norm2", width)};
    }

    Tensor operator()(const Tensor& x) const {
        const Tensor h = norm1(add(x, attention(x, x, false)));
        return norm2(add(h, ff(h)));
    }
};

// Self-attention (optionally causal), cross-attention into a memory, feed-forward.
struct DecoderLayer {
    MultiHeadAttention self_attention;
    MultiHeadAttention cross_attention;
    FeedForward ff;
    LayerNorm norm1;
    LayerNorm norm2;
    LayerNorm norm3;

    static DecoderLayer make(ParamStore& store, const std::string& name, std::size_t width, std::size_t heads,
                             std::size_t ff_width, std::mt19937_64& rng) {
        return {MultiHeadAttention::make(store, name + ".self_attn", width, heads, rng),
                MultiHeadAttention::make(store, name + ".cross_attn", width, heads, rng),
                FeedForward::make(store, name + ".ff", width, ff_width, rng),
                LayerNorm::make(store, name + ".norm1", width), LayerNorm::make(store, name + ".norm2", width),
                LayerNorm::make(store, name + ".norm3", width)};
    }

    Tensor operator()(const Tensor& x, const Tensor& memory, bool causal) const {
        const Tensor h1 = norm1(add(x, self_attention(x, x, causal)));
        const Tensor h2 = norm2(add(h1, cross_attention(h1, memory, false)));
        return norm3(add(h2, ff(h2)));
    }
};

}  // namespace sit

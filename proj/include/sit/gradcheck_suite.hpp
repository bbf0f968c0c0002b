#pragma once

// Finite-difference checks over every differentiable op, the network
// layers and the full model loss (desk configuration).

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "sit/gradcheck.hpp"
#include "sit/model.hpp"

namespace sit {

struct GradCheckCase {
    std::string name;
    GradCheckResult result;
};

struct GradCheckSuiteOptions {
    std::uint64_t seed = 1;
    // Parameter coordinates probed for the full model; 0 checks all of them.
    std::size_t model_coords = 0;
};

namespace detail {

inline Tensor suite_tensor(Shape shape, std::mt19937_64& rng, double sd = 1.0, bool requires_grad = true) {
    std::normal_distribution<double> dist(0.0, sd);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v), requires_grad);
}

// Weighted sum so every output coordinate gets a distinct adjoint.
inline Tensor probe(const Tensor& y, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sum(mul(y, suite_tensor(y.shape(), rng, 1.0, false)));
}

}  // namespace detail

inline std::vector<GradCheckCase> run_gradcheck_suite(const GradCheckSuiteOptions& opt = {}) {
    using detail::probe;
    using detail::suite_tensor;
    std::mt19937_64 rng(opt.seed);
    Tensor a = suite_tensor({2, 3, 4}, rng);
    Tensor b = suite_tensor({2, 3, 4}, rng);
    Tensor row = suite_tensor({4}, rng);
    Tensor w = suite_tensor({4, 5}, rng);
    Tensor bw = suite_tensor({2, 4, 3}, rng);
    Tensor pos = suite_tensor({2, 3, 4}, rng);
    for (auto& v : pos.mutable_data()) v = 0.5 + std::abs(v);
    // relu / clamp inputs kept away from their kinks.
    Tensor kinky = suite_tensor({2, 3, 4}, rng);
    for (auto& v : kinky.mutable_data()) v += v > 0 ? 0.1 : -0.1;
    Tensor gain = suite_tensor({4}, rng);
    Tensor bias = suite_tensor({4}, rng);
    const std::vector<Tensor> inputs{a, b, row, w, bw, pos, kinky, gain, bias};

    const std::vector<std::pair<std::string, std::function<Tensor()>>> ops = {
        {"add", [&] { return add(a, b); }},
        {"add_broadcast", [&] { return add(a, row); }},
        {"sub", [&] { return sub(a, b); }},
        {"mul", [&] { return mul(a, b); }},
        {"mul_broadcast", [&] { return mul(row, a); }},
        {"div", [&] { return div(a, pos); }},
        {"scale", [&] { return scale(a, -1.7); }},
        {"add_scalar", [&] { return add_scalar(a, 0.3); }},
        {"exp", [&] { return exp(a); }},
        {"log", [&] { return log(pos); }},
        {"sqrt", [&] { return sqrt(pos); }},
        {"square", [&] { return square(a); }},
        {"relu", [&] { return relu(kinky); }},
        {"clamp_min", [&] { return clamp_min(kinky, 0.0); }},
        {"sum", [&] { return sum(a); }},
        {"mean", [&] { return mean(a); }},
        {"sum_axis", [&] { return sum(a, 1); }},
        {"mean_pool", [&] { return mean_pool(a, 2); }},
        {"concat", [&] { return concat({a, b}, 1); }},
        {"slice", [&] { return slice(a, 2, 1, 3); }},
        {"reshape", [&] { return reshape(a, {6, 4}); }},
        {"transpose", [&] { return transpose(a); }},
        {"matmul_shared", [&] { return matmul(a, w); }},
        {"matmul_batched", [&] { return matmul(a, bw); }},
        {"softmax_last", [&] { return softmax(a, 2); }},
        {"softmax_mid", [&] { return softmax(a, 1); }},
        {"causal_softmax", [&] { return softmax(causal_mask(matmul(a, transpose(b))), 2); }},
        {"layer_norm", [&] { return layer_norm(a, gain, bias); }},
    };

    std::vector<GradCheckCase> out;
    std::uint64_t seed = opt.seed * 1000;
    for (const auto& [name, fn] : ops) {
        const std::uint64_t s = ++seed;
        out.push_back({name, check_gradients([&] { return probe(fn(), s); }, inputs)});
    }

    {
        ParamStore store;
        const auto mha = MultiHeadAttention::make(store, "mha", 4, 2, rng);
        const auto ff = FeedForward::make(store, "ff", 4, 8, rng);
        const auto enc = EncoderLayer::make(store, "enc", 4, 2, 8, rng);
        const auto dec = DecoderLayer::make(store, "dec", 4, 2, 8, rng);
        Tensor x = suite_tensor({2, 3, 4}, rng);
        Tensor mem = suite_tensor({2, 5, 4}, rng);
        std::vector<Tensor> layer_inputs{x, mem};
        for (auto& [_, t] : store.entries()) layer_inputs.push_back(t);
        const std::vector<std::pair<std::string, std::function<Tensor()>>> layers = {
            {"attention", [&] { return mha(x, mem, false); }},
            {"attention_causal", [&] { return mha(x, x, true); }},
            {"feed_forward", [&] { return ff(x); }},
            {"encoder_layer", [&] { return enc(x); }},
            {"decoder_layer", [&] { return dec(x, mem, true); }},
        };
        for (const auto& [name, fn] : layers) {
            const std::uint64_t s = ++seed;
            out.push_back({name, check_gradients([&] { return probe(fn(), s); }, layer_inputs)});
        }
    }

    {
        const ModelConfig c = ModelConfig::desk();
        SitModel model(c, opt.seed);
        std::mt19937_64 data_rng(opt.seed + 7);
        const Batch batch{suite_tensor({2, c.obs_len, kStateDim}, data_rng, 0.3, false),
                          suite_tensor({2, c.obs_len, kStateDim}, data_rng, 0.3, false),
                          suite_tensor({2, c.pred_len, 2}, data_rng, 0.3, false),
                          suite_tensor({2, 2}, data_rng, 0.1, false)};
        const Tensor eps = suite_tensor({2, c.latent_dim}, data_rng, 1.0, false);
        std::vector<Tensor> params;
        for (auto& [_, t] : model.params().entries()) params.push_back(t);
        GradCheckOptions go;
        go.max_coords = opt.model_coords;
        go.seed = opt.seed;
        out.push_back({"sit_model_loss", check_gradients([&] { return model.forward_train(batch, eps).loss; }, params, go)});
    }
    return out;
}

}  // namespace sit

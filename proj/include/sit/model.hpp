#pragma once

// The spatial interaction transformer: trajectory and edge encoders that
// build the memory C, Gaussian prior/posterior heads, and an autoregressive
// future decoder conditioned on a latent sample.

#include <cmath>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "sit/dataset.hpp"
#include "sit/nn.hpp"

namespace sit {

enum class LatentSource { posterior, prior };
enum class LossKind { squared, norm };
enum class InferMode { deterministic, stochastic };

struct ModelConfig {
    std::size_t d_model = 256;
    std::size_t heads = 8;
    std::size_t enc_layers = 3;
    std::size_t dec_layers = 3;
    std::size_t latent_dim = 32;
    std::size_t obs_len = 8;
    std::size_t pred_len = 12;
    std::size_t ff_width = 1024;
    bool use_edge = true;
    bool use_latent = true;
    bool teacher_forcing = false;
    LatentSource train_latent = LatentSource::posterior;
    LossKind loss = LossKind::squared;

    void validate() const {
        const auto positive = [](std::size_t v, const char* name) {
            if (v == 0) throw ConfigError(std::string("model.") + name + " must be positive");
        };
        positive(d_model, "d_model");
        positive(heads, "heads");
        positive(enc_layers, "enc_layers");
        positive(dec_layers, "dec_layers");
        positive(latent_dim, "latent_dim");
        positive(pred_len, "pred_len");
        positive(ff_width, "ff_width");
        if (obs_len < 2) throw ConfigError("model.obs_len must be >= 2");
        if (d_model % heads != 0) throw ConfigError("model.d_model must be divisible by model.heads");
        if (d_model % 2 != 0) throw ConfigError("model.d_model must be even");
    }

    // Widths used for desk-scale checks and acceptance runs.
    static ModelConfig desk() {
        ModelConfig c;
        c.d_model = 16;
        c.heads = 2;
        c.enc_layers = 1;
        c.dec_layers = 1;
        c.latent_dim = 4;
        c.obs_len = 4;
        c.pred_len = 3;
        c.ff_width = 32;
        return c;
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline constexpr double kSigmaFloor = 1e-6;

// Component d is sin(t / 10000^(d/D)) for even d and cos(...) for odd d.
inline std::vector<double> positional_encoding(std::size_t t, std::size_t width) {
    if (width % 2 != 0) throw ContractError("positional encoding width must be even");
    std::vector<double> out(width);
    for (std::size_t d = 0; d < width; ++d) {
        const double angle = static_cast<double>(t) /
                             std::pow(10000.0, static_cast<double>(d) / static_cast<double>(width));
        out[d] = d % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
    return out;
}

// Rows for timesteps first, first+1, ..., first+steps-1; shape [steps, width].
inline Tensor positional_table(std::size_t first, std::size_t steps, std::size_t width) {
    std::vector<double> v;
    v.reserve(steps * width);
    for (std::size_t t = first; t < first + steps; ++t) {
        const auto row = positional_encoding(t, width);
        v.insert(v.end(), row.begin(), row.end());
    }
    return Tensor({steps, width}, std::move(v));
}

struct Memory {
    Tensor C;        // [B, H, D]
    Tensor pooled;   // [B, D], mean of C over timesteps
};

struct LatentGaussian {
    Tensor mu;     // [B, Z]
    Tensor sigma;  // [B, Z], > 0
};

// mu + sigma * eps.
inline Tensor sample_latent(const LatentGaussian& g, const Tensor& eps) {
    if (eps.shape() != g.mu.shape()) {
        throw DimensionError("latent noise " + shape_str(eps.shape()) + " does not match " + shape_str(g.mu.shape()));
    }
    return add(g.mu, mul(g.sigma, eps));
}

// Closed-form KL(q || p) for diagonal Gaussians, summed over the last axis.
inline Tensor kl_divergence(const LatentGaussian& q, const LatentGaussian& p) {
    if (q.mu.shape() != p.mu.shape()) {
        throw DimensionError("KL operands " + shape_str(q.mu.shape()) + " and " + shape_str(p.mu.shape()));
    }
    const Tensor var_q = square(q.sigma);
    const Tensor var_p = square(p.sigma);
    const Tensor diff = sub(q.mu, p.mu);
    const Tensor ratio = div(add(var_q, square(diff)), scale(var_p, 2.0));
    const Tensor per_dim = add_scalar(add(sub(log(p.sigma), log(q.sigma)), ratio), -0.5);
    return sum(per_dim, per_dim.rank() - 1);
}

// Mean over batch and steps of the squared Euclidean error (or of the
// Euclidean error itself for LossKind::norm).
inline Tensor trajectory_error(const Tensor& truth, const Tensor& pred, LossKind kind = LossKind::squared) {
    if (truth.shape() != pred.shape()) {
        throw ContractError("prediction " + shape_str(pred.shape()) + " and label " + shape_str(truth.shape()) +
                            " differ in shape");
    }
    const Tensor sq = sum(square(sub(pred, truth)), truth.rank() - 1);
    return mean(kind == LossKind::squared ? sq : sqrt(add_scalar(sq, 1e-12)));
}

inline Tensor total_loss(const Tensor& truth, const Tensor& pred, const Tensor& kl, LossKind kind = LossKind::squared) {
    return add(trajectory_error(truth, pred, kind), kl);
}

struct TrainForward {
    Tensor pred;  // [B, P, 2]
    Tensor loss;  // scalar
    Tensor mse;   // scalar
    Tensor kl;    // scalar, batch mean
    std::optional<LatentGaussian> prior;
    std::optional<LatentGaussian> posterior;
};

class SitModel {
public:
    SitModel(ModelConfig config, std::uint64_t seed) : config_(config) {
        config_.validate();
        std::mt19937_64 rng(seed);
        const std::size_t d = config_.d_model;
        const std::size_t half = d / 2;
        const std::size_t z = config_.latent_dim;
        const auto enc = [&](const std::string& prefix) {
            Encoder e;
            e.embed = Linear::make(params_, prefix + ".embed", kStateDim, d, rng);
            for (std::size_t l = 0; l < config_.enc_layers; ++l)
                e.layers.push_back(EncoderLayer::make(params_, prefix + ".layer" + std::to_string(l), d,
                                                      config_.heads, config_.ff_width, rng));
            e.project = Linear::make(params_, prefix + ".project", d, half, rng);
            return e;
        };
        trajectory_ = enc("traj_enc");
        edge_ = enc("edge_enc");
        prior_hidden_ = Linear::make(params_, "prior.hidden", d, config_.ff_width, rng);
        prior_out_ = Linear::make(params_, "prior.out", config_.ff_width, 2 * z, rng);
        future_embed_ = Linear::make(params_, "future_enc.embed", 2, d, rng);
        for (std::size_t l = 0; l < config_.enc_layers; ++l)
            future_layers_.push_back(DecoderLayer::make(params_, "future_enc.layer" + std::to_string(l), d,
                                                        config_.heads, config_.ff_width, rng));
        posterior_hidden_ = Linear::make(params_, "posterior.hidden", d, config_.ff_width, rng);
        posterior_out_ = Linear::make(params_, "posterior.out", config_.ff_width, 2 * z, rng);
        decoder_embed_ = Linear::make(params_, "decoder.embed", 2 + z, d, rng);
        for (std::size_t l = 0; l < config_.dec_layers; ++l)
            decoder_layers_.push_back(DecoderLayer::make(params_, "decoder.layer" + std::to_string(l), d,
                                                         config_.heads, config_.ff_width, rng));
        decoder_out_ = Linear::make(params_, "decoder.out", d, 2, rng);
        obs_pe_ = positional_table(0, config_.obs_len, d);
        future_pe_ = positional_table(config_.obs_len, config_.pred_len, d);
    }

    // Layers hold handles into params_, so a copy would alias the weights.
    SitModel(const SitModel&) = delete;
    SitModel& operator=(const SitModel&) = delete;
    SitModel(SitModel&&) = default;
    SitModel& operator=(SitModel&&) = default;

    const ModelConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }

    Memory encode(const Tensor& obs, const Tensor& edge) const {
        check_sequence(obs, "observed sequence");
        check_sequence(edge, "edge sequence");
        if (obs.dim(0) != edge.dim(0)) throw ContractError("observed and edge batches differ in size");
        const Tensor edge_in = config_.use_edge ? edge : Tensor::zeros(edge.shape());
        const Tensor traj_feat = run_encoder(trajectory_, obs);
        const Tensor edge_feat = run_encoder(edge_, edge_in);
        Tensor C = concat({traj_feat, edge_feat}, 2);
        Tensor pooled = mean_pool(C, 1);
        return {std::move(C), std::move(pooled)};
    }

    LatentGaussian prior_head(const Tensor& pooled) const {
        return gaussian_from(prior_out_(relu(prior_hidden_(pooled))));
    }

    LatentGaussian posterior_encode(const Tensor& future, const Memory& memory) const {
        if (future.rank() != 3 || future.dim(1) != config_.pred_len || future.dim(2) != 2) {
            throw ContractError("future sequence must be [B, " + std::to_string(config_.pred_len) + ", 2], got " +
                                shape_str(future.shape()));
        }
        Tensor h = add(future_embed_(future), future_pe_);
        for (const auto& layer : future_layers_) h = layer(h, memory.C, false);
        return gaussian_from(posterior_out_(relu(posterior_hidden_(mean_pool(h, 1)))));
    }

    // Emits pred_len positions. Each step feeds [previous position, Z] for all
    // steps so far through causal self-attention and cross-attention into C;
    // the head outputs the displacement to the next position. With
    // `teacher_targets` the ground-truth positions replace the fed-back ones.
    Tensor decode_future(const Memory& memory, const Tensor& latent, const Tensor& last_pos,
                         const Tensor* teacher_targets = nullptr) const {
        const std::size_t batch = memory.C.dim(0);
        const std::size_t z = config_.latent_dim;
        const std::size_t steps = config_.pred_len;
        if (latent.shape() != Shape{batch, z}) {
            throw DimensionError("latent " + shape_str(latent.shape()) + " expected [" + std::to_string(batch) + "x" +
                                 std::to_string(z) + "]");
        }
        if (last_pos.shape() != Shape{batch, 2}) throw DimensionError("last position must be [B, 2]");
        const Tensor z_row = reshape(latent, {batch, 1, z});
        const auto step_input = [&](const Tensor& pos) { return concat({reshape(pos, {batch, 1, 2}), z_row}, 2); };

        if (teacher_targets) {
            std::vector<Tensor> inputs{step_input(last_pos)};
            std::vector<Tensor> prev{reshape(last_pos, {batch, 1, 2})};
            for (std::size_t k = 0; k + 1 < steps; ++k) {
                const Tensor y = reshape(slice(*teacher_targets, 1, k, k + 1), {batch, 2});
                inputs.push_back(step_input(y));
                prev.push_back(reshape(y, {batch, 1, 2}));
            }
            const Tensor seq = steps == 1 ? inputs.front() : concat(inputs, 1);
            const Tensor base = steps == 1 ? prev.front() : concat(prev, 1);
            return add(base, decoder_out_(run_decoder(seq, memory, steps)));
        }

        std::vector<Tensor> inputs;
        std::vector<Tensor> outputs;
        Tensor current = last_pos;
        for (std::size_t k = 0; k < steps; ++k) {
            inputs.push_back(step_input(current));
            const Tensor seq = inputs.size() == 1 ? inputs.front() : concat(inputs, 1);
            const Tensor h = run_decoder(seq, memory, k + 1);
            const Tensor last = reshape(slice(h, 1, k, k + 1), {batch, config_.d_model});
            current = add(current, decoder_out_(last));
            outputs.push_back(reshape(current, {batch, 1, 2}));
        }
        return outputs.size() == 1 ? outputs.front() : concat(outputs, 1);
    }

    // Training path: Z from the posterior (or the prior when configured),
    // loss = trajectory error + KL(q || p). `eps` is [B, Z] standard normal.
    TrainForward forward_train(const Batch& batch, const Tensor& eps) const {
        const Memory memory = encode(batch.obs, batch.edge);
        TrainForward out;
        Tensor latent;
        Tensor kl;
        if (config_.use_latent) {
            LatentGaussian prior = prior_head(memory.pooled);
            LatentGaussian posterior = posterior_encode(batch.future, memory);
            latent = sample_latent(config_.train_latent == LatentSource::posterior ? posterior : prior, eps);
            kl = mean(kl_divergence(posterior, prior));
            out.prior = std::move(prior);
            out.posterior = std::move(posterior);
        } else {
            latent = Tensor::zeros({batch.size(), config_.latent_dim});
            kl = Tensor::scalar(0.0);
        }
        out.pred = decode_future(memory, latent, batch.last_pos, config_.teacher_forcing ? &batch.future : nullptr);
        out.mse = trajectory_error(batch.future, out.pred, config_.loss);
        out.kl = kl;
        out.loss = add(out.mse, kl);
        return out;
    }

    // Test path: Z = mu_p (deterministic) or mu_p + sigma_p * eps (stochastic).
    Tensor forward_infer(const Batch& batch, InferMode mode, const Tensor* eps = nullptr) const {
        const Memory memory = encode(batch.obs, batch.edge);
        Tensor latent;
        if (!config_.use_latent) {
            latent = Tensor::zeros({batch.size(), config_.latent_dim});
        } else {
            const LatentGaussian prior = prior_head(memory.pooled);
            if (mode == InferMode::deterministic) {
                latent = prior.mu;
            } else {
                if (!eps) throw ContractError("stochastic inference needs latent noise");
                latent = sample_latent(prior, *eps);
            }
        }
        return decode_future(memory, latent, batch.last_pos);
    }

private:
    struct Encoder {
        Linear embed;
        std::vector<EncoderLayer> layers;
        Linear project;
    };

    void check_sequence(const Tensor& seq, const char* what) const {
        if (seq.rank() != 3 || seq.dim(1) != config_.obs_len || seq.dim(2) != kStateDim) {
            throw ContractError(std::string(what) + " must be [B, " + std::to_string(config_.obs_len) + ", 6], got " +
                                shape_str(seq.shape()));
        }
    }

    Tensor run_encoder(const Encoder& enc, const Tensor& seq) const {
        Tensor h = add(enc.embed(seq), obs_pe_);
        for (const auto& layer : enc.layers) h = layer(h);
        return enc.project(h);
    }

    Tensor run_decoder(const Tensor& seq, const Memory& memory, std::size_t steps) const {
        Tensor h = add(decoder_embed_(seq), slice(future_pe_, 0, 0, steps));
        for (const auto& layer : decoder_layers_) h = layer(h, memory.C, true);
        return h;
    }

    LatentGaussian gaussian_from(const Tensor& head) const {
        const std::size_t z = config_.latent_dim;
        const Tensor log_var = slice(head, 1, z, 2 * z);
        return {slice(head, 1, 0, z), clamp_min(exp(scale(log_var, 0.5)), kSigmaFloor)};
    }

    ModelConfig config_;
    ParamStore params_;
    Encoder trajectory_;
    Encoder edge_;
    Linear prior_hidden_;
    Linear prior_out_;
    Linear future_embed_;
    std::vector<DecoderLayer> future_layers_;
    Linear posterior_hidden_;
    Linear posterior_out_;
    Linear decoder_embed_;
    std::vector<DecoderLayer> decoder_layers_;
    Linear decoder_out_;
    Tensor obs_pe_;
    Tensor future_pe_;
};

}  // namespace sit

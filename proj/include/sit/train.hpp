#pragma once

// Mini-batch Adam training with an exponentially decaying learning rate.

#include <algorithm>
#include <array>
#include <filesystem>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "sit/checkpoint.hpp"
#include "sit/optim.hpp"

namespace sit {

struct TrainConfig {
    std::size_t batch_size = 100;
    std::size_t epochs = 100;
    double lr0 = 1e-3;
    double decay_rate = 0.95;
    std::uint64_t seed = 42;
    bool augment = true;
    // Write a checkpoint every `checkpoint_interval` epochs (0: only the
    // final one) when checkpoint_dir is non-empty.
    std::size_t checkpoint_interval = 0;
    std::filesystem::path checkpoint_dir;

    void validate() const {
        if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
        if (!(lr0 > 0.0)) throw ConfigError("train.lr0 must be > 0");
        if (!(decay_rate > 0.0 && decay_rate <= 1.0)) throw ConfigError("train.decay_rate must be in (0, 1]");
    }
};

struct EpochLog {
    std::size_t epoch = 0;  // 1-based
    double lr = 0.0;
    double total = 0.0;
    double mse = 0.0;
    double kl = 0.0;
};

inline std::string format_loss_log(const std::vector<EpochLog>& log) {
    std::string out = "epoch,lr,total,mse,kl\n";
    for (const auto& e : log) {
        out += std::to_string(e.epoch) + "," + settings::real(e.lr) + "," + settings::real(e.total) + "," +
               settings::real(e.mse) + "," + settings::real(e.kl) + "\n";
    }
    return out;
}

// Independent stream per (seed, purpose, index).
inline std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t purpose, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(purpose), static_cast<std::uint32_t>(index),
                      static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
}

namespace rng_purpose {
inline constexpr std::uint64_t shuffle = 1;
inline constexpr std::uint64_t train_noise = 2;
inline constexpr std::uint64_t eval_noise = 3;
}  // namespace rng_purpose

inline Tensor standard_normal(Shape shape, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v));
}

// Forward/backward/update over one batch; returns (total, mse, kl).
inline std::array<double, 3> train_step(SitModel& model, AdamState& state, const Batch& batch, const Tensor& eps,
                                        double lr) {
    model.params().zero_grad();
    Tape tape;
    TrainForward out;
    {
        TapeScope scope(tape);
        out = model.forward_train(batch, eps);
    }
    backward(tape, out.loss);
    adam_step(model.params(), state, lr);
    return {out.loss.item(), out.mse.item(), out.kl.item()};
}

// Deterministic given config.seed. The final partial batch is kept.
inline std::vector<EpochLog> train(SitModel& model, std::span<const Example> dataset, const TrainConfig& config,
                                   const DatasetProfile& profile = {},
                                   const std::function<void(const EpochLog&)>& on_epoch = {}) {
    config.validate();
    if (dataset.empty()) throw ContractError("train needs a non-empty dataset");
    const std::vector<Example> augmented =
        config.augment ? augment_rotations(dataset) : std::vector<Example>(dataset.begin(), dataset.end());
    std::vector<std::size_t> order(augmented.size());
    AdamState state;
    std::vector<EpochLog> log;
    const std::size_t z = model.config().latent_dim;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = lr_schedule(epoch, config.lr0, config.decay_rate);
        std::iota(order.begin(), order.end(), std::size_t{0});
        auto shuffle_rng = derived_rng(config.seed, rng_purpose::shuffle, epoch);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        auto noise_rng = derived_rng(config.seed, rng_purpose::train_noise, epoch);

        EpochLog entry{epoch + 1, lr, 0.0, 0.0, 0.0};
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            const std::size_t end = std::min(order.size(), start + config.batch_size);
            std::vector<const Example*> picks;
            for (std::size_t i = start; i < end; ++i) picks.push_back(&augmented[order[i]]);
            const Batch batch = make_batch(std::span<const Example* const>(picks));
            const Tensor eps = standard_normal({picks.size(), z}, noise_rng);
            const auto [total, mse, kl] = train_step(model, state, batch, eps, lr);
            const double w = static_cast<double>(picks.size());
            entry.total += w * total;
            entry.mse += w * mse;
            entry.kl += w * kl;
        }
        const double n = static_cast<double>(order.size());
        entry.total /= n;
        entry.mse /= n;
        entry.kl /= n;
        log.push_back(entry);
        if (on_epoch) on_epoch(entry);

        const bool last = epoch + 1 == config.epochs;
        const bool interval_hit = config.checkpoint_interval > 0 && (epoch + 1) % config.checkpoint_interval == 0;
        if (!config.checkpoint_dir.empty() && (last || interval_hit)) {
            std::filesystem::create_directories(config.checkpoint_dir);
            if (interval_hit) {
                save_checkpoint(config.checkpoint_dir / ("checkpoint_epoch" + std::to_string(epoch + 1) + ".txt"),
                                model, profile);
            }
            if (last) save_checkpoint(config.checkpoint_dir / "checkpoint.txt", model, profile);
        }
    }
    return log;
}

}  // namespace sit

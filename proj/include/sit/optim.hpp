#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sit/nn.hpp"

namespace sit {

struct AdamOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamState {
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
    std::size_t step = 0;
};

// One bias-corrected Adam update of every parameter in `params` from its
// accumulated gradient. Throws NumericError, naming the parameter, on a
// non-finite gradient before anything is modified.
inline void adam_step(ParamStore& params, AdamState& state, double lr, const AdamOptions& opt = {}) {
    auto& entries = params.entries();
    for (const auto& [name, t] : entries)
        for (double g : t.grad())
            if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + name);

    if (state.first_moment.empty()) {
        for (const auto& [_, t] : entries) {
            state.first_moment.emplace_back(t.numel(), 0.0);
            state.second_moment.emplace_back(t.numel(), 0.0);
        }
    }
    if (state.first_moment.size() != entries.size()) throw ContractError("Adam state does not match parameter set");

    ++state.step;
    const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < entries.size(); ++k) {
        auto& t = entries[k].second;
        auto w = t.mutable_data();
        const auto g = t.grad();
        auto& m = state.first_moment[k];
        auto& v = state.second_moment[k];
        if (m.size() != w.size()) throw ContractError("Adam moment shape mismatch for " + entries[k].first);
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
            v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
            w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt.eps);
        }
    }
}

// Exponential decay: lr0 * decay_rate^epoch.
inline double lr_schedule(std::size_t epoch, double lr0, double decay_rate) {
    return lr0 * std::pow(decay_rate, static_cast<double>(epoch));
}

}  // namespace sit

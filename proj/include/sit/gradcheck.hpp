#pragma once

// Central finite-difference verification of tape gradients.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "sit/tensor.hpp"

namespace sit {

struct GradCheckOptions {
    double step = 1e-5;
    double rel_tol = 1e-4;
    double abs_tol = 1e-7;
    // Coordinates whose gradient magnitude is below this only count towards
    // max_rel_error when they also miss abs_tol.
    double rel_floor = 1e-6;
    // 0 probes every coordinate; otherwise that many coordinates drawn uniformly.
    std::size_t max_coords = 0;
    std::uint64_t seed = 0;
};

struct GradCheckResult {
    std::size_t checked = 0;
    std::size_t failures = 0;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    std::string worst;  // "input#k[i]: analytic vs numeric"
    bool ok() const { return checked > 0 && failures == 0; }
};

// Relative error with an absolute floor near zero.
inline bool gradients_agree(double analytic, double numeric, double rel_tol, double abs_tol,
                            double* rel_out = nullptr) {
    const double diff = std::abs(analytic - numeric);
    const double denom = std::max(std::abs(analytic), std::abs(numeric));
    const double rel = denom > 0.0 ? diff / denom : 0.0;
    if (rel_out) *rel_out = rel;
    return diff < abs_tol || rel < rel_tol;
}

// `loss_fn` must rebuild the scalar loss from the current values of `inputs`.
// Each input must require a gradient.
inline GradCheckResult check_gradients(const std::function<Tensor()>& loss_fn, std::vector<Tensor> inputs,
                                       const GradCheckOptions& opts = {}) {
    for (auto& in : inputs) {
        if (!in.requires_grad()) throw ContractError("check_gradients input does not require grad");
        in.zero_grad();
    }
    {
        Tape tape;
        Tensor loss;
        {
            TapeScope scope(tape);
            loss = loss_fn();
        }
        tape.backward(loss);
    }

    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t k = 0; k < inputs.size(); ++k)
        for (std::size_t i = 0; i < inputs[k].numel(); ++i) coords.emplace_back(k, i);
    if (opts.max_coords > 0 && opts.max_coords < coords.size()) {
        std::mt19937_64 rng(opts.seed);
        std::shuffle(coords.begin(), coords.end(), rng);
        coords.resize(opts.max_coords);
    }

    GradCheckResult result;
    NoGradScope no_grad;
    for (const auto& [k, i] : coords) {
        auto values = inputs[k].mutable_data();
        const double saved = values[i];
        values[i] = saved + opts.step;
        const double up = loss_fn().item();
        values[i] = saved - opts.step;
        const double down = loss_fn().item();
        values[i] = saved;
        const double numeric = (up - down) / (2.0 * opts.step);
        const double analytic = inputs[k].grad()[i];
        double rel = 0.0;
        const bool agree = gradients_agree(analytic, numeric, opts.rel_tol, opts.abs_tol, &rel);
        const double abs_err = std::abs(analytic - numeric);
        ++result.checked;
        if (!agree) ++result.failures;
        if (!agree && (result.worst.empty() || rel > result.max_rel_error)) {
            result.worst = "input#" + std::to_string(k) + "[" + std::to_string(i) +
                           "]: analytic " + std::to_string(analytic) + " vs numeric " + std::to_string(numeric);
        }
        const bool significant = std::max(std::abs(analytic), std::abs(numeric)) >= opts.rel_floor;
        if (significant || abs_err >= opts.abs_tol) result.max_rel_error = std::max(result.max_rel_error, rel);
        result.max_abs_error = std::max(result.max_abs_error, abs_err);
    }
    return result;
}

}  // namespace sit

#pragma once

#include "acre/error.hpp"

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

namespace acre::optim {

struct Schedule {
    std::int64_t warmup_steps = 0;
    double lr_max = 2e-5;
    double lr_min = 1e-7;
};

/// Linear warmup 0 -> lr_max over `warmup_steps`, then cosine decay to lr_min at
/// `total_steps`.
inline double lr_at(std::int64_t step, std::int64_t total_steps, const Schedule& s) {
    if (step < 0 || step > total_steps) {
        fail(ErrorCode::InvalidArgument, "step " + std::to_string(step) + " outside [0, " +
                                             std::to_string(total_steps) + "]");
    }
    if (step < s.warmup_steps) {
        return s.lr_max * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
    }
    const std::int64_t decay_steps = total_steps - s.warmup_steps;
    if (decay_steps <= 0) {
        return s.lr_max;
    }
    const double t = static_cast<double>(step - s.warmup_steps) / static_cast<double>(decay_steps);
    return s.lr_min + 0.5 * (s.lr_max - s.lr_min) * (1.0 + std::cos(std::numbers::pi * t));
}

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct AdamMoments {
    std::vector<double> m;
    std::vector<double> v;
};

/// One moment slot per parameter tensor plus the shared step counter.
struct AdamState {
    std::uint64_t step = 0;
    std::vector<AdamMoments> slots;
};

/// Bias-corrected Adam over a list of parameter tensors (flat views).
/// Slots are created on the first call.
inline void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
                      AdamState& state, double lr, const AdamConfig& cfg = {}) {
    if (params.size() != grads.size()) {
        fail(ErrorCode::ShapeMismatch, "adam: " + std::to_string(params.size()) + " parameter tensors but " +
                                           std::to_string(grads.size()) + " gradients");
    }
    if (state.slots.empty()) {
        for (const auto& p : params) {
            state.slots.push_back({std::vector<double>(p.size(), 0.0), std::vector<double>(p.size(), 0.0)});
        }
    }
    if (state.slots.size() != params.size()) {
        fail(ErrorCode::ShapeMismatch, "adam: state holds " + std::to_string(state.slots.size()) + " slots for " +
                                           std::to_string(params.size()) + " tensors");
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (params[k].size() != grads[k].size() || state.slots[k].m.size() != params[k].size()) {
            fail(ErrorCode::ShapeMismatch, "adam: tensor " + std::to_string(k) + " shape mismatch");
        }
    }

    ++state.step;
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& m = state.slots[k].m;
        auto& v = state.slots[k].v;
        for (std::size_t i = 0; i < params[k].size(); ++i) {
            const double g = grads[k][i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            params[k][i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
        }
    }
}

}  // namespace acre::optim

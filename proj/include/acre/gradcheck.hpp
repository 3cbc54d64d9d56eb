#pragma once

// Central finite-difference check of the closed-form projection-head gradients.

#include "acre/rng.hpp"
#include "acre/space.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace acre::gradcheck {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Shape {
    int n = 8;      // batch size
    int d_in = 16;  // raw embedding width (both modalities)
    int d_out = 12;
};

inline constexpr std::array<Shape, 3> kDefaultShapes{{{8, 16, 12}, {4, 32, 8}, {64, 24, 16}}};
inline constexpr double kStep = 1e-4;
inline constexpr double kTolerance = 1e-4;

struct Result {
    Shape shape;
    std::uint64_t seed = 0;
    double loss = 0.0;
    double max_rel_error = 0.0;  // over the four parameter tensors
    double grad_norm = 0.0;      // analytic gradient norm, all tensors
};

/// ||a - n|| / max(||a||, ||n||); zero when both vanish.
inline double relative_error(const VectorXd& analytic, const VectorXd& numeric) {
    const double scale = std::max(analytic.norm(), numeric.norm());
    return scale > 0.0 ? (analytic - numeric).norm() / scale : 0.0;
}

namespace detail {

inline VectorXd flatten(const MatrixXd& m) { return Eigen::Map<const VectorXd>(m.data(), m.size()); }

/// Perturbs every entry of `param` in turn and differentiates `loss` numerically.
template <class Loss>
VectorXd numeric_gradient(double* param, Eigen::Index size, Loss&& loss, double h) {
    VectorXd g(size);
    for (Eigen::Index i = 0; i < size; ++i) {
        const double keep = param[i];
        param[i] = keep + h;
        const double up = loss();
        param[i] = keep - h;
        const double down = loss();
        param[i] = keep;
        g(i) = (up - down) / (2.0 * h);
    }
    return g;
}

}  // namespace detail

/// `perturb` corrupts the analytic audio-weight gradient; it exists so callers
/// can confirm the checker actually fails.
inline Result check(const Shape& shape, std::uint64_t seed, double temperature = 1.0, bool perturb = false) {
    auto rng = make_rng(seed, "gradcheck");
    std::normal_distribution<double> normal(0.0, 1.0);
    auto gaussian = [&](int rows, int cols) {
        MatrixXd m(rows, cols);
        for (int r = 0; r < rows; ++r) {
            for (int c = 0; c < cols; ++c) {
                m(r, c) = normal(rng);
            }
        }
        return m;
    };
    const MatrixXd x = gaussian(shape.n, shape.d_in);
    const MatrixXd y = gaussian(shape.n, shape.d_in);
    auto audio = space::ProjectionHead::init(shape.d_in, shape.d_out, rng);
    auto text = space::ProjectionHead::init(shape.d_in, shape.d_out, rng);

    auto grads = space::loss_gradients(x, y, audio, text, temperature);
    if (perturb) {
        grads.audio.weight(0, 0) += 1e-2 * std::max(grads.audio.weight.norm(), 1.0);
    }
    auto loss = [&] { return space::batch_loss(x, y, audio, text, temperature).value; };

    Result r{shape, seed, grads.loss.value, 0.0, 0.0};
    const std::array<std::pair<const VectorXd, VectorXd>, 4> pairs{{
        {detail::flatten(grads.audio.weight),
         detail::numeric_gradient(audio.weight.data(), audio.weight.size(), loss, kStep)},
        {grads.audio.bias, detail::numeric_gradient(audio.bias.data(), audio.bias.size(), loss, kStep)},
        {detail::flatten(grads.text.weight),
         detail::numeric_gradient(text.weight.data(), text.weight.size(), loss, kStep)},
        {grads.text.bias, detail::numeric_gradient(text.bias.data(), text.bias.size(), loss, kStep)},
    }};
    double sq = 0.0;
    for (const auto& [analytic, numeric] : pairs) {
        r.max_rel_error = std::max(r.max_rel_error, relative_error(analytic, numeric));
        sq += analytic.squaredNorm();
    }
    r.grad_norm = std::sqrt(sq);
    return r;
}

/// Seeds `first_seed .. first_seed + seeds - 1` over every shape.
inline std::vector<Result> run(std::span<const Shape> shapes, std::uint64_t first_seed, int seeds,
                               bool perturb = false) {
    std::vector<Result> out;
    for (int s = 0; s < seeds; ++s) {
        for (const auto& shape : shapes) {
            out.push_back(check(shape, first_seed + static_cast<std::uint64_t>(s), 1.0, perturb));
        }
    }
    return out;
}

inline double max_error(std::span<const Result> results) {
    double m = 0.0;
    for (const auto& r : results) {
        m = std::max(m, r.max_rel_error);
    }
    return m;
}

}  // namespace acre::gradcheck

#pragma once

// Shared audio-caption space: linear projection heads, cosine similarity
// matrix and the symmetric NT-Xent objective with closed-form gradients.

#include "acre/error.hpp"
#include "acre/rng.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>

namespace acre::space {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr int kSharedDim = 1024;

/// y = W x + b with W of shape (d_out, d_in). No activation.
struct ProjectionHead {
    MatrixXd weight;
    VectorXd bias;

    int in_dim() const noexcept { return static_cast<int>(weight.cols()); }
    int out_dim() const noexcept { return static_cast<int>(weight.rows()); }

    /// Uniform(-1/sqrt(d_in), 1/sqrt(d_in)) for weights and bias.
    static ProjectionHead init(int d_in, int d_out, Rng& rng) {
        if (d_in < 1 || d_out < 1) {
            fail(ErrorCode::InvalidArgument, "projection dims must be positive");
        }
        const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        ProjectionHead h{MatrixXd(d_out, d_in), VectorXd(d_out)};
        for (int r = 0; r < d_out; ++r) {
            for (int c = 0; c < d_in; ++c) {
                h.weight(r, c) = dist(rng);
            }
        }
        for (int r = 0; r < d_out; ++r) {
            h.bias(r) = dist(rng);
        }
        return h;
    }

    friend bool operator==(const ProjectionHead& a, const ProjectionHead& b) {
        return a.weight.rows() == b.weight.rows() && a.weight.cols() == b.weight.cols() &&
               a.bias.size() == b.bias.size() && a.weight == b.weight && a.bias == b.bias;
    }
};

inline VectorXd project(const VectorXd& e, const ProjectionHead& h) {
    if (e.size() != h.in_dim()) {
        fail(ErrorCode::DimMismatch, "projection expects " + std::to_string(h.in_dim()) + "-d input, got " +
                                         std::to_string(e.size()));
    }
    return h.weight * e + h.bias;
}

/// Rows of `x` are inputs; returns the projected rows.
inline MatrixXd project_rows(const MatrixXd& x, const ProjectionHead& h) {
    if (x.cols() != h.in_dim()) {
        fail(ErrorCode::DimMismatch, "projection expects " + std::to_string(h.in_dim()) + "-d rows, got " +
                                         std::to_string(x.cols()));
    }
    MatrixXd y = x * h.weight.transpose();
    y.rowwise() += h.bias.transpose();
    return y;
}

inline VectorXd row_norms(const MatrixXd& x) {
    VectorXd n = x.rowwise().norm();
    for (Eigen::Index i = 0; i < n.size(); ++i) {
        if (!(n(i) > 0.0)) {
            fail(ErrorCode::ZeroNormVector, "row " + std::to_string(i) + " has zero norm");
        }
    }
    return n;
}

/// C(i, j) = <a_i, t_j> / (|a_i| |t_j|); rows of `audio` and `text` are vectors.
inline MatrixXd similarity_matrix(const MatrixXd& audio, const MatrixXd& text) {
    if (audio.cols() != text.cols()) {
        fail(ErrorCode::DimMismatch, "audio and text embeddings differ in width");
    }
    const VectorXd na = row_norms(audio);
    const VectorXd nt = row_norms(text);
    const MatrixXd ah = na.cwiseInverse().asDiagonal() * audio;
    const MatrixXd th = nt.cwiseInverse().asDiagonal() * text;
    return ah * th.transpose();
}

struct LossValue {
    double value = 0.0;
    double audio_to_text = 0.0;  // mean CE of row softmax (audio i ranks captions)
    double text_to_audio = 0.0;  // mean CE of column softmax (caption i ranks audios)
};

namespace detail {

/// Softmax over each row of `logits`.
inline MatrixXd row_softmax(const MatrixXd& logits) {
    MatrixXd p(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        p.row(i) = (logits.row(i).array() - mx).exp();
        p.row(i) /= p.row(i).sum();
    }
    return p;
}

inline double mean_diagonal_ce(const MatrixXd& logits) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        const double mx = logits.row(i).maxCoeff();
        const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
        total += lse - logits(i, i);
    }
    return total / static_cast<double>(logits.rows());
}

}  // namespace detail

/// Symmetric cross-entropy of C / temperature against the identity target:
/// (1/2N) * sum_i [CE(row i) + CE(column i)].
inline LossValue nt_xent_loss(const MatrixXd& sim, double temperature = 1.0) {
    if (sim.rows() != sim.cols()) {
        fail(ErrorCode::NonSquare, "similarity matrix is " + std::to_string(sim.rows()) + "x" +
                                       std::to_string(sim.cols()));
    }
    if (!(temperature > 0.0)) {
        fail(ErrorCode::InvalidArgument, "temperature must be positive");
    }
    if (sim.rows() == 0) {
        fail(ErrorCode::EmptyDataset, "empty similarity matrix");
    }
    const MatrixXd logits = sim / temperature;
    LossValue loss;
    loss.audio_to_text = detail::mean_diagonal_ce(logits);
    loss.text_to_audio = detail::mean_diagonal_ce(logits.transpose());
    loss.value = 0.5 * (loss.audio_to_text + loss.text_to_audio);
    return loss;
}

struct HeadGradient {
    MatrixXd weight;
    VectorXd bias;
};

struct LossGradients {
    LossValue loss;
    HeadGradient audio;
    HeadGradient text;
};

/// Exact gradients of nt_xent_loss(similarity(project(audio_raw), project(text_raw)))
/// with respect to both heads. Rows of the raw matrices are batch items.
///
///   dL/dC   = ((P_row - I) + (P_col - I)) / (2 N tau)
///   dL/dA^  = G T^,  dL/dT^ = G^T A^
///   dL/da   = (I - a^ a^T) dL/da^ / |a|
///   dL/dW   = (dL/dA)^T X,  dL/db = column sums of dL/dA
inline LossGradients loss_gradients(const MatrixXd& audio_raw, const MatrixXd& text_raw, const ProjectionHead& audio_head,
                                     const ProjectionHead& text_head, double temperature = 1.0) {
    if (audio_raw.rows() != text_raw.rows()) {
        fail(ErrorCode::ShapeMismatch, "audio and text batches differ in size");
    }
    if (audio_head.out_dim() != text_head.out_dim()) {
        fail(ErrorCode::DimMismatch, "projection heads map to different widths");
    }
    const auto n = audio_raw.rows();
    const MatrixXd a = project_rows(audio_raw, audio_head);
    const MatrixXd t = project_rows(text_raw, text_head);
    const VectorXd na = row_norms(a);
    const VectorXd nt = row_norms(t);
    const MatrixXd ah = na.cwiseInverse().asDiagonal() * a;
    const MatrixXd th = nt.cwiseInverse().asDiagonal() * t;
    const MatrixXd sim = ah * th.transpose();

    LossGradients out;
    out.loss = nt_xent_loss(sim, temperature);

    const MatrixXd logits = sim / temperature;
    const MatrixXd p_row = detail::row_softmax(logits);
    const MatrixXd p_col = detail::row_softmax(logits.transpose()).transpose();
    const MatrixXd eye = MatrixXd::Identity(n, n);
    const MatrixXd g = ((p_row - eye) + (p_col - eye)) / (2.0 * static_cast<double>(n) * temperature);

    const MatrixXd d_ah = g * th;
    const MatrixXd d_th = g.transpose() * ah;

    auto through_norm = [](const MatrixXd& unit, const VectorXd& norms, const MatrixXd& d_unit) {
        MatrixXd d(unit.rows(), unit.cols());
        for (Eigen::Index i = 0; i < unit.rows(); ++i) {
            const double radial = unit.row(i).dot(d_unit.row(i));
            d.row(i) = (d_unit.row(i) - radial * unit.row(i)) / norms(i);
        }
        return d;
    };
    const MatrixXd d_a = through_norm(ah, na, d_ah);
    const MatrixXd d_t = through_norm(th, nt, d_th);

    out.audio.weight = d_a.transpose() * audio_raw;
    out.audio.bias = d_a.colwise().sum().transpose();
    out.text.weight = d_t.transpose() * text_raw;
    out.text.bias = d_t.colwise().sum().transpose();
    return out;
}

/// Loss only (no gradients) for a batch, through the same path as loss_gradients.
inline LossValue batch_loss(const MatrixXd& audio_raw, const MatrixXd& text_raw, const ProjectionHead& audio_head,
                            const ProjectionHead& text_head, double temperature = 1.0) {
    return nt_xent_loss(similarity_matrix(project_rows(audio_raw, audio_head), project_rows(text_raw, text_head)),
                        temperature);
}

}  // namespace acre::space

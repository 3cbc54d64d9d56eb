#pragma once

// Frozen embedding networks. The audio side tokenizes a log-mel spectrogram into
// 2-D patches (optionally dropping whole frequency rows / time columns) and runs
// a small pre-norm transformer with mean pooling; the text side runs a
// bidirectional transformer over WordPiece ids and returns the class-token
// output. Parameters are drawn once from a seed and never updated.

#include "acre/dsp.hpp"
#include "acre/error.hpp"
#include "acre/rng.hpp"
#include "acre/text.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace acre::encoder {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Patch geometry

struct PatchGeometry {
    int patch_f = 16;
    int patch_t = 16;
    int stride_f = 16;
    int stride_t = 16;
    int drop_f = 0;  // frequency rows removed by structured patchout
    int drop_t = 0;  // time columns removed by structured patchout
    double max_input_seconds = 10.0;

    int rows(int bins = dsp::kMelBins) const { return bins < patch_f ? 0 : 1 + (bins - patch_f) / stride_f; }
    int cols(int frames) const { return frames < patch_t ? 0 : 1 + (frames - patch_t) / stride_t; }
    int patch_size() const { return patch_f * patch_t; }

    /// Frames spanned by one model input of max_input_seconds.
    int segment_frames() const { return dsp::segment_frames_for_seconds(max_input_seconds); }
};

/// Audio model presets: patch stride, (frequency; time) patchout and input length.
inline PatchGeometry preset(std::string_view name) {
    if (name == "passt-n") {
        return {16, 16, 16, 16, 2, 15, 10.0};
    }
    if (name == "passt-s") {
        return {16, 16, 10, 10, 4, 50, 10.0};
    }
    if (name == "passt-s20") {
        return {16, 16, 10, 10, 4, 80, 20.0};
    }
    fail(ErrorCode::InvalidConfig, "unknown preset '" + std::string(name) + "' (expected passt-n, passt-s, passt-s20)");
}

inline constexpr std::array<std::string_view, 3> kPresetNames{"passt-n", "passt-s", "passt-s20"};

struct Patch {
    int row = 0;
    int col = 0;
    std::vector<double> values;  // patch_f x patch_t, frequency-major
};

struct PatchGrid {
    int rows = 0;
    int cols = 0;
    int patch_f = 0;
    int patch_t = 0;
    std::vector<Patch> patches;
};

inline PatchGrid extract_patches(const dsp::Spectrogram& s, const PatchGeometry& g) {
    if (g.stride_f < 1 || g.stride_t < 1 || g.patch_f < 1 || g.patch_t < 1) {
        fail(ErrorCode::InvalidArgument, "patch sizes and strides must be positive");
    }
    if (s.frames < g.patch_t || s.bins < g.patch_f) {
        fail(ErrorCode::InputTooShort, "spectrogram of " + std::to_string(s.frames) + " frames x " +
                                           std::to_string(s.bins) + " bins is smaller than one " +
                                           std::to_string(g.patch_f) + "x" + std::to_string(g.patch_t) + " patch");
    }
    PatchGrid grid;
    grid.rows = g.rows(s.bins);
    grid.cols = g.cols(s.frames);
    grid.patch_f = g.patch_f;
    grid.patch_t = g.patch_t;
    grid.patches.reserve(static_cast<std::size_t>(grid.rows) * grid.cols);
    for (int r = 0; r < grid.rows; ++r) {
        for (int c = 0; c < grid.cols; ++c) {
            Patch p{r, c, std::vector<double>(static_cast<std::size_t>(g.patch_size()))};
            const int bin0 = r * g.stride_f;
            const int frame0 = c * g.stride_t;
            for (int f = 0; f < g.patch_f; ++f) {
                for (int t = 0; t < g.patch_t; ++t) {
                    p.values[static_cast<std::size_t>(f) * g.patch_t + t] = s.at(frame0 + t, bin0 + f);
                }
            }
            grid.patches.push_back(std::move(p));
        }
    }
    return grid;
}

namespace detail {

/// k distinct values from [0, n), uniformly, via a partial Fisher-Yates shuffle.
inline std::vector<int> sample_without_replacement(int n, int k, Rng& rng) {
    std::vector<int> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), 0);
    for (int i = 0; i < k; ++i) {
        std::uniform_int_distribution<int> pick(i, n - 1);
        std::swap(pool[i], pool[pick(rng)]);
    }
    pool.resize(static_cast<std::size_t>(k));
    return pool;
}

}  // namespace detail

/// Removes `drop_f` whole frequency rows and `drop_t` whole time columns chosen
/// uniformly without replacement. Survivors keep their original (row, col) tags.
inline PatchGrid structured_patchout(const PatchGrid& grid, int drop_f, int drop_t, Rng& rng) {
    if (drop_f < 0 || drop_t < 0 || drop_f >= grid.rows || drop_t >= grid.cols) {
        fail(ErrorCode::DropExceedsGrid, "cannot drop " + std::to_string(drop_f) + " rows / " +
                                             std::to_string(drop_t) + " columns from a " +
                                             std::to_string(grid.rows) + "x" + std::to_string(grid.cols) + " grid");
    }
    std::vector<char> row_dropped(static_cast<std::size_t>(grid.rows), 0);
    std::vector<char> col_dropped(static_cast<std::size_t>(grid.cols), 0);
    for (int r : detail::sample_without_replacement(grid.rows, drop_f, rng)) {
        row_dropped[r] = 1;
    }
    for (int c : detail::sample_without_replacement(grid.cols, drop_t, rng)) {
        col_dropped[c] = 1;
    }
    PatchGrid out;
    out.rows = grid.rows;
    out.cols = grid.cols;
    out.patch_f = grid.patch_f;
    out.patch_t = grid.patch_t;
    out.patches.reserve(static_cast<std::size_t>(grid.rows - drop_f) * (grid.cols - drop_t));
    for (const auto& p : grid.patches) {
        if (!row_dropped[p.row] && !col_dropped[p.col]) {
            out.patches.push_back(p);
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Toy transformer

struct EncoderParams {
    std::uint64_t seed = 0;
    int depth = 2;
    int width = 64;
    int heads = 4;

    void validate() const {
        if (depth < 0 || width < 2 || heads < 1 || width % heads != 0) {
            fail(ErrorCode::InvalidConfig, "encoder width must be divisible by heads (width=" +
                                               std::to_string(width) + ", heads=" + std::to_string(heads) + ")");
        }
    }
};

namespace detail {

inline MatrixXd gaussian(int rows, int cols, double stddev, Rng& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            m(r, c) = dist(rng);
        }
    }
    return m;
}

/// Per-token layer norm without affine parameters.
inline MatrixXd layer_norm(const MatrixXd& x) {
    MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double mean = x.row(i).mean();
        const double var = (x.row(i).array() - mean).square().mean();
        out.row(i) = (x.row(i).array() - mean) / std::sqrt(var + 1e-5);
    }
    return out;
}

inline double gelu(double v) {
    return 0.5 * v * (1.0 + std::tanh(0.7978845608028654 * (v + 0.044715 * v * v * v)));
}

/// Sinusoidal code for integer position `pos`, written into `out` (length d).
inline void sinusoid(int pos, Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>> out) {
    const auto d = out.size();
    for (Eigen::Index i = 0; i < d; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(d));
        out(i) = (i % 2 == 0) ? std::sin(pos * freq) : std::cos(pos * freq);
    }
}

struct Block {
    MatrixXd wq, wk, wv, wo;  // width x width, applied as x * W
    MatrixXd w1, w2;          // width x hidden, hidden x width
    Eigen::RowVectorXd b1, b2;
};

class Transformer {
public:
    Transformer(const EncoderParams& p, Rng& rng) : width_(p.width), heads_(p.heads) {
        const double s = 1.0 / std::sqrt(static_cast<double>(p.width));
        const int hidden = 2 * p.width;
        for (int l = 0; l < p.depth; ++l) {
            Block b;
            b.wq = gaussian(p.width, p.width, s, rng);
            b.wk = gaussian(p.width, p.width, s, rng);
            b.wv = gaussian(p.width, p.width, s, rng);
            b.wo = gaussian(p.width, p.width, s, rng);
            b.w1 = gaussian(p.width, hidden, s, rng);
            b.w2 = gaussian(hidden, p.width, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
            b.b1 = Eigen::RowVectorXd::Zero(hidden);
            b.b2 = Eigen::RowVectorXd::Zero(p.width);
            blocks_.push_back(std::move(b));
        }
    }

    /// Rows of `x` are tokens. Returns the final layer-normed token states.
    MatrixXd forward(MatrixXd x) const {
        const int head_dim = width_ / heads_;
        const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
        for (const auto& b : blocks_) {
            const MatrixXd h = layer_norm(x);
            const MatrixXd q = h * b.wq;
            const MatrixXd k = h * b.wk;
            const MatrixXd v = h * b.wv;
            MatrixXd attended(x.rows(), width_);
            for (int hd = 0; hd < heads_; ++hd) {
                MatrixXd scores = q.middleCols(hd * head_dim, head_dim) *
                                  k.middleCols(hd * head_dim, head_dim).transpose() * scale;
                for (Eigen::Index i = 0; i < scores.rows(); ++i) {
                    const double mx = scores.row(i).maxCoeff();
                    scores.row(i) = (scores.row(i).array() - mx).exp();
                    scores.row(i) /= scores.row(i).sum();
                }
                attended.middleCols(hd * head_dim, head_dim) = scores * v.middleCols(hd * head_dim, head_dim);
            }
            x += attended * b.wo;
            MatrixXd ff = layer_norm(x) * b.w1;
            ff.rowwise() += b.b1;
            ff = ff.unaryExpr(&gelu);
            x += ff * b.w2;
            x.rowwise() += b.b2;
        }
        return layer_norm(x);
    }

private:
    int width_;
    int heads_;
    std::vector<Block> blocks_;
};

}  // namespace detail

// ---------------------------------------------------------------------------
// Audio encoder

class AudioEncoder {
public:
    AudioEncoder(const EncoderParams& p, int patch_size = 256)
        : params_(validated(p)),
          rng_(make_rng(p.seed, "audio-encoder")),
          patch_proj_(detail::gaussian(patch_size, p.width, 1.0 / std::sqrt(static_cast<double>(patch_size)), rng_)),
          patch_bias_(Eigen::RowVectorXd::Zero(p.width)),
          body_(p, rng_) {}

    AudioEncoder(const AudioEncoder&) = delete;
    AudioEncoder& operator=(const AudioEncoder&) = delete;

    int width() const noexcept { return params_.width; }
    int patch_size() const noexcept { return static_cast<int>(patch_proj_.rows()); }
    const EncoderParams& params() const noexcept { return params_; }

    /// Number of encode() calls so far (one per patch grid / segment).
    std::uint64_t encode_calls() const noexcept { return calls_.load(); }

    /// Linear patch projection + 2-D sinusoidal position from the tags (rows in
    /// the first half of the width, columns in the second) + transformer + mean pool.
    VectorXd encode(const PatchGrid& grid) const {
        if (grid.patches.empty()) {
            fail(ErrorCode::EmptyGrid, "cannot encode an empty patch grid");
        }
        const auto n = static_cast<Eigen::Index>(grid.patches.size());
        const int half = params_.width / 2;
        MatrixXd raw(n, patch_size());
        MatrixXd pos(n, params_.width);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto& p = grid.patches[static_cast<std::size_t>(i)];
            if (static_cast<int>(p.values.size()) != patch_size()) {
                fail(ErrorCode::DimMismatch, "patch has " + std::to_string(p.values.size()) +
                                                 " values, encoder expects " + std::to_string(patch_size()));
            }
            raw.row(i) = Eigen::Map<const Eigen::RowVectorXd>(p.values.data(), patch_size());
            detail::sinusoid(p.row, pos.row(i).head(half));
            detail::sinusoid(p.col, pos.row(i).tail(params_.width - half));
        }
        MatrixXd tokens = raw * patch_proj_;
        tokens.rowwise() += patch_bias_;
        tokens += pos;
        const MatrixXd out = body_.forward(std::move(tokens));
        ++calls_;
        return out.colwise().mean().transpose();
    }

private:
    static const EncoderParams& validated(const EncoderParams& p) {
        p.validate();
        return p;
    }

    EncoderParams params_;
    Rng rng_;  // only used during construction
    MatrixXd patch_proj_;
    Eigen::RowVectorXd patch_bias_;
    detail::Transformer body_;
    mutable std::atomic<std::uint64_t> calls_{0};
};

/// Mean of the per-segment embeddings.
inline VectorXd embed_long_audio(std::span<const PatchGrid> segments, const AudioEncoder& enc) {
    if (segments.empty()) {
        fail(ErrorCode::EmptyGrid, "embed_long_audio needs at least one segment");
    }
    VectorXd sum = VectorXd::Zero(enc.width());
    for (const auto& g : segments) {
        sum += enc.encode(g);
    }
    return sum / static_cast<double>(segments.size());
}

/// Whitened spectrogram -> segments of geometry.segment_frames() -> patch grids
/// (with structured patchout when `patchout_rng` is given) -> mean embedding.
inline VectorXd embed_spectrogram(const dsp::Spectrogram& whitened, const PatchGeometry& g, const AudioEncoder& enc,
                                  Rng* patchout_rng = nullptr, int segment_frames = 0) {
    const int seg = segment_frames > 0 ? segment_frames : g.segment_frames();
    std::vector<PatchGrid> grids;
    for (const auto& chunk : dsp::segment(whitened, seg)) {
        auto grid = extract_patches(chunk, g);
        if (patchout_rng != nullptr && (g.drop_f > 0 || g.drop_t > 0)) {
            grid = structured_patchout(grid, g.drop_f, g.drop_t, *patchout_rng);
        }
        grids.push_back(std::move(grid));
    }
    return embed_long_audio(grids, enc);
}

// ---------------------------------------------------------------------------
// Text encoder

class TextEncoder {
public:
    TextEncoder(const EncoderParams& p, std::size_t vocab_size)
        : params_(validated(p)),
          rng_(make_rng(p.seed, "text-encoder")),
          embedding_(detail::gaussian(static_cast<int>(vocab_size), p.width, 1.0, rng_)),
          body_(p, rng_) {}

    int width() const noexcept { return params_.width; }
    std::size_t vocab_size() const noexcept { return static_cast<std::size_t>(embedding_.rows()); }

    /// Returns the final state at the class-token position (index 0).
    VectorXd encode(const text::TokenSeq& tokens) const {
        if (tokens.ids.empty()) {
            fail(ErrorCode::InvalidArgument, "token sequence lacks a class token");
        }
        const auto n = static_cast<Eigen::Index>(tokens.ids.size());
        MatrixXd x(n, params_.width);
        for (Eigen::Index i = 0; i < n; ++i) {
            const int id = tokens.ids[static_cast<std::size_t>(i)];
            if (id < 0 || id >= embedding_.rows()) {
                fail(ErrorCode::InvalidArgument, "token id " + std::to_string(id) + " outside the vocabulary");
            }
            x.row(i) = embedding_.row(id);
            Eigen::RowVectorXd pe(params_.width);
            detail::sinusoid(static_cast<int>(i), pe);
            x.row(i) += pe;
        }
        return body_.forward(std::move(x)).row(0).transpose();
    }

private:
    static const EncoderParams& validated(const EncoderParams& p) {
        p.validate();
        return p;
    }

    EncoderParams params_;
    Rng rng_;
    MatrixXd embedding_;
    detail::Transformer body_;
};

/// normalize -> WordPiece -> class-token embedding.
inline VectorXd embed_caption(std::string_view caption, const text::Vocabulary& vocab, const TextEncoder& enc) {
    return enc.encode(text::tokenize(text::normalize_text(caption), vocab));
}

}  // namespace acre::encoder

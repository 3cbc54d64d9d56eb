#pragma once

// Synthetic paired embeddings: audio and caption vectors are two fixed random
// linear views of a shared latent code, plus isotropic Gaussian noise.

#include "acre/rng.hpp"
#include "acre/train.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <string>

namespace acre::synthetic {

using Eigen::MatrixXd;
using Eigen::VectorXd;

enum class Pairing {
    Aligned,    // audio = A z + e, caption = B z + e'
    Identical,  // caption = audio (same view, no noise); requires audio_dim == text_dim
    Unrelated,  // caption uses an independent latent, so retrieval is at chance
};

struct LatentModel {
    int latent_dim = 32;
    int audio_dim = 256;
    int text_dim = 256;
    std::uint64_t seed = 0;  // fixes the two views
};

struct SynthOptions {
    int clips = 200;
    int captions_per_clip = 5;
    double noise = 0.05;
    Pairing pairing = Pairing::Aligned;
    std::uint64_t seed = 0;  // draws latents and noise
    std::string id_prefix = "clip";
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

}  // namespace detail

/// View matrices have unit-variance entries scaled by 1/sqrt(latent_dim), so
/// every embedding coordinate has roughly unit variance.
inline train::Dataset generate(const LatentModel& lm, const SynthOptions& opt) {
    auto view_rng = make_rng(lm.seed, "synthetic-views");
    const double s = 1.0 / std::sqrt(static_cast<double>(lm.latent_dim));
    const MatrixXd audio_view = detail::gaussian(lm.audio_dim, lm.latent_dim, s, view_rng);
    const MatrixXd text_view = detail::gaussian(lm.text_dim, lm.latent_dim, s, view_rng);

    auto rng = make_rng(opt.seed, "synthetic-data");
    std::normal_distribution<double> normal(0.0, 1.0);
    auto draw = [&](int n, double stddev) {
        VectorXd v(n);
        for (int i = 0; i < n; ++i) {
            v(i) = stddev * normal(rng);
        }
        return v;
    };

    train::Dataset data;
    data.reserve(static_cast<std::size_t>(opt.clips));
    for (int c = 0; c < opt.clips; ++c) {
        char id[64];
        std::snprintf(id, sizeof(id), "%s%05d", opt.id_prefix.c_str(), c);
        const VectorXd z = draw(lm.latent_dim, 1.0);
        train::ClipEmbeddings clip;
        clip.clip_id = id;
        clip.audio = audio_view * z + draw(lm.audio_dim, opt.noise);
        for (int k = 0; k < opt.captions_per_clip; ++k) {
            switch (opt.pairing) {
            case Pairing::Aligned:
                clip.captions.push_back(text_view * z + draw(lm.text_dim, opt.noise));
                break;
            case Pairing::Identical:
                clip.captions.push_back(clip.audio);
                break;
            case Pairing::Unrelated:
                clip.captions.push_back(text_view * draw(lm.latent_dim, 1.0) + draw(lm.text_dim, opt.noise));
                break;
            }
        }
        data.push_back(std::move(clip));
    }
    return data;
}

}  // namespace acre::synthetic

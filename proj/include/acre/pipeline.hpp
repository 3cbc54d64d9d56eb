#pragma once

// Glue between files on disk and the numeric modules: manifest + WAV files ->
// frozen embeddings -> embedding dumps -> training / evaluation datasets.
//
// Dump id conventions:
//   audio.acre      <clip_id>
//   captions.acre   <clip_id>#<caption_index>
//   augmented.acre  <clip_id>#<caption_index>#<variant_index>

#include "acre/dsp.hpp"
#include "acre/encoder.hpp"
#include "acre/error.hpp"
#include "acre/ingest.hpp"
#include "acre/rng.hpp"
#include "acre/text.hpp"
#include "acre/train.hpp"
#include "acre/wav.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace acre::pipeline {

namespace fs = std::filesystem;

inline constexpr double kMaxClipSeconds = 30.0;

inline std::string caption_id(const std::string& clip_id, std::size_t k) { return clip_id + "#" + std::to_string(k); }

inline std::string variant_id(const std::string& clip_id, int k, std::size_t v) {
    return clip_id + "#" + std::to_string(k) + "#" + std::to_string(v);
}

/// Toy encoder stack with its preprocessing state.
struct ToyEncoders {
    text::Vocabulary vocab;
    encoder::PatchGeometry geometry;
    encoder::AudioEncoder audio;
    encoder::TextEncoder text;

    ToyEncoders(text::Vocabulary v, const encoder::PatchGeometry& g, std::uint64_t seed,
                encoder::EncoderParams shape = {})
        : vocab(std::move(v)),
          geometry(g),
          audio(with_seed(shape, split_seed(seed, "audio-encoder")), g.patch_size()),
          text(with_seed(shape, split_seed(seed, "text-encoder")), vocab.size()) {}

private:
    static encoder::EncoderParams with_seed(encoder::EncoderParams p, std::uint64_t seed) {
        p.seed = seed;
        return p;
    }
};

/// WAV -> random 30 s snippet (when longer) -> log-mel.
inline dsp::Spectrogram clip_spectrogram(const ingest::ClipRecord& clip, Rng& snippet_rng) {
    if (!fs::exists(clip.audio_path)) {
        fail(ErrorCode::MissingFile, "audio file not found: " + clip.audio_path.string());
    }
    const auto wave = dsp::snippet_or_pad(ingest::read_wav(clip.audio_path), kMaxClipSeconds, snippet_rng);
    try {
        return dsp::logmel(wave);
    } catch (const Error& e) {
        fail(e.code(), clip.audio_path.string() + ": " + e.what());
    }
}

/// Streaming global mean / std over the log-mel cells of every clip.
inline dsp::WhiteningStats compute_whitening(std::span<const ingest::ClipRecord> clips, std::uint64_t seed) {
    auto rng = make_rng(seed, "snippet");
    dsp::WhiteningAccumulator acc;
    for (const auto& clip : clips) {
        acc.add(clip_spectrogram(clip, rng));
    }
    return acc.stats();
}

struct EmbeddedSet {
    ingest::EmbeddingDump audio;
    ingest::EmbeddingDump captions;
    ingest::EmbeddingDump augmented;  // empty unless augmented captions were given
};

/// Embeds every clip and caption of a manifest with the frozen toy encoders.
/// Evaluation-mode audio path: no patchout; segments of the preset's input length.
inline EmbeddedSet embed_manifest(std::span<const ingest::ClipRecord> clips, const ToyEncoders& enc,
                                  const dsp::WhiteningStats& stats, std::uint64_t seed,
                                  std::span<const ingest::AugmentedCaptionSet> augmented = {},
                                  bool embed_audio = true) {
    EmbeddedSet out;
    auto rng = make_rng(seed, "snippet");
    for (const auto& clip : clips) {
        if (embed_audio) {
            const auto spec = dsp::whiten(clip_spectrogram(clip, rng), stats);
            out.audio.add_vector(clip.clip_id, encoder::embed_spectrogram(spec, enc.geometry, enc.audio));
        }
        for (std::size_t k = 0; k < clip.captions.size(); ++k) {
            out.captions.add_vector(caption_id(clip.clip_id, k),
                                    encoder::embed_caption(clip.captions[k], enc.vocab, enc.text));
        }
    }
    for (const auto& set : augmented) {
        for (std::size_t v = 0; v < set.variants.size(); ++v) {
            out.augmented.add_vector(variant_id(set.clip_id, set.caption_index, v),
                                     encoder::embed_caption(set.variants[v], enc.vocab, enc.text));
        }
    }
    return out;
}

namespace detail {

inline Eigen::VectorXd to_vector(std::span<const float> v) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
        out(static_cast<Eigen::Index>(i)) = v[i];
    }
    return out;
}

}  // namespace detail

/// Joins audio and caption dumps into a dataset. With `clip_ids`, clips appear
/// in that order and each must exist; otherwise the audio dump order is used.
inline train::Dataset dataset_from_dumps(const ingest::EmbeddingDump& audio, const ingest::EmbeddingDump& captions,
                                         std::optional<std::vector<std::string>> clip_ids = std::nullopt) {
    const auto audio_at = audio.index_by_id();
    const auto caption_at = captions.index_by_id();
    const auto ids = clip_ids.value_or(audio.ids);
    train::Dataset data;
    data.reserve(ids.size());
    for (const auto& id : ids) {
        auto a = audio_at.find(id);
        if (a == audio_at.end()) {
            fail(ErrorCode::UnknownTargetId, "clip " + id + " has no audio embedding");
        }
        train::ClipEmbeddings clip{id, detail::to_vector(audio.row(a->second)), {}};
        for (std::size_t k = 0;; ++k) {
            auto c = caption_at.find(caption_id(id, k));
            if (c == caption_at.end()) {
                break;
            }
            clip.captions.push_back(detail::to_vector(captions.row(c->second)));
        }
        if (clip.captions.empty()) {
            fail(ErrorCode::WrongCaptionCount, "clip " + id + " has no caption embeddings");
        }
        data.push_back(std::move(clip));
    }
    return data;
}

/// Parses "<clip>#<k>#<v>" ids of an augmented-caption dump into a map.
inline train::AugmentationMap augmentations_from_dump(const ingest::EmbeddingDump& dump) {
    std::unordered_map<std::string, std::vector<std::pair<std::size_t, Eigen::VectorXd>>> grouped;
    std::vector<std::string> order;
    for (std::size_t i = 0; i < dump.size(); ++i) {
        const auto& id = dump.ids[i];
        const auto last = id.rfind('#');
        const auto mid = last == std::string::npos || last == 0 ? std::string::npos : id.rfind('#', last - 1);
        if (mid == std::string::npos) {
            fail(ErrorCode::MalformedRecord, "augmented embedding id '" + id + "' is not <clip>#<caption>#<variant>");
        }
        const std::string key = id.substr(0, last);
        if (!grouped.contains(key)) {
            order.push_back(key);
        }
        grouped[key].emplace_back(std::stoul(id.substr(last + 1)), detail::to_vector(dump.row(i)));
    }
    train::AugmentationMap map;
    for (const auto& key : order) {
        auto& variants = grouped[key];
        std::sort(variants.begin(), variants.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        std::vector<Eigen::VectorXd> vecs;
        for (auto& v : variants) {
            vecs.push_back(std::move(v.second));
        }
        const auto hash = key.rfind('#');
        map.add(key.substr(0, hash), std::stoi(key.substr(hash + 1)), std::move(vecs));
    }
    return map;
}

inline train::Dataset dataset_from_embedded(const EmbeddedSet& set) {
    return dataset_from_dumps(set.audio, set.captions);
}

/// Writes a dataset back out as audio / caption dumps (float32).
inline EmbeddedSet dumps_from_dataset(const train::Dataset& data) {
    EmbeddedSet out;
    for (const auto& clip : data) {
        out.audio.add_vector(clip.clip_id, clip.audio);
        for (std::size_t k = 0; k < clip.captions.size(); ++k) {
            out.captions.add_vector(caption_id(clip.clip_id, k), clip.captions[k]);
        }
    }
    return out;
}

}  // namespace acre::pipeline

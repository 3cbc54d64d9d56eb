#pragma once

// Command-line front end. One subcommand per run type; every command reads an
// optional flat key=value config file (--config) whose keys are the long flag
// names, and explicit flags win over the file.
//
// Exit codes: 0 success, 1 check failure (gradcheck), 2 input error.
// Every error path prints exactly one line: "error: <Code>: <message>".

#include "acre/binary_io.hpp"
#include "acre/dsp.hpp"
#include "acre/encoder.hpp"
#include "acre/error.hpp"
#include "acre/gradcheck.hpp"
#include "acre/ingest.hpp"
#include "acre/pipeline.hpp"
#include "acre/retrieval.hpp"
#include "acre/synthetic.hpp"
#include "acre/text.hpp"
#include "acre/train.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#ifndef ACRE_DATA_DIR
#define ACRE_DATA_DIR "data"
#endif

namespace acre::app {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitInputError = 2;

inline constexpr std::string_view kAudioDump = "audio.acre";
inline constexpr std::string_view kCaptionDump = "captions.acre";
inline constexpr std::string_view kAugmentedDump = "augmented.acre";
inline constexpr std::string_view kCheckpointFile = "checkpoint.ackp";
inline constexpr std::string_view kRunConfig = "run.cfg";

inline constexpr std::array<std::string_view, 10> kCommands{"synth",    "preprocess", "embed",     "train",  "finetune",
                                                            "evaluate", "rank",       "gradcheck", "ablate", "sweep"};

struct Options {
    std::string command;
    std::vector<std::string> manifests;
    std::string audio_dir;
    std::string augmented_captions;
    std::string encoder = "toy";
    std::string preset = "passt-s";
    int epochs = -1;  // -1: keep the phase default
    std::uint64_t seed = 0;
    std::string out = ".";
    bool strict = false;
    std::string vocab = ACRE_DATA_DIR "/vocab.txt";
    double whiten_mean = 0.0;
    double whiten_std = 1.0;
    bool has_whitening = false;
    std::string checkpoint;
    train::TrainConfig train;
    bool text_only = false;
    bool cache = false;

    // synth
    int clips = 200;
    int captions = 5;
    int variants = 0;
    double noise = 0.05;
    std::string pairing = "aligned";
    std::uint64_t view_seed = 0;
    int latent_dim = 32;
    int audio_dim = 256;
    int text_dim = 256;
    std::string id_prefix = "clip";

    // rank
    std::string query;
    std::string query_id;
    std::string target;
    int top = 10;

    // gradcheck
    int seeds = 20;
    std::vector<std::string> shapes;
    bool perturb = false;

    // ablate
    std::vector<std::string> datasets;
    std::vector<std::string> combos;
    std::string held_out;

    // sweep
    std::vector<double> lengths{10.0, 20.0, 30.0};
};

namespace detail {

inline std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

inline fs::path out_path(const Options& o, std::string_view name) { return fs::path(o.out) / std::string(name); }

inline void ensure_out_dir(const Options& o) { fs::create_directories(o.out); }

inline std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), f, args...);
    return buf;
}

struct EncoderChoice {
    bool toy = true;
    fs::path dump_dir;
};

inline EncoderChoice parse_encoder(const std::string& spec) {
    if (spec == "toy") {
        return {};
    }
    if (spec.rfind("dump:", 0) == 0 && spec.size() > 5) {
        return {false, fs::path(spec.substr(5))};
    }
    fail(ErrorCode::InvalidConfig, "--encoder must be 'toy' or 'dump:<dir>', got '" + spec + "'");
}

inline std::vector<ingest::ClipRecord> load_manifests(const Options& o) {
    std::vector<ingest::ClipRecord> clips;
    for (const auto& m : o.manifests) {
        auto part = o.audio_dir.empty() ? ingest::load_manifest(m) : ingest::load_manifest(m, fs::path(o.audio_dir));
        for (auto& c : part) {
            for (const auto& seen : clips) {
                if (seen.clip_id == c.clip_id) {
                    fail(ErrorCode::DuplicateClipId, m + ": clip " + c.clip_id + " already listed by an earlier manifest");
                }
            }
            clips.push_back(std::move(c));
        }
    }
    return clips;
}

inline std::unique_ptr<pipeline::ToyEncoders> make_toy(const Options& o) {
    return std::make_unique<pipeline::ToyEncoders>(text::Vocabulary::load(o.vocab), encoder::preset(o.preset), o.seed);
}

inline dsp::WhiteningStats whitening(const Options& o, std::span<const ingest::ClipRecord> clips) {
    if (o.has_whitening) {
        return {o.whiten_mean, o.whiten_std};
    }
    return pipeline::compute_whitening(clips, o.seed);
}

inline bool is_embedding_dump(const fs::path& p) {
    const auto bytes = io::read_file(p);
    return bytes.size() >= 4 && std::string_view(bytes.data(), 4) == ingest::kDumpMagic;
}

/// Loaded training / evaluation data plus the toy encoders when they were used.
struct Loaded {
    train::Dataset data;
    ingest::EmbeddingDump captions;
    std::unique_ptr<pipeline::ToyEncoders> toy;
    fs::path dump_dir;
};

inline Loaded load_data(const Options& o) {
    Loaded l;
    const auto enc = parse_encoder(o.encoder);
    if (enc.toy) {
        if (o.manifests.empty()) {
            fail(ErrorCode::InvalidConfig, "--encoder toy needs at least one --manifest");
        }
        const auto clips = load_manifests(o);
        l.toy = make_toy(o);
        const auto set = pipeline::embed_manifest(clips, *l.toy, whitening(o, clips), o.seed);
        l.data = pipeline::dataset_from_embedded(set);
        l.captions = set.captions;
        return l;
    }
    l.dump_dir = enc.dump_dir;
    const auto audio = ingest::read_embedding_dump(enc.dump_dir / std::string(kAudioDump));
    l.captions = ingest::read_embedding_dump(enc.dump_dir / std::string(kCaptionDump));
    std::optional<std::vector<std::string>> ids;
    if (!o.manifests.empty()) {
        ids.emplace();
        for (const auto& c : load_manifests(o)) {
            ids->push_back(c.clip_id);
        }
    }
    l.data = pipeline::dataset_from_dumps(audio, l.captions, ids);
    return l;
}

/// Augmented captions: an explicit --augmented-captions file (embedding dump or
/// JSONL text), else augmented.acre next to a dump encoder's embeddings.
inline train::AugmentationMap load_augmentations(const Options& o, const Loaded& l) {
    if (!o.augmented_captions.empty()) {
        const fs::path p(o.augmented_captions);
        if (is_embedding_dump(p)) {
            return pipeline::augmentations_from_dump(ingest::read_embedding_dump(p));
        }
        if (!l.toy) {
            fail(ErrorCode::InvalidConfig, p.string() + ": text augmentations need --encoder toy; pass an embedding dump");
        }
        const auto sets = ingest::load_augmented_captions(p);
        const auto set = pipeline::embed_manifest({}, *l.toy, {}, o.seed, sets, false);
        return pipeline::augmentations_from_dump(set.augmented);
    }
    if (!l.dump_dir.empty() && fs::exists(l.dump_dir / std::string(kAugmentedDump))) {
        return pipeline::augmentations_from_dump(ingest::read_embedding_dump(l.dump_dir / std::string(kAugmentedDump)));
    }
    return {};
}

inline train::Model load_model(const Options& o) {
    if (o.checkpoint.empty()) {
        fail(ErrorCode::InvalidConfig, o.command + " needs --checkpoint");
    }
    return train::load_checkpoint(o.checkpoint).model;
}

inline void check_model_fits(const train::Model& m, const train::Dataset& d) {
    if (m.audio.in_dim() != d.front().audio.size() || m.text.in_dim() != d.front().captions.front().size()) {
        fail(ErrorCode::DimMismatch,
             fmt("checkpoint expects %d-d audio / %d-d text embeddings, data has %d / %d", m.audio.in_dim(),
                 m.text.in_dim(), static_cast<int>(d.front().audio.size()),
                 static_cast<int>(d.front().captions.front().size())));
    }
}

inline std::string run_config_text(const Options& o, const dsp::WhiteningStats& w) {
    std::string s = "# acre run configuration\n";
    s += "encoder=" + o.encoder + "\n";
    s += "preset=" + o.preset + "\n";
    s += "seed=" + std::to_string(o.seed) + "\n";
    s += fmt("whiten-mean=%.17g\nwhiten-std=%.17g\n", w.mean, w.std);
    return s;
}

inline gradcheck::Shape parse_shape(const std::string& text) {
    gradcheck::Shape s;
    char sep1 = 0, sep2 = 0;
    std::istringstream in(text);
    if (!(in >> s.n >> sep1 >> s.d_in >> sep2 >> s.d_out) || sep1 != ',' || sep2 != ',' || !in.eof() || s.n < 1 ||
        s.d_in < 1 || s.d_out < 1) {
        fail(ErrorCode::InvalidConfig, "--shape must be N,D_in,D_out with positive values, got '" + text + "'");
    }
    return s;
}

inline synthetic::Pairing parse_pairing(const std::string& p) {
    if (p == "aligned") return synthetic::Pairing::Aligned;
    if (p == "identical") return synthetic::Pairing::Identical;
    if (p == "unrelated") return synthetic::Pairing::Unrelated;
    fail(ErrorCode::InvalidConfig, "--pairing must be aligned, identical or unrelated");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands

inline int cmd_synth(const Options& o, std::ostream& out) {
    const auto pairing = detail::parse_pairing(o.pairing);
    if (pairing == synthetic::Pairing::Identical && o.audio_dim != o.text_dim) {
        fail(ErrorCode::InvalidConfig, "--pairing identical needs --audio-dim == --text-dim");
    }
    if (o.clips < 1 || o.captions < 1 || o.variants < 0 || o.noise < 0.0) {
        fail(ErrorCode::InvalidConfig, "--clips and --captions must be positive, --variants and --noise nonnegative");
    }
    synthetic::LatentModel lm{o.latent_dim, o.audio_dim, o.text_dim, o.view_seed};
    synthetic::SynthOptions so{o.clips, o.captions, o.noise, pairing, o.seed, o.id_prefix};
    const auto data = synthetic::generate(lm, so);
    auto set = pipeline::dumps_from_dataset(data);

    if (o.variants > 0) {
        // Rephrasings: the caption embedding plus fresh noise of the same scale.
        auto rng = make_rng(o.seed, "synthetic-variants");
        std::normal_distribution<double> normal(0.0, 1.0);
        for (const auto& clip : data) {
            for (std::size_t k = 0; k < clip.captions.size(); ++k) {
                for (int v = 0; v < o.variants; ++v) {
                    Eigen::VectorXd e = clip.captions[k];
                    for (Eigen::Index i = 0; i < e.size(); ++i) {
                        e(i) += o.noise * normal(rng);
                    }
                    set.augmented.add_vector(pipeline::variant_id(clip.clip_id, static_cast<int>(k),
                                                                  static_cast<std::size_t>(v)),
                                             e);
                }
            }
        }
    }
    detail::ensure_out_dir(o);
    ingest::write_embedding_dump(set.audio, detail::out_path(o, kAudioDump));
    ingest::write_embedding_dump(set.captions, detail::out_path(o, kCaptionDump));
    if (!set.augmented.ids.empty()) {
        ingest::write_embedding_dump(set.augmented, detail::out_path(o, kAugmentedDump));
    }
    out << detail::fmt("synth: %zu clips, %zu captions, %zu augmented variants -> %s\n", set.audio.size(),
                       set.captions.size(), set.augmented.size(), o.out.c_str());
    return kExitOk;
}

inline int cmd_preprocess(const Options& o, std::ostream& out) {
    if (o.manifests.empty()) {
        fail(ErrorCode::InvalidConfig, "preprocess needs --manifest");
    }
    encoder::preset(o.preset);
    const auto clips = detail::load_manifests(o);
    const auto stats = pipeline::compute_whitening(clips, o.seed);
    detail::ensure_out_dir(o);
    if (o.cache) {
        auto rng = make_rng(o.seed, "snippet");
        std::vector<std::string> ids;
        std::vector<dsp::Spectrogram> specs;
        for (const auto& c : clips) {
            ids.push_back(c.clip_id);
            specs.push_back(pipeline::clip_spectrogram(c, rng));
        }
        dsp::write_spectrogram_cache(ids, specs, detail::out_path(o, "spectrograms.acre"));
    }
    io::write_text_atomic(detail::out_path(o, kRunConfig), detail::run_config_text(o, stats));
    out << detail::fmt("preprocess: %zu clips, whitening mean %.6f std %.6f -> %s\n", clips.size(), stats.mean,
                       stats.std, detail::out_path(o, kRunConfig).c_str());
    return kExitOk;
}

inline int cmd_embed(const Options& o, std::ostream& out) {
    const auto enc = detail::parse_encoder(o.encoder);
    pipeline::EmbeddedSet set;
    if (enc.toy) {
        if (o.manifests.empty()) {
            fail(ErrorCode::InvalidConfig, "embed needs --manifest");
        }
        const auto clips = detail::load_manifests(o);
        const auto toy = detail::make_toy(o);
        std::vector<ingest::AugmentedCaptionSet> augmented;
        if (!o.augmented_captions.empty()) {
            augmented = ingest::load_augmented_captions(o.augmented_captions);
        }
        const auto stats = o.text_only ? dsp::WhiteningStats{} : detail::whitening(o, clips);
        set = pipeline::embed_manifest(clips, *toy, stats, o.seed, augmented, !o.text_only);
        detail::ensure_out_dir(o);
        io::write_text_atomic(detail::out_path(o, kRunConfig), detail::run_config_text(o, stats));
    } else {
        // Pass-through of external embeddings, restricted to the manifest clips when given.
        const auto l = detail::load_data(o);
        set = pipeline::dumps_from_dataset(l.data);
        set.captions = l.captions;
        if (!o.manifests.empty()) {
            set.captions = {};
            for (const auto& clip : l.data) {
                for (std::size_t k = 0; k < clip.captions.size(); ++k) {
                    set.captions.add_vector(pipeline::caption_id(clip.clip_id, k), clip.captions[k]);
                }
            }
        }
        const auto aug = enc.dump_dir / std::string(kAugmentedDump);
        if (fs::exists(aug)) {
            set.augmented = ingest::read_embedding_dump(aug);
        }
        if (o.text_only) {
            set.audio = {};
        }
        detail::ensure_out_dir(o);
    }
    if (!set.audio.ids.empty()) {
        ingest::write_embedding_dump(set.audio, detail::out_path(o, kAudioDump));
    }
    ingest::write_embedding_dump(set.captions, detail::out_path(o, kCaptionDump));
    if (!set.augmented.ids.empty()) {
        ingest::write_embedding_dump(set.augmented, detail::out_path(o, kAugmentedDump));
    }
    out << detail::fmt("embed: %zu audio vectors, %zu caption vectors, %zu augmented vectors -> %s\n",
                       set.audio.size(), set.captions.size(), set.augmented.size(), o.out.c_str());
    return kExitOk;
}

inline int cmd_train(const Options& o, std::ostream& out, std::ostream& err, train::Phase phase) {
    auto cfg = o.train;
    cfg.seed = o.seed;
    cfg.strict = o.strict;
    if (o.epochs >= 0) {
        (phase == train::Phase::Pretrain ? cfg.pretrain_epochs : cfg.finetune_epochs) = o.epochs;
    }
    cfg.validate();
    encoder::preset(o.preset);
    const auto l = detail::load_data(o);
    train::check_dataset(l.data);

    train::Model model;
    if (phase == train::Phase::Finetune) {
        model = detail::load_model(o);
        model.adam = {};  // fresh optimizer state for the second phase
    } else if (!o.checkpoint.empty()) {
        model = detail::load_model(o);
    } else {
        model = train::Model::init(static_cast<int>(l.data.front().audio.size()),
                                   static_cast<int>(l.data.front().captions.front().size()), cfg.shared_dim, cfg.seed);
    }
    detail::check_model_fits(model, l.data);

    train::AugmentationMap aug;
    if (phase == train::Phase::Finetune) {
        aug = detail::load_augmentations(o, l);
        if (cfg.swap_prob > 0.0 && aug.empty()) {
            if (cfg.strict) {
                fail(ErrorCode::MissingAugmentation,
                     "finetuning with swap_prob > 0 needs --augmented-captions (or augmented.acre in the dump dir)");
            }
            err << "warning: no augmented captions; caption swaps are skipped\n";
        }
    }

    const auto result = train::train(l.data, std::move(model), cfg, phase, &aug);
    detail::ensure_out_dir(o);
    train::save_checkpoint(result.model, cfg.hash(), detail::out_path(o, kCheckpointFile));
    io::write_text_atomic(detail::out_path(o, "loss.csv"), train::format_loss_csv(result.log));

    const char* name = phase == train::Phase::Pretrain ? "train" : "finetune";
    out << detail::fmt("%s: %zu clips, %zu steps, reference loss %.6f -> %.6f", name, l.data.size(), result.log.size(),
                       result.reference_losses.front().second, result.reference_losses.back().second);
    if (phase == train::Phase::Finetune) {
        out << detail::fmt(", swapped %zu of %zu captions", result.captions_swapped, result.captions_drawn);
    }
    out << " -> " << detail::out_path(o, kCheckpointFile).string() << "\n";
    return kExitOk;
}

inline int cmd_evaluate(const Options& o, std::ostream& out) {
    const auto model = detail::load_model(o);
    const auto l = detail::load_data(o);
    train::check_dataset(l.data);
    detail::check_model_fits(model, l.data);
    const auto report = retrieval::evaluate_model(l.data, model);
    detail::ensure_out_dir(o);
    io::write_text_atomic(detail::out_path(o, "metrics.csv"), retrieval::format_report_csv(report));
    io::write_text_atomic(detail::out_path(o, "metrics.txt"), retrieval::format_report_table(report));
    out << retrieval::format_report_table(report);
    return kExitOk;
}

inline int cmd_rank(const Options& o, std::ostream& out) {
    if (o.query.empty() == o.query_id.empty()) {
        fail(ErrorCode::InvalidConfig, "rank needs exactly one of --query or --query-id");
    }
    const auto model = detail::load_model(o);
    const auto l = detail::load_data(o);
    train::check_dataset(l.data);
    detail::check_model_fits(model, l.data);
    const auto index = retrieval::build_index(l.data, model.audio);

    Eigen::VectorXd raw;
    if (!o.query.empty()) {
        if (!l.toy) {
            fail(ErrorCode::InvalidConfig, "--query text needs --encoder toy; use --query-id with dumps");
        }
        raw = encoder::embed_caption(o.query, l.toy->vocab, l.toy->text);
    } else {
        const auto at = l.captions.index_by_id();
        auto it = at.find(o.query_id);
        if (it == at.end()) {
            fail(ErrorCode::UnknownTargetId, "no caption embedding with id " + o.query_id);
        }
        raw = pipeline::detail::to_vector(l.captions.row(it->second));
    }
    const auto query = space::project(raw, model.text);
    const auto result = retrieval::rank(query, index, o.target, o.query.empty() ? o.query_id : o.query);
    const auto scores = index.scores(query);

    std::string csv = "rank,clip_id,score\n";
    const auto shown = std::min<std::size_t>(static_cast<std::size_t>(std::max(o.top, 0)), result.ranked_ids.size());
    for (std::size_t i = 0; i < result.ranked_ids.size(); ++i) {
        const auto& id = result.ranked_ids[i];
        const double s = scores(static_cast<Eigen::Index>(*index.position(id)));
        csv += detail::fmt("%zu,%s,%.9f\n", i + 1, id.c_str(), s);
        if (i < shown) {
            out << detail::fmt("%4zu  %-24s %.6f\n", i + 1, id.c_str(), s);
        }
    }
    if (!o.target.empty()) {
        out << "target " << o.target << " at rank " << result.rank_of_target << "\n";
    }
    detail::ensure_out_dir(o);
    io::write_text_atomic(detail::out_path(o, "ranking.csv"), csv);
    return kExitOk;
}

inline int cmd_gradcheck(const Options& o, std::ostream& out) {
    std::vector<gradcheck::Shape> shapes;
    for (const auto& s : o.shapes) {
        shapes.push_back(detail::parse_shape(s));
    }
    if (shapes.empty()) {
        shapes.assign(gradcheck::kDefaultShapes.begin(), gradcheck::kDefaultShapes.end());
    }
    if (o.seeds < 1) {
        fail(ErrorCode::InvalidConfig, "--seeds must be >= 1");
    }
    const auto results = gradcheck::run(shapes, o.seed, o.seeds, o.perturb);
    for (const auto& shape : shapes) {
        double err = 0.0, norm = 0.0;
        for (const auto& r : results) {
            if (r.shape.n == shape.n && r.shape.d_in == shape.d_in && r.shape.d_out == shape.d_out) {
                err = std::max(err, r.max_rel_error);
                norm = std::max(norm, r.grad_norm);
            }
        }
        out << detail::fmt("shape (%d,%d,%d): max relative error %.3e, max gradient norm %.3e\n", shape.n, shape.d_in,
                           shape.d_out, err, norm);
    }
    const double worst = gradcheck::max_error(results);
    const bool pass = worst < gradcheck::kTolerance;
    out << detail::fmt("gradcheck: %zu checks, max relative error %.3e (tolerance %.0e): %s\n", results.size(), worst,
                       gradcheck::kTolerance, pass ? "PASS" : "FAIL");
    return pass ? kExitOk : kExitCheckFailed;
}

inline int cmd_ablate(const Options& o, std::ostream& out) {
    if (o.datasets.empty() || o.held_out.empty()) {
        fail(ErrorCode::InvalidConfig, "ablate needs --dataset name=<dump dir> (repeatable) and --held-out <dump dir>");
    }
    auto cfg = o.train;
    cfg.seed = o.seed;
    if (o.epochs >= 0) {
        cfg.pretrain_epochs = o.epochs;
    }
    cfg.validate();

    auto load_dir = [](const fs::path& dir) {
        return pipeline::dataset_from_dumps(ingest::read_embedding_dump(dir / std::string(kAudioDump)),
                                            ingest::read_embedding_dump(dir / std::string(kCaptionDump)));
    };
    std::vector<std::pair<std::string, train::Dataset>> sets;
    for (const auto& spec : o.datasets) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size()) {
            fail(ErrorCode::InvalidConfig, "--dataset must be name=<dump dir>, got '" + spec + "'");
        }
        sets.emplace_back(spec.substr(0, eq), load_dir(spec.substr(eq + 1)));
    }
    std::vector<std::vector<std::string>> combos;
    for (const auto& c : o.combos) {
        std::vector<std::string> names;
        std::stringstream ss(c);
        for (std::string name; std::getline(ss, name, '+');) {
            names.push_back(name);
        }
        combos.push_back(std::move(names));
    }
    if (combos.empty()) {
        std::vector<std::string> all;
        for (const auto& [name, _] : sets) {
            combos.push_back({name});
            all.push_back(name);
        }
        if (all.size() > 1) {
            combos.push_back(all);
        }
    }
    const auto held_out = load_dir(o.held_out);
    const auto rows = retrieval::ablation_run(sets, combos, held_out, cfg);
    detail::ensure_out_dir(o);
    io::write_text_atomic(detail::out_path(o, "ablation.csv"), retrieval::format_ablation_csv(rows));
    out << retrieval::format_ablation_table(rows);
    return kExitOk;
}

inline int cmd_sweep(const Options& o, std::ostream& out) {
    if (!detail::parse_encoder(o.encoder).toy || o.manifests.empty()) {
        fail(ErrorCode::InvalidConfig, "sweep needs audio: --encoder toy with --manifest");
    }
    const auto model = detail::load_model(o);
    const auto clips = detail::load_manifests(o);
    const auto toy = detail::make_toy(o);
    const auto stats = detail::whitening(o, clips);
    auto rng = make_rng(o.seed, "snippet");
    std::vector<retrieval::SweepClip> sweep;
    for (const auto& c : clips) {
        retrieval::SweepClip s{c.clip_id, dsp::whiten(pipeline::clip_spectrogram(c, rng), stats), {}};
        for (const auto& caption : c.captions) {
            s.captions.push_back(encoder::embed_caption(caption, toy->vocab, toy->text));
        }
        sweep.push_back(std::move(s));
    }
    if (model.audio.in_dim() != toy->audio.width() || model.text.in_dim() != toy->text.width()) {
        fail(ErrorCode::DimMismatch, "checkpoint does not match the toy encoder widths");
    }
    const auto rows = retrieval::segment_length_sweep(o.lengths, sweep, toy->geometry, toy->audio, model);
    detail::ensure_out_dir(o);
    io::write_text_atomic(detail::out_path(o, "sweep.csv"), retrieval::format_sweep_csv(rows));
    out << "seconds  mAP@10  segments\n";
    for (const auto& r : rows) {
        out << detail::fmt("%7g  %6.2f  %llu\n", r.seconds, 100.0 * r.map_at_10,
                           static_cast<unsigned long long>(r.segments_embedded));
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// Argument parsing

namespace detail {

inline void add_common(CLI::App& app, Options& o) {
    app.set_config("--config", "", "Flat key=value file; keys are long flag names, flags win");
    app.add_option("--seed", o.seed, "Global seed; all module seeds derive from it");
    app.add_option("--out", o.out, "Output directory");
    app.add_flag("--strict", o.strict, "Treat recoverable data problems as errors");
}

inline void add_data(CLI::App& app, Options& o) {
    app.add_option("--manifest", o.manifests, "Clip manifest CSV (repeatable)");
    app.add_option("--audio-dir", o.audio_dir, "Directory holding the audio files (default: next to the manifest)");
    app.add_option("--encoder", o.encoder, "toy | dump:<dir with audio.acre, captions.acre>");
    app.add_option("--preset", o.preset, "Patch geometry preset")
        ->check(CLI::IsMember(std::vector<std::string>(encoder::kPresetNames.begin(), encoder::kPresetNames.end())));
    app.add_option("--vocab", o.vocab, "WordPiece vocabulary file");
    app.add_option("--whiten-mean", o.whiten_mean, "Global log-mel mean (default: computed over the manifest)");
    app.add_option("--whiten-std", o.whiten_std, "Global log-mel standard deviation");
}

inline void add_training(CLI::App& app, Options& o) {
    auto& t = o.train;
    app.add_option("--epochs", o.epochs, "Epochs for this phase");
    app.add_option("--batch-size", t.batch_size);
    app.add_option("--warmup-epochs", t.warmup_epochs);
    app.add_option("--lr-max", t.lr_max);
    app.add_option("--lr-min", t.lr_min);
    app.add_option("--finetune-lr-max", t.finetune_lr_max);
    app.add_option("--swap-prob", t.swap_prob);
    app.add_option("--temperature", t.temperature);
    app.add_option("--shared-dim", t.shared_dim);
}

inline void configure(CLI::App& app, Options& o) {
    add_common(app, o);
    const auto& c = o.command;
    if (c == "synth") {
        app.add_option("--clips", o.clips);
        app.add_option("--captions", o.captions, "Captions per clip");
        app.add_option("--variants", o.variants, "Augmented variants per caption");
        app.add_option("--noise", o.noise, "Gaussian noise standard deviation");
        app.add_option("--pairing", o.pairing, "aligned | identical | unrelated");
        app.add_option("--view-seed", o.view_seed, "Seed of the two random views (share it across splits)");
        app.add_option("--latent-dim", o.latent_dim);
        app.add_option("--audio-dim", o.audio_dim);
        app.add_option("--text-dim", o.text_dim);
        app.add_option("--id-prefix", o.id_prefix);
        return;
    }
    if (c == "gradcheck") {
        app.add_option("--seeds", o.seeds, "Number of consecutive seeds starting at --seed");
        app.add_option("--shape", o.shapes, "N,D_in,D_out (repeatable)");
        app.add_flag("--perturb-gradient", o.perturb)->group("");  // negative-control hook
        return;
    }
    if (c == "ablate") {
        add_training(app, o);
        app.add_option("--dataset", o.datasets, "name=<dump dir> (repeatable)");
        app.add_option("--combo", o.combos, "Dataset names joined by '+' (repeatable)");
        app.add_option("--held-out", o.held_out, "Dump dir of the evaluation set");
        return;
    }
    add_data(app, o);
    if (c == "preprocess") {
        app.add_flag("--cache", o.cache, "Also write the log-mel spectrogram cache");
        return;
    }
    if (c == "embed") {
        app.add_option("--augmented-captions", o.augmented_captions, "JSONL augmented captions");
        app.add_flag("--text-only", o.text_only, "Skip audio");
        return;
    }
    app.add_option("--checkpoint", o.checkpoint, "Checkpoint file");
    if (c == "train" || c == "finetune") {
        add_training(app, o);
        if (c == "finetune") {
            app.add_option("--augmented-captions", o.augmented_captions, "Augmented captions (JSONL or embedding dump)");
        }
    } else if (c == "rank") {
        app.add_option("--query", o.query, "Caption text (toy encoder)");
        app.add_option("--query-id", o.query_id, "Caption embedding id, <clip>#<k>");
        app.add_option("--target", o.target, "Report the rank of this clip");
        app.add_option("--top", o.top, "Rows to print");
    } else if (c == "sweep") {
        app.add_option("--lengths", o.lengths, "Segment lengths in seconds")->delimiter(',');
    }
}

inline std::string usage() {
    std::string s = "usage: acre <command> [options]\ncommands:";
    for (auto c : kCommands) {
        s += " ";
        s += c;
    }
    return s + "\nrun 'acre <command> --help' for the options of a command\n";
}

inline int dispatch(const Options& o, std::ostream& out, std::ostream& err) {
    const auto& c = o.command;
    if (c == "synth") return cmd_synth(o, out);
    if (c == "preprocess") return cmd_preprocess(o, out);
    if (c == "embed") return cmd_embed(o, out);
    if (c == "train") return cmd_train(o, out, err, train::Phase::Pretrain);
    if (c == "finetune") return cmd_train(o, out, err, train::Phase::Finetune);
    if (c == "evaluate") return cmd_evaluate(o, out);
    if (c == "rank") return cmd_rank(o, out);
    if (c == "gradcheck") return cmd_gradcheck(o, out);
    if (c == "ablate") return cmd_ablate(o, out);
    return cmd_sweep(o, out);
}

}  // namespace detail

/// args[0] is the command name (no program name).
inline int run(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    if (args.empty() || args[0] == "--help" || args[0] == "-h") {
        (args.empty() ? err : out) << detail::usage();
        return args.empty() ? kExitInputError : kExitOk;
    }
    Options o;
    o.command = args[0];
    if (std::find(kCommands.begin(), kCommands.end(), o.command) == kCommands.end()) {
        err << "error: InvalidArgument: unknown command '" << o.command << "'\n" << detail::usage();
        return kExitInputError;
    }
    CLI::App app("acre " + o.command, "acre " + o.command);
    detail::configure(app, o);
    try {
        std::vector<std::string> rest(args.begin() + 1, args.end());
        std::reverse(rest.begin(), rest.end());  // CLI11 consumes a reversed vector
        app.parse(rest);
        for (const char* name : {"--whiten-mean", "--whiten-std"}) {
            const auto* opt = app.get_option_no_throw(name);
            o.has_whitening = o.has_whitening || (opt != nullptr && opt->count() > 0);
        }
        return detail::dispatch(o, out, err);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: InvalidArgument: " << detail::one_line(e.what()) << "\n";
        return kExitInputError;
    } catch (const Error& e) {
        err << "error: " << detail::one_line(e.what()) << "\n";
        return kExitInputError;
    } catch (const fs::filesystem_error& e) {
        err << "error: " << to_string(ErrorCode::MissingFile) << ": " << detail::one_line(e.what()) << "\n";
        return kExitInputError;
    } catch (const std::exception& e) {
        err << "error: Internal: " << detail::one_line(e.what()) << "\n";
        return kExitInputError;
    }
}

inline int run(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    return run(std::vector<std::string>(argv + 1, argv + argc), out, err);
}

}  // namespace acre::app

#pragma once

// Two-phase contrastive training of the projection heads over frozen encoder
// outputs: pretraining, then finetuning with random swaps of a caption for one
// of its keyword-augmented rephrasings.

#include "acre/binary_io.hpp"
#include "acre/error.hpp"
#include "acre/optim.hpp"
#include "acre/rng.hpp"
#include "acre/space.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace acre::train {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using space::ProjectionHead;

enum class Phase { Pretrain, Finetune };

struct TrainConfig {
    int batch_size = 64;
    int pretrain_epochs = 16;
    int warmup_epochs = 1;
    double lr_max = 2e-5;
    double lr_min = 1e-7;
    int finetune_epochs = 5;
    double finetune_lr_max = 8e-6;
    double swap_prob = 0.3;
    double temperature = 1.0;
    int shared_dim = space::kSharedDim;
    std::uint64_t seed = 0;
    bool strict = false;

    void validate() const {
        auto bad = [](const std::string& what) { fail(ErrorCode::InvalidConfig, what); };
        if (batch_size < 1) bad("batch_size must be >= 1");
        if (pretrain_epochs < 0 || finetune_epochs < 0 || warmup_epochs < 0) bad("epoch counts must be >= 0");
        if (!(swap_prob >= 0.0 && swap_prob <= 1.0)) bad("swap_prob must lie in [0, 1]");
        if (!(lr_min < lr_max) || !(lr_min < finetune_lr_max)) bad("lr_min must be below the maximum learning rates");
        if (!(temperature > 0.0)) bad("temperature must be positive");
        if (shared_dim < 1) bad("shared_dim must be positive");
    }

    /// Stable text form; its FNV-1a hash is recorded in checkpoints.
    std::string canonical() const {
        char buf[512];
        std::snprintf(buf, sizeof(buf),
                      "batch_size=%d;pretrain_epochs=%d;warmup_epochs=%d;lr_max=%.17g;lr_min=%.17g;"
                      "finetune_epochs=%d;finetune_lr_max=%.17g;swap_prob=%.17g;temperature=%.17g;"
                      "shared_dim=%d;seed=%llu",
                      batch_size, pretrain_epochs, warmup_epochs, lr_max, lr_min, finetune_epochs, finetune_lr_max,
                      swap_prob, temperature, shared_dim, static_cast<unsigned long long>(seed));
        return buf;
    }

    std::uint64_t hash() const { return fnv1a64(canonical()); }
};

/// Frozen-encoder outputs for one clip: its audio embedding and caption embeddings.
struct ClipEmbeddings {
    std::string clip_id;
    VectorXd audio;
    std::vector<VectorXd> captions;
};

using Dataset = std::vector<ClipEmbeddings>;

/// (clip_id, caption_index) -> embeddings of the augmented rephrasings.
class AugmentationMap {
public:
    void add(const std::string& clip_id, int caption_index, std::vector<VectorXd> variants) {
        map_[key(clip_id, caption_index)] = std::move(variants);
    }

    const std::vector<VectorXd>* find(const std::string& clip_id, int caption_index) const {
        auto it = map_.find(key(clip_id, caption_index));
        return it == map_.end() || it->second.empty() ? nullptr : &it->second;
    }

    bool empty() const noexcept { return map_.empty(); }
    std::size_t size() const noexcept { return map_.size(); }

private:
    static std::string key(const std::string& clip_id, int caption_index) {
        return clip_id + '\x1f' + std::to_string(caption_index);
    }

    std::unordered_map<std::string, std::vector<VectorXd>> map_;
};

struct SampledCaption {
    const VectorXd* embedding = nullptr;
    int caption_index = 0;
    int variant = -1;  // index into the augmented set when swapped
    bool swapped = false;
    bool swap_unavailable = false;  // a swap was drawn but no variants exist
};

/// Picks one caption per clip appearance. Caption choice, swap decision and
/// variant choice use independent streams, so swap_prob = 0 leaves the caption
/// stream identical to pretraining.
class CaptionSampler {
public:
    CaptionSampler(std::uint64_t seed, Phase phase, double swap_prob, const AugmentationMap* augmentations,
                   bool strict = false)
        : caption_rng_(make_rng(seed, "caption")),
          swap_rng_(make_rng(seed, "swap")),
          variant_rng_(make_rng(seed, "variant")),
          phase_(phase),
          swap_prob_(swap_prob),
          augmentations_(augmentations),
          strict_(strict) {}

    SampledCaption draw(const ClipEmbeddings& clip) {
        if (clip.captions.empty()) {
            fail(ErrorCode::EmptyDataset, "clip " + clip.clip_id + " has no captions");
        }
        SampledCaption s;
        std::uniform_int_distribution<int> pick(0, static_cast<int>(clip.captions.size()) - 1);
        s.caption_index = pick(caption_rng_);
        s.embedding = &clip.captions[static_cast<std::size_t>(s.caption_index)];
        if (phase_ != Phase::Finetune) {
            return s;
        }
        std::bernoulli_distribution swap(swap_prob_);
        if (!swap(swap_rng_)) {
            return s;
        }
        const auto* variants = augmentations_ ? augmentations_->find(clip.clip_id, s.caption_index) : nullptr;
        if (variants == nullptr) {
            if (strict_) {
                fail(ErrorCode::MissingAugmentation, "no augmented captions for " + clip.clip_id + " caption " +
                                                         std::to_string(s.caption_index));
            }
            s.swap_unavailable = true;
            return s;
        }
        std::uniform_int_distribution<int> pick_variant(0, static_cast<int>(variants->size()) - 1);
        s.variant = pick_variant(variant_rng_);
        s.embedding = &(*variants)[static_cast<std::size_t>(s.variant)];
        s.swapped = true;
        return s;
    }

private:
    Rng caption_rng_;
    Rng swap_rng_;
    Rng variant_rng_;
    Phase phase_;
    double swap_prob_;
    const AugmentationMap* augmentations_;
    bool strict_;
};

/// Trainable state: both heads plus optimizer state.
struct Model {
    ProjectionHead audio;
    ProjectionHead text;
    optim::AdamState adam;

    static Model init(int audio_dim, int text_dim, int shared_dim, std::uint64_t seed) {
        auto audio_rng = make_rng(seed, "audio-head");
        auto text_rng = make_rng(seed, "text-head");
        return {ProjectionHead::init(audio_dim, shared_dim, audio_rng),
                ProjectionHead::init(text_dim, shared_dim, text_rng), {}};
    }
};

struct StepRecord {
    std::int64_t step = 0;
    double lr = 0.0;
    double loss = 0.0;
};

struct TrainResult {
    Model model;
    std::vector<StepRecord> log;
    /// Reference loss (see reference_loss) before training, after the first
    /// epoch and after the last one, as (epoch, loss) pairs.
    std::vector<std::pair<int, double>> reference_losses;
    std::size_t captions_drawn = 0;
    std::size_t captions_swapped = 0;
    std::size_t swaps_unavailable = 0;
};

inline void check_dataset(const Dataset& data) {
    if (data.empty()) {
        fail(ErrorCode::EmptyDataset, "training set is empty");
    }
    const auto da = data.front().audio.size();
    const auto dt = data.front().captions.empty() ? 0 : data.front().captions.front().size();
    for (const auto& clip : data) {
        if (clip.audio.size() != da) {
            fail(ErrorCode::DimMismatch, "clip " + clip.clip_id + " audio embedding has a different width");
        }
        if (clip.captions.empty()) {
            fail(ErrorCode::EmptyDataset, "clip " + clip.clip_id + " has no captions");
        }
        for (const auto& c : clip.captions) {
            if (c.size() != dt) {
                fail(ErrorCode::DimMismatch, "clip " + clip.clip_id + " caption embedding has a different width");
            }
        }
    }
}

/// Mean loss over the dataset in order, first caption of each clip, in chunks
/// of `batch_size` (last chunk kept).
inline double reference_loss(const Dataset& data, const Model& model, int batch_size, double temperature) {
    double total = 0.0;
    int chunks = 0;
    for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(batch_size)) {
        const auto n = std::min(data.size() - start, static_cast<std::size_t>(batch_size));
        MatrixXd x(static_cast<Eigen::Index>(n), data.front().audio.size());
        MatrixXd y(static_cast<Eigen::Index>(n), data.front().captions.front().size());
        for (std::size_t i = 0; i < n; ++i) {
            x.row(static_cast<Eigen::Index>(i)) = data[start + i].audio.transpose();
            y.row(static_cast<Eigen::Index>(i)) = data[start + i].captions.front().transpose();
        }
        total += space::batch_loss(x, y, model.audio, model.text, temperature).value;
        ++chunks;
    }
    return total / chunks;
}

namespace detail {

inline void adam_update(Model& model, const space::LossGradients& g, double lr) {
    const std::span<double> params[] = {
        {model.audio.weight.data(), static_cast<std::size_t>(model.audio.weight.size())},
        {model.audio.bias.data(), static_cast<std::size_t>(model.audio.bias.size())},
        {model.text.weight.data(), static_cast<std::size_t>(model.text.weight.size())},
        {model.text.bias.data(), static_cast<std::size_t>(model.text.bias.size())},
    };
    const std::span<const double> grads[] = {
        {g.audio.weight.data(), static_cast<std::size_t>(g.audio.weight.size())},
        {g.audio.bias.data(), static_cast<std::size_t>(g.audio.bias.size())},
        {g.text.weight.data(), static_cast<std::size_t>(g.text.weight.size())},
        {g.text.bias.data(), static_cast<std::size_t>(g.text.bias.size())},
    };
    optim::adam_step(params, grads, model.adam, lr);
}

}  // namespace detail

/// Runs one phase. Each epoch shuffles the clips, draws one caption per clip
/// and steps Adam once per full batch (the incomplete tail batch is dropped).
/// The learning rate follows lr_at per optimization step; finetuning has no warmup.
inline TrainResult train(const Dataset& data, Model model, const TrainConfig& cfg, Phase phase,
                         const AugmentationMap* augmentations = nullptr) {
    cfg.validate();
    check_dataset(data);
    if (phase == Phase::Finetune && cfg.swap_prob > 0.0 && cfg.strict &&
        (augmentations == nullptr || augmentations->empty())) {
        fail(ErrorCode::MissingAugmentation, "finetuning with swap_prob > 0 requires augmented captions");
    }
    if (data.front().audio.size() != model.audio.in_dim() ||
        data.front().captions.front().size() != model.text.in_dim()) {
        fail(ErrorCode::DimMismatch, "model input widths do not match the dataset embeddings");
    }

    const int epochs = phase == Phase::Pretrain ? cfg.pretrain_epochs : cfg.finetune_epochs;
    const int batch = std::min<int>(cfg.batch_size, static_cast<int>(data.size()));
    const std::int64_t per_epoch = static_cast<std::int64_t>(data.size()) / batch;
    const std::int64_t total = per_epoch * epochs;
    optim::Schedule schedule;
    schedule.warmup_steps = phase == Phase::Pretrain ? per_epoch * std::min(cfg.warmup_epochs, epochs) : 0;
    schedule.lr_max = phase == Phase::Pretrain ? cfg.lr_max : cfg.finetune_lr_max;
    schedule.lr_min = cfg.lr_min;

    TrainResult result;
    result.model = std::move(model);
    result.log.reserve(static_cast<std::size_t>(total));
    result.reference_losses.emplace_back(0, reference_loss(data, result.model, batch, cfg.temperature));

    auto order_rng = make_rng(cfg.seed, "shuffle");
    CaptionSampler sampler(cfg.seed, phase, cfg.swap_prob, augmentations, cfg.strict);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    const auto da = data.front().audio.size();
    const auto dt = data.front().captions.front().size();
    MatrixXd x(batch, da);
    MatrixXd y(batch, dt);
    std::int64_t step = 0;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), order_rng);
        for (std::int64_t b = 0; b < per_epoch; ++b) {
            for (int i = 0; i < batch; ++i) {
                const auto& clip = data[order[static_cast<std::size_t>(b * batch + i)]];
                const auto s = sampler.draw(clip);
                ++result.captions_drawn;
                result.captions_swapped += s.swapped ? 1 : 0;
                result.swaps_unavailable += s.swap_unavailable ? 1 : 0;
                x.row(i) = clip.audio.transpose();
                y.row(i) = s.embedding->transpose();
            }
            const auto grads =
                space::loss_gradients(x, y, result.model.audio, result.model.text, cfg.temperature);
            ++step;
            const double lr = optim::lr_at(step, total, schedule);
            detail::adam_update(result.model, grads, lr);
            result.log.push_back({step, lr, grads.loss.value});
        }
        if (epoch == 0 || epoch + 1 == epochs) {
            result.reference_losses.emplace_back(epoch + 1,
                                                 reference_loss(data, result.model, batch, cfg.temperature));
        }
    }
    return result;
}

inline std::string format_loss_csv(std::span<const StepRecord> log) {
    std::string out = "step,lr,loss\n";
    char buf[96];
    for (const auto& r : log) {
        std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g\n", static_cast<long long>(r.step), r.lr, r.loss);
        out += buf;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoint
//
//   "ACKP" | u32 version = 1 | u32 audio_in | u32 text_in | u32 shared_dim
//   | u64 config_hash | u64 adam_step | u32 has_moments
//   | audio W (row-major) | audio b | text W | text b
//   | if has_moments: m and v for the same four tensors, same layout
//
// Values are little-endian 32-bit floats, so a loaded checkpoint re-saves to
// identical bytes.

inline constexpr std::string_view kCheckpointMagic = "ACKP";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    Model model;
    std::uint64_t config_hash = 0;
};

namespace detail {

inline void put_matrix(io::ByteWriter& w, const MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            w.f32(static_cast<float>(m(r, c)));
        }
    }
}

inline void put_vector(io::ByteWriter& w, const VectorXd& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        w.f32(static_cast<float>(v(i)));
    }
}

inline MatrixXd get_matrix(io::ByteReader& r, Eigen::Index rows, Eigen::Index cols) {
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) {
            m(i, j) = r.f32();
        }
    }
    return m;
}

inline VectorXd get_vector(io::ByteReader& r, Eigen::Index n) {
    VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        v(i) = r.f32();
    }
    return v;
}

// Adam slots hold weights in Eigen's column-major order.
inline MatrixXd slot_as_matrix(const std::vector<double>& slot, Eigen::Index rows, Eigen::Index cols) {
    return Eigen::Map<const MatrixXd>(slot.data(), rows, cols);
}

inline std::vector<double> matrix_as_slot(const MatrixXd& m) { return {m.data(), m.data() + m.size()}; }

}  // namespace detail

inline std::vector<char> serialize_checkpoint(const Model& model, std::uint64_t config_hash) {
    const auto& a = model.audio;
    const auto& t = model.text;
    if (a.out_dim() != t.out_dim()) {
        fail(ErrorCode::DimMismatch, "heads map to different widths");
    }
    io::ByteWriter w;
    w.bytes(kCheckpointMagic);
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(a.in_dim()));
    w.u32(static_cast<std::uint32_t>(t.in_dim()));
    w.u32(static_cast<std::uint32_t>(a.out_dim()));
    w.u64(config_hash);
    w.u64(model.adam.step);
    const bool has_moments = !model.adam.slots.empty();
    w.u32(has_moments ? 1 : 0);
    detail::put_matrix(w, a.weight);
    detail::put_vector(w, a.bias);
    detail::put_matrix(w, t.weight);
    detail::put_vector(w, t.bias);
    if (has_moments) {
        if (model.adam.slots.size() != 4) {
            fail(ErrorCode::ShapeMismatch, "optimizer state does not match the two heads");
        }
        for (int which = 0; which < 2; ++which) {
            auto slot = [&](int k) -> const std::vector<double>& {
                return which == 0 ? model.adam.slots[static_cast<std::size_t>(k)].m
                                  : model.adam.slots[static_cast<std::size_t>(k)].v;
            };
            detail::put_matrix(w, detail::slot_as_matrix(slot(0), a.out_dim(), a.in_dim()));
            detail::put_vector(w, Eigen::Map<const VectorXd>(slot(1).data(), a.out_dim()));
            detail::put_matrix(w, detail::slot_as_matrix(slot(2), t.out_dim(), t.in_dim()));
            detail::put_vector(w, Eigen::Map<const VectorXd>(slot(3).data(), t.out_dim()));
        }
    }
    return w.data();
}

inline Checkpoint parse_checkpoint(std::span<const char> data, const std::string& origin) {
    io::ByteReader r(data, origin);
    if (data.size() < 4 || r.bytes(4) != kCheckpointMagic) {
        fail(ErrorCode::BadMagic, origin + ": not a checkpoint");
    }
    if (r.u32() != kCheckpointVersion) {
        fail(ErrorCode::CorruptHeader, origin + ": unsupported checkpoint version");
    }
    const Eigen::Index audio_in = r.u32();
    const Eigen::Index text_in = r.u32();
    const Eigen::Index out = r.u32();
    if (audio_in == 0 || text_in == 0 || out == 0) {
        fail(ErrorCode::CorruptHeader, origin + ": zero dimension in header");
    }
    Checkpoint ck;
    ck.config_hash = r.u64();
    ck.model.adam.step = r.u64();
    const auto has_moments = r.u32();
    const auto expected = static_cast<std::size_t>(out * (audio_in + text_in + 2)) * 4 * (has_moments ? 3 : 1);
    if (r.remaining() < expected) {
        fail(ErrorCode::TruncatedFile, origin + ": payload shorter than the header implies");
    }
    auto& a = ck.model.audio;
    auto& t = ck.model.text;
    a.weight = detail::get_matrix(r, out, audio_in);
    a.bias = detail::get_vector(r, out);
    t.weight = detail::get_matrix(r, out, text_in);
    t.bias = detail::get_vector(r, out);
    if (has_moments) {
        ck.model.adam.slots.resize(4);
        for (int which = 0; which < 2; ++which) {
            auto& s = ck.model.adam.slots;
            auto pick = [&](int k) -> std::vector<double>& {
                return which == 0 ? s[static_cast<std::size_t>(k)].m : s[static_cast<std::size_t>(k)].v;
            };
            pick(0) = detail::matrix_as_slot(detail::get_matrix(r, out, audio_in));
            const VectorXd ab = detail::get_vector(r, out);
            pick(1).assign(ab.data(), ab.data() + ab.size());
            pick(2) = detail::matrix_as_slot(detail::get_matrix(r, out, text_in));
            const VectorXd tb = detail::get_vector(r, out);
            pick(3).assign(tb.data(), tb.data() + tb.size());
        }
    }
    if (r.remaining() != 0) {
        fail(ErrorCode::CorruptHeader, origin + ": trailing bytes after checkpoint payload");
    }
    return ck;
}

inline void save_checkpoint(const Model& model, std::uint64_t config_hash, const std::filesystem::path& path) {
    io::write_file_atomic(path, serialize_checkpoint(model, config_hash));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return parse_checkpoint(io::read_file(path), path.string());
}

}  // namespace acre::train

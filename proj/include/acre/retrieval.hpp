#pragma once

// Text-to-audio ranking and the evaluation harnesses.
//
// Every caption is an independent query with exactly one relevant clip, so
// AP@10 reduces to the truncated reciprocal rank: 1/rank if rank <= 10, else 0.

#include "acre/dsp.hpp"
#include "acre/encoder.hpp"
#include "acre/error.hpp"
#include "acre/space.hpp"
#include "acre/train.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace acre::retrieval {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Unit-normalized audio embeddings, one row per clip.
class RetrievalIndex {
public:
    using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

    RetrievalIndex(std::vector<std::string> ids, const MatrixXd& vectors) : ids_(std::move(ids)) {
        if (static_cast<Eigen::Index>(ids_.size()) != vectors.rows()) {
            fail(ErrorCode::DimMismatch, "index needs one id per vector");
        }
        std::unordered_set<std::string> seen;
        for (std::size_t i = 0; i < ids_.size(); ++i) {
            if (!seen.insert(ids_[i]).second) {
                fail(ErrorCode::DuplicateId, "duplicate clip id " + ids_[i] + " in index");
            }
            positions_.emplace(ids_[i], i);
        }
        vectors_ = space::row_norms(vectors).cwiseInverse().asDiagonal() * vectors;
    }

    std::size_t size() const noexcept { return ids_.size(); }
    Eigen::Index dim() const noexcept { return vectors_.cols(); }
    const std::vector<std::string>& ids() const noexcept { return ids_; }
    const RowMatrix& vectors() const noexcept { return vectors_; }

    std::optional<std::size_t> position(const std::string& id) const {
        auto it = positions_.find(id);
        return it == positions_.end() ? std::nullopt : std::optional<std::size_t>(it->second);
    }

    /// Cosine similarity of `query` to every indexed clip.
    VectorXd scores(const VectorXd& query) const {
        if (ids_.empty()) {
            fail(ErrorCode::EmptyIndex, "retrieval index is empty");
        }
        if (query.size() != vectors_.cols()) {
            fail(ErrorCode::DimMismatch, "query has " + std::to_string(query.size()) + " dims, index has " +
                                             std::to_string(vectors_.cols()));
        }
        const double norm = query.norm();
        if (!(norm > 0.0)) {
            fail(ErrorCode::ZeroNormVector, "query vector has zero norm");
        }
        // Per-row dot products so a clip's score never depends on its position.
        const VectorXd unit = query / norm;
        VectorXd out(vectors_.rows());
        for (Eigen::Index i = 0; i < vectors_.rows(); ++i) {
            out(i) = vectors_.row(i).dot(unit.transpose());
        }
        return out;
    }

private:
    std::vector<std::string> ids_;
    std::unordered_map<std::string, std::size_t> positions_;
    RowMatrix vectors_;
};

struct QueryResult {
    std::string query_id;
    std::vector<std::string> ranked_ids;
    std::size_t rank_of_target = 0;  // 1-based; 0 when no target was given
};

/// a precedes b: higher score, or equal score and smaller id.
inline bool ranks_before(double score_a, const std::string& id_a, double score_b, const std::string& id_b) {
    return score_a > score_b || (score_a == score_b && id_a < id_b);
}

inline QueryResult rank(const VectorXd& query, const RetrievalIndex& index, const std::string& target_id = {},
                        std::string query_id = {}) {
    const VectorXd s = index.scores(query);
    std::vector<std::size_t> order(index.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto& ids = index.ids();
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return ranks_before(s(a), ids[a], s(b), ids[b]); });
    QueryResult r;
    r.query_id = std::move(query_id);
    r.ranked_ids.reserve(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        r.ranked_ids.push_back(ids[order[i]]);
        if (!target_id.empty() && ids[order[i]] == target_id) {
            r.rank_of_target = i + 1;
        }
    }
    if (!target_id.empty() && r.rank_of_target == 0) {
        fail(ErrorCode::UnknownTargetId, "target " + target_id + " is not in the index");
    }
    return r;
}

/// 1-based rank of `target` without a full sort: 1 + number of clips ranked before it.
inline std::size_t rank_of_target(const VectorXd& query, const RetrievalIndex& index, const std::string& target_id) {
    const auto pos = index.position(target_id);
    if (!pos) {
        fail(ErrorCode::UnknownTargetId, "target " + target_id + " is not in the index");
    }
    const VectorXd s = index.scores(query);
    const auto& ids = index.ids();
    std::size_t before = 0;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i != *pos && ranks_before(s(static_cast<Eigen::Index>(i)), ids[i], s(static_cast<Eigen::Index>(*pos)),
                                      target_id)) {
            ++before;
        }
    }
    return before + 1;
}

inline double average_precision_at_10(std::size_t rank) {
    if (rank < 1) {
        fail(ErrorCode::InvalidArgument, "rank must be >= 1");
    }
    return rank <= 10 ? 1.0 / static_cast<double>(rank) : 0.0;
}

struct MetricsReport {
    double map_at_10 = 0.0;
    double r_at_1 = 0.0;
    double r_at_5 = 0.0;
    double r_at_10 = 0.0;
    std::size_t n_queries = 0;

    friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

/// Metrics from target ranks, summed in the given order.
inline MetricsReport metrics_from_ranks(std::span<const std::size_t> ranks) {
    MetricsReport m;
    m.n_queries = ranks.size();
    if (ranks.empty()) {
        return m;
    }
    double ap = 0.0;
    std::size_t hits1 = 0, hits5 = 0, hits10 = 0;
    for (std::size_t r : ranks) {
        ap += average_precision_at_10(r);
        hits1 += r <= 1 ? 1 : 0;
        hits5 += r <= 5 ? 1 : 0;
        hits10 += r <= 10 ? 1 : 0;
    }
    const auto n = static_cast<double>(ranks.size());
    m.map_at_10 = ap / n;
    m.r_at_1 = static_cast<double>(hits1) / n;
    m.r_at_5 = static_cast<double>(hits5) / n;
    m.r_at_10 = static_cast<double>(hits10) / n;
    if (!(m.r_at_1 <= m.r_at_5 && m.r_at_5 <= m.r_at_10 && m.map_at_10 <= m.r_at_10)) {
        throw std::logic_error("metric ordering invariant violated");
    }
    return m;
}

struct Query {
    std::string id;
    VectorXd vector;
    std::string target_id;
};

/// Ranks every query against the index. Queries are processed in ascending id
/// order so the report does not depend on the caller's ordering.
inline MetricsReport evaluate(std::span<const Query> queries, const RetrievalIndex& index) {
    std::vector<std::size_t> order(queries.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return queries[a].id < queries[b].id; });
    std::vector<std::size_t> ranks;
    ranks.reserve(queries.size());
    for (std::size_t i : order) {
        ranks.push_back(rank_of_target(queries[i].vector, index, queries[i].target_id));
    }
    return metrics_from_ranks(ranks);
}

// ---------------------------------------------------------------------------
// Model-level evaluation over frozen-encoder embeddings

inline RetrievalIndex build_index(const train::Dataset& clips, const space::ProjectionHead& audio_head) {
    if (clips.empty()) {
        fail(ErrorCode::EmptyIndex, "no clips to index");
    }
    MatrixXd raw(static_cast<Eigen::Index>(clips.size()), clips.front().audio.size());
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < clips.size(); ++i) {
        raw.row(static_cast<Eigen::Index>(i)) = clips[i].audio.transpose();
        ids.push_back(clips[i].clip_id);
    }
    return RetrievalIndex(std::move(ids), space::project_rows(raw, audio_head));
}

/// One query per caption, id "<clip_id>#<caption_index>".
inline std::vector<Query> caption_queries(const train::Dataset& clips, const space::ProjectionHead& text_head) {
    std::vector<Query> queries;
    for (const auto& clip : clips) {
        for (std::size_t k = 0; k < clip.captions.size(); ++k) {
            queries.push_back({clip.clip_id + "#" + std::to_string(k), space::project(clip.captions[k], text_head),
                               clip.clip_id});
        }
    }
    return queries;
}

inline MetricsReport evaluate_model(const train::Dataset& clips, const train::Model& model) {
    const auto index = build_index(clips, model.audio);
    const auto queries = caption_queries(clips, model.text);
    return evaluate(queries, index);
}

inline std::string format_report_csv(const MetricsReport& m) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "metric,value\nmap_at_10,%.6f\nr_at_1,%.6f\nr_at_5,%.6f\nr_at_10,%.6f\nn_queries,%zu\n",
                  m.map_at_10, m.r_at_1, m.r_at_5, m.r_at_10, m.n_queries);
    return buf;
}

inline std::string format_report_table(const MetricsReport& m) {
    char buf[256];
    std::snprintf(buf, sizeof(buf),
                  "%-10s %-8s %-8s %-8s %s\n%-10.2f %-8.2f %-8.2f %-8.2f %zu\n", "mAP@10", "R@1", "R@5", "R@10",
                  "queries", 100.0 * m.map_at_10, 100.0 * m.r_at_1, 100.0 * m.r_at_5, 100.0 * m.r_at_10, m.n_queries);
    return buf;
}

// ---------------------------------------------------------------------------
// Training-set ablation

struct AblationRow {
    std::vector<std::string> datasets;
    double map_at_10 = 0.0;

    std::string label() const {
        std::string s;
        for (std::size_t i = 0; i < datasets.size(); ++i) {
            s += (i ? "+" : "") + datasets[i];
        }
        return s;
    }
};

/// Trains one model per dataset combination (pretraining phase, same config and
/// seed for every row) and reports mAP@10 on a fixed held-out set.
inline std::vector<AblationRow> ablation_run(const std::vector<std::pair<std::string, train::Dataset>>& datasets,
                                             const std::vector<std::vector<std::string>>& combos,
                                             const train::Dataset& held_out, const train::TrainConfig& cfg) {
    std::vector<AblationRow> rows;
    for (const auto& combo : combos) {
        if (combo.empty()) {
            fail(ErrorCode::InvalidArgument, "every ablation row needs at least one dataset");
        }
        train::Dataset merged;
        for (const auto& name : combo) {
            auto it = std::find_if(datasets.begin(), datasets.end(), [&](const auto& d) { return d.first == name; });
            if (it == datasets.end()) {
                fail(ErrorCode::InvalidArgument, "unknown dataset '" + name + "' in ablation combo");
            }
            merged.insert(merged.end(), it->second.begin(), it->second.end());
        }
        train::check_dataset(merged);
        auto model = train::Model::init(static_cast<int>(merged.front().audio.size()),
                                        static_cast<int>(merged.front().captions.front().size()), cfg.shared_dim,
                                        cfg.seed);
        const auto trained = train::train(merged, std::move(model), cfg, train::Phase::Pretrain);
        rows.push_back({combo, evaluate_model(held_out, trained.model).map_at_10});
    }
    return rows;
}

inline std::string format_ablation_csv(std::span<const AblationRow> rows) {
    std::string out = "datasets,map_at_10\n";
    char buf[64];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), ",%.6f\n", r.map_at_10);
        out += r.label() + buf;
    }
    return out;
}

inline constexpr double kReportedFullDataMap = 35.22;

inline std::string format_ablation_table(std::span<const AblationRow> rows) {
    std::string out = "datasets              mAP@10\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%-20s  %6.2f\n", r.label().c_str(), 100.0 * r.map_at_10);
        out += buf;
    }
    std::snprintf(buf, sizeof(buf),
                  "reference (not reproducible here): all three pretraining sets, pretrained encoders -> %.2f\n",
                  kReportedFullDataMap);
    return out + buf;
}

// ---------------------------------------------------------------------------
// Segment-length sweep

struct SweepClip {
    std::string clip_id;
    dsp::Spectrogram whitened;      // full-length whitened log-mel
    std::vector<VectorXd> captions;  // text-encoder outputs
};

struct SweepRow {
    double seconds = 0.0;
    int segment_frames = 0;
    double map_at_10 = 0.0;
    std::uint64_t segments_embedded = 0;
};

inline train::Dataset embed_sweep_clips(std::span<const SweepClip> clips, const encoder::PatchGeometry& g,
                                        const encoder::AudioEncoder& enc, int segment_frames) {
    train::Dataset data;
    for (const auto& c : clips) {
        data.push_back({c.clip_id, encoder::embed_spectrogram(c.whitened, g, enc, nullptr, segment_frames), c.captions});
    }
    return data;
}

/// For each segment length: cut every clip into segments of that many seconds,
/// average the segment embeddings, and evaluate with the trained heads.
inline std::vector<SweepRow> segment_length_sweep(std::span<const double> lengths, std::span<const SweepClip> clips,
                                                  const encoder::PatchGeometry& g, const encoder::AudioEncoder& enc,
                                                  const train::Model& model) {
    if (lengths.empty()) {
        fail(ErrorCode::InvalidArgument, "segment_length_sweep needs at least one length");
    }
    std::vector<SweepRow> rows;
    for (double seconds : lengths) {
        SweepRow row;
        row.seconds = seconds;
        row.segment_frames = dsp::segment_frames_for_seconds(seconds);
        if (row.segment_frames < g.patch_t) {
            fail(ErrorCode::InputTooShort, "segment of " + std::to_string(seconds) + " s is shorter than one patch");
        }
        const auto before = enc.encode_calls();
        const auto data = embed_sweep_clips(clips, g, enc, row.segment_frames);
        row.segments_embedded = enc.encode_calls() - before;
        row.map_at_10 = evaluate_model(data, model).map_at_10;
        rows.push_back(row);
    }
    return rows;
}

inline std::string format_sweep_csv(std::span<const SweepRow> rows) {
    std::string out = "segment_seconds,map_at_10,segments_embedded\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%g,%.6f,%llu\n", r.seconds, r.map_at_10,
                      static_cast<unsigned long long>(r.segments_embedded));
        out += buf;
    }
    return out;
}

}  // namespace acre::retrieval

#include "acre/pipeline.hpp"
#include "acre/retrieval.hpp"
#include "acre/synthetic.hpp"
#include "fixtures.hpp"
#include "test_util.hpp"

using namespace acre;
using namespace acre::retrieval;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

void expect_same(const MetricsReport& a, const oracle::Metrics& b) {
    EXPECT_EQ(a.map_at_10, b.map10);
    EXPECT_EQ(a.r_at_1, b.r1);
    EXPECT_EQ(a.r_at_5, b.r5);
    EXPECT_EQ(a.r_at_10, b.r10);
}

MatrixXd gaussian(int rows, int cols, std::mt19937_64& rng) {
    std::normal_distribution<double> d(0.0, 1.0);
    MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            m(r, c) = d(rng);
        }
    }
    return m;
}

}  // namespace

// ---------------------------------------------------------------------------
// Metrics

TEST(Metrics, AveragePrecisionIsTruncatedReciprocalRank) {
    EXPECT_EQ(average_precision_at_10(1), 1.0);
    EXPECT_EQ(average_precision_at_10(4), 0.25);
    EXPECT_EQ(average_precision_at_10(10), 0.1);
    EXPECT_EQ(average_precision_at_10(11), 0.0);
    EXPECT_ACRE_ERROR(average_precision_at_10(0), ErrorCode::InvalidArgument);
}

TEST(Metrics, HandCase) {
    const std::vector<std::size_t> ranks{1, 2, 11, 20};
    const auto m = metrics_from_ranks(ranks);
    EXPECT_DOUBLE_EQ(m.map_at_10, 0.375);
    EXPECT_EQ(m.r_at_1, 0.25);
    EXPECT_EQ(m.r_at_5, 0.5);
    EXPECT_EQ(m.r_at_10, 0.5);
    EXPECT_EQ(m.n_queries, 4u);

    const auto index = fixture::axis_index(25);
    const auto via_index = evaluate(fixture::queries_at_ranks(index, ranks), index);
    EXPECT_EQ(via_index, m);
}

TEST(Metrics, EvaluateMatchesBruteForceOnRandomPermutations) {
    std::mt19937_64 rng(17);
    const auto index = fixture::axis_index(30);
    const auto rq = fixture::random_rank_queries(index, 1000, rng);
    for (std::size_t i = 0; i < 50; ++i) {
        ASSERT_EQ(rank(rq.queries[i].vector, index, rq.queries[i].target_id).rank_of_target, rq.ranks[i]);
    }
    expect_same(evaluate(rq.queries, index), oracle::metrics(rq.ranks));
}

TEST(Metrics, OrderingInvariantsHold) {
    std::mt19937_64 rng(18);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::size_t> ranks(1 + rng() % 40);
        for (auto& r : ranks) {
            r = 1 + rng() % 30;
        }
        const auto m = metrics_from_ranks(ranks);
        ASSERT_LE(m.r_at_1, m.r_at_5);
        ASSERT_LE(m.r_at_5, m.r_at_10);
        ASSERT_LE(m.map_at_10, m.r_at_10);
        ASSERT_GE(m.map_at_10, m.r_at_1);
    }
    EXPECT_EQ(metrics_from_ranks({}).n_queries, 0u);
}

// ---------------------------------------------------------------------------
// Ranking

TEST(Rank, TiesBreakByAscendingId) {
    MatrixXd v(3, 2);
    v << 1, 0, 2, 0, 0, 1;
    const RetrievalIndex index({"b", "a", "c"}, v);
    const auto r = rank(VectorXd::Unit(2, 0), index, "b");
    EXPECT_EQ(r.ranked_ids, (std::vector<std::string>{"a", "b", "c"}));
    EXPECT_EQ(r.rank_of_target, 2u);
    EXPECT_EQ(rank_of_target(VectorXd::Unit(2, 0), index, "b"), 2u);
}

TEST(Rank, MatchesScalarSortOracle) {
    std::mt19937_64 rng(19);
    for (int trial = 0; trial < 20; ++trial) {
        const auto vecs = oracle::random_matrix(20, 8, rng);
        const auto q = oracle::random_matrix(1, 8, rng)[0];
        std::vector<std::string> ids;
        for (int i = 0; i < 20; ++i) {
            ids.push_back("id" + std::to_string((i * 7) % 20));
        }
        MatrixXd m(20, 8);
        for (int i = 0; i < 20; ++i) {
            for (int j = 0; j < 8; ++j) {
                m(i, j) = vecs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
            }
        }
        const RetrievalIndex index(ids, m);
        const VectorXd qv = Eigen::Map<const VectorXd>(q.data(), 8);
        const auto r = rank(qv, index);
        ASSERT_EQ(r.ranked_ids, oracle::sort_by_score(ids, vecs, q));
        // Full permutation of the index, and rank_of_target agrees with the sort.
        auto sorted = r.ranked_ids;
        std::sort(sorted.begin(), sorted.end());
        auto all = ids;
        std::sort(all.begin(), all.end());
        ASSERT_EQ(sorted, all);
        for (std::size_t p = 0; p < r.ranked_ids.size(); p += 3) {
            ASSERT_EQ(rank_of_target(qv, index, r.ranked_ids[p]), p + 1);
        }
    }
}

TEST(Rank, Errors) {
    const auto index = fixture::axis_index(4);
    EXPECT_ACRE_ERROR(rank(VectorXd::Ones(4), index, "nope"), ErrorCode::UnknownTargetId);
    EXPECT_ACRE_ERROR(rank_of_target(VectorXd::Ones(4), index, "nope"), ErrorCode::UnknownTargetId);
    EXPECT_ACRE_ERROR(rank(VectorXd::Ones(3), index), ErrorCode::DimMismatch);
    EXPECT_ACRE_ERROR(rank(VectorXd::Zero(4), index), ErrorCode::ZeroNormVector);
    const RetrievalIndex empty({}, MatrixXd(0, 4));
    EXPECT_ACRE_ERROR(rank(VectorXd::Ones(4), empty), ErrorCode::EmptyIndex);
    EXPECT_ACRE_ERROR(RetrievalIndex({"a", "a"}, MatrixXd::Identity(2, 2)), ErrorCode::DuplicateId);
    EXPECT_ACRE_ERROR(RetrievalIndex({"a"}, MatrixXd::Identity(2, 2)), ErrorCode::DimMismatch);
}

TEST(Evaluate, InvariantToQueryAndIndexOrder) {
    std::mt19937_64 rng(20);
    const MatrixXd audio = gaussian(40, 6, rng);
    const MatrixXd text = audio + 0.8 * gaussian(40, 6, rng);
    std::vector<std::string> ids;
    std::vector<Query> queries;
    for (int i = 0; i < 40; ++i) {
        ids.push_back("clip" + std::to_string(i));
        queries.push_back({"clip" + std::to_string(i) + "#0", text.row(i).transpose(), ids.back()});
    }
    const auto base = evaluate(queries, RetrievalIndex(ids, audio));
    EXPECT_GT(base.map_at_10, 0.0);

    std::vector<int> perm(40);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::string> pids;
    MatrixXd paudio(40, 6);
    for (int i = 0; i < 40; ++i) {
        pids.push_back(ids[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
        paudio.row(i) = audio.row(perm[static_cast<std::size_t>(i)]);
    }
    auto pq = queries;
    std::shuffle(pq.begin(), pq.end(), rng);
    EXPECT_EQ(evaluate(pq, RetrievalIndex(pids, paudio)), base);
}

TEST(Evaluate, ModelLevelPerfectAlignment) {
    synthetic::SynthOptions o;
    o.clips = 30;
    o.pairing = synthetic::Pairing::Identical;
    const auto data = synthetic::generate({8, 16, 16, 1}, o);
    auto model = train::Model::init(16, 16, 12, 3);
    model.text = model.audio;
    const auto m = evaluate_model(data, model);
    EXPECT_EQ(m.map_at_10, 1.0);
    EXPECT_EQ(m.r_at_1, 1.0);
    EXPECT_EQ(m.n_queries, 150u);
    EXPECT_NE(format_report_table(m).find("100.00"), std::string::npos);
    EXPECT_EQ(format_report_csv(m).substr(0, 13), "metric,value\n");
}

// ---------------------------------------------------------------------------
// Ablation harness

TEST(Ablation, MergedDatasetsDoNotFallBelowSingles) {
    std::vector<double> gaps;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const synthetic::LatentModel lm{16, 48, 48, 100 + seed};
        synthetic::SynthOptions o;
        o.clips = 96;
        o.noise = 0.3;
        o.seed = seed * 10 + 1;
        o.id_prefix = "a";
        const auto a = synthetic::generate(lm, o);
        o.seed = seed * 10 + 2;
        o.id_prefix = "b";
        const auto b = synthetic::generate(lm, o);
        o.seed = seed * 10 + 3;
        o.id_prefix = "h";
        o.clips = 60;
        const auto held = synthetic::generate(lm, o);

        train::TrainConfig cfg;
        cfg.seed = seed;
        cfg.batch_size = 32;
        cfg.pretrain_epochs = 20;
        cfg.lr_max = 1e-3;
        cfg.shared_dim = 32;
        const auto rows = ablation_run({{"A", a}, {"B", b}}, {{"A"}, {"B"}, {"A", "B"}}, held, cfg);
        ASSERT_EQ(rows.size(), 3u);
        EXPECT_EQ(rows[2].label(), "A+B");
        gaps.push_back(rows[2].map_at_10 - std::max(rows[0].map_at_10, rows[1].map_at_10));
    }
    std::sort(gaps.begin(), gaps.end());
    EXPECT_GE(gaps[1], -0.02);
}

TEST(Ablation, TableAndErrors) {
    const auto data = synthetic::generate({8, 16, 16, 1}, {40, 5, 0.05, synthetic::Pairing::Aligned, 1, "x"});
    train::TrainConfig cfg;
    cfg.pretrain_epochs = 1;
    cfg.shared_dim = 8;
    const auto rows = ablation_run({{"X", data}}, {{"X"}}, data, cfg);
    ASSERT_EQ(rows.size(), 1u);
    const auto table = format_ablation_table(rows);
    EXPECT_NE(table.find("35.22"), std::string::npos);
    EXPECT_EQ(format_ablation_csv(rows).rfind("datasets,map_at_10\nX,", 0), 0u);
    EXPECT_ACRE_ERROR(ablation_run({{"X", data}}, {{"Y"}}, data, cfg), ErrorCode::InvalidArgument);
    EXPECT_ACRE_ERROR(ablation_run({{"X", data}}, {{}}, data, cfg), ErrorCode::InvalidArgument);
}

// ---------------------------------------------------------------------------
// Segment-length sweep

namespace {

dsp::Spectrogram noise_spec(int frames, std::uint64_t seed) {
    dsp::Spectrogram s(frames, dsp::kMelBins);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, 1.0);
    for (auto& v : s.values) {
        v = d(rng);
    }
    return s;
}

}  // namespace

TEST(Sweep, FullDurationSegmentEqualsUnsegmentedEncoding) {
    const encoder::AudioEncoder enc({2, 1, 32, 4});
    const encoder::PatchGeometry g{16, 16, 16, 16, 0, 0, 10.0};
    const SweepClip clip{"c0", noise_spec(500, 1), {VectorXd::Ones(32)}};
    const auto data = embed_sweep_clips(std::span(&clip, 1), g, enc, 500);
    const VectorXd direct = enc.encode(encoder::extract_patches(clip.whitened, g));
    EXPECT_LT((data[0].audio - direct).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Sweep, CountsSegmentsAndStaysFinite) {
    const encoder::AudioEncoder enc({2, 1, 32, 4});
    const encoder::PatchGeometry g{16, 16, 16, 16, 0, 0, 10.0};
    std::mt19937_64 rng(3);
    std::vector<SweepClip> clips;
    clips.push_back({"long", noise_spec(dsp::frames_for_seconds(30.0), 2), {gaussian(1, 32, rng).row(0).transpose()}});
    clips.push_back({"short", noise_spec(dsp::frames_for_seconds(4.0), 3), {gaussian(1, 32, rng).row(0).transpose()}});
    const auto model = train::Model::init(32, 32, 16, 0);
    const std::vector<double> lengths{10.0, 2.0};
    const auto rows = segment_length_sweep(lengths, clips, g, enc, model);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0].segment_frames, 1000);
    EXPECT_EQ(rows[0].segments_embedded, 3u + 1u);
    EXPECT_EQ(rows[1].segments_embedded, 15u + 2u);  // ceil(2997/200), ceil(397/200)
    for (const auto& r : rows) {
        EXPECT_TRUE(std::isfinite(r.map_at_10));
    }
    const std::vector<double> too_short{0.1};
    EXPECT_ACRE_ERROR(segment_length_sweep(too_short, clips, g, enc, model), ErrorCode::InputTooShort);
    EXPECT_NE(format_sweep_csv(rows).find("10,"), std::string::npos);
}

// ---------------------------------------------------------------------------
// Dump <-> dataset plumbing

TEST(Pipeline, DatasetDumpRoundTrip) {
    const auto data = synthetic::generate({4, 6, 5, 1}, {3, 5, 0.05, synthetic::Pairing::Aligned, 2, "k"});
    const auto dumps = pipeline::dumps_from_dataset(data);
    EXPECT_EQ(dumps.audio.size(), 3u);
    EXPECT_EQ(dumps.captions.size(), 15u);
    EXPECT_EQ(dumps.captions.ids[6], "k00001#1");
    const auto back = pipeline::dataset_from_embedded(dumps);
    ASSERT_EQ(back.size(), 3u);
    EXPECT_LT((back[1].captions[4] - data[1].captions[4]).cwiseAbs().maxCoeff(), 1e-6);
    const auto subset = pipeline::dataset_from_dumps(dumps.audio, dumps.captions, std::vector<std::string>{"k00002"});
    ASSERT_EQ(subset.size(), 1u);
    EXPECT_EQ(subset[0].clip_id, "k00002");
    EXPECT_ACRE_ERROR(pipeline::dataset_from_dumps(dumps.audio, dumps.captions, std::vector<std::string>{"zz"}),
                      ErrorCode::UnknownTargetId);
    ingest::EmbeddingDump no_captions;
    no_captions.add_vector("other#0", VectorXd::Ones(5));
    EXPECT_ACRE_ERROR(pipeline::dataset_from_dumps(dumps.audio, no_captions), ErrorCode::WrongCaptionCount);
}

TEST(Pipeline, AugmentationIdsParse) {
    ingest::EmbeddingDump d;
    d.add_vector(pipeline::variant_id("a#b", 2, 1), VectorXd::Constant(3, 1.0));
    d.add_vector(pipeline::variant_id("a#b", 2, 0), VectorXd::Constant(3, 0.0));
    d.add_vector(pipeline::variant_id("c", 0, 0), VectorXd::Constant(3, 5.0));
    const auto map = pipeline::augmentations_from_dump(d);
    EXPECT_EQ(map.size(), 2u);
    const auto* v = map.find("a#b", 2);
    ASSERT_NE(v, nullptr);
    ASSERT_EQ(v->size(), 2u);
    EXPECT_EQ((*v)[0](0), 0.0);  // sorted by variant index
    EXPECT_EQ((*v)[1](0), 1.0);
    EXPECT_EQ(map.find("c", 1), nullptr);
    ingest::EmbeddingDump bad;
    bad.add_vector("plain", VectorXd::Ones(3));
    EXPECT_ACRE_ERROR(pipeline::augmentations_from_dump(bad), ErrorCode::MalformedRecord);
}

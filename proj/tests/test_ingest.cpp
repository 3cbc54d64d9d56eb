#include "acre/ingest.hpp"
#include "acre/wav.hpp"
#include "test_util.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <limits>

using namespace acre;
using ingest::ClipRecord;

namespace {

void write_text(const std::filesystem::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

const char* kHeader = "file_name,caption_1,caption_2,caption_3,caption_4,caption_5\n";

}  // namespace

// ---------------------------------------------------------------------------
// CSV and manifests

TEST(Csv, QuotedFieldsWithCommasNewlinesAndQuotes) {
    const auto rows = ingest::parse_csv("a,\"b,c\",\"say \"\"hi\"\"\"\n\"multi\nline\",x,\n", "t");
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(rows[0], (std::vector<std::string>{"a", "b,c", "say \"hi\""}));
    EXPECT_EQ(rows[1], (std::vector<std::string>{"multi\nline", "x", ""}));
}

TEST(Csv, UnterminatedQuoteIsMalformed) {
    EXPECT_ACRE_ERROR(ingest::parse_csv("a,\"open\n", "t"), ErrorCode::MalformedRecord);
}

TEST(Manifest, TwoRowsGiveTwoRecordsAndTenCaptions) {
    TempDir dir;
    write_text(dir / "m.csv", std::string(kHeader) + "a.wav,c1,c2,c3,c4,c5\nb.wav,d1,\"d2, with comma\",d3,d4,d5\n");
    const auto clips = ingest::load_manifest(dir / "m.csv");
    ASSERT_EQ(clips.size(), 2u);
    std::size_t captions = 0;
    for (const auto& c : clips) {
        captions += c.captions.size();
        EXPECT_TRUE(c.keywords.empty());
    }
    EXPECT_EQ(captions, 10u);
    EXPECT_EQ(clips[0].clip_id, "a.wav");
    EXPECT_EQ(clips[1].captions[1], "d2, with comma");
    EXPECT_EQ(clips[1].audio_path, dir / "b.wav");
}

TEST(Manifest, KeywordsColumnAndAudioDirOverride) {
    TempDir dir;
    write_text(dir / "m.csv", "keywords,file_name,caption_1,caption_2,caption_3,caption_4,caption_5\n"
                              "dog;bark; park ,x.wav,1,2,3,4,5\n");
    const auto clips = ingest::load_manifest(dir / "m.csv", std::filesystem::path("/audio"));
    ASSERT_EQ(clips.size(), 1u);
    EXPECT_EQ(clips[0].keywords, (std::vector<std::string>{"dog", "bark", "park"}));
    EXPECT_EQ(clips[0].audio_path, std::filesystem::path("/audio/x.wav"));
}

TEST(Manifest, FourCaptionCellsIsWrongCaptionCountNamingRow) {
    TempDir dir;
    write_text(dir / "m.csv", std::string(kHeader) + "a.wav,1,2,3,4,5\nb.wav,1,2,3,4\n");
    try {
        ingest::load_manifest(dir / "m.csv");
        FAIL() << "expected WrongCaptionCount";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::WrongCaptionCount);
        EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos) << e.what();
    }
}

TEST(Manifest, MissingColumnAndDuplicateId) {
    TempDir dir;
    write_text(dir / "a.csv", "file_name,caption_1,caption_2,caption_3,caption_4\nx,1,2,3,4\n");
    EXPECT_ACRE_ERROR(ingest::load_manifest(dir / "a.csv"), ErrorCode::MissingColumn);
    write_text(dir / "b.csv", std::string(kHeader) + "x,1,2,3,4,5\ny,1,2,3,4,5\nx,1,2,3,4,5\n");
    try {
        ingest::load_manifest(dir / "b.csv");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DuplicateClipId);
        EXPECT_NE(std::string(e.what()).find("row 3"), std::string::npos);
    }
    EXPECT_ACRE_ERROR(ingest::load_manifest(dir / "missing.csv"), ErrorCode::MissingFile);
}

TEST(Manifest, ParsingIsTotalEveryRowYieldsRecordOrPositionedError) {
    // Property: random manifests with some broken rows. Either all rows parse
    // (row count preserved) or the error names a row that is actually broken.
    std::mt19937_64 rng(7);
    TempDir dir;
    for (int trial = 0; trial < 50; ++trial) {
        std::string text = kHeader;
        const int rows = 1 + static_cast<int>(rng() % 8);
        int first_bad = -1;
        for (int r = 1; r <= rows; ++r) {
            const int captions = (rng() % 6 == 0) ? static_cast<int>(rng() % 5) : 5;
            if (captions != 5 && first_bad < 0) {
                first_bad = r;
            }
            text += "clip" + std::to_string(r) + ".wav";
            for (int k = 0; k < captions; ++k) {
                text += ",cap " + std::to_string(k);
            }
            text += "\n";
        }
        write_text(dir / "m.csv", text);
        if (first_bad < 0) {
            EXPECT_EQ(ingest::load_manifest(dir / "m.csv").size(), static_cast<std::size_t>(rows));
        } else {
            try {
                ingest::load_manifest(dir / "m.csv");
                FAIL();
            } catch (const Error& e) {
                EXPECT_EQ(e.code(), ErrorCode::WrongCaptionCount);
                EXPECT_NE(std::string(e.what()).find("row " + std::to_string(first_bad) + " "), std::string::npos)
                    << e.what();
            }
        }
    }
}

TEST(Manifest, FormatRoundTrips) {
    TempDir dir;
    std::vector<ClipRecord> clips(2);
    clips[0] = {"a b.wav", {}, {"one, two", "quote \"q\"", "three", "four", "five"}, {"k1", "k2"}};
    clips[1] = {"c.wav", {}, {"1", "2", "3", "4", "5"}, {}};
    write_text(dir / "m.csv", ingest::format_manifest(clips));
    const auto back = ingest::load_manifest(dir / "m.csv");
    ASSERT_EQ(back.size(), 2u);
    for (std::size_t i = 0; i < 2; ++i) {
        EXPECT_EQ(back[i].clip_id, clips[i].clip_id);
        EXPECT_EQ(back[i].captions, clips[i].captions);
        EXPECT_EQ(back[i].keywords, clips[i].keywords);
    }
}

// ---------------------------------------------------------------------------
// Augmented captions

TEST(AugmentedCaptions, OneRecordParses) {
    const auto sets = ingest::parse_augmented_captions(
        R"({"clip_id": "a.wav", "caption_index": 2, "variants": ["v1","v2","v3","v4","v5"]})", "t");
    ASSERT_EQ(sets.size(), 1u);
    EXPECT_EQ(sets[0].clip_id, "a.wav");
    EXPECT_EQ(sets[0].caption_index, 2);
    EXPECT_EQ(sets[0].variants[4], "v5");
}

TEST(AugmentedCaptions, FourVariantsIsMismatch) {
    EXPECT_ACRE_ERROR(ingest::parse_augmented_captions(
                          R"({"clip_id": "a", "caption_index": 0, "variants": ["1","2","3","4"]})", "t"),
                      ErrorCode::VariantCountMismatch);
}

TEST(AugmentedCaptions, MalformedAndDuplicateRecords) {
    EXPECT_ACRE_ERROR(ingest::parse_augmented_captions("{not json", "t"), ErrorCode::MalformedRecord);
    EXPECT_ACRE_ERROR(ingest::parse_augmented_captions(R"({"clip_id": "a", "caption_index": 5, "variants": []})", "t"),
                      ErrorCode::MalformedRecord);
    const std::string rec = R"({"clip_id": "a", "caption_index": 0, "variants": ["1","2","3","4","5"]})";
    EXPECT_ACRE_ERROR(ingest::parse_augmented_captions(rec + "\n" + rec + "\n", "t"), ErrorCode::DuplicateId);
}

TEST(AugmentedCaptions, UnknownClipIsNotAnErrorAndBlankLinesAreSkipped) {
    const std::string rec = R"({"clip_id": "nowhere", "caption_index": 1, "variants": ["1","2","3","4","5"]})";
    EXPECT_EQ(ingest::parse_augmented_captions("\n" + rec + "\n\n", "t").size(), 1u);
}

TEST(AugmentedCaptions, FullDevelopmentSetCountIs96000) {
    // 3840 clips x 5 captions, each with 5 variants.
    std::vector<ingest::AugmentedCaptionSet> sets;
    for (int c = 0; c < 3840; ++c) {
        for (int k = 0; k < 5; ++k) {
            sets.push_back({"clip" + std::to_string(c), k, {"a", "b", "c", "d", "e"}});
        }
    }
    const auto parsed = ingest::parse_augmented_captions(ingest::format_augmented_captions(sets), "t");
    EXPECT_EQ(ingest::total_variants(parsed), 96000u);
}

// ---------------------------------------------------------------------------
// WAV

TEST(Wav, Pcm16OneSecond) {
    TempDir dir;
    std::vector<float> samples(32000, 0.25f);
    io::write_file_atomic(dir / "a.wav", ingest::encode_wav(samples, 1, 32000, WavEncoding::Pcm16));
    const auto w = ingest::read_wav(dir / "a.wav");
    EXPECT_EQ(w.size(), 32000u);
    EXPECT_EQ(w.sample_rate, 32000);
    EXPECT_DOUBLE_EQ(w.duration(), 1.0);
    EXPECT_EQ(w.samples[100], 0.25f);
}

TEST(Wav, Int16MinimumMapsToMinusOneExactly) {
    const std::vector<float> samples{-1.0f, 0.5f, 32767.0f / 32768.0f};
    const auto w = ingest::decode_wav(ingest::encode_wav(samples, 1, 16000, WavEncoding::Pcm16), "t");
    EXPECT_EQ(w.samples[0], -1.0f);
    EXPECT_EQ(w.samples[1], 0.5f);
    EXPECT_EQ(w.samples[2], 32767.0f / 32768.0f);
}

TEST(Wav, StereoOppositeChannelsMixToZero) {
    std::vector<float> inter;
    for (int i = 0; i < 1000; ++i) {
        inter.push_back(0.5f);
        inter.push_back(-0.5f);
    }
    const auto w = ingest::decode_wav(ingest::encode_wav(inter, 2, 32000, WavEncoding::Pcm16), "t");
    ASSERT_EQ(w.size(), 1000u);
    for (float s : w.samples) {
        EXPECT_EQ(s, 0.0f);
    }
}

TEST(Wav, MixdownIsLinearForArbitrarySignals) {
    // Property: channels c and -c average to zero within 1 ulp, for float and PCM input.
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> u(-1.0f, 1.0f);
    for (auto enc : {WavEncoding::Float32, WavEncoding::Pcm16}) {
        std::vector<float> inter;
        for (int i = 0; i < 4096; ++i) {
            const float c = enc == WavEncoding::Pcm16 ? std::round(u(rng) * 32767.0f) / 32768.0f : u(rng);
            inter.push_back(c);
            inter.push_back(-c);
        }
        const auto w = ingest::decode_wav(ingest::encode_wav(inter, 2, 32000, enc), "t");
        for (float s : w.samples) {
            EXPECT_LE(std::abs(s), std::numeric_limits<float>::denorm_min());
        }
    }
}

TEST(Wav, Float32RoundTripsBitExactly) {
    std::vector<float> samples{0.1f, -0.7f, 1e-7f, 0.999f};
    const auto w = ingest::decode_wav(ingest::encode_wav(samples, 1, 32000, WavEncoding::Float32), "t");
    EXPECT_EQ(w.samples, samples);
}

TEST(Wav, UnsupportedEncodingAndCorruptHeaders) {
    auto bytes = ingest::encode_wav(std::vector<float>(8, 0.0f), 1, 32000, WavEncoding::Pcm16);
    auto alaw = bytes;
    alaw[20] = 6;  // format tag: A-law
    EXPECT_ACRE_ERROR(ingest::decode_wav(alaw, "t"), ErrorCode::UnsupportedEncoding);
    auto not_riff = bytes;
    not_riff[0] = 'X';
    EXPECT_ACRE_ERROR(ingest::decode_wav(not_riff, "t"), ErrorCode::CorruptHeader);
    std::vector<char> tiny(bytes.begin(), bytes.begin() + 8);
    EXPECT_ACRE_ERROR(ingest::decode_wav(tiny, "t"), ErrorCode::CorruptHeader);
    std::vector<char> no_data(bytes.begin(), bytes.begin() + 36);
    EXPECT_ACRE_ERROR(ingest::decode_wav(no_data, "t"), ErrorCode::CorruptHeader);
}

// ---------------------------------------------------------------------------
// Embedding dumps

namespace {

ingest::EmbeddingDump random_dump(std::size_t n, std::uint32_t dim, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> d(0.0f, 3.0f);
    ingest::EmbeddingDump dump;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<float> v(dim);
        for (auto& x : v) {
            x = d(rng);
        }
        dump.add("id-" + std::to_string(i) + (i % 3 == 0 ? "-\xC3\xA9" : ""), v);
    }
    return dump;
}

}  // namespace

TEST(EmbeddingDump, TenVectorsOfDim1024RoundTrip) {
    TempDir dir;
    const auto dump = random_dump(10, 1024, 1);
    ingest::write_embedding_dump(dump, dir / "d.acre");
    const auto back = ingest::read_embedding_dump(dir / "d.acre");
    EXPECT_EQ(back, dump);
    EXPECT_EQ(back.dim, 1024u);
    EXPECT_EQ(back.size(), 10u);
}

TEST(EmbeddingDump, RoundTripIsBitExactProperty) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        auto dump = random_dump(1 + rng() % 20, 1 + static_cast<std::uint32_t>(rng() % 50), rng());
        // Include awkward but finite bit patterns.
        dump.values[0] = -0.0f;
        dump.values.back() = std::numeric_limits<float>::denorm_min();
        const auto back = ingest::parse_dump(ingest::serialize_dump(dump), "t");
        ASSERT_EQ(back.ids, dump.ids);
        ASSERT_EQ(back.values.size(), dump.values.size());
        for (std::size_t i = 0; i < dump.values.size(); ++i) {
            ASSERT_EQ(std::bit_cast<std::uint32_t>(back.values[i]), std::bit_cast<std::uint32_t>(dump.values[i]));
        }
    }
}

TEST(EmbeddingDump, ExactByteLayout) {
    ingest::EmbeddingDump dump;
    dump.add("ab", std::vector<float>{1.0f, -2.0f});
    const auto bytes = ingest::serialize_dump(dump);
    const std::vector<unsigned char> expected{'A', 'C', 'R', 'E', 1, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 0, 0, 0, 0,
                                              2,   0,   'a', 'b', 0, 0, 0x80, 0x3f, 0, 0, 0, 0xc0};
    ASSERT_EQ(bytes.size(), expected.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        EXPECT_EQ(static_cast<unsigned char>(bytes[i]), expected[i]) << "byte " << i;
    }
}

TEST(EmbeddingDump, BadMagicTruncationAndTrailingBytes) {
    auto bytes = ingest::serialize_dump(random_dump(3, 4, 2));
    auto bad = bytes;
    bad[1] = 'X';
    EXPECT_ACRE_ERROR(ingest::parse_dump(bad, "t"), ErrorCode::BadMagic);
    std::vector<char> cut(bytes.begin(), bytes.end() - 3);
    EXPECT_ACRE_ERROR(ingest::parse_dump(cut, "t"), ErrorCode::TruncatedFile);
    auto extra = bytes;
    extra.push_back(0);
    EXPECT_ACRE_ERROR(ingest::parse_dump(extra, "t"), ErrorCode::CorruptHeader);
}

TEST(EmbeddingDump, NanAndInconsistentDimsRejectedOnWrite) {
    TempDir dir;
    auto dump = random_dump(2, 3, 4);
    dump.values[4] = std::numeric_limits<float>::quiet_NaN();
    EXPECT_ACRE_ERROR(ingest::write_embedding_dump(dump, dir / "x.acre"), ErrorCode::DimMismatch);
    EXPECT_FALSE(std::filesystem::exists(dir / "x.acre"));
    ingest::EmbeddingDump mixed;
    mixed.add("a", std::vector<float>{1, 2, 3});
    EXPECT_ACRE_ERROR(mixed.add("b", std::vector<float>{1, 2}), ErrorCode::DimMismatch);
    EXPECT_ACRE_ERROR(ingest::write_embedding_dump(ingest::EmbeddingDump{}, dir / "e.acre"), ErrorCode::DimMismatch);
    auto dup = random_dump(2, 3, 5);
    dup.ids[1] = dup.ids[0];
    EXPECT_ACRE_ERROR(ingest::serialize_dump(dup), ErrorCode::DuplicateId);
}

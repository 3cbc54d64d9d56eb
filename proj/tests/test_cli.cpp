#include "acre/app.hpp"
#include "acre/wav.hpp"
#include "test_util.hpp"

#include <cstdlib>
#include <sstream>

using namespace acre;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code = 0;
    std::string out;
    std::string err;
};

RunResult cli(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = app::run(std::move(args), out, err);
    return {code, out.str(), err.str()};
}

std::string path_str(const fs::path& p) { return p.string(); }

void write_text(const fs::path& p, const std::string& text) { io::write_text_atomic(p, text); }

/// Two short sine clips and a manifest next to them.
fs::path write_wav_manifest(const TempDir& dir) {
    for (int c = 0; c < 2; ++c) {
        std::vector<float> s(static_cast<std::size_t>(dsp::kSampleRate * (1.5 + c)));
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i] = 0.3f * static_cast<float>(std::sin(2.0 * 3.141592653589793 * (440.0 * (c + 1)) * i / dsp::kSampleRate));
        }
        io::write_file_atomic(dir / ("clip" + std::to_string(c) + ".wav"),
                              ingest::encode_wav(s, 1, dsp::kSampleRate, WavEncoding::Pcm16));
    }
    write_text(dir / "m.csv",
               "file_name,caption_1,caption_2,caption_3,caption_4,caption_5\n"
               "clip0.wav,a dog barks,rain falls,a bell rings,wind blows,people talk\n"
               "clip1.wav,a car passes,birds sing,water flows,a door shuts,music plays\n");
    return dir / "m.csv";
}

void synth(const fs::path& out, const std::vector<std::string>& extra) {
    std::vector<std::string> args{"synth", "--out", path_str(out), "--latent-dim", "8", "--audio-dim", "16",
                                  "--text-dim", "16"};
    args.insert(args.end(), extra.begin(), extra.end());
    const auto r = cli(args);
    ASSERT_EQ(r.code, 0) << r.err;
}

std::string dump_encoder(const fs::path& dir) { return "dump:" + dir.string(); }

}  // namespace

TEST(Cli, UsageAndUnknownCommand) {
    EXPECT_EQ(cli({}).code, app::kExitInputError);
    EXPECT_EQ(cli({"--help"}).code, 0);
    const auto r = cli({"frobnicate"});
    EXPECT_EQ(r.code, app::kExitInputError);
    EXPECT_EQ(r.err.rfind("error: InvalidArgument:", 0), 0u);
    const auto h = cli({"train", "--help"});
    EXPECT_EQ(h.code, 0);
    EXPECT_NE(h.out.find("--swap-prob"), std::string::npos);
}

TEST(Cli, BadOptionIsSingleLineInputError) {
    const auto r = cli({"train", "--batch-size", "many"});
    EXPECT_EQ(r.code, app::kExitInputError);
    EXPECT_EQ(r.err.rfind("error: ", 0), 0u);
    EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1);
}

TEST(Cli, EmbedManifestWritesOneVectorPerClipAndCaption) {
    TempDir dir;
    const auto manifest = write_wav_manifest(dir);
    const auto a = cli({"embed", "--manifest", path_str(manifest), "--out", path_str(dir / "a"), "--seed", "4"});
    ASSERT_EQ(a.code, 0) << a.err;
    const auto audio = ingest::read_embedding_dump(dir / "a" / "audio.acre");
    const auto captions = ingest::read_embedding_dump(dir / "a" / "captions.acre");
    EXPECT_EQ(audio.size(), 2u);
    EXPECT_EQ(captions.size(), 10u);
    EXPECT_EQ(audio.ids[1], "clip1.wav");
    EXPECT_EQ(captions.ids[7], "clip1.wav#2");

    const auto b = cli({"embed", "--manifest", path_str(manifest), "--out", path_str(dir / "b"), "--seed", "4"});
    ASSERT_EQ(b.code, 0) << b.err;
    for (const char* f : {"audio.acre", "captions.acre", "run.cfg"}) {
        EXPECT_EQ(io::read_file(dir / "a" / f), io::read_file(dir / "b" / f)) << f;
    }
}

TEST(Cli, EmbedMissingAudioNamesThePath) {
    TempDir dir;
    const auto manifest = write_wav_manifest(dir);
    fs::remove(dir / "clip1.wav");
    const auto r = cli({"embed", "--manifest", path_str(manifest), "--out", path_str(dir / "o")});
    EXPECT_EQ(r.code, app::kExitInputError);
    EXPECT_EQ(r.err.rfind("error: MissingFile:", 0), 0u) << r.err;
    EXPECT_NE(r.err.find("clip1.wav"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir / "o" / "audio.acre"));
}

TEST(Cli, PreprocessConfigFeedsEmbed) {
    TempDir dir;
    const auto manifest = write_wav_manifest(dir);
    ASSERT_EQ(cli({"preprocess", "--manifest", path_str(manifest), "--out", path_str(dir / "p")}).code, 0);
    const auto cfg = io::read_text_file(dir / "p" / "run.cfg");
    EXPECT_NE(cfg.find("whiten-mean="), std::string::npos);
    const auto a = cli({"embed", "--manifest", path_str(manifest), "--out", path_str(dir / "a")});
    const auto b = cli({"embed", "--config", path_str(dir / "p" / "run.cfg"), "--manifest", path_str(manifest), "--out",
                        path_str(dir / "b")});
    ASSERT_EQ(a.code, 0) << a.err;
    ASSERT_EQ(b.code, 0) << b.err;
    // The stored statistics reproduce the computed ones exactly.
    EXPECT_EQ(io::read_file(dir / "a" / "audio.acre"), io::read_file(dir / "b" / "audio.acre"));
}

TEST(Cli, TrainZeroEpochsSavesInitialHeads) {
    TempDir dir;
    synth(dir / "d", {"--clips", "20"});
    const auto r = cli({"train", "--encoder", dump_encoder(dir / "d"), "--epochs", "0", "--shared-dim", "32", "--seed",
                        "9", "--out", path_str(dir / "t")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto ck = train::load_checkpoint(dir / "t" / "checkpoint.ackp");
    const auto init = train::Model::init(16, 16, 32, 9);
    EXPECT_EQ(train::serialize_checkpoint(ck.model, ck.config_hash), train::serialize_checkpoint(init, ck.config_hash));
    EXPECT_EQ(io::read_text_file(dir / "t" / "loss.csv"), "step,lr,loss\n");
}

TEST(Cli, TrainLowersLossOnCorrelatedPairs) {
    TempDir dir;
    synth(dir / "d", {"--clips", "200", "--seed", "1"});
    const auto r = cli({"train", "--encoder", dump_encoder(dir / "d"), "--epochs", "10", "--shared-dim", "64", "--out",
                        path_str(dir / "t")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto csv = io::read_text_file(dir / "t" / "loss.csv");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 30);
    const auto data = pipeline::dataset_from_dumps(ingest::read_embedding_dump(dir / "d" / "audio.acre"),
                                                   ingest::read_embedding_dump(dir / "d" / "captions.acre"));
    const auto trained = train::load_checkpoint(dir / "t" / "checkpoint.ackp").model;
    const auto initial = train::Model::init(16, 16, 64, 0);
    EXPECT_LT(train::reference_loss(data, trained, 64, 1.0), train::reference_loss(data, initial, 64, 1.0));
}

TEST(Cli, ConfigFileValuesYieldToFlags) {
    TempDir dir;
    synth(dir / "d", {"--clips", "64"});
    write_text(dir / "run.cfg", "epochs=3\nshared-dim=8\nbatch-size=32\n");
    const auto r = cli({"train", "--config", path_str(dir / "run.cfg"), "--encoder", dump_encoder(dir / "d"),
                        "--shared-dim", "12", "--out", path_str(dir / "t")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto ck = train::load_checkpoint(dir / "t" / "checkpoint.ackp");
    EXPECT_EQ(ck.model.audio.out_dim(), 12);  // flag wins
    EXPECT_EQ(ck.model.adam.step, 3u * 2u);  // epochs and batch size from the file
}

TEST(Cli, FinetuneAugmentationPolicy) {
    TempDir dir;
    synth(dir / "plain", {"--clips", "64"});
    synth(dir / "aug", {"--clips", "64", "--variants", "2"});
    ASSERT_EQ(cli({"train", "--encoder", dump_encoder(dir / "plain"), "--epochs", "1", "--shared-dim", "8", "--out",
                   path_str(dir / "t")})
                  .code,
              0);
    const auto ck = path_str(dir / "t" / "checkpoint.ackp");

    const auto strict = cli({"finetune", "--encoder", dump_encoder(dir / "plain"), "--checkpoint", ck, "--strict",
                             "--out", path_str(dir / "f1")});
    EXPECT_EQ(strict.code, app::kExitInputError);
    EXPECT_EQ(strict.err.rfind("error: MissingAugmentation:", 0), 0u) << strict.err;

    const auto lenient = cli({"finetune", "--encoder", dump_encoder(dir / "plain"), "--checkpoint", ck, "--epochs",
                              "1", "--out", path_str(dir / "f2")});
    EXPECT_EQ(lenient.code, 0) << lenient.err;
    EXPECT_NE(lenient.err.find("warning:"), std::string::npos);

    const auto swapped = cli({"finetune", "--encoder", dump_encoder(dir / "aug"), "--checkpoint", ck, "--epochs", "5",
                              "--out", path_str(dir / "f3")});
    EXPECT_EQ(swapped.code, 0) << swapped.err;
    EXPECT_EQ(swapped.err, "");
    EXPECT_NE(swapped.out.find("swapped"), std::string::npos);

    const auto missing = cli({"finetune", "--encoder", dump_encoder(dir / "aug"), "--out", path_str(dir / "f4")});
    EXPECT_EQ(missing.code, app::kExitInputError);
}

TEST(Cli, EvaluatePerfectAlignment) {
    TempDir dir;
    synth(dir / "d", {"--clips", "30", "--pairing", "identical"});
    auto model = train::Model::init(16, 16, 24, 5);
    model.text = model.audio;
    train::save_checkpoint(model, 0, dir / "ck.ackp");
    const auto r = cli({"evaluate", "--encoder", dump_encoder(dir / "d"), "--checkpoint", path_str(dir / "ck.ackp"),
                        "--out", path_str(dir / "e")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(io::read_text_file(dir / "e" / "metrics.csv").find("map_at_10,1.000000"), std::string::npos);
}

TEST(Cli, EvaluateUnrelatedPairsIsNearChance) {
    TempDir dir;
    synth(dir / "d", {"--clips", "100", "--pairing", "unrelated", "--seed", "2"});
    ASSERT_EQ(cli({"train", "--encoder", dump_encoder(dir / "d"), "--epochs", "0", "--shared-dim", "32", "--out",
                   path_str(dir / "t")})
                  .code,
              0);
    const auto r = cli({"evaluate", "--encoder", dump_encoder(dir / "d"), "--checkpoint",
                        path_str(dir / "t" / "checkpoint.ackp"), "--out", path_str(dir / "e")});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto csv = io::read_text_file(dir / "e" / "metrics.csv");
    double map = -1.0;
    ASSERT_EQ(std::sscanf(csv.c_str(), "metric,value\nmap_at_10,%lf", &map), 1);
    EXPECT_GE(map, 0.01);
    EXPECT_LE(map, 0.12);
}

TEST(Cli, EvaluateMissingCheckpoint) {
    TempDir dir;
    synth(dir / "d", {"--clips", "10"});
    const auto r = cli({"evaluate", "--encoder", dump_encoder(dir / "d"), "--checkpoint",
                        path_str(dir / "none.ackp")});
    EXPECT_EQ(r.code, app::kExitInputError);
    EXPECT_EQ(r.err.rfind("error: MissingFile:", 0), 0u) << r.err;
}

TEST(Cli, RankByQueryId) {
    TempDir dir;
    synth(dir / "d", {"--clips", "12", "--pairing", "identical"});
    auto model = train::Model::init(16, 16, 8, 1);
    model.text = model.audio;
    train::save_checkpoint(model, 0, dir / "ck.ackp");
    const auto r = cli({"rank", "--encoder", dump_encoder(dir / "d"), "--checkpoint", path_str(dir / "ck.ackp"),
                        "--query-id", "clip00003#1", "--target", "clip00003", "--out", path_str(dir / "r")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("target clip00003 at rank 1"), std::string::npos) << r.out;
    EXPECT_TRUE(fs::exists(dir / "r" / "ranking.csv"));
}

TEST(Cli, GradcheckCommand) {
    const auto ok = cli({"gradcheck", "--seeds", "2"});
    EXPECT_EQ(ok.code, 0) << ok.out;
    EXPECT_NE(ok.out.find("PASS"), std::string::npos);
    const auto single = cli({"gradcheck", "--seeds", "1", "--shape", "1,8,4"});
    EXPECT_EQ(single.code, 0) << single.out;
    const auto bad = cli({"gradcheck", "--seeds", "1", "--perturb-gradient"});
    EXPECT_EQ(bad.code, app::kExitCheckFailed);
    EXPECT_NE(bad.out.find("FAIL"), std::string::npos);
    EXPECT_EQ(cli({"gradcheck", "--shape", "8,x,2"}).code, app::kExitInputError);
}

TEST(Cli, AblateTable) {
    TempDir dir;
    synth(dir / "a", {"--clips", "64", "--seed", "1", "--id-prefix", "a"});
    synth(dir / "b", {"--clips", "64", "--seed", "2", "--id-prefix", "b"});
    synth(dir / "h", {"--clips", "20", "--seed", "3", "--id-prefix", "h"});
    const auto r = cli({"ablate", "--dataset", "A=" + path_str(dir / "a"), "--dataset", "B=" + path_str(dir / "b"),
                        "--combo", "A", "--combo", "A+B", "--held-out", path_str(dir / "h"), "--epochs", "1",
                        "--shared-dim", "8", "--out", path_str(dir / "o")});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("A+B"), std::string::npos);
    EXPECT_NE(r.out.find("35.22"), std::string::npos);
    EXPECT_TRUE(fs::exists(dir / "o" / "ablation.csv"));
}

TEST(Cli, DeterministicTrainAndEvaluate) {
    TempDir dir;
    synth(dir / "d", {"--clips", "80", "--seed", "6"});
    for (const char* run : {"x", "y"}) {
        const auto out = dir / run;
        ASSERT_EQ(cli({"train", "--encoder", dump_encoder(dir / "d"), "--epochs", "3", "--shared-dim", "16", "--seed",
                       "2", "--out", path_str(out)})
                      .code,
                  0);
        ASSERT_EQ(cli({"evaluate", "--encoder", dump_encoder(dir / "d"), "--checkpoint",
                       path_str(out / "checkpoint.ackp"), "--out", path_str(out)})
                      .code,
                  0);
    }
    for (const char* f : {"checkpoint.ackp", "loss.csv", "metrics.csv"}) {
        EXPECT_EQ(io::read_file(dir / "x" / f), io::read_file(dir / "y" / f)) << f;
    }
}

TEST(CliBinary, ExitCodes) {
    const std::string bin = ACRE_CLI_PATH;
    auto status = [](const std::string& cmd) {
        const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
        return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
    };
    EXPECT_EQ(status(bin + " gradcheck --seeds 1"), 0);
    EXPECT_EQ(status(bin + " gradcheck --seeds 1 --perturb-gradient"), 1);
    EXPECT_EQ(status(bin + " evaluate --checkpoint /nonexistent/ck.ackp --encoder dump:/nonexistent"), 2);
    EXPECT_EQ(status(bin), 2);
}

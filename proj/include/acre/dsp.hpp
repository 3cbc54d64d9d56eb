#pragma once

// Waveform length handling and log-MEL feature extraction.
//
// Fixed analysis contract: 32 kHz input, 1024-point FFT (32 ms), hop 320 (10 ms),
// periodic Hann window, no centering, 128 triangular mel filters spanning
// 0 Hz .. Nyquist on the 2595*log10(1 + f/700) scale, natural log floored at 1e-10.

#include "acre/binary_io.hpp"
#include "acre/error.hpp"
#include "acre/ingest.hpp"
#include "acre/rng.hpp"
#include "acre/wav.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace acre::dsp {

inline constexpr int kSampleRate = 32000;
inline constexpr int kFftSize = 1024;
inline constexpr int kHop = 320;
inline constexpr int kMelBins = 128;
inline constexpr double kLogFloor = 1e-10;
inline constexpr int kFramesPerSecond = kSampleRate / kHop;

/// Log-energy matrix stored frame-major: values[frame * bins + bin].
struct Spectrogram {
    int frames = 0;
    int bins = kMelBins;
    std::vector<double> values;

    Spectrogram() = default;
    Spectrogram(int n_frames, int n_bins, double fill = 0.0)
        : frames(n_frames), bins(n_bins), values(static_cast<std::size_t>(n_frames) * n_bins, fill) {}

    double& at(int frame, int bin) { return values[static_cast<std::size_t>(frame) * bins + bin]; }
    double at(int frame, int bin) const { return values[static_cast<std::size_t>(frame) * bins + bin]; }

    std::span<const double> frame(int f) const {
        return {values.data() + static_cast<std::size_t>(f) * bins, static_cast<std::size_t>(bins)};
    }

    friend bool operator==(const Spectrogram&, const Spectrogram&) = default;
};

struct WhiteningStats {
    double mean = 0.0;
    double std = 1.0;
};

/// Frame count for an input of `samples` samples (no centering).
constexpr int frames_for_samples(std::size_t samples) {
    if (samples < static_cast<std::size_t>(kFftSize)) {
        return 0;
    }
    return 1 + static_cast<int>((samples - kFftSize) / kHop);
}

/// Frames produced by `seconds` of 32 kHz audio, e.g. 10 s -> 997, 30 s -> 2997.
inline int frames_for_seconds(double seconds) {
    return frames_for_samples(static_cast<std::size_t>(std::llround(seconds * kSampleRate)));
}

/// Segment length in frames at the nominal frame rate, e.g. 10 s -> 1000.
/// A clip of exactly that duration yields slightly fewer frames, so it fits in
/// one (padded) segment.
inline int segment_frames_for_seconds(double seconds) {
    return static_cast<int>(std::llround(seconds * kFramesPerSecond));
}

// ---------------------------------------------------------------------------
// Length normalization

/// Returns a uniformly placed contiguous snippet of exactly `max_seconds` when the
/// waveform is longer, otherwise the waveform unchanged.
inline Waveform snippet_or_pad(const Waveform& w, double max_seconds, Rng& rng) {
    if (!(max_seconds > 0.0)) {
        fail(ErrorCode::InvalidArgument, "snippet_or_pad: max_seconds must be positive");
    }
    const auto max_len = static_cast<std::size_t>(std::llround(max_seconds * w.sample_rate));
    if (w.samples.size() <= max_len) {
        return w;
    }
    std::uniform_int_distribution<std::size_t> start_dist(0, w.samples.size() - max_len);
    const std::size_t start = start_dist(rng);
    Waveform out;
    out.sample_rate = w.sample_rate;
    out.samples.assign(w.samples.begin() + static_cast<std::ptrdiff_t>(start),
                       w.samples.begin() + static_cast<std::ptrdiff_t>(start + max_len));
    return out;
}

/// Zero-pads to `target_len` samples (batch-level padding to the longest item).
inline Waveform pad(const Waveform& w, std::size_t target_len) {
    if (target_len < w.samples.size()) {
        fail(ErrorCode::InvalidArgument, "pad: target length " + std::to_string(target_len) +
                                             " is shorter than the waveform (" +
                                             std::to_string(w.samples.size()) + ")");
    }
    Waveform out = w;
    out.samples.resize(target_len, 0.0f);
    return out;
}

// ---------------------------------------------------------------------------
// Mel filterbank

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// Triangular filters over the one-sided power spectrum (n_fft/2 + 1 bins).
class MelFilterbank {
public:
    MelFilterbank(int n_mels = kMelBins, int n_fft = kFftSize, int sample_rate = kSampleRate,
                  double f_min = 0.0, double f_max = -1.0)
        : n_mels_(n_mels), n_bins_(n_fft / 2 + 1), weights_(static_cast<std::size_t>(n_mels) * (n_fft / 2 + 1)) {
        if (f_max < 0.0) {
            f_max = sample_rate / 2.0;
        }
        const double mel_lo = hz_to_mel(f_min);
        const double mel_hi = hz_to_mel(f_max);
        edges_hz_.resize(static_cast<std::size_t>(n_mels) + 2);
        for (int i = 0; i < n_mels + 2; ++i) {
            edges_hz_[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (n_mels + 1));
        }
        const double hz_per_bin = static_cast<double>(sample_rate) / n_fft;
        for (int m = 0; m < n_mels; ++m) {
            const double left = edges_hz_[m];
            const double center = edges_hz_[m + 1];
            const double right = edges_hz_[m + 2];
            for (int k = 0; k < n_bins_; ++k) {
                const double f = k * hz_per_bin;
                const double rise = (f - left) / (center - left);
                const double fall = (right - f) / (right - center);
                weights_[static_cast<std::size_t>(m) * n_bins_ + k] = std::max(0.0, std::min(rise, fall));
            }
        }
    }

    int mels() const noexcept { return n_mels_; }
    int spectrum_bins() const noexcept { return n_bins_; }
    double weight(int mel, int bin) const { return weights_[static_cast<std::size_t>(mel) * n_bins_ + bin]; }
    double center_hz(int mel) const { return edges_hz_[static_cast<std::size_t>(mel) + 1]; }

    void apply(std::span<const double> power, std::span<double> out) const {
        for (int m = 0; m < n_mels_; ++m) {
            const double* w = weights_.data() + static_cast<std::size_t>(m) * n_bins_;
            double acc = 0.0;
            for (int k = 0; k < n_bins_; ++k) {
                acc += w[k] * power[k];
            }
            out[m] = acc;
        }
    }

private:
    int n_mels_;
    int n_bins_;
    std::vector<double> edges_hz_;
    std::vector<double> weights_;
};

// ---------------------------------------------------------------------------
// Log-mel extraction

namespace detail {

struct PlanDeleter {
    void operator()(fftw_plan_s* p) const { fftw_destroy_plan(p); }
};

}  // namespace detail

/// Owns the FFT plan and filterbank. compute() is const and re-entrant: it
/// uses FFTW's new-array execute with per-call buffers.
class LogMelExtractor {
public:
    LogMelExtractor() : window_(kFftSize) {
        for (int n = 0; n < kFftSize; ++n) {
            window_[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / kFftSize);
        }
        std::vector<double> in(kFftSize);
        std::vector<std::complex<double>> out(kFftSize / 2 + 1);
        plan_.reset(fftw_plan_dft_r2c_1d(kFftSize, in.data(), reinterpret_cast<fftw_complex*>(out.data()),
                                         FFTW_ESTIMATE | FFTW_UNALIGNED));
    }

    const MelFilterbank& filterbank() const noexcept { return bank_; }

    Spectrogram compute(const Waveform& w) const {
        if (w.sample_rate != kSampleRate) {
            fail(ErrorCode::WrongSampleRate,
                 "logmel expects 32000 Hz audio, got " + std::to_string(w.sample_rate) + " Hz");
        }
        if (w.samples.size() < static_cast<std::size_t>(kFftSize)) {
            fail(ErrorCode::TooShort, "logmel needs at least 1024 samples, got " + std::to_string(w.samples.size()));
        }
        const int frames = frames_for_samples(w.samples.size());
        Spectrogram spec(frames, kMelBins);
        std::vector<double> in(kFftSize);
        std::vector<std::complex<double>> out(kFftSize / 2 + 1);
        std::vector<double> power(kFftSize / 2 + 1);
        std::vector<double> mel(kMelBins);
        for (int f = 0; f < frames; ++f) {
            const std::size_t offset = static_cast<std::size_t>(f) * kHop;
            for (int n = 0; n < kFftSize; ++n) {
                in[n] = static_cast<double>(w.samples[offset + n]) * window_[n];
            }
            fftw_execute_dft_r2c(plan_.get(), in.data(), reinterpret_cast<fftw_complex*>(out.data()));
            for (std::size_t k = 0; k < power.size(); ++k) {
                power[k] = std::norm(out[k]);
            }
            bank_.apply(power, mel);
            for (int m = 0; m < kMelBins; ++m) {
                spec.at(f, m) = std::log(std::max(mel[m], kLogFloor));
            }
        }
        return spec;
    }

private:
    std::vector<double> window_;
    MelFilterbank bank_;
    std::unique_ptr<fftw_plan_s, detail::PlanDeleter> plan_;
};

inline Spectrogram logmel(const Waveform& w) {
    static const LogMelExtractor extractor;
    return extractor.compute(w);
}

// ---------------------------------------------------------------------------
// Whitening

inline Spectrogram whiten(const Spectrogram& s, const WhiteningStats& stats) {
    if (!(stats.std > 0.0)) {
        fail(ErrorCode::InvalidArgument, "whitening std must be positive");
    }
    Spectrogram out = s;
    for (auto& v : out.values) {
        v = (v - stats.mean) / stats.std;
    }
    return out;
}

/// Streaming mean / standard deviation over every cell of many spectrograms (Welford).
class WhiteningAccumulator {
public:
    void add(const Spectrogram& s) {
        for (double v : s.values) {
            ++count_;
            const double delta = v - mean_;
            mean_ += delta / static_cast<double>(count_);
            m2_ += delta * (v - mean_);
        }
    }

    std::uint64_t count() const noexcept { return count_; }

    WhiteningStats stats() const {
        if (count_ == 0) {
            fail(ErrorCode::EmptyDataset, "no spectrogram cells accumulated");
        }
        const double var = m2_ / static_cast<double>(count_);
        return {mean_, var > 0.0 ? std::sqrt(var) : 1.0};
    }

private:
    std::uint64_t count_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

// ---------------------------------------------------------------------------
// Segmentation

/// Non-overlapping chunks of `seg_frames`; the last one is zero-padded.
inline std::vector<Spectrogram> segment(const Spectrogram& s, int seg_frames) {
    if (seg_frames < 1) {
        fail(ErrorCode::InvalidArgument, "segment length must be at least one frame");
    }
    const int count = (s.frames + seg_frames - 1) / seg_frames;
    std::vector<Spectrogram> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int c = 0; c < count; ++c) {
        Spectrogram chunk(seg_frames, s.bins, 0.0);
        const int first = c * seg_frames;
        const int n = std::min(seg_frames, s.frames - first);
        std::copy_n(s.values.begin() + static_cast<std::ptrdiff_t>(first) * s.bins,
                    static_cast<std::ptrdiff_t>(n) * s.bins, chunk.values.begin());
        out.push_back(std::move(chunk));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Spectrogram cache: the embedding-dump container with version 2 and an extra
// u32 `frames` field after the count. Every entry has dim = bins * frames.

inline constexpr std::uint32_t kSpectrogramCacheVersion = 2;

inline void write_spectrogram_cache(std::span<const std::string> ids, std::span<const Spectrogram> specs,
                                    const std::filesystem::path& path) {
    if (ids.size() != specs.size() || specs.empty()) {
        fail(ErrorCode::DimMismatch, "spectrogram cache needs one id per spectrogram");
    }
    const int frames = specs.front().frames;
    io::ByteWriter w;
    w.bytes(ingest::kDumpMagic);
    w.u32(kSpectrogramCacheVersion);
    w.u32(static_cast<std::uint32_t>(frames * kMelBins));
    w.u64(specs.size());
    w.u32(static_cast<std::uint32_t>(frames));
    for (std::size_t i = 0; i < specs.size(); ++i) {
        if (specs[i].frames != frames || specs[i].bins != kMelBins) {
            fail(ErrorCode::DimMismatch, "spectrogram " + ids[i] + " has a different shape");
        }
        w.u16(static_cast<std::uint16_t>(ids[i].size()));
        w.bytes(ids[i]);
        for (double v : specs[i].values) {
            if (!std::isfinite(v)) {
                fail(ErrorCode::DimMismatch, "non-finite value in spectrogram " + ids[i]);
            }
            w.f32(static_cast<float>(v));
        }
    }
    io::write_file_atomic(path, w.data());
}

struct SpectrogramCache {
    std::vector<std::string> ids;
    std::vector<Spectrogram> spectrograms;
};

inline SpectrogramCache read_spectrogram_cache(const std::filesystem::path& path) {
    const auto raw = io::read_file(path);
    const std::string origin = path.string();
    io::ByteReader r(raw, origin);
    if (raw.size() < 4 || r.bytes(4) != ingest::kDumpMagic) {
        fail(ErrorCode::BadMagic, origin + ": not a spectrogram cache");
    }
    if (r.u32() != kSpectrogramCacheVersion) {
        fail(ErrorCode::CorruptHeader, origin + ": not a version-2 spectrogram cache");
    }
    const auto dim = r.u32();
    const auto count = r.u64();
    const auto frames = r.u32();
    if (dim != frames * static_cast<std::uint32_t>(kMelBins) || frames == 0) {
        fail(ErrorCode::DimMismatch, origin + ": dim does not equal 128 x frames");
    }
    if (count > r.remaining() / (2 + 4ull * dim)) {
        fail(ErrorCode::TruncatedFile, origin + ": header declares " + std::to_string(count) + " entries");
    }
    SpectrogramCache cache;
    for (std::uint64_t i = 0; i < count; ++i) {
        cache.ids.push_back(r.bytes(r.u16()));
        Spectrogram s(static_cast<int>(frames), kMelBins);
        for (auto& v : s.values) {
            v = r.f32();
        }
        cache.spectrograms.push_back(std::move(s));
    }
    return cache;
}

}  // namespace acre::dsp

#pragma once

#include "acre/binary_io.hpp"
#include "acre/error.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace acre {

/// Mono PCM audio, samples nominally in [-1, 1].
struct Waveform {
    std::vector<float> samples;
    int sample_rate = 0;

    std::size_t size() const noexcept { return samples.size(); }
    double duration() const noexcept {
        return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
    }
};

enum class WavEncoding { Pcm16, Float32 };

}  // namespace acre

namespace acre::ingest {

namespace detail {

inline constexpr std::uint16_t kFormatPcm = 1;
inline constexpr std::uint16_t kFormatFloat = 3;
inline constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace detail

/// Decodes a RIFF/WAVE buffer (16-bit PCM or 32-bit IEEE float, any channel count).
/// Channels are averaged to mono; int16 samples are scaled by 1/32768.
inline Waveform decode_wav(std::span<const char> data, const std::string& origin) {
    io::ByteReader r(data, origin);
    if (data.size() < 12) {
        fail(ErrorCode::CorruptHeader, origin + ": too small for a RIFF header");
    }
    if (r.bytes(4) != "RIFF") {
        fail(ErrorCode::CorruptHeader, origin + ": missing RIFF tag");
    }
    r.u32();
    if (r.bytes(4) != "WAVE") {
        fail(ErrorCode::CorruptHeader, origin + ": missing WAVE tag");
    }

    std::uint16_t format = 0;
    std::uint16_t channels = 0;
    std::uint32_t rate = 0;
    std::uint16_t bits = 0;
    bool have_fmt = false;
    std::span<const char> payload;
    bool have_data = false;

    while (r.remaining() >= 8 && !have_data) {
        const std::string id = r.bytes(4);
        const std::uint32_t size = r.u32();
        if (size > r.remaining()) {
            fail(ErrorCode::CorruptHeader, origin + ": chunk '" + id + "' overruns the file");
        }
        const std::size_t start = r.position();
        if (id == "fmt ") {
            if (size < 16) {
                fail(ErrorCode::CorruptHeader, origin + ": fmt chunk too small");
            }
            format = r.u16();
            channels = r.u16();
            rate = r.u32();
            r.u32();  // byte rate
            r.u16();  // block align
            bits = r.u16();
            if (format == detail::kFormatExtensible) {
                if (size < 40) {
                    fail(ErrorCode::CorruptHeader, origin + ": extensible fmt chunk too small");
                }
                r.u16();  // cbSize
                r.u16();  // valid bits
                r.u32();  // channel mask
                format = r.u16();  // first two bytes of the subformat GUID
            }
            have_fmt = true;
        } else if (id == "data") {
            payload = data.subspan(start, size);
            have_data = true;
        }
        const std::size_t skip = size + (size & 1u) - (r.position() - start);
        if (!have_data) {
            r.bytes(std::min(skip, r.remaining()));
        }
    }
    if (!have_fmt || !have_data) {
        fail(ErrorCode::CorruptHeader, origin + (have_fmt ? ": no data chunk" : ": no fmt chunk"));
    }
    if (channels == 0 || rate == 0) {
        fail(ErrorCode::CorruptHeader, origin + ": zero channels or sample rate");
    }
    const bool pcm16 = format == detail::kFormatPcm && bits == 16;
    const bool f32 = format == detail::kFormatFloat && bits == 32;
    if (!pcm16 && !f32) {
        fail(ErrorCode::UnsupportedEncoding,
             origin + ": format " + std::to_string(format) + " with " + std::to_string(bits) + " bits");
    }

    const std::size_t bytes_per_sample = bits / 8;
    const std::size_t frame_bytes = bytes_per_sample * channels;
    const std::size_t frames = payload.size() / frame_bytes;
    io::ByteReader pr(payload, origin);

    Waveform w;
    w.sample_rate = static_cast<int>(rate);
    w.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (std::uint16_t ch = 0; ch < channels; ++ch) {
            if (pcm16) {
                acc += static_cast<double>(static_cast<std::int16_t>(pr.u16())) / 32768.0;
            } else {
                acc += static_cast<double>(pr.f32());
            }
        }
        w.samples[i] = static_cast<float>(acc / channels);
    }
    return w;
}

inline Waveform read_wav(const std::filesystem::path& path) {
    return decode_wav(io::read_file(path), path.string());
}

/// Encodes interleaved samples. Pcm16 rounds x*32768 and clamps to int16.
inline std::vector<char> encode_wav(std::span<const float> interleaved, int channels, int sample_rate,
                                    WavEncoding encoding) {
    if (channels <= 0 || sample_rate <= 0 || interleaved.size() % static_cast<std::size_t>(channels) != 0) {
        fail(ErrorCode::InvalidArgument, "encode_wav: bad channel count or sample rate");
    }
    const std::uint16_t bits = encoding == WavEncoding::Pcm16 ? 16 : 32;
    const std::uint32_t data_bytes = static_cast<std::uint32_t>(interleaved.size() * (bits / 8));
    io::ByteWriter w;
    w.bytes("RIFF");
    w.u32(36 + data_bytes);
    w.bytes("WAVE");
    w.bytes("fmt ");
    w.u32(16);
    w.u16(encoding == WavEncoding::Pcm16 ? detail::kFormatPcm : detail::kFormatFloat);
    w.u16(static_cast<std::uint16_t>(channels));
    w.u32(static_cast<std::uint32_t>(sample_rate));
    w.u32(static_cast<std::uint32_t>(sample_rate * channels * (bits / 8)));
    w.u16(static_cast<std::uint16_t>(channels * (bits / 8)));
    w.u16(bits);
    w.bytes("data");
    w.u32(data_bytes);
    for (float x : interleaved) {
        if (encoding == WavEncoding::Pcm16) {
            const double scaled = std::clamp(std::round(static_cast<double>(x) * 32768.0), -32768.0, 32767.0);
            w.u16(static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
        } else {
            w.f32(x);
        }
    }
    return w.data();
}

inline void write_wav(const std::filesystem::path& path, const Waveform& w,
                      WavEncoding encoding = WavEncoding::Float32) {
    io::write_file_atomic(path, encode_wav(w.samples, 1, w.sample_rate, encoding));
}

}  // namespace acre::ingest

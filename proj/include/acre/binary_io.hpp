#pragma once

#include "acre/error.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace acre::io {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

namespace detail {

template <typename T>
T to_little(T value) {
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    } else {
        return value;
    }
}

}  // namespace detail

/// Append-only little-endian byte sink.
class ByteWriter {
public:
    void u16(std::uint16_t v) { put(v); }
    void u32(std::uint32_t v) { put(v); }
    void u64(std::uint64_t v) { put(v); }
    void f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
    void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }

    const std::vector<char>& data() const noexcept { return buf_; }

private:
    template <typename T>
    void put(T v) {
        const T le = detail::to_little(v);
        char raw[sizeof(T)];
        std::memcpy(raw, &le, sizeof(T));
        buf_.insert(buf_.end(), raw, raw + sizeof(T));
    }

    std::vector<char> buf_;
};

/// Bounds-checked little-endian reader; running off the end raises TruncatedFile.
class ByteReader {
public:
    ByteReader(std::span<const char> data, std::string origin)
        : data_(data), origin_(std::move(origin)) {}

    std::uint16_t u16() { return get<std::uint16_t>(); }
    std::uint32_t u32() { return get<std::uint32_t>(); }
    std::uint64_t u64() { return get<std::uint64_t>(); }
    float f32() { return std::bit_cast<float>(get<std::uint32_t>()); }

    std::string bytes(std::size_t n) {
        require(n);
        std::string out(data_.data() + pos_, n);
        pos_ += n;
        return out;
    }

    std::size_t remaining() const noexcept { return data_.size() - pos_; }
    std::size_t position() const noexcept { return pos_; }

private:
    void require(std::size_t n) const {
        if (remaining() < n) {
            fail(ErrorCode::TruncatedFile, origin_ + ": expected " + std::to_string(n) +
                                               " more bytes at offset " + std::to_string(pos_));
        }
    }

    template <typename T>
    T get() {
        require(sizeof(T));
        T v;
        std::memcpy(&v, data_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return detail::to_little(v);
    }

    std::span<const char> data_;
    std::size_t pos_ = 0;
    std::string origin_;
};

inline std::vector<char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        fail(ErrorCode::MissingFile, "cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string read_text_file(const std::filesystem::path& path) {
    const auto raw = read_file(path);
    return {raw.begin(), raw.end()};
}

/// Writes to a sibling temp file, then renames over the destination.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const char> data) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            fail(ErrorCode::MissingFile, "cannot write " + tmp.string());
        }
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        if (!out) {
            fail(ErrorCode::MissingFile, "short write to " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

inline void write_text_atomic(const std::filesystem::path& path, std::string_view text) {
    write_file_atomic(path, std::span<const char>(text.data(), text.size()));
}

}  // namespace acre::io

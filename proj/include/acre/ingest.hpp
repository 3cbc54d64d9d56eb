#pragma once

// Dataset ingestion: caption manifests (CSV), keyword-augmented caption sets
// (JSON lines) and the binary embedding dump container.

#include "acre/binary_io.hpp"
#include "acre/error.hpp"

#include <json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace acre::ingest {

inline constexpr std::size_t kCaptionsPerClip = 5;
inline constexpr std::size_t kVariantsPerCaption = 5;

struct ClipRecord {
    std::string clip_id;
    std::filesystem::path audio_path;
    std::array<std::string, kCaptionsPerClip> captions;
    std::vector<std::string> keywords;
};

struct AugmentedCaptionSet {
    std::string clip_id;
    int caption_index = 0;
    std::array<std::string, kVariantsPerCaption> variants;
};

// ---------------------------------------------------------------------------
// CSV

/// RFC 4180 style splitter: comma separated, double-quoted fields may contain
/// commas, newlines and doubled quotes. Returns one vector of cells per record.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text, const std::string& origin) {
    std::vector<std::vector<std::string>> records;
    std::vector<std::string> row;
    std::string cell;
    bool in_quotes = false;
    bool cell_started = false;
    bool row_has_content = false;

    if (text.starts_with("\xEF\xBB\xBF")) {
        text.remove_prefix(3);
    }

    auto end_cell = [&] {
        row.push_back(std::move(cell));
        cell.clear();
        cell_started = false;
    };
    auto end_row = [&] {
        end_cell();
        if (row_has_content || row.size() > 1 || !row.front().empty()) {
            records.push_back(std::move(row));
        }
        row.clear();
        row_has_content = false;
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cell.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                cell.push_back(c);
            }
            continue;
        }
        switch (c) {
        case '"':
            if (cell_started && !cell.empty()) {
                fail(ErrorCode::MalformedRecord,
                     origin + ": stray quote in record " + std::to_string(records.size() + 1));
            }
            in_quotes = true;
            cell_started = true;
            row_has_content = true;
            break;
        case ',':
            end_cell();
            row_has_content = true;
            break;
        case '\r':
            break;
        case '\n':
            end_row();
            break;
        default:
            cell.push_back(c);
            cell_started = true;
            row_has_content = true;
        }
    }
    if (in_quotes) {
        fail(ErrorCode::MalformedRecord, origin + ": unterminated quoted field");
    }
    if (cell_started || !row.empty()) {
        end_row();
    }
    return records;
}

inline std::vector<std::string> split_keywords(const std::string& cell) {
    std::vector<std::string> out;
    std::stringstream ss(cell);
    std::string kw;
    while (std::getline(ss, kw, ';')) {
        const auto b = kw.find_first_not_of(" \t");
        const auto e = kw.find_last_not_of(" \t");
        if (b != std::string::npos) {
            out.push_back(kw.substr(b, e - b + 1));
        }
    }
    return out;
}

/// Loads a caption manifest with header
/// `file_name,caption_1,...,caption_5[,keywords]` (column order is free).
/// Audio paths resolve against `audio_dir`, defaulting to the manifest's folder.
inline std::vector<ClipRecord> load_manifest(const std::filesystem::path& path,
                                             std::optional<std::filesystem::path> audio_dir = std::nullopt) {
    const std::string origin = path.string();
    const auto records = parse_csv(io::read_text_file(path), origin);
    if (records.empty()) {
        fail(ErrorCode::MissingColumn, origin + ": row 0 (header): file is empty");
    }
    const auto& header = records.front();
    auto column = [&](const std::string& name) -> std::optional<std::size_t> {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) {
                return i;
            }
        }
        return std::nullopt;
    };

    const auto file_col = column("file_name");
    if (!file_col) {
        fail(ErrorCode::MissingColumn, origin + ": row 0 (header): missing column file_name");
    }
    std::array<std::size_t, kCaptionsPerClip> caption_cols{};
    for (std::size_t k = 0; k < kCaptionsPerClip; ++k) {
        const std::string name = "caption_" + std::to_string(k + 1);
        const auto col = column(name);
        if (!col) {
            fail(ErrorCode::MissingColumn, origin + ": row 0 (header): missing column " + name);
        }
        caption_cols[k] = *col;
    }
    const auto keyword_col = column("keywords");
    const auto base = audio_dir.value_or(path.parent_path());

    std::vector<ClipRecord> clips;
    clips.reserve(records.size() - 1);
    std::unordered_set<std::string> seen;
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& row = records[r];
        const std::string where = origin + ": row " + std::to_string(r);
        if (row.size() > header.size()) {
            fail(ErrorCode::MalformedRecord, where + ": " + std::to_string(row.size()) +
                                                 " cells but header has " + std::to_string(header.size()));
        }
        auto cell = [&](std::size_t col) -> const std::string* {
            return col < row.size() ? &row[col] : nullptr;
        };

        const auto* file_name = cell(*file_col);
        if (file_name == nullptr || file_name->empty()) {
            fail(ErrorCode::MalformedRecord, where + ": empty file_name");
        }
        ClipRecord clip;
        clip.clip_id = *file_name;
        clip.audio_path = base / *file_name;

        std::size_t present = 0;
        for (std::size_t k = 0; k < kCaptionsPerClip; ++k) {
            const auto* c = cell(caption_cols[k]);
            if (c != nullptr && !c->empty()) {
                clip.captions[k] = *c;
                ++present;
            }
        }
        if (present != kCaptionsPerClip) {
            fail(ErrorCode::WrongCaptionCount,
                 where + " (" + clip.clip_id + "): expected 5 captions, found " + std::to_string(present));
        }
        if (keyword_col) {
            if (const auto* kw = cell(*keyword_col)) {
                clip.keywords = split_keywords(*kw);
            }
        }
        if (!seen.insert(clip.clip_id).second) {
            fail(ErrorCode::DuplicateClipId, where + ": duplicate clip id " + clip.clip_id);
        }
        clips.push_back(std::move(clip));
    }
    return clips;
}

inline std::string csv_escape(const std::string& cell) {
    if (cell.find_first_of(",\"\n\r") == std::string::npos) {
        return cell;
    }
    std::string out = "\"";
    for (char c : cell) {
        if (c == '"') {
            out += "\"\"";
        } else {
            out += c;
        }
    }
    return out + "\"";
}

/// Inverse of load_manifest (audio paths are written as bare file names).
inline std::string format_manifest(std::span<const ClipRecord> clips) {
    std::string out = "file_name,caption_1,caption_2,caption_3,caption_4,caption_5,keywords\n";
    for (const auto& clip : clips) {
        out += csv_escape(clip.clip_id);
        for (const auto& c : clip.captions) {
            out += ',' + csv_escape(c);
        }
        std::string kws;
        for (std::size_t i = 0; i < clip.keywords.size(); ++i) {
            kws += (i ? ";" : "") + clip.keywords[i];
        }
        out += ',' + csv_escape(kws) + '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Augmented captions: one JSON object per line,
// {"clip_id": "...", "caption_index": 0..4, "variants": [5 strings]}

inline std::vector<AugmentedCaptionSet> parse_augmented_captions(std::string_view text, const std::string& origin) {
    std::vector<AugmentedCaptionSet> sets;
    std::unordered_set<std::string> seen;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string_view::npos) {
            if (end == text.size()) {
                break;
            }
            continue;
        }
        const std::string where = origin + ": line " + std::to_string(line_no);

        nlohmann::json rec;
        try {
            rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            fail(ErrorCode::MalformedRecord, where + ": " + e.what());
        }
        if (!rec.is_object() || !rec.contains("clip_id") || !rec["clip_id"].is_string() ||
            !rec.contains("caption_index") || !rec["caption_index"].is_number_integer() ||
            !rec.contains("variants") || !rec["variants"].is_array()) {
            fail(ErrorCode::MalformedRecord, where + ": expected {clip_id, caption_index, variants}");
        }
        AugmentedCaptionSet set;
        set.clip_id = rec["clip_id"].get<std::string>();
        set.caption_index = rec["caption_index"].get<int>();
        if (set.caption_index < 0 || set.caption_index >= static_cast<int>(kCaptionsPerClip)) {
            fail(ErrorCode::MalformedRecord, where + ": caption_index out of range 0..4");
        }
        const auto& variants = rec["variants"];
        if (variants.size() != kVariantsPerCaption) {
            fail(ErrorCode::VariantCountMismatch, where + " (" + set.clip_id + "): expected 5 variants, found " +
                                                      std::to_string(variants.size()));
        }
        for (std::size_t v = 0; v < kVariantsPerCaption; ++v) {
            if (!variants[v].is_string()) {
                fail(ErrorCode::MalformedRecord, where + ": variant " + std::to_string(v) + " is not a string");
            }
            set.variants[v] = variants[v].get<std::string>();
        }
        if (!seen.insert(set.clip_id + '\x1f' + std::to_string(set.caption_index)).second) {
            fail(ErrorCode::DuplicateId, where + ": duplicate (" + set.clip_id + ", " +
                                             std::to_string(set.caption_index) + ")");
        }
        sets.push_back(std::move(set));
        if (end == text.size()) {
            break;
        }
    }
    return sets;
}

inline std::vector<AugmentedCaptionSet> load_augmented_captions(const std::filesystem::path& path) {
    return parse_augmented_captions(io::read_text_file(path), path.string());
}

inline std::string format_augmented_captions(std::span<const AugmentedCaptionSet> sets) {
    std::string out;
    for (const auto& s : sets) {
        nlohmann::json rec;
        rec["clip_id"] = s.clip_id;
        rec["caption_index"] = s.caption_index;
        rec["variants"] = s.variants;
        out += rec.dump() + '\n';
    }
    return out;
}

inline std::size_t total_variants(std::span<const AugmentedCaptionSet> sets) {
    return sets.size() * kVariantsPerCaption;
}

// ---------------------------------------------------------------------------
// Embedding dump
//
//   "ACRE" | u32 version = 1 | u32 dim | u64 count
//   count x ( u16 id_len | id bytes (UTF-8) | dim x f32 )
//
// All integers and floats little-endian.

inline constexpr std::string_view kDumpMagic = "ACRE";
inline constexpr std::uint32_t kDumpVersion = 1;

struct EmbeddingDump {
    std::uint32_t dim = 0;
    std::vector<std::string> ids;
    std::vector<float> values;  // row-major, ids.size() x dim

    std::size_t size() const noexcept { return ids.size(); }

    std::span<const float> row(std::size_t i) const { return {values.data() + i * dim, dim}; }

    void add(std::string id, std::span<const float> vec) {
        if (dim == 0 && ids.empty()) {
            dim = static_cast<std::uint32_t>(vec.size());
        }
        if (vec.size() != dim) {
            fail(ErrorCode::DimMismatch, "entry " + id + " has " + std::to_string(vec.size()) +
                                             " values, dump dim is " + std::to_string(dim));
        }
        ids.push_back(std::move(id));
        values.insert(values.end(), vec.begin(), vec.end());
    }

    template <typename Vec>
    void add_vector(std::string id, const Vec& vec) {
        std::vector<float> tmp(static_cast<std::size_t>(vec.size()));
        for (std::size_t i = 0; i < tmp.size(); ++i) {
            tmp[i] = static_cast<float>(vec[static_cast<decltype(vec.size())>(i)]);
        }
        add(std::move(id), tmp);
    }

    std::unordered_map<std::string, std::size_t> index_by_id() const {
        std::unordered_map<std::string, std::size_t> m;
        m.reserve(ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            m.emplace(ids[i], i);
        }
        return m;
    }

    friend bool operator==(const EmbeddingDump&, const EmbeddingDump&) = default;
};

inline void validate_dump(const EmbeddingDump& dump) {
    if (dump.ids.empty()) {
        fail(ErrorCode::DimMismatch, "embedding dump is empty");
    }
    if (dump.dim == 0) {
        fail(ErrorCode::DimMismatch, "embedding dim must be positive");
    }
    if (dump.values.size() != dump.ids.size() * dump.dim) {
        fail(ErrorCode::DimMismatch, "payload holds " + std::to_string(dump.values.size()) + " values for " +
                                         std::to_string(dump.ids.size()) + " entries of dim " +
                                         std::to_string(dump.dim));
    }
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < dump.ids.size(); ++i) {
        const auto& id = dump.ids[i];
        if (id.size() > 0xFFFF) {
            fail(ErrorCode::DimMismatch, "id longer than 65535 bytes at entry " + std::to_string(i));
        }
        if (!seen.insert(id).second) {
            fail(ErrorCode::DuplicateId, "duplicate id " + id);
        }
        for (float v : dump.row(i)) {
            if (!std::isfinite(v)) {
                fail(ErrorCode::DimMismatch, "non-finite value in entry " + id);
            }
        }
    }
}

inline std::vector<char> serialize_dump(const EmbeddingDump& dump) {
    validate_dump(dump);
    io::ByteWriter w;
    w.bytes(kDumpMagic);
    w.u32(kDumpVersion);
    w.u32(dump.dim);
    w.u64(dump.ids.size());
    for (std::size_t i = 0; i < dump.ids.size(); ++i) {
        w.u16(static_cast<std::uint16_t>(dump.ids[i].size()));
        w.bytes(dump.ids[i]);
        for (float v : dump.row(i)) {
            w.f32(v);
        }
    }
    return w.data();
}

inline EmbeddingDump parse_dump(std::span<const char> data, const std::string& origin) {
    io::ByteReader r(data, origin);
    if (data.size() < 4 || r.bytes(4) != kDumpMagic) {
        fail(ErrorCode::BadMagic, origin + ": not an embedding dump");
    }
    const auto version = r.u32();
    if (version != kDumpVersion) {
        fail(ErrorCode::CorruptHeader, origin + ": unsupported dump version " + std::to_string(version));
    }
    EmbeddingDump dump;
    dump.dim = r.u32();
    const auto count = r.u64();
    if (dump.dim == 0) {
        fail(ErrorCode::DimMismatch, origin + ": dim is zero");
    }
    // Each entry needs at least 2 + 4*dim bytes; reject absurd counts before allocating.
    if (count > r.remaining() / (2 + 4ull * dump.dim)) {
        fail(ErrorCode::TruncatedFile, origin + ": header declares " + std::to_string(count) + " entries");
    }
    dump.ids.reserve(count);
    dump.values.reserve(count * dump.dim);
    for (std::uint64_t i = 0; i < count; ++i) {
        const auto len = r.u16();
        dump.ids.push_back(r.bytes(len));
        for (std::uint32_t k = 0; k < dump.dim; ++k) {
            dump.values.push_back(r.f32());
        }
    }
    if (r.remaining() != 0) {
        fail(ErrorCode::CorruptHeader, origin + ": " + std::to_string(r.remaining()) + " trailing bytes");
    }
    return dump;
}

inline void write_embedding_dump(const EmbeddingDump& dump, const std::filesystem::path& path) {
    io::write_file_atomic(path, serialize_dump(dump));
}

inline EmbeddingDump read_embedding_dump(const std::filesystem::path& path) {
    return parse_dump(io::read_file(path), path.string());
}

}  // namespace acre::ingest

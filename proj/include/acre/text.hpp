#pragma once

// Caption preprocessing: Unicode-aware lowercasing / punctuation stripping and
// greedy longest-match-first WordPiece tokenization.

#include "acre/binary_io.hpp"
#include "acre/error.hpp"
#include "acre/unicode_tables.hpp"

#include <algorithm>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace acre::text {

// ---------------------------------------------------------------------------
// UTF-8

/// Decodes UTF-8; malformed sequences are dropped byte by byte.
inline std::u32string decode_utf8(std::string_view s) {
    std::u32string out;
    out.reserve(s.size());
    std::size_t i = 0;
    while (i < s.size()) {
        const auto b0 = static_cast<unsigned char>(s[i]);
        int len = 0;
        char32_t cp = 0;
        if (b0 < 0x80) {
            len = 1;
            cp = b0;
        } else if ((b0 & 0xE0) == 0xC0) {
            len = 2;
            cp = b0 & 0x1F;
        } else if ((b0 & 0xF0) == 0xE0) {
            len = 3;
            cp = b0 & 0x0F;
        } else if ((b0 & 0xF8) == 0xF0) {
            len = 4;
            cp = b0 & 0x07;
        } else {
            ++i;
            continue;
        }
        if (i + static_cast<std::size_t>(len) > s.size()) {
            ++i;
            continue;
        }
        bool ok = true;
        for (int k = 1; k < len; ++k) {
            const auto b = static_cast<unsigned char>(s[i + k]);
            if ((b & 0xC0) != 0x80) {
                ok = false;
                break;
            }
            cp = (cp << 6) | (b & 0x3F);
        }
        static constexpr char32_t kMinForLen[] = {0, 0, 0x80, 0x800, 0x10000};
        if (!ok || cp < kMinForLen[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
            ++i;
            continue;
        }
        out.push_back(cp);
        i += static_cast<std::size_t>(len);
    }
    return out;
}

inline void append_utf8(std::string& out, char32_t cp) {
    if (cp < 0x80) {
        out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else if (cp < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
}

inline std::string encode_utf8(std::u32string_view s) {
    std::string out;
    for (char32_t cp : s) {
        append_utf8(out, cp);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Character classes

inline bool is_punctuation(char32_t cp) {
    const auto& table = unicode_tables::kPunctuation;
    auto it = std::upper_bound(table.begin(), table.end(), cp,
                               [](char32_t c, const unicode_tables::CodeRange& r) { return c < r.first; });
    return it != table.begin() && cp <= std::prev(it)->last;
}

inline bool is_whitespace(char32_t cp) {
    switch (cp) {
    case U' ': case U'\t': case U'\n': case U'\r': case U'\v': case U'\f':
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029: case 0x202F: case 0x205F: case 0x3000:
        return true;
    default:
        return cp >= 0x2000 && cp <= 0x200A;
    }
}

inline char32_t to_lower(char32_t cp) {
    if (cp < 0x80) {
        return (cp >= U'A' && cp <= U'Z') ? cp + 32 : cp;
    }
    const auto& table = unicode_tables::kLowercase;
    auto it = std::lower_bound(table.begin(), table.end(), cp,
                               [](const unicode_tables::CaseMapping& m, char32_t c) { return m.from < c; });
    return (it != table.end() && it->from == cp) ? it->to : cp;
}

/// Lowercases, drops punctuation (Unicode P* plus ASCII symbols), collapses
/// whitespace runs to one space and trims.
inline std::string normalize_text(std::string_view caption) {
    std::string out;
    bool pending_space = false;
    for (char32_t cp : decode_utf8(caption)) {
        if (is_whitespace(cp)) {
            pending_space = true;
            continue;
        }
        if (is_punctuation(cp)) {
            continue;
        }
        if (pending_space && !out.empty()) {
            out.push_back(' ');
        }
        pending_space = false;
        append_utf8(out, to_lower(cp));
    }
    return out;
}

// ---------------------------------------------------------------------------
// WordPiece

inline constexpr std::size_t kMaxContentTokens = 32;
inline constexpr std::string_view kClassToken = "[CLS]";
inline constexpr std::string_view kUnknownToken = "[UNK]";
inline constexpr std::string_view kContinuationPrefix = "##";

struct TokenSeq {
    std::vector<int> ids;  // ids[0] is always the class token

    std::size_t size() const noexcept { return ids.size(); }
    std::size_t content_size() const noexcept { return ids.empty() ? 0 : ids.size() - 1; }
    friend bool operator==(const TokenSeq&, const TokenSeq&) = default;
};

/// One piece per line, id = zero-based line number. Word-initial pieces are
/// bare; continuation pieces carry a "##" prefix. Must contain [CLS] and [UNK].
class Vocabulary {
public:
    explicit Vocabulary(std::vector<std::string> pieces) : pieces_(std::move(pieces)) {
        for (std::size_t i = 0; i < pieces_.size(); ++i) {
            if (!ids_.emplace(pieces_[i], static_cast<int>(i)).second) {
                fail(ErrorCode::DuplicateId, "vocabulary piece '" + pieces_[i] + "' appears twice");
            }
        }
        cls_ = require(kClassToken);
        unk_ = require(kUnknownToken);
    }

    static Vocabulary from_text(std::string_view text) {
        std::vector<std::string> pieces;
        std::size_t start = 0;
        while (start < text.size()) {
            auto end = text.find('\n', start);
            if (end == std::string_view::npos) {
                end = text.size();
            }
            std::string piece(text.substr(start, end - start));
            if (!piece.empty() && piece.back() == '\r') {
                piece.pop_back();
            }
            if (!piece.empty()) {
                pieces.push_back(std::move(piece));
            }
            start = end + 1;
        }
        return Vocabulary(std::move(pieces));
    }

    static Vocabulary load(const std::filesystem::path& path) { return from_text(io::read_text_file(path)); }

    std::size_t size() const noexcept { return pieces_.size(); }
    int class_id() const noexcept { return cls_; }
    int unknown_id() const noexcept { return unk_; }
    const std::string& piece(int id) const { return pieces_.at(static_cast<std::size_t>(id)); }

    int find(std::string_view piece) const {
        auto it = ids_.find(std::string(piece));
        return it == ids_.end() ? -1 : it->second;
    }

private:
    int require(std::string_view piece) const {
        const int id = find(piece);
        if (id < 0) {
            fail(ErrorCode::InvalidConfig, "vocabulary lacks the " + std::string(piece) + " token");
        }
        return id;
    }

    std::vector<std::string> pieces_;
    std::unordered_map<std::string, int> ids_;
    int cls_ = -1;
    int unk_ = -1;
};

/// Greedy longest-match-first split of one word; a word with any uncovered
/// remainder becomes a single [UNK].
inline void wordpiece_word(std::string_view word, const Vocabulary& vocab, std::vector<int>& out) {
    const std::u32string cps = decode_utf8(word);
    std::vector<int> pieces;
    std::size_t start = 0;
    while (start < cps.size()) {
        int match = -1;
        std::size_t end = cps.size();
        for (; end > start; --end) {
            std::string candidate = start > 0 ? std::string(kContinuationPrefix) : std::string();
            candidate += encode_utf8(std::u32string_view(cps).substr(start, end - start));
            match = vocab.find(candidate);
            if (match >= 0) {
                break;
            }
        }
        if (match < 0) {
            out.push_back(vocab.unknown_id());
            return;
        }
        pieces.push_back(match);
        start = end;
    }
    out.insert(out.end(), pieces.begin(), pieces.end());
}

/// Tokenizes an already normalized caption: [CLS] followed by at most 32 pieces.
inline TokenSeq tokenize(std::string_view normalized, const Vocabulary& vocab) {
    std::vector<int> content;
    std::size_t start = 0;
    while (start < normalized.size() && content.size() < kMaxContentTokens) {
        auto end = normalized.find(' ', start);
        if (end == std::string_view::npos) {
            end = normalized.size();
        }
        if (end > start) {
            wordpiece_word(normalized.substr(start, end - start), vocab, content);
        }
        start = end + 1;
    }
    if (content.size() > kMaxContentTokens) {
        content.resize(kMaxContentTokens);
    }
    TokenSeq seq;
    seq.ids.reserve(content.size() + 1);
    seq.ids.push_back(vocab.class_id());
    seq.ids.insert(seq.ids.end(), content.begin(), content.end());
    return seq;
}

/// Joins pieces back into text: continuation pieces attach to the previous word.
inline std::string detokenize(const TokenSeq& seq, const Vocabulary& vocab) {
    std::string out;
    for (std::size_t i = 1; i < seq.ids.size(); ++i) {
        const std::string& p = vocab.piece(seq.ids[i]);
        if (p.starts_with(kContinuationPrefix)) {
            out += p.substr(kContinuationPrefix.size());
        } else {
            if (!out.empty()) {
                out.push_back(' ');
            }
            out += p;
        }
    }
    return out;
}

}  // namespace acre::text

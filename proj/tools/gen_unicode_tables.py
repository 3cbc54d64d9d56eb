#!/usr/bin/env python3
"""Regenerates include/acre/unicode_tables.hpp from Python's unicodedata."""
import sys
import unicodedata


def ranges(pred):
    out, start = [], None
    for cp in range(0x110000):
        hit = pred(cp)
        if hit and start is None:
            start = cp
        elif not hit and start is not None:
            out.append((start, cp - 1))
            start = None
    if start is not None:
        out.append((start, 0x10FFFF))
    return out


def is_punct(cp):
    if cp < 0x80:
        c = chr(cp)
        return c.isprintable() and not c.isalnum() and not c.isspace()
    return unicodedata.category(chr(cp)).startswith("P")


def lower_pairs():
    pairs = []
    for cp in range(0x110000):
        low = chr(cp).lower()
        if len(low) == 1 and ord(low) != cp:
            pairs.append((cp, ord(low)))
    return pairs


def main(path):
    punct = ranges(is_punct)
    lows = lower_pairs()
    with open(path, "w", encoding="utf-8") as f:
        f.write("// Generated by tools/gen_unicode_tables.py (Unicode %s). Do not edit.\n"
                % unicodedata.unidata_version)
        f.write("#pragma once\n\n#include <array>\n#include <cstdint>\n\n")
        f.write("namespace acre::unicode_tables {\n\n")
        f.write("struct CodeRange {\n    char32_t first;\n    char32_t last;\n};\n\n")
        f.write("struct CaseMapping {\n    char32_t from;\n    char32_t to;\n};\n\n")
        f.write("// Category P* plus every printable non-alphanumeric ASCII character.\n")
        f.write("inline constexpr std::array<CodeRange, %d> kPunctuation{{\n" % len(punct))
        for a, b in punct:
            f.write("    {0x%04X, 0x%04X},\n" % (a, b))
        f.write("}};\n\n")
        f.write("inline constexpr std::array<CaseMapping, %d> kLowercase{{\n" % len(lows))
        for a, b in lows:
            f.write("    {0x%04X, 0x%04X},\n" % (a, b))
        f.write("}};\n\n}  // namespace acre::unicode_tables\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "include/acre/unicode_tables.hpp")

#!/usr/bin/env python3
"""Regenerates src/unicode_tables.inc.

Emits sorted [first, last] codepoint ranges for the Unicode general
categories L* and N*, as consumed by the pre-tokenizer's character
classifier. Run from the repository root:

    python3 scripts/gen_unicode_tables.py > src/unicode_tables.inc
"""

import sys
import unicodedata


def ranges_for(predicate):
    out = []
    start = None
    for cp in range(0x110000):
        if predicate(cp):
            if start is None:
                start = cp
        else:
            if start is not None:
                out.append((start, cp - 1))
                start = None
    if start is not None:
        out.append((start, 0x10FFFF))
    return out


def main():
    def is_letter(cp):
        return unicodedata.category(chr(cp)).startswith("L")

    def is_number(cp):
        return unicodedata.category(chr(cp)).startswith("N")

    letters = ranges_for(is_letter)
    numbers = ranges_for(is_number)

    w = sys.stdout.write
    w("// Generated by scripts/gen_unicode_tables.py (Unicode %s). Do not edit.\n"
      % unicodedata.unidata_version)
    w("// clang-format off\n")
    for name, table in (("kLetterRanges", letters), ("kNumberRanges", numbers)):
        w("inline constexpr CodepointRange %s[] = {\n" % name)
        for i in range(0, len(table), 4):
            row = table[i:i + 4]
            w("    " + " ".join("{0x%X, 0x%X}," % r for r in row) + "\n")
        w("};\n")
    w("// clang-format on\n")


if __name__ == "__main__":
    main()

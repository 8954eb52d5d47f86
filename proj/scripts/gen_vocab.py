#!/usr/bin/env python3
"""Regenerates the bundled tokenizer vocabularies and the encoder fixture.

Trains two byte-level BPE vocabularies in the widely published two-file
format (vocab.json + merges.txt):

  data/gpt2-style/       50,257 tokens, trained on prose-like text with no
                         consecutive whitespace, so indentation tokenizes one
                         space at a time.
  data/starcoder-style/  49,152 tokens, trained on indented code, so newline
                         + spaces merge into single tokens.

Also writes data/tokenizer_cases.jsonl: reference encodings for a diverse
set of strings, produced by the `tokenizers` library from the saved files.
The C++ test suite replays these to pin its encoder to the reference
implementation byte for byte.

Usage: python3 scripts/gen_vocab.py   (from the repository root; slow)
"""

import json
import os
import random
import sys

from tokenizers import Tokenizer, models, pre_tokenizers, trainers

GPT2_SIZE = 50257
STARCODER_SIZE = 49152
TABLE_STRING = "def foo():\n    pass"

SYLLABLES = [
    "ba", "be", "bi", "bo", "bu", "ca", "ce", "ci", "co", "cu", "da", "de",
    "di", "do", "du", "fa", "fe", "fi", "fo", "fu", "ga", "ge", "gi", "go",
    "gu", "ha", "he", "hi", "ho", "hu", "ja", "je", "jo", "ka", "ke", "ki",
    "ko", "ku", "la", "le", "li", "lo", "lu", "ma", "me", "mi", "mo", "mu",
    "na", "ne", "ni", "no", "nu", "pa", "pe", "pi", "po", "pu", "ra", "re",
    "ri", "ro", "ru", "sa", "se", "si", "so", "su", "ta", "te", "ti", "to",
    "tu", "va", "ve", "vi", "vo", "vu", "wa", "we", "wi", "wo", "wu", "za",
    "ze", "zi", "zo", "zu", "ch", "sh", "th", "ph", "qu", "tr", "st", "pl",
    "gr", "br", "cl", "fr", "sl", "sp", "str", "nd", "nt", "rs", "ll", "ss",
]

PY_KEYWORDS = [
    "def", "return", "import", "from", "class", "self", "if", "else", "elif",
    "for", "while", "in", "not", "and", "or", "None", "True", "False", "pass",
    "break", "continue", "try", "except", "finally", "with", "as", "lambda",
    "yield", "assert", "raise", "print", "len", "range", "str", "int", "float",
    "list", "dict", "set", "tuple", "open", "append", "items", "keys", "values",
    "join", "split", "strip", "format", "enumerate", "zip", "map", "filter",
    "sorted", "isinstance", "super", "init", "main", "args", "kwargs", "result",
    "value", "data", "name", "path", "file", "line", "text", "token", "index",
    "count", "total", "config", "params", "model", "test", "error", "message",
]

ENGLISH = [
    "the", "of", "and", "to", "in", "a", "is", "that", "for", "it", "was",
    "with", "as", "his", "on", "be", "at", "by", "had", "not", "are", "but",
    "from", "or", "have", "an", "they", "which", "one", "you", "were", "her",
    "all", "she", "there", "would", "their", "we", "him", "been", "has",
    "when", "who", "will", "more", "no", "if", "out", "so", "said", "what",
    "up", "its", "about", "into", "than", "them", "can", "only", "other",
    "new", "some", "could", "time", "these", "two", "may", "then", "do",
    "first", "any", "my", "now", "such", "like", "our", "over", "man", "me",
    "even", "most", "made", "after", "also", "did", "many", "before", "must",
    "through", "years", "where", "much", "your", "way", "well", "down",
]


def make_lexicon(rng, n):
    words = set()
    while len(words) < n:
        w = "".join(rng.choice(SYLLABLES) for _ in range(rng.randint(2, 5)))
        words.add(w)
    return sorted(words)


def gen_text_corpus(rng):
    """Prose-like corpus with no two adjacent whitespace characters."""
    lexicon = make_lexicon(rng, 60000)
    lines = []
    # Anchor the tokens the whitespace-behavior checks rely on, without ever
    # producing consecutive whitespace.
    lines += ["def foo(): pass"] * 4000
    lines += ["they say def foo(): pass and return it"] * 1000
    for _ in range(450000):
        k = rng.randint(4, 12)
        ws = []
        for _ in range(k):
            r = rng.random()
            if r < 0.62:
                ws.append(rng.choice(lexicon))
            elif r < 0.80:
                ws.append(rng.choice(ENGLISH))
            elif r < 0.88:
                ws.append(rng.choice(PY_KEYWORDS))
            elif r < 0.94:
                ws.append(str(rng.randint(0, 99999)))
            else:
                w = rng.choice(lexicon)
                ws.append(w.capitalize() if rng.random() < 0.7 else w.upper())
        line = " ".join(ws) + rng.choice([".", ",", "!", "?", ":", ";", "", ")", "'s"])
        lines.append(line)
    return "\n".join(lines)


def gen_code_corpus(rng):
    """Python-flavoured corpus with heavy 4-space indentation."""
    lexicon = make_lexicon(rng, 55000)
    ops = [" = ", " += ", " == ", " != ", " < ", " > ", " in ", " is "]
    chunks = []
    chunks += ["def foo():\n    pass"] * 6000
    chunks += ["def foo():\n    return bar"] * 1500
    for _ in range(230000):
        name = rng.choice(lexicon)
        style = rng.random()
        if style < 0.45:
            args = ", ".join(rng.choice(lexicon) for _ in range(rng.randint(0, 3)))
            body = []
            for _ in range(rng.randint(1, 5)):
                depth = rng.choice([1, 1, 1, 2, 2, 3, 4, 5, 6])
                stmt = rng.random()
                if stmt < 0.4:
                    body.append(" " * (4 * depth) + rng.choice(lexicon) + rng.choice(ops) +
                                rng.choice(lexicon) + "(" + rng.choice(lexicon) + ")")
                elif stmt < 0.6:
                    body.append(" " * (4 * depth) + "return " + rng.choice(lexicon))
                elif stmt < 0.75:
                    body.append(" " * (4 * depth) + "if " + rng.choice(lexicon) + ":")
                elif stmt < 0.85:
                    body.append(" " * (4 * depth) + "pass")
                else:
                    body.append(" " * (4 * depth) + rng.choice(PY_KEYWORDS) + "." +
                                rng.choice(lexicon) + "(" + str(rng.randint(0, 999)) + ")")
            chunks.append("def " + name + "(" + args + "):\n" + "\n".join(body))
        elif style < 0.6:
            chunks.append("import " + rng.choice(lexicon) + "." + rng.choice(lexicon))
        elif style < 0.8:
            chunks.append(rng.choice(lexicon) + rng.choice(ops) + "[" +
                          ", ".join(str(rng.randint(0, 500)) for _ in range(rng.randint(1, 4))) + "]")
        else:
            chunks.append("# " + " ".join(rng.choice(ENGLISH) for _ in range(rng.randint(3, 8))))
    return "\n".join(chunks)


def train(corpus, vocab_size):
    tok = Tokenizer(models.BPE())
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False, use_regex=True)
    trainer = trainers.BpeTrainer(
        vocab_size=vocab_size,
        special_tokens=["<|endoftext|>"],
        initial_alphabet=pre_tokenizers.ByteLevel.alphabet(),
        show_progress=False,
    )
    tok.train_from_iterator([corpus], trainer=trainer)
    if tok.get_vocab_size() != vocab_size:
        raise SystemExit(f"trained vocab has {tok.get_vocab_size()} tokens, wanted {vocab_size}; "
                         "corpus lacks pair diversity")
    return tok


def reload_from_files(outdir):
    tok = Tokenizer(models.BPE.from_file(os.path.join(outdir, "vocab.json"),
                                         os.path.join(outdir, "merges.txt")))
    tok.pre_tokenizer = pre_tokenizers.ByteLevel(add_prefix_space=False, use_regex=True)
    return tok


def check_table_behavior(gpt2, starcoder):
    g = gpt2.encode(TABLE_STRING).tokens
    s = starcoder.encode(TABLE_STRING).tokens
    assert g == ["def", "Ġfoo", "():", "Ċ", "Ġ", "Ġ", "Ġ", "Ġpass"], g
    assert s == ["def", "Ġfoo", "():", "ĊĠĠĠ", "Ġpass"], s
    # the text-trained vocabulary must have no whitespace-whitespace merges
    for j in range(1, 11):
        text = "\n" + " " * (4 * j)
        assert len(gpt2.encode(text).ids) == 1 + 4 * j, (j, gpt2.encode(text).tokens)
        assert len(starcoder.encode(text).ids) <= 1 + 4 * j
        if j <= 6:
            assert len(starcoder.encode(text).ids) < 1 + 4 * j, (j, starcoder.encode(text).tokens)


def fixture_strings(rng):
    cases = [
        "", TABLE_STRING, "def foo():\n    pass\n", "hello world", "  lead",
        "don't stop, we'll see; it's 'S okay", "x = [1, 23, 456]\n",
        "\tindent\twith\ttabs", "a\r\nb\r\n", "   ", "x  ", "x \n y",
        "for i in range(10):\n        print(i)\n",
        "café naïve résumé", "你好，世界",
        "\U0001F600 emoji \U0001F680 test", "a b  c",
        "٠١٢ digits", "é combining",
        "price: $12,345.67 (99%)", "'s 't 're 've 'm 'll 'd",
        "CamelCaseIdentifier snake_case_name CONST_VALUE",
        "x**2 + y**2 == z**2", "a->b=>c<=d>=e!=f",
        "line one\n\nline three\n\n\n\nline seven",
        "def φ(α, β):\n    return α * β\n",
        "quoted \"string\" and 'single'", "semi;colon:comma,dot.",
        "url https://example.com/path?q=1&r=2#frag",
        "\n\n    deeply\n            indented\n                    code\n",
        "zero​width​space", "mixed 　 ideographic",
    ]
    # random word soup and code-ish lines
    lexicon = make_lexicon(rng, 400)
    for _ in range(120):
        k = rng.randint(1, 10)
        sep = rng.choice([" ", " ", " ", ", ", "(", ")", "."])
        cases.append(sep.join(rng.choice(lexicon) for _ in range(k)))
    for _ in range(80):
        depth = rng.randint(0, 5)
        cases.append(" " * (4 * depth) + rng.choice(lexicon) + " = " +
                     rng.choice(lexicon) + "(" + str(rng.randint(0, 9999)) + ")\n")
    # printable ascii noise (tokenizers requires valid UTF-8, so stay ASCII)
    for _ in range(50):
        n = rng.randint(0, 60)
        cases.append("".join(chr(rng.randint(0x20, 0x7E)) for _ in range(n)))
    return cases


def main():
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    data = os.path.join(root, "data")

    print("generating corpora...", flush=True)
    text_corpus = gen_text_corpus(random.Random(20240601))
    code_corpus = gen_code_corpus(random.Random(20240602))
    print(f"  text corpus {len(text_corpus)/1e6:.1f} MB, code corpus {len(code_corpus)/1e6:.1f} MB",
          flush=True)

    print("training gpt2-style vocabulary...", flush=True)
    train(text_corpus, GPT2_SIZE).model.save(ensure_dir(os.path.join(data, "gpt2-style")))
    print("training starcoder-style vocabulary...", flush=True)
    train(code_corpus, STARCODER_SIZE).model.save(ensure_dir(os.path.join(data, "starcoder-style")))

    gpt2 = reload_from_files(os.path.join(data, "gpt2-style"))
    starcoder = reload_from_files(os.path.join(data, "starcoder-style"))
    assert gpt2.get_vocab_size() == GPT2_SIZE
    assert starcoder.get_vocab_size() == STARCODER_SIZE
    check_table_behavior(gpt2, starcoder)

    print("writing encoder fixture...", flush=True)
    cases = fixture_strings(random.Random(20240603))
    with open(os.path.join(data, "tokenizer_cases.jsonl"), "w", encoding="utf-8") as f:
        for text in cases:
            rec = {
                "text": text,
                "gpt2": gpt2.encode(text).ids,
                "starcoder": starcoder.encode(text).ids,
            }
            f.write(json.dumps(rec, ensure_ascii=True) + "\n")
    print(f"done: {len(cases)} fixture cases", flush=True)


def ensure_dir(d):
    os.makedirs(d, exist_ok=True)
    return d


if __name__ == "__main__":
    sys.exit(main())

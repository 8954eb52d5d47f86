#include "coderag/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <fstream>
#include <queue>
#include <sstream>

#include <nlohmann/json.hpp>

#include "coderag/errors.hpp"

namespace coderag {

namespace {

struct CodepointRange {
    char32_t first;
    char32_t last;
};

#include "unicode_tables.inc"

// Unicode White_Space property. Deliberately not str.isspace(): the
// 0x1C..0x1F separators are not whitespace here.
constexpr CodepointRange kWhitespaceRanges[] = {
    {0x09, 0x0D},     {0x20, 0x20},     {0x85, 0x85},     {0xA0, 0xA0},
    {0x1680, 0x1680}, {0x2000, 0x200A}, {0x2028, 0x2029}, {0x202F, 0x202F},
    {0x205F, 0x205F}, {0x3000, 0x3000},
};

template <std::size_t N>
bool in_ranges(const CodepointRange (&table)[N], char32_t cp) {
    auto it = std::upper_bound(std::begin(table), std::end(table), cp,
                               [](char32_t v, const CodepointRange& r) { return v < r.first; });
    return it != std::begin(table) && cp <= std::prev(it)->last;
}

bool is_letter(char32_t cp) { return in_ranges(kLetterRanges, cp); }
bool is_number(char32_t cp) { return in_ranges(kNumberRanges, cp); }
bool is_whitespace(char32_t cp) { return in_ranges(kWhitespaceRanges, cp); }

constexpr char32_t kInvalidByteBase = 0x110000;  // sentinel class for undecodable bytes

// Decodes one codepoint at `pos`, tolerating arbitrary bytes: an invalid
// sequence yields a one-byte pseudo-codepoint above the Unicode range so it
// classifies as "other" and round-trips via the byte encoder.
std::pair<char32_t, std::size_t> decode_cp(std::string_view s, std::size_t pos) {
    const auto b0 = static_cast<unsigned char>(s[pos]);
    if (b0 < 0x80) return {b0, 1};
    auto invalid = [&] { return std::pair<char32_t, std::size_t>{kInvalidByteBase + b0, 1}; };
    std::size_t len;
    char32_t cp;
    if ((b0 & 0xE0) == 0xC0) {
        len = 2;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        len = 3;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        len = 4;
        cp = b0 & 0x07;
    } else {
        return invalid();
    }
    if (pos + len > s.size()) return invalid();
    for (std::size_t i = 1; i < len; ++i) {
        const auto b = static_cast<unsigned char>(s[pos + i]);
        if ((b & 0xC0) != 0x80) return invalid();
        cp = (cp << 6) | (b & 0x3F);
    }
    // Reject overlong forms and surrogates so decoding stays canonical.
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
        (cp >= 0xD800 && cp <= 0xDFFF) || cp > 0x10FFFF) {
        return invalid();
    }
    return {cp, len};
}

void append_utf8(std::string& out, char32_t cp) {
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

// The reversible byte <-> printable-codepoint mapping of byte-level BPE:
// printable bytes map to themselves, the rest to 0x100 + running index.
struct ByteEncoder {
    std::array<char32_t, 256> to_cp{};
    std::unordered_map<char32_t, unsigned char> to_byte;

    ByteEncoder() {
        int n = 0;
        for (int b = 0; b < 256; ++b) {
            const bool printable = (b >= '!' && b <= '~') || (b >= 0xA1 && b <= 0xAC) || (b >= 0xAE && b <= 0xFF);
            const char32_t cp = printable ? static_cast<char32_t>(b) : static_cast<char32_t>(256 + n++);
            to_cp[static_cast<std::size_t>(b)] = cp;
            to_byte.emplace(cp, static_cast<unsigned char>(b));
        }
    }
};

const ByteEncoder& byte_encoder() {
    static const ByteEncoder enc;
    return enc;
}

std::string map_bytes(std::string_view raw) {
    const auto& enc = byte_encoder();
    std::string out;
    out.reserve(raw.size() * 2);
    for (unsigned char b : raw) append_utf8(out, enc.to_cp[b]);
    return out;
}

// Inverse of map_bytes. Codepoints outside the byte alphabet (special tokens)
// pass through as their UTF-8 bytes.
std::string unmap_bytes(std::string_view mapped) {
    const auto& enc = byte_encoder();
    std::string out;
    out.reserve(mapped.size());
    std::size_t i = 0;
    while (i < mapped.size()) {
        auto [cp, len] = decode_cp(mapped, i);
        auto it = enc.to_byte.find(cp);
        if (it != enc.to_byte.end()) {
            out.push_back(static_cast<char>(it->second));
        } else {
            out.append(mapped.substr(i, len));
        }
        i += len;
    }
    return out;
}

bool starts_with(std::string_view s, std::string_view prefix) {
    return s.size() >= prefix.size() && s.compare(0, prefix.size(), prefix) == 0;
}

std::uint64_t fnv1a(std::uint64_t h, std::string_view data) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace

// ---------------------------------------------------------------------------
// Pre-tokenization
// ---------------------------------------------------------------------------

std::vector<std::string_view> pretokenize(std::string_view text) {
    std::vector<std::string_view> out;
    const std::size_t n = text.size();
    std::size_t i = 0;

    auto cls_at = [&](std::size_t pos) { return decode_cp(text, pos); };

    while (i < n) {
        // Contractions ('s 't 're 've 'm 'll 'd), lowercase only.
        if (text[i] == '\'') {
            static constexpr std::string_view kContractions[] = {"'s", "'t", "'re", "'ve", "'m", "'ll", "'d"};
            std::size_t hit = 0;
            for (auto c : kContractions) {
                if (starts_with(text.substr(i), c)) {
                    hit = c.size();
                    break;
                }
            }
            if (hit != 0) {
                out.push_back(text.substr(i, hit));
                i += hit;
                continue;
            }
        }

        // " ?\p{L}+" / " ?\p{N}+" / " ?[^\s\p{L}\p{N}]+" in order. The
        // optional prefix is a literal ASCII space.
        const bool leading_space = text[i] == ' ' && i + 1 < n;
        const std::size_t body = leading_space ? i + 1 : i;
        if (body < n) {
            auto [cp, len] = cls_at(body);
            enum class Kind { Letter, Number, Other, Ws } kind;
            if (is_letter(cp)) {
                kind = Kind::Letter;
            } else if (is_number(cp)) {
                kind = Kind::Number;
            } else if (!is_whitespace(cp)) {
                kind = Kind::Other;
            } else {
                kind = Kind::Ws;
            }
            if (kind != Kind::Ws) {
                std::size_t j = body;
                while (j < n) {
                    auto [c2, l2] = cls_at(j);
                    const bool match = kind == Kind::Letter   ? is_letter(c2)
                                       : kind == Kind::Number ? is_number(c2)
                                                              : (!is_whitespace(c2) && !is_letter(c2) && !is_number(c2));
                    if (!match) break;
                    j += l2;
                }
                if (j > body) {
                    out.push_back(text.substr(i, j - i));
                    i = j;
                    continue;
                }
            }
        }

        // Whitespace: "\s+(?!\S)" then "\s+". A run followed by non-space
        // yields everything but its last character, which joins the next
        // span via the optional-space alternatives above.
        auto [cp0, len0] = cls_at(i);
        if (is_whitespace(cp0)) {
            std::size_t j = i;
            std::size_t last_start = i;
            while (j < n) {
                auto [c2, l2] = cls_at(j);
                if (!is_whitespace(c2)) break;
                last_start = j;
                j += l2;
            }
            if (j < n && last_start > i) {
                out.push_back(text.substr(i, last_start - i));
                i = last_start;
            } else {
                out.push_back(text.substr(i, j - i));
                i = j;
            }
            continue;
        }

        // Unreachable for well-formed classes; consume one unit defensively.
        out.push_back(text.substr(i, len0));
        i += len0;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

TokenizerSpec TokenizerSpec::load(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    if (fs::is_directory(path)) {
        return load(path / "vocab.json", path / "merges.txt");
    }
    return load(path, path.parent_path() / "merges.txt");
}

TokenizerSpec TokenizerSpec::load(const std::filesystem::path& vocab_json,
                                  const std::filesystem::path& merges_txt) {
    std::ifstream vf(vocab_json, std::ios::binary);
    if (!vf) throw ParseError("cannot open vocabulary file: " + vocab_json.string());

    nlohmann::json j;
    try {
        vf >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("malformed vocabulary JSON in " + vocab_json.string() + ": " + e.what());
    }
    if (!j.is_object()) throw ParseError("vocabulary file is not a JSON object: " + vocab_json.string());

    TokenizerSpec spec;
    const std::size_t vocab_size = j.size();
    spec.token_mapped_.resize(vocab_size);
    std::vector<bool> seen(vocab_size, false);
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!it.value().is_number_unsigned()) {
            throw ParseError("vocabulary id for token \"" + it.key() + "\" is not an unsigned integer");
        }
        const auto id = it.value().get<std::uint64_t>();
        if (id >= vocab_size) {
            throw IntegrityError("vocabulary ids are not dense: id " + std::to_string(id) + " with " +
                                 std::to_string(vocab_size) + " entries");
        }
        if (seen[id]) throw IntegrityError("duplicate vocabulary id " + std::to_string(id));
        if (it.key().empty()) throw IntegrityError("empty token string for id " + std::to_string(id));
        seen[id] = true;
        spec.token_mapped_[id] = it.key();
    }

    std::ifstream mf(merges_txt, std::ios::binary);
    if (!mf) throw ParseError("cannot open merges file: " + merges_txt.string());

    // Temporary mapped-string lookup for resolving merge rules.
    std::unordered_map<std::string_view, TokenId> mapped_to_id;
    mapped_to_id.reserve(vocab_size);
    for (TokenId id = 0; id < vocab_size; ++id) {
        if (!mapped_to_id.emplace(spec.token_mapped_[id], id).second) {
            throw IntegrityError("duplicate token string \"" + spec.token_mapped_[id] + "\"");
        }
    }

    std::string line;
    std::size_t line_no = 0;
    std::uint32_t rank = 0;
    std::uint64_t merge_hash = 0xcbf29ce484222325ULL;
    while (std::getline(mf, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line_no == 1 && line[0] == '#') continue;  // optional "#version" header
        const auto sp = line.find(' ');
        if (sp == std::string::npos || sp == 0 || sp + 1 >= line.size() ||
            line.find(' ', sp + 1) != std::string::npos) {
            throw ParseError(merges_txt.string() + ":" + std::to_string(line_no) +
                             ": expected exactly two space-separated symbols");
        }
        const std::string_view left{line.data(), sp};
        const std::string_view right{line.data() + sp + 1, line.size() - sp - 1};
        const auto li = mapped_to_id.find(left);
        const auto ri = mapped_to_id.find(right);
        if (li == mapped_to_id.end() || ri == mapped_to_id.end()) {
            throw IntegrityError(merges_txt.string() + ":" + std::to_string(line_no) +
                                 ": merge symbol not in vocabulary");
        }
        const auto mi = mapped_to_id.find(std::string(left) + std::string(right));
        if (mi == mapped_to_id.end()) {
            throw IntegrityError(merges_txt.string() + ":" + std::to_string(line_no) +
                                 ": merge result not in vocabulary");
        }
        const std::uint64_t key = (static_cast<std::uint64_t>(li->second) << 32) | ri->second;
        if (!spec.merges_.emplace(key, std::make_pair(rank, mi->second)).second) {
            throw IntegrityError(merges_txt.string() + ":" + std::to_string(line_no) + ": duplicate merge rule");
        }
        merge_hash = fnv1a(merge_hash, line);
        ++rank;
    }

    spec.token_raw_.resize(vocab_size);
    for (TokenId id = 0; id < vocab_size; ++id) {
        spec.token_raw_[id] = unmap_bytes(spec.token_mapped_[id]);
    }

    std::uint64_t h = 0xcbf29ce484222325ULL;
    h = fnv1a(h, std::to_string(vocab_size));
    for (const auto& t : spec.token_mapped_) h = fnv1a(fnv1a(h, t), "\x1f");
    h ^= merge_hash;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    spec.fingerprint_ = buf;

    spec.build_tables();
    return spec;
}

void TokenizerSpec::build_tables() {
    raw_to_id_.reserve(token_raw_.size());
    for (TokenId id = 0; id < token_raw_.size(); ++id) {
        if (!raw_to_id_.emplace(token_raw_[id], id).second) {
            throw IntegrityError("two tokens decode to the same byte string: \"" + token_raw_[id] + "\"");
        }
        max_token_len_ = std::max(max_token_len_, token_raw_[id].size());
    }

    const auto& enc = byte_encoder();
    std::unordered_map<std::string, TokenId> mapped_index;
    for (TokenId id = 0; id < token_mapped_.size(); ++id) mapped_index.emplace(token_mapped_[id], id);
    for (int b = 0; b < 256; ++b) {
        std::string key;
        append_utf8(key, enc.to_cp[static_cast<std::size_t>(b)]);
        auto it = mapped_index.find(key);
        byte_token_[b] = it == mapped_index.end() ? -1 : static_cast<std::int32_t>(it->second);
    }

    sorted_by_raw_.resize(token_raw_.size());
    for (TokenId id = 0; id < token_raw_.size(); ++id) sorted_by_raw_[id] = id;
    std::sort(sorted_by_raw_.begin(), sorted_by_raw_.end(),
              [this](TokenId a, TokenId b) { return token_raw_[a] < token_raw_[b]; });
}

// ---------------------------------------------------------------------------
// Encode / decode
// ---------------------------------------------------------------------------

namespace {

struct Symbol {
    TokenId id;
    std::int32_t prev;
    std::int32_t next;
    bool alive;
};

struct PairCandidate {
    std::uint32_t rank;
    std::int32_t left;
    TokenId a, b;
};

struct CandidateOrder {
    bool operator()(const PairCandidate& x, const PairCandidate& y) const {
        if (x.rank != y.rank) return x.rank > y.rank;
        return x.left > y.left;  // leftmost occurrence first among equal rank
    }
};

}  // namespace

void TokenizerSpec::bpe_spans(std::string_view pretoken, TokenSequence& out) const {
    // Initial symbols: one per byte, via the byte alphabet.
    static thread_local std::vector<Symbol> syms;
    syms.clear();
    for (unsigned char b : pretoken) {
        const std::int32_t id = byte_token_[b];
        if (id < 0) {
            throw IntegrityError("vocabulary has no entry for byte 0x" + [b] {
                char buf[3];
                std::snprintf(buf, sizeof buf, "%02x", b);
                return std::string(buf);
            }());
        }
        const auto n = static_cast<std::int32_t>(syms.size());
        syms.push_back({static_cast<TokenId>(id), n - 1, n + 1, true});
    }
    if (!syms.empty()) syms.back().next = -1;

    std::priority_queue<PairCandidate, std::vector<PairCandidate>, CandidateOrder> queue;
    auto push_pair = [&](std::int32_t left) {
        const std::int32_t right = syms[static_cast<std::size_t>(left)].next;
        if (right < 0) return;
        const TokenId a = syms[static_cast<std::size_t>(left)].id;
        const TokenId b = syms[static_cast<std::size_t>(right)].id;
        const auto it = merges_.find((static_cast<std::uint64_t>(a) << 32) | b);
        if (it != merges_.end()) queue.push({it->second.first, left, a, b});
    };
    for (std::int32_t i = 0; i + 1 < static_cast<std::int32_t>(syms.size()); ++i) push_pair(i);

    while (!queue.empty()) {
        const PairCandidate c = queue.top();
        queue.pop();
        auto& left = syms[static_cast<std::size_t>(c.left)];
        if (!left.alive || left.id != c.a || left.next < 0) continue;
        auto& right = syms[static_cast<std::size_t>(left.next)];
        if (right.id != c.b) continue;  // stale entry

        const auto it = merges_.find((static_cast<std::uint64_t>(c.a) << 32) | c.b);
        left.id = it->second.second;
        right.alive = false;
        left.next = right.next;
        if (right.next >= 0) syms[static_cast<std::size_t>(right.next)].prev = c.left;
        if (left.prev >= 0) push_pair(left.prev);
        push_pair(c.left);
    }

    for (std::int32_t i = 0; i >= 0 && i < static_cast<std::int32_t>(syms.size());
         i = syms[static_cast<std::size_t>(i)].next) {
        if (syms[static_cast<std::size_t>(i)].alive) out.push_back(syms[static_cast<std::size_t>(i)].id);
    }
}

TokenSequence TokenizerSpec::encode(std::string_view text) const {
    TokenSequence out;
    out.reserve(text.size() / 3 + 4);
    for (const auto span : pretokenize(text)) bpe_spans(span, out);
    return out;
}

std::string TokenizerSpec::decode(const TokenSequence& ids) const {
    std::string out;
    for (const TokenId id : ids) out += token_text(id);
    return out;
}

const std::string& TokenizerSpec::token_text(TokenId id) const {
    if (id >= token_raw_.size()) {
        throw DataError("token id " + std::to_string(id) + " out of range for vocabulary of " +
                        std::to_string(token_raw_.size()));
    }
    return token_raw_[id];
}

// ---------------------------------------------------------------------------
// Token healing
// ---------------------------------------------------------------------------

bool TokenizerSpec::has_strict_extension(std::string_view s) const {
    auto it = std::lower_bound(sorted_by_raw_.begin(), sorted_by_raw_.end(), s,
                               [this](TokenId id, std::string_view v) { return token_raw_[id] < v; });
    if (it != sorted_by_raw_.end() && token_raw_[*it] == s) ++it;  // skip the exact token
    return it != sorted_by_raw_.end() && starts_with(token_raw_[*it], s) && token_raw_[*it].size() > s.size();
}

HealingPlan TokenizerSpec::compute_healing(std::string_view text) const {
    HealingPlan plan;
    const std::size_t n = text.size();
    const std::size_t longest = max_token_len_ > 0 ? max_token_len_ - 1 : 0;
    const std::size_t max_suffix = std::min(n, longest);
    for (std::size_t len = max_suffix; len >= 1; --len) {
        const auto suffix = text.substr(n - len);
        if (has_strict_extension(suffix)) {
            plan.pending.assign(suffix);
            break;
        }
    }
    plan.trimmed_input.assign(text.substr(0, n - plan.pending.size()));
    if (!plan.pending.empty()) {
        const TokenSequence full = encode(text);
        std::size_t removed_bytes = 0;
        std::size_t removed = 0;
        while (removed_bytes < plan.pending.size() && removed < full.size()) {
            removed_bytes += token_raw_[full[full.size() - 1 - removed]].size();
            ++removed;
        }
        plan.rolled_back_tokens = removed;
    }
    return plan;
}

std::vector<TokenId> TokenizerSpec::healing_candidates(std::string_view pending) const {
    std::vector<TokenId> out;
    if (pending.empty()) return out;

    // Tokens that are prefixes of `pending` (including `pending` itself).
    const std::size_t cap = std::min(pending.size(), max_token_len_);
    for (std::size_t len = 1; len <= cap; ++len) {
        auto it = raw_to_id_.find(pending.substr(0, len));
        if (it != raw_to_id_.end()) out.push_back(it->second);
    }
    // Tokens that strictly extend `pending`.
    auto it = std::lower_bound(sorted_by_raw_.begin(), sorted_by_raw_.end(), pending,
                               [this](TokenId id, std::string_view v) { return token_raw_[id] < v; });
    for (; it != sorted_by_raw_.end() && starts_with(token_raw_[*it], pending); ++it) {
        if (token_raw_[*it].size() > pending.size()) out.push_back(*it);
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace coderag

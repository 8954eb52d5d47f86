#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace coderag {

using TokenId = std::uint32_t;
using TokenSequence = std::vector<TokenId>;

// Byte-level BPE pre-tokenization: splits text into the spans BPE merges may
// not cross (contractions, letter runs, number runs, punctuation runs,
// whitespace). Operates on raw bytes; invalid UTF-8 bytes classify as
// punctuation-like and stay within their span.
std::vector<std::string_view> pretokenize(std::string_view text);

// Result of the suffix-removal step that precedes constrained decoding.
// trimmed_input + pending always reconstructs the original input; pending is
// the longest suffix that is a strict prefix of some vocabulary token (empty
// when no such suffix exists).
struct HealingPlan {
    std::string trimmed_input;
    std::string pending;
    std::size_t rolled_back_tokens = 0;

    bool active() const { return !pending.empty(); }
};

// Immutable byte-level BPE vocabulary + merge rules. Safe for concurrent
// reads after construction.
class TokenizerSpec {
public:
    // Loads the widely published two-file format: a JSON object mapping
    // token string -> id, and a merges text file with one space-separated
    // pair per line (first line may be a "#version" header). `path` may be
    // the vocab JSON file (merges.txt expected next to it) or a directory
    // containing vocab.json and merges.txt.
    static TokenizerSpec load(const std::filesystem::path& path);
    static TokenizerSpec load(const std::filesystem::path& vocab_json,
                              const std::filesystem::path& merges_txt);

    std::size_t vocab_size() const { return token_raw_.size(); }

    // Content hash of the vocabulary + merges; binds databases and model
    // handshakes to the tokenizer that produced them.
    const std::string& fingerprint() const { return fingerprint_; }

    TokenSequence encode(std::string_view text) const;
    std::string decode(const TokenSequence& ids) const;

    // Raw bytes of a single token.
    const std::string& token_text(TokenId id) const;

    // Longest-suffix-removal plan for `text` (see HealingPlan).
    HealingPlan compute_healing(std::string_view text) const;

    // Token ids compatible with a pending suffix during constrained
    // decoding: every x whose text is a prefix of `pending` or of which
    // `pending` is a prefix. Sorted by id.
    std::vector<TokenId> healing_candidates(std::string_view pending) const;

    // True when some vocabulary token strictly extends `s`.
    bool has_strict_extension(std::string_view s) const;

    std::size_t max_token_length() const { return max_token_len_; }

private:
    TokenizerSpec() = default;

    void build_tables();
    void bpe_spans(std::string_view pretoken, TokenSequence& out) const;

    std::vector<std::string> token_raw_;     // id -> raw bytes
    std::vector<std::string> token_mapped_;  // id -> byte-encoder alphabet form
    std::unordered_map<std::string_view, TokenId> raw_to_id_;
    // (left id << 32 | right id) -> {rank, merged id}
    std::unordered_map<std::uint64_t, std::pair<std::uint32_t, TokenId>> merges_;
    std::int32_t byte_token_[256] = {};  // byte -> id of its single-char token, -1 if absent
    std::vector<TokenId> sorted_by_raw_; // ids ordered by raw text, for prefix queries
    std::size_t max_token_len_ = 0;
    std::string fingerprint_;
};

inline TokenizerSpec load_tokenizer(const std::filesystem::path& path) {
    return TokenizerSpec::load(path);
}

}  // namespace coderag

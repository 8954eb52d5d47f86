#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "coderag/chunkstore.hpp"
#include "coderag/tokenizer.hpp"

namespace coderag {

// Prompt-assembly knobs. Defaults follow the engine config file schema:
// m = 64, k = 1, context_budget = 384, reserve_for_input = 192.
struct RagConfig {
    std::uint32_t m = 64;                 // query length in tokens
    std::uint32_t k = 1;                  // snippet count; 0 disables retrieval
    std::uint32_t context_budget = 384;   // max total prompt tokens
    std::uint32_t reserve_for_input = 192;  // min input tokens preserved
    bool include_metadata = true;         // "# path\n" header per snippet
    bool include_continuation = true;     // snippet text is key+continuation
    bool best_first = true;               // best-ranked snippet first in the block
};

struct AssembledPrompt {
    TokenSequence tokens;
    std::vector<RetrievedSnippet> snippets_used;  // in prompt order
    std::size_t input_tokens_kept = 0;
    bool truncated = false;
};

// Last min(m, len) tokens of the context; the whole context when shorter.
TokenSequence build_query(std::span<const TokenId> context_tokens, std::uint32_t m);

// Tokens of one snippet as placed in the prompt: optional "# <path>\n"
// header, the stored key tokens, optionally the continuation, then a newline
// separator. Snippet tokens are used as stored, never re-encoded.
TokenSequence format_snippet(const RetrievedSnippet& snippet, const TokenizerSpec& spec,
                             const RagConfig& cfg);

// Snippet block followed by the input tail, within cfg.context_budget.
// The input is truncated from the front but never below reserve_for_input;
// snippets are dropped whole, worst rank first, until the budget holds.
AssembledPrompt assemble(std::span<const TokenId> context_tokens,
                         std::span<const RetrievedSnippet> snippets, const TokenizerSpec& spec,
                         const RagConfig& cfg);

}  // namespace coderag

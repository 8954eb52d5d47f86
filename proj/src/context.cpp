#include "coderag/context.hpp"

#include <algorithm>
#include <numeric>

#include "coderag/errors.hpp"

namespace coderag {

TokenSequence build_query(std::span<const TokenId> context_tokens, std::uint32_t m) {
    const std::size_t take = std::min<std::size_t>(m, context_tokens.size());
    return TokenSequence(context_tokens.end() - static_cast<std::ptrdiff_t>(take),
                         context_tokens.end());
}

TokenSequence format_snippet(const RetrievedSnippet& snippet, const TokenizerSpec& spec,
                             const RagConfig& cfg) {
    TokenSequence out;
    if (cfg.include_metadata) {
        const TokenSequence header = spec.encode("# " + snippet.record->file_path + "\n");
        out.insert(out.end(), header.begin(), header.end());
    }
    const auto& key = snippet.record->key_tokens;
    out.insert(out.end(), key.begin(), key.end());
    if (cfg.include_continuation) {
        const auto& cont = snippet.record->continuation_tokens;
        out.insert(out.end(), cont.begin(), cont.end());
    }
    const TokenSequence sep = spec.encode("\n");
    out.insert(out.end(), sep.begin(), sep.end());
    return out;
}

AssembledPrompt assemble(std::span<const TokenId> context_tokens,
                         std::span<const RetrievedSnippet> snippets, const TokenizerSpec& spec,
                         const RagConfig& cfg) {
    if (cfg.reserve_for_input == 0 || cfg.reserve_for_input >= cfg.context_budget) {
        throw ConfigError("reserve_for_input must lie strictly between 0 and context_budget");
    }
    if (snippets.size() > cfg.k) {
        throw ConfigError("more snippets than RagConfig.k allows");
    }

    const std::size_t budget = cfg.context_budget;
    // The input may never be squeezed below the reserve, except that a short
    // input is kept whole.
    const std::size_t input_floor = std::min<std::size_t>(cfg.reserve_for_input, context_tokens.size());

    std::vector<TokenSequence> formatted;
    formatted.reserve(snippets.size());
    for (const auto& s : snippets) formatted.push_back(format_snippet(s, spec, cfg));

    // Drop snippets whole, worst rank first, until the remaining block
    // leaves at least input_floor tokens of input.
    std::size_t used = snippets.size();
    auto block_size = [&] {
        std::size_t sum = 0;
        for (std::size_t i = 0; i < used; ++i) sum += formatted[i].size();
        return sum;
    };
    while (used > 0 && block_size() + input_floor > budget) --used;

    const std::size_t snippet_tokens = block_size();
    const std::size_t input_kept = std::min(context_tokens.size(), budget - snippet_tokens);

    AssembledPrompt prompt;
    prompt.input_tokens_kept = input_kept;
    prompt.truncated = input_kept < context_tokens.size();
    prompt.tokens.reserve(snippet_tokens + input_kept);

    // Snippet block: best rank first by default, reversed when configured.
    std::vector<std::size_t> order(used);
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (!cfg.best_first) std::reverse(order.begin(), order.end());
    for (const std::size_t i : order) {
        prompt.tokens.insert(prompt.tokens.end(), formatted[i].begin(), formatted[i].end());
        prompt.snippets_used.push_back(snippets[i]);
    }
    prompt.tokens.insert(prompt.tokens.end(),
                         context_tokens.end() - static_cast<std::ptrdiff_t>(input_kept),
                         context_tokens.end());
    return prompt;
}

}  // namespace coderag

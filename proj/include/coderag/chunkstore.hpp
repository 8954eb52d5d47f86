#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "coderag/tokenizer.hpp"

namespace coderag {

// One retrieval unit: a key chunk of up to m tokens plus the continuation
// that follows it in the source file (empty at end of file).
struct ChunkRecord {
    TokenSequence key_tokens;
    TokenSequence continuation_tokens;
    std::string file_path;  // project-relative, '/'-separated
    std::uint32_t chunk_index = 0;
    TokenSequence key_token_set;  // sorted distinct ids of key_tokens

    bool operator==(const ChunkRecord& other) const = default;
};

// A retrieval hit. `record` points into the queried database and shares its
// lifetime. For Jaccard queries `score` is a similarity in [0, 1]; for
// embedding queries it is a squared L2 distance (>= 0).
struct RetrievedSnippet {
    const ChunkRecord* record = nullptr;
    double score = 0;
    std::uint32_t rank = 0;  // 1-based
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::size_t dimension() const = 0;
    virtual bool normalized() const = 0;
    virtual std::vector<float> embed(std::span<const TokenId> tokens) const = 0;
};

// Deterministic stand-in encoder: projects the token bag through per-(token,
// component) hashes and L2-normalizes. No model weights involved; exists so
// embedding retrieval is testable end to end.
class HashProjectionEmbedder : public EmbeddingProvider {
public:
    explicit HashProjectionEmbedder(std::size_t dimension = 64, std::uint64_t seed = 0x5eed)
        : dimension_(dimension), seed_(seed) {}

    std::size_t dimension() const override { return dimension_; }
    bool normalized() const override { return true; }
    std::vector<float> embed(std::span<const TokenId> tokens) const override;

private:
    std::size_t dimension_;
    std::uint64_t seed_;
};

struct BuildOptions {
    std::vector<std::string> extensions = {".py"};
};

// Project-scoped chunk database with filtered top-k lookup. Immutable after
// build/load; concurrent queries are safe.
class RetrievalDatabase {
public:
    // Tokenizes every matching file under `project_root` and splits it into
    // consecutive chunks of `m` tokens (trailing partial chunks kept).
    // Unreadable files are skipped with a warning; matching no file at all
    // is an error.
    static RetrievalDatabase build(const std::filesystem::path& project_root,
                                   const TokenizerSpec& spec, std::uint32_t m,
                                   const BuildOptions& options = {});

    // Assembles a database from prebuilt records (canonical order is
    // restored; duplicate (path, chunk_index) pairs are rejected).
    static RetrievalDatabase from_records(std::vector<ChunkRecord> records, std::uint32_t m,
                                          std::string tokenizer_id);

    static RetrievalDatabase load(const std::filesystem::path& path);
    void save(const std::filesystem::path& path) const;

    std::span<const ChunkRecord> records() const { return records_; }
    std::uint32_t chunk_size() const { return m_; }
    const std::string& tokenizer_id() const { return tokenizer_id_; }
    const std::vector<std::string>& warnings() const { return warnings_; }
    std::size_t total_tokens() const;

    bool has_embeddings() const { return embedding_dim_ != 0; }
    std::size_t embedding_dimension() const { return embedding_dim_; }
    std::span<const float> embedding_row(std::size_t record_index) const;
    void attach_embeddings(const EmbeddingProvider& provider);

    // Top-k records by Jaccard similarity between the query's distinct-token
    // set and each record's key set. Records from `exclude_file` are
    // filtered out. Ties break by (higher score, file path, chunk index).
    std::vector<RetrievedSnippet> retrieve_jaccard(
        std::span<const TokenId> query, std::size_t k,
        const std::optional<std::string>& exclude_file = std::nullopt) const;

    // Exact k-nearest by squared L2 distance over stored embeddings.
    std::vector<RetrievedSnippet> retrieve_embedding(
        const EmbeddingProvider& provider, std::span<const TokenId> query, std::size_t k,
        const std::optional<std::string>& exclude_file = std::nullopt) const;

private:
    RetrievalDatabase() = default;
    void canonicalize_and_index();
    void index_postings();

    std::vector<ChunkRecord> records_;
    std::uint32_t m_ = 0;
    std::string tokenizer_id_;
    std::vector<std::string> warnings_;
    std::unordered_map<TokenId, std::vector<std::uint32_t>> postings_;
    std::vector<float> embeddings_;  // row-major, records_.size() x embedding_dim_
    std::size_t embedding_dim_ = 0;
};

}  // namespace coderag

#include "coderag/chunkstore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "coderag/errors.hpp"
#include "coderag/rng.hpp"

namespace coderag {

namespace {

TokenSequence distinct_sorted(std::span<const TokenId> tokens) {
    TokenSequence set(tokens.begin(), tokens.end());
    std::sort(set.begin(), set.end());
    set.erase(std::unique(set.begin(), set.end()), set.end());
    return set;
}

// --- little-endian binary primitives ---------------------------------------

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_varint(std::string& out, std::uint32_t v) {
    while (v >= 0x80) {
        out.push_back(static_cast<char>(v | 0x80));
        v >>= 7;
    }
    out.push_back(static_cast<char>(v));
}

struct Reader {
    std::string_view data;
    std::size_t pos = 0;
    const char* what;

    void need(std::size_t n) const {
        if (pos + n > data.size()) throw ParseError(std::string(what) + ": truncated file");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    std::uint32_t varint() {
        std::uint32_t v = 0;
        int shift = 0;
        while (true) {
            need(1);
            const auto b = static_cast<unsigned char>(data[pos++]);
            v |= static_cast<std::uint32_t>(b & 0x7F) << shift;
            if (!(b & 0x80)) break;
            shift += 7;
            if (shift > 28) throw ParseError(std::string(what) + ": varint overflow");
        }
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(data.substr(pos, n));
        pos += n;
        return s;
    }
};

constexpr char kMagic[4] = {'C', 'R', 'D', 'B'};
constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

// ---------------------------------------------------------------------------
// HashProjectionEmbedder
// ---------------------------------------------------------------------------

std::vector<float> HashProjectionEmbedder::embed(std::span<const TokenId> tokens) const {
    std::vector<double> acc(dimension_, 0.0);
    for (const TokenId t : tokens) {
        Rng rng(seed_ ^ (0x9e3779b97f4a7c15ULL * (t + 1)));
        for (std::size_t j = 0; j < dimension_; ++j) {
            acc[j] += rng.unit() * 2.0 - 1.0;
        }
    }
    double norm = 0;
    for (double v : acc) norm += v * v;
    norm = std::sqrt(norm);
    std::vector<float> out(dimension_);
    for (std::size_t j = 0; j < dimension_; ++j) {
        out[j] = norm > 0 ? static_cast<float>(acc[j] / norm) : 0.0f;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Build
// ---------------------------------------------------------------------------

RetrievalDatabase RetrievalDatabase::build(const std::filesystem::path& project_root,
                                           const TokenizerSpec& spec, std::uint32_t m,
                                           const BuildOptions& options) {
    namespace fs = std::filesystem;
    if (m < 2) throw ConfigError("chunk size must be at least 2 tokens");
    if (!fs::exists(project_root)) {
        throw DataError("project root does not exist: " + project_root.string());
    }

    std::vector<fs::path> files;
    for (auto it = fs::recursive_directory_iterator(project_root); it != fs::recursive_directory_iterator(); ++it) {
        if (!it->is_regular_file()) continue;
        const std::string ext = it->path().extension().string();
        if (std::find(options.extensions.begin(), options.extensions.end(), ext) != options.extensions.end()) {
            files.push_back(it->path());
        }
    }
    if (files.empty()) {
        throw DataError("no source files matched under " + project_root.string());
    }

    RetrievalDatabase db;
    db.m_ = m;
    db.tokenizer_id_ = spec.fingerprint();

    std::vector<std::pair<std::string, fs::path>> rel;
    rel.reserve(files.size());
    for (const auto& f : files) rel.emplace_back(fs::relative(f, project_root).generic_string(), f);
    std::sort(rel.begin(), rel.end());

    for (const auto& [rel_path, abs_path] : rel) {
        std::ifstream in(abs_path, std::ios::binary);
        if (!in) {
            db.warnings_.push_back("skipped unreadable file: " + rel_path);
            continue;
        }
        std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (in.bad()) {
            db.warnings_.push_back("skipped unreadable file: " + rel_path);
            continue;
        }
        const TokenSequence tokens = spec.encode(content);
        const std::size_t n = tokens.size();
        for (std::size_t start = 0, index = 0; start < n; start += m, ++index) {
            ChunkRecord rec;
            rec.file_path = rel_path;
            rec.chunk_index = static_cast<std::uint32_t>(index);
            const std::size_t key_end = std::min<std::size_t>(start + m, n);
            rec.key_tokens.assign(tokens.begin() + static_cast<std::ptrdiff_t>(start),
                                  tokens.begin() + static_cast<std::ptrdiff_t>(key_end));
            const std::size_t cont_end = std::min<std::size_t>(key_end + m, n);
            rec.continuation_tokens.assign(tokens.begin() + static_cast<std::ptrdiff_t>(key_end),
                                           tokens.begin() + static_cast<std::ptrdiff_t>(cont_end));
            rec.key_token_set = distinct_sorted(rec.key_tokens);
            db.records_.push_back(std::move(rec));
        }
    }
    db.canonicalize_and_index();
    return db;
}

RetrievalDatabase RetrievalDatabase::from_records(std::vector<ChunkRecord> records, std::uint32_t m,
                                                  std::string tokenizer_id) {
    if (m < 2) throw ConfigError("chunk size must be at least 2 tokens");
    RetrievalDatabase db;
    db.records_ = std::move(records);
    db.m_ = m;
    db.tokenizer_id_ = std::move(tokenizer_id);
    for (auto& rec : db.records_) {
        if (rec.key_tokens.empty()) throw IntegrityError("record with empty key chunk");
        rec.key_token_set = distinct_sorted(rec.key_tokens);
    }
    db.canonicalize_and_index();
    return db;
}

void RetrievalDatabase::canonicalize_and_index() {
    // Canonical record order (path, then chunk index) doubles as the
    // deterministic tie-break order for retrieval.
    std::sort(records_.begin(), records_.end(), [](const ChunkRecord& a, const ChunkRecord& b) {
        return std::tie(a.file_path, a.chunk_index) < std::tie(b.file_path, b.chunk_index);
    });
    for (std::size_t i = 1; i < records_.size(); ++i) {
        if (records_[i].file_path == records_[i - 1].file_path &&
            records_[i].chunk_index == records_[i - 1].chunk_index) {
            throw IntegrityError("duplicate record " + records_[i].file_path + "#" +
                                 std::to_string(records_[i].chunk_index));
        }
    }
    index_postings();
}

void RetrievalDatabase::index_postings() {
    postings_.clear();
    for (std::uint32_t i = 0; i < records_.size(); ++i) {
        for (const TokenId t : records_[i].key_token_set) postings_[t].push_back(i);
    }
}

std::size_t RetrievalDatabase::total_tokens() const {
    std::size_t n = 0;
    for (const auto& r : records_) n += r.key_tokens.size();
    return n;
}

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

void RetrievalDatabase::attach_embeddings(const EmbeddingProvider& provider) {
    embedding_dim_ = provider.dimension();
    if (embedding_dim_ == 0) throw ConfigError("embedding dimension must be positive");
    embeddings_.assign(records_.size() * embedding_dim_, 0.0f);
    for (std::size_t i = 0; i < records_.size(); ++i) {
        const auto v = provider.embed(records_[i].key_tokens);
        if (v.size() != embedding_dim_) throw IntegrityError("provider returned a wrong-size vector");
        std::copy(v.begin(), v.end(), embeddings_.begin() + static_cast<std::ptrdiff_t>(i * embedding_dim_));
    }
}

std::span<const float> RetrievalDatabase::embedding_row(std::size_t record_index) const {
    if (!has_embeddings()) throw DataError("database has no embeddings");
    return {embeddings_.data() + record_index * embedding_dim_, embedding_dim_};
}

// ---------------------------------------------------------------------------
// Retrieval
// ---------------------------------------------------------------------------

namespace {

struct Hit {
    double score;
    std::uint32_t index;
};

// (higher score, then record order) for similarities
bool better_sim(const Hit& a, const Hit& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.index < b.index;
}

// (lower distance, then record order) for distances
bool better_dist(const Hit& a, const Hit& b) {
    if (a.score != b.score) return a.score < b.score;
    return a.index < b.index;
}

template <typename Cmp>
void select_top_k(std::vector<Hit>& hits, std::size_t k, Cmp cmp) {
    if (hits.size() > k) {
        std::nth_element(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k) - 1, hits.end(), cmp);
        hits.resize(k);
    }
    std::sort(hits.begin(), hits.end(), cmp);
}

}  // namespace

std::vector<RetrievedSnippet> RetrievalDatabase::retrieve_jaccard(
    std::span<const TokenId> query, std::size_t k,
    const std::optional<std::string>& exclude_file) const {
    if (k == 0) throw ConfigError("k must be positive");
    if (query.empty()) throw DataError("query must be non-empty");

    const TokenSequence q = distinct_sorted(query);

    // Candidate pruning: only records sharing at least one token can score
    // above zero. Zero-score records are consulted only to pad up to k.
    std::vector<std::uint32_t> overlap(records_.size(), 0);
    std::vector<std::uint32_t> touched;
    for (const TokenId t : q) {
        const auto it = postings_.find(t);
        if (it == postings_.end()) continue;
        for (const std::uint32_t idx : it->second) {
            if (overlap[idx]++ == 0) touched.push_back(idx);
        }
    }

    auto excluded = [&](std::uint32_t idx) {
        return exclude_file && records_[idx].file_path == *exclude_file;
    };

    std::vector<Hit> hits;
    hits.reserve(touched.size());
    for (const std::uint32_t idx : touched) {
        if (excluded(idx)) continue;
        const double inter = overlap[idx];
        const double uni = static_cast<double>(q.size() + records_[idx].key_token_set.size()) - inter;
        hits.push_back({inter / uni, idx});
    }
    select_top_k(hits, k, better_sim);

    if (hits.size() < k) {
        for (std::uint32_t idx = 0; idx < records_.size() && hits.size() < k; ++idx) {
            if (overlap[idx] == 0 && !excluded(idx)) hits.push_back({0.0, idx});
        }
    }

    std::vector<RetrievedSnippet> out;
    out.reserve(hits.size());
    for (std::size_t r = 0; r < hits.size(); ++r) {
        out.push_back({&records_[hits[r].index], hits[r].score, static_cast<std::uint32_t>(r + 1)});
    }
    return out;
}

std::vector<RetrievedSnippet> RetrievalDatabase::retrieve_embedding(
    const EmbeddingProvider& provider, std::span<const TokenId> query, std::size_t k,
    const std::optional<std::string>& exclude_file) const {
    if (k == 0) throw ConfigError("k must be positive");
    if (!has_embeddings()) throw DataError("database has no embeddings; rebuild with a provider");
    if (provider.dimension() != embedding_dim_) {
        throw DataError("provider dimension " + std::to_string(provider.dimension()) +
                        " does not match database dimension " + std::to_string(embedding_dim_));
    }

    const std::vector<float> qv = provider.embed(query);
    std::vector<Hit> hits;
    hits.reserve(records_.size());
    for (std::uint32_t idx = 0; idx < records_.size(); ++idx) {
        if (exclude_file && records_[idx].file_path == *exclude_file) continue;
        const float* row = embeddings_.data() + static_cast<std::size_t>(idx) * embedding_dim_;
        double d2 = 0;
        for (std::size_t j = 0; j < embedding_dim_; ++j) {
            const double d = static_cast<double>(qv[j]) - static_cast<double>(row[j]);
            d2 += d * d;
        }
        hits.push_back({d2, idx});
    }
    select_top_k(hits, k, better_dist);

    std::vector<RetrievedSnippet> out;
    out.reserve(hits.size());
    for (std::size_t r = 0; r < hits.size(); ++r) {
        out.push_back({&records_[hits[r].index], hits[r].score, static_cast<std::uint32_t>(r + 1)});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

void RetrievalDatabase::save(const std::filesystem::path& path) const {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kFormatVersion);
    put_u32(out, m_);
    put_u32(out, static_cast<std::uint32_t>(tokenizer_id_.size()));
    out += tokenizer_id_;
    put_u64(out, records_.size());

    std::vector<std::string> paths;
    std::unordered_map<std::string_view, std::uint32_t> path_index;
    for (const auto& r : records_) {
        if (path_index.emplace(r.file_path, static_cast<std::uint32_t>(paths.size())).second) {
            paths.push_back(r.file_path);
        }
    }
    put_u32(out, static_cast<std::uint32_t>(paths.size()));
    for (const auto& p : paths) {
        put_u32(out, static_cast<std::uint32_t>(p.size()));
        out += p;
    }
    for (const auto& r : records_) {
        put_u32(out, path_index.at(r.file_path));
        put_u32(out, r.chunk_index);
        put_u32(out, static_cast<std::uint32_t>(r.key_tokens.size()));
        for (const TokenId t : r.key_tokens) put_varint(out, t);
        put_u32(out, static_cast<std::uint32_t>(r.continuation_tokens.size()));
        for (const TokenId t : r.continuation_tokens) put_varint(out, t);
    }
    out.push_back(has_embeddings() ? 1 : 0);
    if (has_embeddings()) {
        put_u32(out, static_cast<std::uint32_t>(embedding_dim_));
        for (const float v : embeddings_) {
            std::uint32_t bits;
            std::memcpy(&bits, &v, 4);
            put_u32(out, bits);
        }
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write database file: " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("short write to database file: " + path.string());
}

RetrievalDatabase RetrievalDatabase::load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ParseError("cannot open database file: " + path.string());
    std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    Reader r{data, 0, "database"};
    if (r.str(4) != std::string_view(kMagic, 4)) {
        throw ParseError("not a retrieval database: " + path.string());
    }
    const std::uint32_t version = r.u32();
    if (version != kFormatVersion) {
        throw ParseError("unsupported database format version " + std::to_string(version));
    }

    RetrievalDatabase db;
    db.m_ = r.u32();
    db.tokenizer_id_ = r.str(r.u32());
    const std::uint64_t record_count = r.u64();

    const std::uint32_t path_count = r.u32();
    std::vector<std::string> paths(path_count);
    for (auto& p : paths) p = r.str(r.u32());

    db.records_.resize(record_count);
    for (auto& rec : db.records_) {
        const std::uint32_t pi = r.u32();
        if (pi >= paths.size()) throw ParseError("database record references unknown path");
        rec.file_path = paths[pi];
        rec.chunk_index = r.u32();
        rec.key_tokens.resize(r.u32());
        for (auto& t : rec.key_tokens) t = r.varint();
        rec.continuation_tokens.resize(r.u32());
        for (auto& t : rec.continuation_tokens) t = r.varint();
        if (rec.key_tokens.empty()) throw ParseError("database record with empty key chunk");
        rec.key_token_set = distinct_sorted(rec.key_tokens);
    }

    r.need(1);
    const bool embedded = data[r.pos++] != 0;
    if (embedded) {
        db.embedding_dim_ = r.u32();
        db.embeddings_.resize(record_count * db.embedding_dim_);
        for (auto& v : db.embeddings_) {
            const std::uint32_t bits = r.u32();
            std::memcpy(&v, &bits, 4);
        }
    }
    if (r.pos != data.size()) throw ParseError("trailing bytes in database file");

    // Saved records are canonical; a violation means corruption, and sorting
    // here would silently misalign embedding rows.
    for (std::size_t i = 1; i < db.records_.size(); ++i) {
        if (std::tie(db.records_[i - 1].file_path, db.records_[i - 1].chunk_index) >=
            std::tie(db.records_[i].file_path, db.records_[i].chunk_index)) {
            throw ParseError("database records out of canonical order");
        }
    }
    db.index_postings();
    return db;
}

}  // namespace coderag

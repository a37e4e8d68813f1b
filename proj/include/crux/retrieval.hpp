#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include "crux/analyzer.hpp"
#include "crux/dataset.hpp"

namespace crux {

/// Ranked candidates for one topic; scores non-increasing, no duplicates.
struct RankedList {
    std::string topic_id;
    std::vector<ContextEntry> candidates;

    std::vector<std::string> passage_ids() const;
    bool operator==(const RankedList&) const = default;
};

// -- lexical ------------------------------------------------------------------

struct Posting {
    std::uint32_t doc;
    std::uint32_t tf;

    bool operator==(const Posting&) const = default;
};

class InvertedIndex {
  public:
    /// Throws on an empty input or duplicate passage ids.
    static InvertedIndex build(std::span<const Passage> passages, const Analyzer& analyzer = Analyzer::english());
    static InvertedIndex build(const Corpus& corpus, const Analyzer& analyzer = Analyzer::english()) {
        return build(std::span<const Passage>(corpus.passages()), analyzer);
    }

    std::size_t num_docs() const noexcept { return doc_ids_.size(); }
    double avgdl() const noexcept { return avgdl_; }
    std::uint64_t total_length() const noexcept { return total_length_; }
    const std::string& doc_id(std::uint32_t doc) const { return doc_ids_.at(doc); }
    std::uint32_t doc_length(std::uint32_t doc) const { return doc_lengths_.at(doc); }
    std::optional<std::uint32_t> doc_length(const std::string& passage_id) const;

    std::size_t df(const std::string& term) const;
    std::uint64_t corpus_frequency(const std::string& term) const;
    const std::vector<Posting>* postings(const std::string& term) const;
    std::size_t num_terms() const noexcept { return postings_.size(); }
    const Analyzer& analyzer() const noexcept { return analyzer_; }

    void save(const std::filesystem::path& path) const;
    static InvertedIndex load(const std::filesystem::path& path, const Analyzer& analyzer = Analyzer::english());

    bool same_content(const InvertedIndex& other) const;

  private:
    explicit InvertedIndex(Analyzer analyzer) : analyzer_(std::move(analyzer)) {}
    void finalize();

    Analyzer analyzer_;
    std::vector<std::string> doc_ids_;
    std::vector<std::uint32_t> doc_lengths_;
    std::unordered_map<std::string, std::uint32_t> doc_by_id_;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
    std::uint64_t total_length_ = 0;
    double avgdl_ = 0.0;
};

struct Bm25Params {
    double k1 = 0.9;
    double b = 0.4;
};

/// idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5))
double bm25_idf(std::size_t num_docs, std::size_t df);

/// Okapi BM25 over the query's analyzed terms (repeated terms count once per
/// occurrence). Ties break by passage id ascending. Queries without indexed
/// terms return an empty list.
RankedList bm25_search(const InvertedIndex& index, std::string_view query, std::size_t k,
                       const Bm25Params& params = {}, std::string topic_id = {});

// -- dense --------------------------------------------------------------------

class EmbeddingProvider {
  public:
    virtual ~EmbeddingProvider() = default;
    virtual std::size_t dimension() const = 0;
    virtual std::vector<double> embed(std::string_view text) = 0;
    virtual std::vector<std::vector<double>> embed_batch(std::span<const std::string> texts);
};

/// Signed feature hashing of analyzed terms, L2-normalised. Deterministic
/// offline encoder; real encoders plug in through EmbeddingProvider.
class HashingEmbedder final : public EmbeddingProvider {
  public:
    explicit HashingEmbedder(std::size_t dimension = 256, Analyzer analyzer = Analyzer::english())
        : dimension_(dimension), analyzer_(std::move(analyzer)) {}
    std::size_t dimension() const override { return dimension_; }
    std::vector<double> embed(std::string_view text) override;

  private:
    std::size_t dimension_;
    Analyzer analyzer_;
};

/// POSTs `{"texts": [...]}` to `{base_url}/embed`, expects `{"embeddings": [[...], ...]}`.
std::unique_ptr<EmbeddingProvider> make_http_embedder(std::string base_url, std::size_t dimension,
                                                      std::chrono::milliseconds timeout = std::chrono::seconds(60));

/// Precomputed passage vectors.
class EmbeddingStore {
  public:
    EmbeddingStore() = default;
    EmbeddingStore(std::size_t dimension) : dimension_(dimension) {}

    static EmbeddingStore build(EmbeddingProvider& provider, const Corpus& corpus);

    void add(const std::string& passage_id, std::vector<double> vector);
    const std::vector<double>* find(const std::string& passage_id) const;
    const std::vector<double>& at(const std::string& passage_id) const;
    std::size_t dimension() const noexcept { return dimension_; }
    std::size_t size() const noexcept { return ids_.size(); }
    const std::vector<std::string>& ids() const noexcept { return ids_; }

  private:
    std::size_t dimension_ = 0;
    std::vector<std::string> ids_;
    std::unordered_map<std::string, std::vector<double>> vectors_;
};

double dot(std::span<const double> a, std::span<const double> b);
double cosine(std::span<const double> a, std::span<const double> b);

/// Exhaustive inner-product scan; ties by passage id.
RankedList dense_search(const std::vector<double>& query_vector, const EmbeddingStore& store, std::size_t k,
                        std::string topic_id = {});
RankedList dense_search(EmbeddingProvider& provider, const EmbeddingStore& store, std::string_view query,
                        std::size_t k, std::string topic_id = {});

// -- re-ranking ---------------------------------------------------------------

/// Maximal marginal relevance. Relevance is min-max normalised over the
/// candidate list; the first pick is the most relevant candidate, later picks
/// maximise lambda*rel - (1-lambda)*max cos(c, selected). Ties go to the
/// earlier input position. Output scores are rank-derived (k, k-1, ...).
RankedList mmr_rerank(const RankedList& candidates, const EmbeddingStore& vectors, double lambda, std::size_t k);

/// Plug-in output: either one score per passage or a full permutation
/// (indices into the input, best first).
using RerankOutput = std::variant<std::vector<double>, std::vector<std::size_t>>;

class RerankScorer {
  public:
    virtual ~RerankScorer() = default;
    /// Receives the whole candidate list; windowing is the plug-in's concern.
    virtual RerankOutput score(std::string_view query, std::span<const std::string> passages) = 0;
};

/// Fraction of the query's analyzed terms present in the passage.
class TermOverlapScorer final : public RerankScorer {
  public:
    RerankOutput score(std::string_view query, std::span<const std::string> passages) override;
};

/// POSTs `{"query", "passages"}` to `{base_url}/rerank`; accepts
/// `{"scores": [...]}` or `{"permutation": [...]}`.
std::unique_ptr<RerankScorer> make_http_reranker(std::string base_url,
                                                 std::chrono::milliseconds timeout = std::chrono::seconds(120));

/// Reorders candidates by the scorer. Equal scores keep input order.
/// Throws ValidationError on wrong cardinality or an invalid permutation.
RankedList external_rerank(const RankedList& candidates, std::string_view query, const Corpus& corpus,
                           RerankScorer& scorer);

// -- context assembly ---------------------------------------------------------

inline constexpr std::size_t kHardTokenCap = 2500;

struct Budget {
    std::optional<std::size_t> max_passages;
    std::optional<std::size_t> max_tokens;
    std::size_t hard_cap = kHardTokenCap;

    std::size_t token_limit() const { return max_tokens ? std::min(*max_tokens, hard_cap) : hard_cap; }
};

/// Takes candidates in rank order while both budgets hold; stops at the first
/// passage that would breach the token limit.
RetrievalContext assemble_context(const RankedList& ranked, const Corpus& corpus, const Budget& budget);

// -- run files ----------------------------------------------------------------

/// `topic_id passage_id rank score tag`, rank 1-based.
void write_run(const std::vector<RankedList>& runs, const std::filesystem::path& path, std::string_view tag);
std::string format_run(const std::vector<RankedList>& runs, std::string_view tag);
std::vector<RankedList> read_run(const std::filesystem::path& path);

}  // namespace crux

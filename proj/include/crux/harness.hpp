#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <future>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "crux/dataset.hpp"
#include "crux/llm.hpp"
#include "crux/metrics.hpp"
#include "crux/report.hpp"
#include "crux/retrieval.hpp"

namespace crux {

struct PipelineConfig {
    std::string run_id = "run";
    std::string method = "bm25";       // bm25 | dense
    std::string reranker = "none";     // none | mmr | plugin
    double mmr_lambda = 0.5;
    std::size_t depth = 100;           // initial candidate pool
    std::string k_policy = "oracle";   // oracle | fixed
    std::size_t k = 10;
    std::string token_budget = "oracle_tokens";  // oracle_tokens | cap_only
    std::size_t token_cap = kHardTokenCap;
    int eta = 3;
    double alpha = 0.5;
    double w = 0.5;
    bool generation = false;
    std::uint64_t seed = 0;
    std::size_t embedding_dim = 256;
    std::string embed_url;
    std::string rerank_url;
    int threads = 4;

    /// Flat `key = value` lines; `#` starts a comment; values may be quoted.
    static PipelineConfig parse(std::string_view text);
    static PipelineConfig load(const std::filesystem::path& path);
    void validate() const;
    ReportConfig report_config() const;
};

/// Ratings keyed by the content hash of (question, text). Concurrent callers
/// asking for the same pair share one judge call.
class JudgmentCache {
  public:
    explicit JudgmentCache(Judge& judge) : judge_(judge) {}

    int rate(std::string_view question, std::string_view text);
    /// Stores a known rating without calling the judge; existing entries win.
    void seed(std::string_view question, std::string_view text, int rating);

    std::uint64_t judge_calls() const noexcept { return calls_.load(); }
    std::size_t size() const;

  private:
    Judge& judge_;
    mutable std::mutex mutex_;
    std::unordered_map<std::string, std::shared_future<int>> entries_;
    std::atomic<std::uint64_t> calls_{0};
};

/// Search structures shared by every topic of a run.
struct Resources {
    const InvertedIndex* index = nullptr;
    EmbeddingProvider* embedder = nullptr;
    const EmbeddingStore* store = nullptr;
    RerankScorer* plugin = nullptr;
};

struct Generation {
    std::string run_id;
    std::string topic_id;
    std::string text;
    /// Judge ratings of `text`, one per answerable question in topic order.
    std::vector<int> ratings;
};

struct RunOutput {
    MetricReport report;
    std::vector<RankedList> rankings;
    std::vector<RetrievalContext> contexts;
    std::vector<Generation> generations;
};

/// Per-topic ratings of `passage_ids` for the answerable questions: oracle
/// passages come from the matrix, everything else through the cache.
GradeTable grade_passages(const Topic& topic, const RatingMatrix& matrix, const Corpus& corpus,
                          std::span<const std::string> passage_ids, JudgmentCache& cache);

/// Ratings of a free text (a generated or reference result) per answerable question.
std::vector<int> grade_text(const Topic& topic, std::string_view text, JudgmentCache& cache);

/// Rows #1 direct prompting, #2 oracle result, #3 oracle retrieval.
std::vector<MetricReport> run_reference_bounds(const Dataset& dataset, Gateway& gateway, JudgmentCache& cache,
                                               const PipelineConfig& config,
                                               std::vector<Generation>* generations = nullptr);

RunOutput run_pipeline(const Dataset& dataset, const PipelineConfig& config, const Resources& resources,
                       Gateway& gateway, JudgmentCache& cache);

/// The report request for a context: passages numbered "[n] text", blank-line separated.
std::string format_context(const RetrievalContext& context, const Corpus& corpus);

struct CorrelationRow {
    std::string field;
    std::optional<double> kendall;
    std::optional<double> spearman;
    std::optional<double> pearson;
};

struct CorrelationTable {
    std::string target;
    std::vector<std::string> run_ids;
    std::vector<CorrelationRow> rows;
    std::vector<std::string> warnings;
};

/// Correlates the target aggregate across runs with every other aggregate
/// present in all runs.
CorrelationTable correlate_runs(const std::vector<MetricReport>& reports, std::string_view target_field);
std::string serialize_correlation(const CorrelationTable& table);
std::string render_correlation(const CorrelationTable& table);

/// Uniform integer in [0, n) by rejection, identical on every platform.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n);

/// Seeded draws without replacement from the top `pool_depth` candidates of
/// each topic in `run`; every context keeps the sampled order.
std::vector<RetrievalContext> sample_contexts(const std::vector<RankedList>& run, const Corpus& corpus,
                                              std::size_t n_contexts, std::size_t context_size,
                                              std::size_t pool_depth, std::uint64_t seed);

void write_generations(const std::vector<Generation>& generations, const std::filesystem::path& path);
std::vector<Generation> read_generations(const std::filesystem::path& path);

}  // namespace crux

#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "crux/dataset.hpp"
#include "crux/llm.hpp"
#include "crux/tokenizer.hpp"

namespace crux {

/// A human-written multi-document summary and its source documents.
struct RawExample {
    std::string example_id;
    std::string summary;
    std::vector<std::string> documents;
};

/// Reads `{"example_id", "summary", "documents": [...]}` lines.
std::vector<RawExample> load_examples(const std::filesystem::path& path);
void validate(const RawExample& example);

/// Report request extracted from the `<r>` span of the reply. An empty
/// extraction is retried once before throwing ValidationError.
std::string synthesize_query(Gateway& gateway, const std::string& summary);

/// Up to `n` trimmed, de-duplicated questions in reply order.
std::vector<std::string> synthesize_questions(Gateway& gateway, const std::string& summary, std::size_t n);

/// Splits a document into segments of at most `max_tokens` tokens, cutting at
/// paragraph boundaries, then sentence boundaries, then between tokens.
std::vector<std::string> split_document(const std::string& document, std::size_t max_tokens,
                                        const Tokenizer& tokenizer = default_tokenizer());

struct PassageText {
    std::string text;
    /// True when the model returned no tagged passage for the segment.
    bool fallback = false;
};

std::vector<PassageText> decontextualize(Gateway& gateway, const std::string& document,
                                         std::size_t max_segment_tokens = 1024,
                                         const Tokenizer& tokenizer = default_tokenizer());

/// Rates every (question, passage) pair with up to `parallelism` concurrent
/// judge calls. A failing cell aborts the matrix with an error naming it.
RatingMatrix judge_matrix(const std::string& topic_id, std::span<const std::string> questions,
                          std::span<const Passage> passages, Judge& judge, int parallelism = 1);

/// answerable[i] <=> max_j ratings[i][j] >= eta.
std::vector<bool> filter_questions(const RatingMatrix& matrix, int eta);

/// Greedy required subset over the answerable questions: repeatedly take the
/// passage answering the most uncovered questions (ties to the lower index)
/// until no passage adds coverage, then drop picks made redundant by later
/// ones. Returns column indices in pick order.
std::vector<std::size_t> build_required_subset(const RatingMatrix& matrix, const std::vector<bool>& answerable,
                                               int eta);

struct BuildConfig {
    std::size_t n_questions = 15;
    int eta = 3;
    std::size_t max_segment_tokens = 1024;
    int parallelism = 8;
};

struct SkippedExample {
    std::string example_id;
    std::string reason;
};

struct BuildResult {
    Dataset dataset;
    std::vector<SkippedExample> skipped;
};

/// Runs the full construction for every example. Failing examples are
/// skipped and listed; passages of built examples share one corpus, so each
/// topic's corpus holds every other topic's passages as distractors.
BuildResult build_dataset(std::span<const RawExample> examples, Gateway& gateway, Judge& judge,
                          const BuildConfig& config, const Tokenizer& tokenizer = default_tokenizer());

/// Writes the dataset files plus `build_report.json`.
void save_build(const BuildResult& result, const std::filesystem::path& dir);

}  // namespace crux

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "crux/tokenizer.hpp"

namespace crux {

/// Decontextualized retrieval unit.
struct Passage {
    std::string passage_id;
    std::string source_doc_id;
    std::string text;
    std::size_t token_count = 0;
    /// Empty for decontextualized passages; "raw_segment" when the model
    /// returned no tagged passage and the segment was kept verbatim.
    std::string provenance;

    bool operator==(const Passage&) const = default;
};

struct SubQuestion {
    std::size_t question_idx = 0;
    std::string text;
    /// False when no oracle passage reaches the answerability threshold.
    bool answerable = true;

    bool operator==(const SubQuestion&) const = default;
};

/// One evaluation example: query x, oracle result y*, sub-questions Q,
/// relevant passages P* and the required subset P** (greedy order).
struct Topic {
    std::string topic_id;
    std::string query;
    std::string summary;
    std::vector<SubQuestion> questions;
    std::vector<std::string> oracle_passage_ids;
    std::vector<std::string> required_subset_ids;

    std::vector<std::size_t> answerable_indices() const;
    bool operator==(const Topic&) const = default;
};

/// Graded answerability ratings, rows = questions, columns = oracle passages.
class RatingMatrix {
  public:
    RatingMatrix() = default;
    RatingMatrix(std::string topic_id, std::vector<std::string> passage_ids,
                 std::vector<std::vector<int>> ratings);

    const std::string& topic_id() const noexcept { return topic_id_; }
    const std::vector<std::string>& passage_ids() const noexcept { return passage_ids_; }
    const std::vector<std::vector<int>>& ratings() const noexcept { return ratings_; }

    std::size_t num_questions() const noexcept { return ratings_.size(); }
    std::size_t num_passages() const noexcept { return passage_ids_.size(); }
    int at(std::size_t question, std::size_t passage) const { return ratings_.at(question).at(passage); }
    std::optional<std::size_t> column_of(const std::string& passage_id) const;

    bool operator==(const RatingMatrix& o) const {
        return topic_id_ == o.topic_id_ && passage_ids_ == o.passage_ids_ && ratings_ == o.ratings_;
    }

  private:
    std::string topic_id_;
    std::vector<std::string> passage_ids_;
    std::vector<std::vector<int>> ratings_;
    std::unordered_map<std::string, std::size_t> column_;
};

struct ContextEntry {
    std::string passage_id;
    double score = 0.0;

    bool operator==(const ContextEntry&) const = default;
};

/// Ordered, budgeted list of passages (rank 1 first).
struct RetrievalContext {
    std::string topic_id;
    std::vector<ContextEntry> entries;
    std::size_t total_tokens = 0;

    std::vector<std::string> passage_ids() const;
    bool operator==(const RetrievalContext&) const = default;
};

/// Immutable passage collection with id lookup.
class Corpus {
  public:
    Corpus() = default;
    explicit Corpus(std::vector<Passage> passages);

    const std::vector<Passage>& passages() const noexcept { return passages_; }
    std::size_t size() const noexcept { return passages_.size(); }
    bool empty() const noexcept { return passages_.empty(); }
    const Passage* find(const std::string& passage_id) const;
    const Passage& at(const std::string& passage_id) const;

  private:
    std::vector<Passage> passages_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

// -- validation ---------------------------------------------------------------

void validate(const Topic& topic);
void validate(const RatingMatrix& matrix);
/// Cross-checks dimensions and that every answerable question has an oracle
/// passage rated >= eta.
void validate(const Topic& topic, const RatingMatrix& matrix, int eta);
void validate(const RetrievalContext& context, const Corpus& corpus);

// -- files (one JSON object per line) -----------------------------------------

Corpus load_corpus(const std::filesystem::path& path,
                   const Tokenizer& tokenizer = default_tokenizer());
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

void save_topics(const std::vector<Topic>& topics, const std::filesystem::path& path);
std::vector<Topic> load_topics(const std::filesystem::path& path);

void save_matrices(const std::vector<RatingMatrix>& matrices, const std::filesystem::path& path);
std::vector<RatingMatrix> load_matrices(const std::filesystem::path& path);

void save_contexts(const std::vector<RetrievalContext>& contexts, const std::filesystem::path& path);
std::vector<RetrievalContext> load_contexts(const std::filesystem::path& path);

RetrievalContext make_context(std::string topic_id, std::vector<ContextEntry> entries,
                              const Corpus& corpus);

/// Everything `crux build` writes into its output directory.
struct Dataset {
    Corpus corpus;
    std::vector<Topic> topics;
    std::map<std::string, RatingMatrix> matrices;
    int eta = 3;

    const RatingMatrix& matrix(const std::string& topic_id) const;
    /// Z*: the required subset in greedy order.
    RetrievalContext oracle_context(const Topic& topic) const;
};

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace crux

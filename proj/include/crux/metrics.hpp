#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "crux/dataset.hpp"

namespace crux {

struct MetricConfig {
    int eta = 3;
    double alpha = 0.5;
    double w = 0.5;
    // Discounts use log base 2 throughout.
};

/// Ratings of a ranked text list against the answerable questions:
/// grades[i][r] = rating(q_i, passage at rank r+1).
using GradeTable = std::vector<std::vector<int>>;

/// Binary answerability over the topic's answerable questions.
struct AnswerabilityVector {
    std::string topic_id;
    std::vector<bool> bits;
};

/// bit_i = max_r grades[i][r] >= eta.
std::vector<bool> answerability(const GradeTable& grades, int eta);

/// Gathers ratings for `passage_ids` from the oracle matrix, restricted to
/// the topic's answerable questions. Throws ValidationError for a passage
/// with no pre-judged rating (it has to be judged on demand).
GradeTable grades_from_matrix(const Topic& topic, const RatingMatrix& matrix,
                              std::span<const std::string> passage_ids);

AnswerabilityVector answerability_of_context(const Topic& topic, const RatingMatrix& matrix,
                                             const RetrievalContext& context, int eta);

/// Fraction of set bits. Throws UndefinedMetric on an empty vector.
double coverage(const std::vector<bool>& bits);
inline double coverage(const AnswerabilityVector& v) { return coverage(v.bits); }

/// Novelty gains ng(r) of a ranked list.
std::vector<double> novelty_gains(const GradeTable& grades, int eta, double alpha);
/// sum_r ng(r) / log2(r+1).
double alpha_dcg(const GradeTable& grades, int eta, double alpha);
/// Greedy maximal-novelty-gain ordering of the columns of `grades`; ties
/// go to the lower column index.
std::vector<std::size_t> ideal_order(const GradeTable& grades, int eta, double alpha);
GradeTable reorder_columns(const GradeTable& grades, std::span<const std::size_t> order);

/// alpha-DCG of `context` divided by the alpha-DCG of `ideal_set` in its greedy
/// ideal order. Values above 1 are reported as-is. Throws UndefinedMetric when
/// the ideal gain is zero.
double alpha_ndcg(const GradeTable& context, const GradeTable& ideal_set, int eta, double alpha);

/// ((cov_z / tokens_z) / (cov_star / tokens_star))^w.
double density(double cov_z, std::size_t tokens_z, double cov_star, std::size_t tokens_star, double w);

struct RelevanceScores {
    double recall = 0.0;
    double map = 0.0;
    double ndcg = 0.0;
};

/// Binary-relevance Recall@k, AP@k and nDCG@k (log2 discount).
RelevanceScores relevance_metrics(std::span<const std::string> ranked_ids,
                                  const std::unordered_set<std::string>& relevant, std::size_t k);

// -- statistics ---------------------------------------------------------------

/// Tie-corrected Kendall tau-b.
double kendall_tau(std::span<const double> x, std::span<const double> y);
double pearson_r(std::span<const double> x, std::span<const double> y);
/// Pearson correlation of average ranks.
double spearman_rho(std::span<const double> x, std::span<const double> y);
/// Average (fractional) ranks, 1-based.
std::vector<double> average_ranks(std::span<const double> x);

/// Fleiss' kappa; labels[item][rater] in [0, categories). Every item must
/// carry the same number (>= 2) of ratings. Perfect agreement on a single
/// category yields 1.
double fleiss_kappa(const std::vector<std::vector<int>>& labels, int categories);

struct ClassScores {
    std::size_t true_positive = 0;
    std::size_t false_positive = 0;
    std::size_t false_negative = 0;
    /// Absent when the denominator is zero.
    std::optional<double> precision;
    std::optional<double> recall;
};

struct JudgeAlignment {
    ClassScores answerable;
    ClassScores unanswerable;
    std::size_t n = 0;
};

/// Binarises both rating lists at eta (answerable <=> rating >= eta) and
/// scores the LLM against the human labels.
JudgeAlignment judge_vs_human(std::span<const int> llm_ratings, std::span<const int> human_ratings, int eta);

}  // namespace crux

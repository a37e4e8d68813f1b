#include "crux/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "crux/error.hpp"

namespace crux {

std::vector<bool> answerability(const GradeTable& grades, int eta) {
    std::vector<bool> bits;
    bits.reserve(grades.size());
    for (const auto& row : grades) bits.push_back(std::any_of(row.begin(), row.end(), [eta](int r) { return r >= eta; }));
    return bits;
}

GradeTable grades_from_matrix(const Topic& topic, const RatingMatrix& matrix, std::span<const std::string> passage_ids) {
    std::vector<std::size_t> cols;
    cols.reserve(passage_ids.size());
    for (const auto& id : passage_ids) {
        auto col = matrix.column_of(id);
        if (!col)
            throw ValidationError("topic " + topic.topic_id + ": passage " + id +
                                  " has no pre-judged rating; judge it on demand");
        cols.push_back(*col);
    }
    GradeTable grades;
    for (auto qi : topic.answerable_indices()) {
        std::vector<int> row;
        row.reserve(cols.size());
        for (auto c : cols) row.push_back(matrix.at(qi, c));
        grades.push_back(std::move(row));
    }
    return grades;
}

AnswerabilityVector answerability_of_context(const Topic& topic, const RatingMatrix& matrix,
                                             const RetrievalContext& context, int eta) {
    auto ids = context.passage_ids();
    return {topic.topic_id, answerability(grades_from_matrix(topic, matrix, ids), eta)};
}

double coverage(const std::vector<bool>& bits) {
    if (bits.empty()) throw UndefinedMetric("coverage is undefined without answerable questions");
    auto hit = std::count(bits.begin(), bits.end(), true);
    return static_cast<double>(hit) / static_cast<double>(bits.size());
}

std::vector<double> novelty_gains(const GradeTable& grades, int eta, double alpha) {
    std::size_t depth = 0;
    for (const auto& row : grades) depth = std::max(depth, row.size());
    std::vector<double> ng(depth, 0.0);
    for (const auto& row : grades) {
        int seen = 0;
        for (std::size_t r = 0; r < row.size(); ++r) {
            if (row[r] < eta) continue;
            ng[r] += std::pow(1.0 - alpha, seen);
            ++seen;
        }
    }
    return ng;
}

double alpha_dcg(const GradeTable& grades, int eta, double alpha) {
    auto ng = novelty_gains(grades, eta, alpha);
    double dcg = 0.0;
    for (std::size_t r = 0; r < ng.size(); ++r) dcg += ng[r] / std::log2(static_cast<double>(r) + 2.0);
    return dcg;
}

std::vector<std::size_t> ideal_order(const GradeTable& grades, int eta, double alpha) {
    std::size_t cols = grades.empty() ? 0 : grades.front().size();
    std::vector<int> seen(grades.size(), 0);
    std::vector<bool> used(cols, false);
    std::vector<std::size_t> order;
    order.reserve(cols);
    for (std::size_t step = 0; step < cols; ++step) {
        std::size_t best = cols;
        double best_gain = -1.0;
        for (std::size_t c = 0; c < cols; ++c) {
            if (used[c]) continue;
            double gain = 0.0;
            for (std::size_t i = 0; i < grades.size(); ++i)
                if (grades[i][c] >= eta) gain += std::pow(1.0 - alpha, seen[i]);
            if (gain > best_gain) {
                best = c;
                best_gain = gain;
            }
        }
        used[best] = true;
        order.push_back(best);
        for (std::size_t i = 0; i < grades.size(); ++i)
            if (grades[i][best] >= eta) ++seen[i];
    }
    return order;
}

GradeTable reorder_columns(const GradeTable& grades, std::span<const std::size_t> order) {
    GradeTable out;
    out.reserve(grades.size());
    for (const auto& row : grades) {
        std::vector<int> r;
        r.reserve(order.size());
        for (auto c : order) r.push_back(row.at(c));
        out.push_back(std::move(r));
    }
    return out;
}

double alpha_ndcg(const GradeTable& context, const GradeTable& ideal_set, int eta, double alpha) {
    if (alpha <= 0.0 || alpha >= 1.0) throw UsageError("alpha must be in (0,1)");
    auto order = ideal_order(ideal_set, eta, alpha);
    double idcg = alpha_dcg(reorder_columns(ideal_set, order), eta, alpha);
    if (idcg <= 0.0) throw UndefinedMetric("alpha-nDCG is undefined: the ideal context answers no question");
    return alpha_dcg(context, eta, alpha) / idcg;
}

double density(double cov_z, std::size_t tokens_z, double cov_star, std::size_t tokens_star, double w) {
    if (tokens_z == 0 || tokens_star == 0) throw UndefinedMetric("density needs a positive token count");
    if (cov_star <= 0.0) throw UndefinedMetric("density needs a positive reference coverage");
    double ratio = (cov_z / static_cast<double>(tokens_z)) / (cov_star / static_cast<double>(tokens_star));
    return std::pow(ratio, w);
}

RelevanceScores relevance_metrics(std::span<const std::string> ranked_ids, const std::unordered_set<std::string>& relevant,
                                  std::size_t k) {
    if (relevant.empty()) throw UndefinedMetric("relevance metrics need at least one relevant passage");
    const std::size_t depth = std::min(k, ranked_ids.size());
    const auto R = static_cast<double>(relevant.size());
    std::size_t hits = 0;
    double ap = 0.0, dcg = 0.0;
    std::unordered_set<std::string> counted;
    for (std::size_t r = 0; r < depth; ++r) {
        if (!relevant.contains(ranked_ids[r]) || !counted.insert(ranked_ids[r]).second) continue;
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(r + 1);
        dcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    }
    double idcg = 0.0;
    for (std::size_t r = 0; r < std::min(k, relevant.size()); ++r) idcg += 1.0 / std::log2(static_cast<double>(r) + 2.0);
    return {static_cast<double>(hits) / R, ap / R, idcg > 0.0 ? dcg / idcg : 0.0};
}

}  // namespace crux

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace crux {

/// Per-topic metric values, all on the [0,1] scale. Absent means "not
/// computable" (rendered as "-"), never zero.
struct TopicMetrics {
    std::optional<double> cov_z;
    std::optional<double> alpha_ndcg;
    std::optional<double> den_z;
    std::optional<double> cov_y;
    std::optional<double> den_y;
    std::optional<double> recall;
    std::optional<double> map;
    std::optional<double> ndcg;

    static constexpr std::array<std::string_view, 8> kFields = {
        "cov_z", "alpha_ndcg", "den_z", "cov_y", "den_y", "recall", "map", "ndcg"};

    std::optional<double>& field(std::string_view name);
    const std::optional<double>& field(std::string_view name) const;

    bool operator==(const TopicMetrics&) const = default;
};

struct ReportConfig {
    int eta = 3;
    double alpha = 0.5;
    double w = 0.5;
    std::string k_policy = "oracle";
    std::string token_budget = "oracle_tokens";
    std::string method;
    std::string reranker;
    std::uint64_t seed = 0;

    bool operator==(const ReportConfig&) const = default;
};

struct MetricReport {
    std::string run_id;
    std::vector<std::pair<std::string, TopicMetrics>> per_topic;
    TopicMetrics aggregates;
    ReportConfig config;
    /// Topics with zero answerable questions, excluded from aggregates.
    std::vector<std::string> excluded_topics;
    std::vector<std::string> warnings;

    /// Recomputes `aggregates` as the mean of the present per-topic values.
    void aggregate();
    bool operator==(const MetricReport&) const = default;
};

void write_reports(const std::vector<MetricReport>& reports, const std::filesystem::path& path);
std::string serialize_reports(const std::vector<MetricReport>& reports);
std::vector<MetricReport> read_reports(const std::filesystem::path& path);

/// Aligned plain-text table, one row per report, values x100.
std::string render_table(const std::vector<MetricReport>& reports);

}  // namespace crux

#include "crux/report.hpp"

#include <cstdio>
#include <map>
#include <sstream>

#include "crux/error.hpp"
#include "jsonl.hpp"

namespace crux {

using detail::json;

std::optional<double>& TopicMetrics::field(std::string_view name) {
    return const_cast<std::optional<double>&>(std::as_const(*this).field(name));
}

const std::optional<double>& TopicMetrics::field(std::string_view name) const {
    if (name == "cov_z") return cov_z;
    if (name == "alpha_ndcg") return alpha_ndcg;
    if (name == "den_z") return den_z;
    if (name == "cov_y") return cov_y;
    if (name == "den_y") return den_y;
    if (name == "recall") return recall;
    if (name == "map") return map;
    if (name == "ndcg") return ndcg;
    throw UsageError("unknown metric field: " + std::string(name));
}

void MetricReport::aggregate() {
    aggregates = {};
    for (auto name : TopicMetrics::kFields) {
        double sum = 0.0;
        std::size_t n = 0;
        for (const auto& [_, m] : per_topic) {
            if (const auto& v = m.field(name)) {
                sum += *v;
                ++n;
            }
        }
        if (n > 0) aggregates.field(name) = sum / static_cast<double>(n);
    }
}

namespace {

json metrics_json(const TopicMetrics& m) {
    json out = json::object();
    for (auto name : TopicMetrics::kFields)
        if (const auto& v = m.field(name)) out[std::string(name)] = *v;
    return out;
}

TopicMetrics metrics_from(const json& j) {
    TopicMetrics m;
    for (auto name : TopicMetrics::kFields) {
        auto key = std::string(name);
        if (j.contains(key) && !j[key].is_null()) m.field(name) = j[key].get<double>();
    }
    return m;
}

json config_json(const ReportConfig& c) {
    return json{{"eta", c.eta},           {"alpha", c.alpha},         {"w", c.w},
                {"k_policy", c.k_policy}, {"token_budget", c.token_budget},
                {"method", c.method},     {"reranker", c.reranker},   {"seed", c.seed}};
}

ReportConfig config_from(const json& j) {
    ReportConfig c;
    c.eta = j.value("eta", 3);
    c.alpha = j.value("alpha", 0.5);
    c.w = j.value("w", 0.5);
    c.k_policy = j.value("k_policy", std::string("oracle"));
    c.token_budget = j.value("token_budget", std::string("oracle_tokens"));
    c.method = j.value("method", std::string{});
    c.reranker = j.value("reranker", std::string{});
    c.seed = j.value("seed", std::uint64_t{0});
    return c;
}

}  // namespace

std::string serialize_reports(const std::vector<MetricReport>& reports) {
    std::string out;
    for (const auto& r : reports) {
        for (const auto& [topic_id, m] : r.per_topic) {
            json rec{{"run_id", r.run_id}, {"topic_id", topic_id}};
            rec.update(metrics_json(m));
            out += rec.dump();
            out += '\n';
        }
        json agg{{"run_id", r.run_id},
                 {"aggregate", metrics_json(r.aggregates)},
                 {"n_topics", r.per_topic.size()},
                 {"excluded_topics", r.excluded_topics},
                 {"warnings", r.warnings},
                 {"config", config_json(r.config)}};
        out += agg.dump();
        out += '\n';
    }
    return out;
}

void write_reports(const std::vector<MetricReport>& reports, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << serialize_reports(reports);
}

std::vector<MetricReport> read_reports(const std::filesystem::path& path) {
    std::vector<MetricReport> reports;
    std::map<std::string, std::size_t> index;
    auto get = [&](const std::string& run_id) -> MetricReport& {
        auto [it, inserted] = index.emplace(run_id, reports.size());
        if (inserted) reports.push_back(MetricReport{run_id, {}, {}, {}, {}, {}});
        return reports[it->second];
    };
    detail::for_each_record(path, [&](const json& rec, std::size_t line) {
        auto& r = get(rec.at("run_id").get<std::string>());
        if (rec.contains("aggregate")) {
            r.aggregates = metrics_from(rec["aggregate"]);
            r.excluded_topics = rec.value("excluded_topics", std::vector<std::string>{});
            r.warnings = rec.value("warnings", std::vector<std::string>{});
            if (rec.contains("config")) r.config = config_from(rec["config"]);
        } else if (rec.contains("topic_id")) {
            r.per_topic.emplace_back(rec["topic_id"].get<std::string>(), metrics_from(rec));
        } else {
            throw ParseError("report record has neither topic_id nor aggregate", line);
        }
    });
    return reports;
}

std::string render_table(const std::vector<MetricReport>& reports) {
    static constexpr std::array<std::pair<std::string_view, std::string_view>, 8> cols = {{
        {"cov_z", "Cov(Z)"}, {"alpha_ndcg", "a-nDCG"}, {"cov_y", "Cov(y)"}, {"den_z", "Den(Z)"},
        {"den_y", "Den(y)"}, {"recall", "Recall"}, {"map", "MAP"}, {"ndcg", "nDCG"}}};
    std::size_t name_w = 18;
    for (const auto& r : reports) name_w = std::max(name_w, r.run_id.size() + 2);
    std::ostringstream os;
    auto pad = [](std::string s, std::size_t w) {
        if (s.size() < w) s.insert(0, w - s.size(), ' ');
        return s;
    };
    std::string header = "Retrieval Context";
    header.resize(name_w, ' ');
    os << header;
    for (const auto& [_, label] : cols) os << pad(std::string(label), 9);
    os << '\n';
    for (const auto& r : reports) {
        std::string name = r.run_id;
        name.resize(name_w, ' ');
        os << name;
        for (const auto& [field, _] : cols) {
            const auto& v = r.aggregates.field(field);
            char buf[32];
            if (v)
                std::snprintf(buf, sizeof buf, "%.1f", *v * 100.0);
            else
                std::snprintf(buf, sizeof buf, "-");
            os << pad(buf, 9);
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace crux

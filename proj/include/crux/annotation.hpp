#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "crux/dataset.hpp"
#include "crux/harness.hpp"

namespace crux {

inline constexpr std::string_view kRubricVersion = "grading-0to5-v1";

struct TaskQuestion {
    std::size_t question_idx = 0;
    std::string text;
};

/// Coverage judgment of one generated report.
struct T1Task {
    std::string task_id;
    std::string topic_id;
    std::string report;
    std::vector<TaskQuestion> questions;
    /// Pipeline that produced the report; never sent to annotators.
    std::string context_source;
    /// Judge ratings of the report, aligned with `questions`.
    std::vector<int> llm_ratings;
};

/// Rubric rating of one passage against a few sub-questions.
struct T2Task {
    std::string task_id;
    std::string topic_id;
    std::string passage_id;
    std::string passage;
    std::vector<TaskQuestion> questions;
    /// Pre-judged ratings aligned with `questions`.
    std::vector<int> llm_ratings;
};

struct TaskBundle {
    std::vector<T1Task> t1;
    std::vector<T2Task> t2;
};

/// T1 tasks from the generations; T2 tasks from `t2_per_topic` seeded oracle
/// passages per topic, each paired with `questions_per_t2` answerable questions.
TaskBundle make_task_bundle(const Dataset& dataset, const std::vector<Generation>& generations,
                            std::size_t t2_per_topic, std::size_t questions_per_t2, std::uint64_t seed);

/// Character offsets [start, end) into the report, counted in code points.
struct Span {
    std::size_t start = 0;
    std::size_t end = 0;
    bool operator==(const Span&) const = default;
};

/// Sorts and merges overlapping or touching spans.
std::vector<Span> normalize_spans(std::vector<Span> spans);
/// Number of Unicode code points in a UTF-8 string.
std::size_t code_point_length(std::string_view text);

struct T1Judgment {
    std::string task_id;
    std::string annotator_id;
    std::size_t question_idx = 0;
    bool answerable = false;
    std::vector<Span> spans;
    std::string submitted_at;
};

struct T2Judgment {
    std::string task_id;
    std::string annotator_id;
    std::size_t question_idx = 0;
    int rating = 0;
    std::string rubric_version{kRubricVersion};
    std::string submitted_at;
};

struct HttpResult {
    int status = 200;
    std::string body;
};

/// Request handling for the annotation API, independent of the HTTP layer.
/// Submissions are appended to a journal; the materialised view keeps the
/// last write per (annotator, task, question).
class AnnotationService {
  public:
    using Clock = std::function<std::string()>;

    /// `annotators` maps annotator id to access token (empty: no token check).
    /// An existing journal is replayed on construction.
    AnnotationService(TaskBundle bundle, std::map<std::string, std::string> annotators,
                      std::optional<std::filesystem::path> journal = std::nullopt, int eta = 3,
                      Clock clock = {});

    HttpResult next_task(std::string_view annotator, std::string_view kind, std::string_view token = {}) const;
    HttpResult submit_t1(std::string_view task_id, std::string_view body, std::string_view token = {});
    HttpResult submit_t2(std::string_view task_id, std::string_view body, std::string_view token = {});
    HttpResult human_coverage() const;
    HttpResult judge_alignment() const;

    std::size_t journal_size() const;
    std::vector<T1Judgment> t1_judgments() const;
    std::vector<T2Judgment> t2_judgments() const;

  private:
    using Key = std::tuple<std::string, std::string, std::size_t>;  // annotator, task, question

    bool authorized(std::string_view annotator, std::string_view token) const;
    void append(const std::string& line);
    bool t1_done(const std::string& annotator, const T1Task& task) const;
    bool t2_done(const std::string& annotator, const T2Task& task) const;

    TaskBundle bundle_;
    std::map<std::string, std::string> annotators_;
    std::optional<std::filesystem::path> journal_path_;
    std::ofstream journal_;
    int eta_;
    Clock clock_;

    mutable std::shared_mutex mutex_;
    std::size_t journal_records_ = 0;
    std::map<Key, T1Judgment> t1_;
    std::map<Key, T2Judgment> t2_;
};

/// Reads `{"annotators": [{"id", "token"}]}` or a plain list of ids.
std::map<std::string, std::string> load_annotators(const std::filesystem::path& path);

/// httplib front end. `start` binds (port 0 picks a free port) and serves on
/// a background thread; returns the bound port.
class AnnotationServer {
  public:
    explicit AnnotationServer(AnnotationService& service);
    ~AnnotationServer();

    int start(const std::string& host, int port);
    /// Blocks until `stop` is called from another thread or a signal.
    void listen(const std::string& host, int port);
    void stop();

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace crux

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace crux {

struct GenParams {
    double temperature = 0.0;
    double top_p = 1.0;
    int max_tokens = 512;
    std::optional<std::int64_t> seed;

    /// Sampling used for queries, sub-questions, passages and reports.
    static GenParams text() { return {0.7, 0.95, 1024, std::nullopt}; }
    /// Greedy decoding used for graded ratings.
    static GenParams judge() { return {0.0, 1.0, 16, std::nullopt}; }
};

enum class TemplateId { question_gen, passage_gen, grading, query_gen, report_gen };

std::string_view to_string(TemplateId id);
TemplateId template_from_string(std::string_view name);

using Bindings = std::map<std::string, std::string>;

/// Prompt body with `{name}` placeholders.
class PromptTemplate {
  public:
    PromptTemplate(TemplateId id, std::string body);

    TemplateId id() const noexcept { return id_; }
    const std::string& body() const noexcept { return body_; }
    const std::vector<std::string>& placeholders() const noexcept { return placeholders_; }

    /// Single-pass substitution; bound values are never re-scanned.
    /// Throws UsageError naming the first unbound placeholder.
    std::string render(const Bindings& bindings) const;

  private:
    TemplateId id_;
    std::string body_;
    std::vector<std::string> placeholders_;
};

/// The packaged prompt for `id`.
const PromptTemplate& prompt(TemplateId id);

struct Request {
    TemplateId template_id;
    Bindings bindings;
    std::string prompt;
    GenParams params;
};

/// Backend that turns a rendered prompt into text. Implementations throw
/// TransportError on endpoint failures.
class TextModel {
  public:
    virtual ~TextModel() = default;
    virtual std::string complete(const Request& request) = 0;
};

struct HttpModelConfig {
    std::string base_url;
    std::string api_key;
    std::string model;
    /// JSON pointer to the reply text inside the response body.
    std::string response_path = "/choices/0/message/content";
    std::chrono::milliseconds timeout{60000};

    /// Reads CRUX_LLM_BASE_URL, CRUX_LLM_API_KEY and CRUX_LLM_MODEL.
    static HttpModelConfig from_env();
};

/// Chat-style JSON POST to `{base_url}/chat/completions`.
std::unique_ptr<TextModel> make_http_model(HttpModelConfig config);

/// Deterministic offline stand-in for a generator and judge. Replies are a
/// pure function of the template id and bindings.
class OfflineModel final : public TextModel {
  public:
    std::string complete(const Request& request) override;
};

struct RetryPolicy {
    int max_retries = 3;
    std::chrono::milliseconds initial_backoff{200};
    double multiplier = 2.0;
    std::chrono::milliseconds max_backoff{10000};
};

/// Single boundary to text-generation and judging models. Safe for
/// concurrent callers; at most `max_in_flight` requests are outstanding.
class Gateway {
  public:
    explicit Gateway(std::shared_ptr<TextModel> model, RetryPolicy retry = {}, int max_in_flight = 8);

    std::string generate(TemplateId id, const Bindings& bindings, const GenParams& params);

    std::uint64_t calls() const noexcept { return calls_.load(); }
    std::uint64_t retries() const noexcept { return retries_.load(); }
    int max_in_flight() const noexcept { return max_in_flight_; }

  private:
    std::shared_ptr<TextModel> model_;
    RetryPolicy retry_;
    int max_in_flight_;
    std::counting_semaphore<1024> slots_;
    std::atomic<std::uint64_t> calls_{0};
    std::atomic<std::uint64_t> retries_{0};
};

/// First standalone integer token in 0..5; 0 when none can be found.
int parse_rating(std::string_view reply);

class Judge {
  public:
    virtual ~Judge() = default;
    /// Graded answerability of `context` for `question`, in 0..5.
    virtual int rate(std::string_view question, std::string_view context) = 0;
};

/// Judge backed by the grading prompt under JUDGE parameters.
class GatewayJudge final : public Judge {
  public:
    explicit GatewayJudge(Gateway& gateway, GenParams params = GenParams::judge())
        : gateway_(gateway), params_(params) {}
    int rate(std::string_view question, std::string_view context) override;

  private:
    Gateway& gateway_;
    GenParams params_;
};

/// Stable content hash (hex SHA-256) of a (question, context) pair.
std::string content_key(std::string_view question, std::string_view context);

using JudgeFixture = std::unordered_map<std::string, int>;

/// Reads `{"question","context","rating"}` or `{"key","rating"}` lines.
JudgeFixture load_judge_fixture(const std::filesystem::path& path);

/// Deterministic fixture lookup. Unknown pairs rate 0, or are delegated to
/// `fallback` when one is supplied.
class FixtureJudge final : public Judge {
  public:
    explicit FixtureJudge(JudgeFixture fixture, Judge* fallback = nullptr)
        : fixture_(std::move(fixture)), fallback_(fallback) {}
    int rate(std::string_view question, std::string_view context) override;

  private:
    JudgeFixture fixture_;
    Judge* fallback_;
};

std::unique_ptr<Judge> mock_judge(JudgeFixture fixture);

}  // namespace crux

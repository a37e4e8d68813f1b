#include "crux/llm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <thread>

#include <openssl/evp.h>

#include "crux/error.hpp"
#include "jsonl.hpp"
#include "prompts_data.hpp"

namespace crux {

std::string_view to_string(TemplateId id) {
    switch (id) {
    case TemplateId::question_gen: return "question_gen";
    case TemplateId::passage_gen: return "passage_gen";
    case TemplateId::grading: return "grading";
    case TemplateId::query_gen: return "query_gen";
    case TemplateId::report_gen: return "report_gen";
    }
    return "unknown";
}

TemplateId template_from_string(std::string_view name) {
    for (auto id : {TemplateId::question_gen, TemplateId::passage_gen, TemplateId::grading,
                    TemplateId::query_gen, TemplateId::report_gen})
        if (to_string(id) == name) return id;
    throw UsageError("unknown template id: " + std::string(name));
}

// -- templates ----------------------------------------------------------------

namespace {

bool is_ident(char c) { return (c >= 'a' && c <= 'z') || c == '_' || (c >= '0' && c <= '9'); }

// Placeholder at `pos` ('{' + identifier + '}'); returns its length or 0.
std::size_t placeholder_at(std::string_view body, std::size_t pos, std::string_view& name) {
    if (body[pos] != '{') return 0;
    std::size_t j = pos + 1;
    while (j < body.size() && is_ident(body[j])) ++j;
    if (j == pos + 1 || j >= body.size() || body[j] != '}') return 0;
    name = body.substr(pos + 1, j - pos - 1);
    return j - pos + 1;
}

}  // namespace

PromptTemplate::PromptTemplate(TemplateId id, std::string body) : id_(id), body_(std::move(body)) {
    for (std::size_t i = 0; i < body_.size(); ++i) {
        std::string_view name;
        if (auto len = placeholder_at(body_, i, name)) {
            if (std::find(placeholders_.begin(), placeholders_.end(), name) == placeholders_.end())
                placeholders_.emplace_back(name);
            i += len - 1;
        }
    }
}

std::string PromptTemplate::render(const Bindings& bindings) const {
    std::string out;
    out.reserve(body_.size() + 256);
    for (std::size_t i = 0; i < body_.size();) {
        std::string_view name;
        if (auto len = placeholder_at(body_, i, name)) {
            auto it = bindings.find(std::string(name));
            if (it == bindings.end())
                throw UsageError("unbound placeholder {" + std::string(name) + "} in " + std::string(to_string(id_)));
            out += it->second;
            i += len;
        } else {
            out.push_back(body_[i++]);
        }
    }
    return out;
}

const PromptTemplate& prompt(TemplateId id) {
    static const PromptTemplate templates[] = {
        {TemplateId::question_gen, std::string(prompts::question_gen)},
        {TemplateId::passage_gen, std::string(prompts::passage_gen)},
        {TemplateId::grading, std::string(prompts::grading)},
        {TemplateId::query_gen, std::string(prompts::query_gen)},
        {TemplateId::report_gen, std::string(prompts::report_gen)},
    };
    return templates[static_cast<int>(id)];
}

// -- gateway ------------------------------------------------------------------

HttpModelConfig HttpModelConfig::from_env() {
    auto env = [](const char* name) {
        const char* v = std::getenv(name);
        return std::string(v ? v : "");
    };
    HttpModelConfig c;
    c.base_url = env("CRUX_LLM_BASE_URL");
    c.api_key = env("CRUX_LLM_API_KEY");
    c.model = env("CRUX_LLM_MODEL");
    if (c.base_url.empty()) throw UsageError("CRUX_LLM_BASE_URL is not set");
    return c;
}

Gateway::Gateway(std::shared_ptr<TextModel> model, RetryPolicy retry, int max_in_flight)
    : model_(std::move(model)), retry_(retry), max_in_flight_(max_in_flight), slots_(max_in_flight) {
    if (!model_) throw UsageError("gateway requires a model");
    if (max_in_flight < 1 || max_in_flight > 1024) throw UsageError("max_in_flight must be in 1..1024");
}

std::string Gateway::generate(TemplateId id, const Bindings& bindings, const GenParams& params) {
    Request req{id, bindings, prompt(id).render(bindings), params};
    auto backoff = retry_.initial_backoff;
    for (int attempt = 0;; ++attempt) {
        slots_.acquire();
        ++calls_;
        try {
            auto text = model_->complete(req);
            slots_.release();
            return text;
        } catch (const TransportError& e) {
            slots_.release();
            if (!e.transient() || attempt >= retry_.max_retries)
                throw TransportError(std::string(to_string(id)) + " failed after " + std::to_string(attempt + 1) +
                                         " attempt(s): " + e.what(),
                                     false);
        } catch (...) {
            slots_.release();
            throw;
        }
        ++retries_;
        if (backoff.count() > 0) std::this_thread::sleep_for(backoff);
        backoff = std::min(retry_.max_backoff, std::chrono::milliseconds(static_cast<std::int64_t>(
                                                   std::llround(backoff.count() * retry_.multiplier))));
    }
}

// -- judging ------------------------------------------------------------------

int parse_rating(std::string_view reply) {
    auto alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
    auto digit = [](char c) { return c >= '0' && c <= '9'; };
    std::size_t i = 0;
    while (i < reply.size()) {
        if (!digit(reply[i])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < reply.size() && digit(reply[j])) ++j;
        bool standalone = (i == 0 || !alnum(reply[i - 1])) && (j == reply.size() || !alnum(reply[j]));
        bool negative = i > 0 && reply[i - 1] == '-';
        bool fraction_tail = i >= 2 && reply[i - 1] == '.' && digit(reply[i - 2]);
        bool has_fraction = j + 1 < reply.size() && reply[j] == '.' && digit(reply[j + 1]);
        if (standalone && !negative && !fraction_tail && !has_fraction && j - i == 1 && reply[i] <= '5')
            return reply[i] - '0';
        i = j;
    }
    return 0;
}

int GatewayJudge::rate(std::string_view question, std::string_view context) {
    auto reply = gateway_.generate(TemplateId::grading,
                                   {{"question", std::string(question)}, {"context", std::string(context)}}, params_);
    return parse_rating(reply);
}

std::string content_key(std::string_view question, std::string_view context) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx) throw Error("EVP_MD_CTX_new failed");
    const char sep = '\x1f';
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    EVP_DigestUpdate(ctx, question.data(), question.size());
    EVP_DigestUpdate(ctx, &sep, 1);
    EVP_DigestUpdate(ctx, context.data(), context.size());
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

JudgeFixture load_judge_fixture(const std::filesystem::path& path) {
    JudgeFixture fixture;
    detail::for_each_record(path, [&](const detail::json& rec, std::size_t line) {
        int rating = rec.at("rating").get<int>();
        if (rating < 0 || rating > 5) throw ParseError("fixture rating outside 0..5", line);
        std::string key = rec.contains("key") ? rec["key"].get<std::string>()
                                              : content_key(rec.at("question").get<std::string>(),
                                                            rec.at("context").get<std::string>());
        fixture[key] = rating;
    });
    return fixture;
}

int FixtureJudge::rate(std::string_view question, std::string_view context) {
    auto it = fixture_.find(content_key(question, context));
    if (it != fixture_.end()) return it->second;
    return fallback_ ? fallback_->rate(question, context) : 0;
}

std::unique_ptr<Judge> mock_judge(JudgeFixture fixture) { return std::make_unique<FixtureJudge>(std::move(fixture)); }

}  // namespace crux

#include <httplib.h>

#include "crux/error.hpp"
#include "crux/llm.hpp"
#include "crux/retrieval.hpp"
#include "http_util.hpp"

namespace crux {
namespace detail {

UrlParts split_url(const std::string& url) {
    auto scheme = url.find("://");
    if (scheme == std::string::npos) throw UsageError("base URL needs a scheme: " + url);
    auto slash = url.find('/', scheme + 3);
    if (slash == std::string::npos) return {url, ""};
    auto prefix = url.substr(slash);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {url.substr(0, slash), prefix};
}

json post_json(const std::string& base_url, const std::string& path, const json& body, const std::string& bearer,
               std::chrono::milliseconds timeout) {
    auto parts = split_url(base_url);
    httplib::Client client(parts.origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    if (!bearer.empty()) headers.emplace("Authorization", "Bearer " + bearer);
    auto res = client.Post(parts.prefix + path, headers, body.dump(), "application/json");
    if (!res) throw TransportError("POST " + base_url + path + ": " + httplib::to_string(res.error()));
    if (res->status == 429 || res->status >= 500)
        throw TransportError("POST " + base_url + path + ": HTTP " + std::to_string(res->status));
    if (res->status < 200 || res->status >= 300)
        throw TransportError("POST " + base_url + path + ": HTTP " + std::to_string(res->status) + " " + res->body,
                             false);
    try {
        return json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw TransportError("POST " + base_url + path + ": invalid JSON reply", false);
    }
}

}  // namespace detail

namespace {

class HttpModel final : public TextModel {
  public:
    explicit HttpModel(HttpModelConfig config) : config_(std::move(config)) {}

    std::string complete(const Request& request) override {
        detail::json body{{"model", config_.model},
                          {"messages", detail::json::array({{{"role", "user"}, {"content", request.prompt}}})},
                          {"temperature", request.params.temperature},
                          {"top_p", request.params.top_p},
                          {"max_tokens", request.params.max_tokens}};
        if (request.params.seed) body["seed"] = *request.params.seed;
        auto reply = detail::post_json(config_.base_url, "/chat/completions", body, config_.api_key, config_.timeout);
        try {
            const auto& text = reply.at(detail::json::json_pointer(config_.response_path));
            return text.is_string() ? text.get<std::string>() : text.dump();
        } catch (const detail::json::exception&) {
            throw TransportError("reply has no text at " + config_.response_path, false);
        }
    }

  private:
    HttpModelConfig config_;
};

}  // namespace

std::unique_ptr<TextModel> make_http_model(HttpModelConfig config) {
    if (config.base_url.empty()) throw UsageError("HTTP model needs a base URL");
    detail::split_url(config.base_url);
    return std::make_unique<HttpModel>(std::move(config));
}

namespace {

class HttpEmbedder final : public EmbeddingProvider {
  public:
    HttpEmbedder(std::string base_url, std::size_t dimension, std::chrono::milliseconds timeout)
        : base_url_(std::move(base_url)), dimension_(dimension), timeout_(timeout) {}

    std::size_t dimension() const override { return dimension_; }

    std::vector<double> embed(std::string_view text) override {
        std::string t(text);
        return embed_batch(std::span<const std::string>(&t, 1)).at(0);
    }

    std::vector<std::vector<double>> embed_batch(std::span<const std::string> texts) override {
        detail::json body{{"texts", std::vector<std::string>(texts.begin(), texts.end())}};
        auto reply = detail::post_json(base_url_, "/embed", body, "", timeout_);
        auto vectors = reply.at("embeddings").get<std::vector<std::vector<double>>>();
        if (vectors.size() != texts.size()) throw ValidationError("embedding service returned wrong batch size");
        for (const auto& v : vectors)
            if (v.size() != dimension_) throw ValidationError("embedding service returned wrong dimension");
        return vectors;
    }

  private:
    std::string base_url_;
    std::size_t dimension_;
    std::chrono::milliseconds timeout_;
};

class HttpReranker final : public RerankScorer {
  public:
    HttpReranker(std::string base_url, std::chrono::milliseconds timeout)
        : base_url_(std::move(base_url)), timeout_(timeout) {}

    RerankOutput score(std::string_view query, std::span<const std::string> passages) override {
        detail::json body{{"query", std::string(query)},
                          {"passages", std::vector<std::string>(passages.begin(), passages.end())}};
        auto reply = detail::post_json(base_url_, "/rerank", body, "", timeout_);
        if (reply.contains("scores")) return reply["scores"].get<std::vector<double>>();
        if (reply.contains("permutation")) return reply["permutation"].get<std::vector<std::size_t>>();
        throw ValidationError("rerank service reply has neither scores nor permutation");
    }

  private:
    std::string base_url_;
    std::chrono::milliseconds timeout_;
};

}  // namespace

std::unique_ptr<EmbeddingProvider> make_http_embedder(std::string base_url, std::size_t dimension,
                                                      std::chrono::milliseconds timeout) {
    detail::split_url(base_url);
    return std::make_unique<HttpEmbedder>(std::move(base_url), dimension, timeout);
}

std::unique_ptr<RerankScorer> make_http_reranker(std::string base_url, std::chrono::milliseconds timeout) {
    detail::split_url(base_url);
    return std::make_unique<HttpReranker>(std::move(base_url), timeout);
}

}  // namespace crux

#pragma once

#include <doctest.h>

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "crux/builder.hpp"
#include "crux/error.hpp"
#include "crux/dataset.hpp"
#include "crux/llm.hpp"

namespace crux::test {

class TempDir {
  public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("crux-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Multi-News-4583 worked example: ten generated questions against the three
// oracle passages, rows = questions.
inline RatingMatrix table5_matrix() {
    const std::vector<int> p1{0, 0, 5, 5, 0, 0, 0, 0, 5, 0};
    const std::vector<int> p2{5, 0, 0, 0, 5, 0, 5, 0, 0, 0};
    const std::vector<int> p3{0, 0, 0, 0, 5, 5, 0, 0, 0, 5};
    std::vector<std::vector<int>> rows;
    for (std::size_t i = 0; i < p1.size(); ++i) rows.push_back({p1[i], p2[i], p3[i]});
    return RatingMatrix("multi-news-4583", {"p1", "p2", "p3"}, rows);
}

inline std::vector<std::vector<int>> random_ratings(std::mt19937_64& rng, std::size_t rows, std::size_t cols) {
    std::uniform_int_distribution<int> rating(0, 5);
    std::vector<std::vector<int>> out(rows, std::vector<int>(cols));
    for (auto& row : out)
        for (auto& r : row) r = rating(rng);
    return out;
}

inline Passage passage(std::string id, std::string text, std::string doc = "d") {
    Passage p{std::move(id), std::move(doc), std::move(text), 0, {}};
    p.token_count = default_tokenizer().count(p.text);
    return p;
}

// Scripted model: returns queued replies per template, or throws when asked to.
class ScriptedModel final : public TextModel {
  public:
    std::vector<std::string> replies;
    int failures_before_success = 0;
    std::vector<Request> seen;

    std::string complete(const Request& request) override {
        seen.push_back(request);
        if (failures_before_success > 0) {
            --failures_before_success;
            throw TransportError("scripted failure");
        }
        if (replies.empty()) return "";
        auto r = replies.front();
        if (replies.size() > 1) replies.erase(replies.begin());
        return r;
    }
};

inline RetryPolicy no_wait_retry(int retries = 3) {
    return RetryPolicy{retries, std::chrono::milliseconds(0), 2.0, std::chrono::milliseconds(0)};
}

// Dataset built once from the bundled examples with the offline model.
inline const Dataset& mock_dataset() {
    static const Dataset ds = [] {
        auto examples = load_examples(std::filesystem::path(CRUX_TEST_DATA) / "examples.jsonl");
        Gateway gw(std::make_shared<OfflineModel>(), no_wait_retry());
        GatewayJudge judge(gw);
        return build_dataset(examples, gw, judge, BuildConfig{}).dataset;
    }();
    return ds;
}

}  // namespace crux::test

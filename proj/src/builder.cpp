#include "crux/builder.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <mutex>
#include <optional>
#include <thread>
#include <unordered_set>

#include "crux/error.hpp"
#include "crux/text.hpp"
#include "jsonl.hpp"

namespace crux {

using detail::json;

std::vector<RawExample> load_examples(const std::filesystem::path& path) {
    std::vector<RawExample> out;
    detail::for_each_record(path, [&](const json& rec, std::size_t) {
        out.push_back({rec.at("example_id").get<std::string>(), rec.at("summary").get<std::string>(),
                       rec.at("documents").get<std::vector<std::string>>()});
    });
    return out;
}

void validate(const RawExample& example) {
    if (example.example_id.empty()) throw ValidationError("example with empty example_id");
    if (trim(example.summary).empty()) throw ValidationError("example " + example.example_id + ": empty summary");
    if (example.documents.empty()) throw ValidationError("example " + example.example_id + ": no documents");
}

std::string synthesize_query(Gateway& gateway, const std::string& summary) {
    if (trim(summary).empty()) throw UsageError("synthesize_query: empty summary");
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto reply = gateway.generate(TemplateId::query_gen, {{"report", summary}}, GenParams::text());
        auto query = extract_first_tagged(reply, "r");
        if (!query.empty()) return query;
    }
    throw ValidationError("query synthesis produced no <r> span after one retry");
}

std::vector<std::string> synthesize_questions(Gateway& gateway, const std::string& summary, std::size_t n) {
    if (n == 0) throw UsageError("synthesize_questions: n must be >= 1");
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto reply = gateway.generate(TemplateId::question_gen, {{"n", std::to_string(n)}, {"document", summary}},
                                      GenParams::text());
        std::vector<std::string> questions;
        std::unordered_set<std::string> seen;
        for (auto& span : extract_tagged(reply, "q")) {
            auto key = normalize_whitespace(span);
            if (key.empty() || !seen.insert(key).second) continue;
            questions.push_back(std::move(span));
            if (questions.size() == n) break;
        }
        if (!questions.empty()) return questions;
    }
    throw ValidationError("question synthesis produced no <q> span after one retry");
}

namespace {

// Packs `units` into segments of at most `max_tokens`, joined by `sep`.
// Oversized units are handed to `split_unit`.
template <typename SplitUnit>
void pack(const std::vector<std::string>& units, std::size_t max_tokens, const Tokenizer& tok,
          std::string_view sep, std::vector<std::string>& out, SplitUnit split_unit) {
    std::string current;
    std::size_t current_tokens = 0;
    auto flush = [&] {
        if (!current.empty()) out.push_back(std::move(current));
        current.clear();
        current_tokens = 0;
    };
    for (const auto& unit : units) {
        auto n = tok.count(unit);
        if (n == 0) continue;
        if (n > max_tokens) {
            flush();
            split_unit(unit);
            continue;
        }
        if (current_tokens + n > max_tokens) flush();
        if (!current.empty()) current += sep;
        current += unit;
        current_tokens += n;
    }
    flush();
}

void hard_split(const std::string& text, std::size_t max_tokens, const Tokenizer& tok,
                std::vector<std::string>& out) {
    auto spans = tok.spans(text);
    for (std::size_t i = 0; i < spans.size(); i += max_tokens) {
        auto last = std::min(i + max_tokens, spans.size()) - 1;
        out.push_back(text.substr(spans[i].begin, spans[last].end - spans[i].begin));
    }
}

}  // namespace

std::vector<std::string> split_document(const std::string& document, std::size_t max_tokens,
                                        const Tokenizer& tokenizer) {
    if (max_tokens == 0) throw UsageError("split_document: max_tokens must be positive");
    std::vector<std::string> out;
    if (tokenizer.count(document) <= max_tokens) {
        auto t = trim(document);
        if (!t.empty()) out.push_back(std::move(t));
        return out;
    }
    pack(split_paragraphs(document), max_tokens, tokenizer, "\n\n", out, [&](const std::string& para) {
        pack(split_sentences(para), max_tokens, tokenizer, " ", out,
             [&](const std::string& sentence) { hard_split(sentence, max_tokens, tokenizer, out); });
    });
    return out;
}

std::vector<PassageText> decontextualize(Gateway& gateway, const std::string& document,
                                         std::size_t max_segment_tokens, const Tokenizer& tokenizer) {
    if (trim(document).empty()) throw UsageError("decontextualize: empty document");
    std::vector<PassageText> out;
    for (const auto& segment : split_document(document, max_segment_tokens, tokenizer)) {
        auto reply = gateway.generate(TemplateId::passage_gen, {{"document", segment}}, GenParams::text());
        bool any = false;
        for (auto& span : extract_tagged(reply, "p")) {
            if (span.empty()) continue;
            out.push_back({std::move(span), false});
            any = true;
        }
        if (!any) out.push_back({segment, true});
    }
    return out;
}

RatingMatrix judge_matrix(const std::string& topic_id, std::span<const std::string> questions,
                          std::span<const Passage> passages, Judge& judge, int parallelism) {
    if (questions.empty() || passages.empty()) throw UsageError("judge_matrix: questions and passages must be non-empty");
    const std::size_t cols = passages.size();
    const std::size_t cells = questions.size() * cols;
    std::vector<std::vector<int>> ratings(questions.size(), std::vector<int>(cols, 0));

    std::atomic<std::size_t> next{0};
    std::mutex failure_mutex;
    std::optional<std::size_t> failed_cell;
    std::string failure;

    auto worker = [&] {
        for (;;) {
            auto cell = next.fetch_add(1);
            if (cell >= cells) return;
            auto i = cell / cols, j = cell % cols;
            try {
                ratings[i][j] = std::clamp(judge.rate(questions[i], passages[j].text), 0, 5);
            } catch (const std::exception& e) {
                std::lock_guard lock(failure_mutex);
                if (!failed_cell || cell < *failed_cell) {
                    failed_cell = cell;
                    failure = e.what();
                }
                next.store(cells);
                return;
            }
        }
    };

    auto n_threads = static_cast<std::size_t>(std::max(1, parallelism));
    n_threads = std::min(n_threads, cells);
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    }
    if (failed_cell) {
        auto i = *failed_cell / cols, j = *failed_cell % cols;
        throw Error("partial rating matrix for topic " + topic_id + ": cell (question " + std::to_string(i) +
                    ", passage " + passages[j].passage_id + ") failed: " + failure);
    }
    std::vector<std::string> ids;
    ids.reserve(cols);
    for (const auto& p : passages) ids.push_back(p.passage_id);
    return RatingMatrix(topic_id, std::move(ids), std::move(ratings));
}

std::vector<bool> filter_questions(const RatingMatrix& matrix, int eta) {
    std::vector<bool> flags;
    flags.reserve(matrix.num_questions());
    for (const auto& row : matrix.ratings())
        flags.push_back(std::any_of(row.begin(), row.end(), [eta](int r) { return r >= eta; }));
    return flags;
}

std::vector<std::size_t> build_required_subset(const RatingMatrix& matrix, const std::vector<bool>& answerable,
                                               int eta) {
    if (answerable.size() != matrix.num_questions())
        throw UsageError("build_required_subset: answerable flags do not match the matrix");
    std::vector<bool> covered(matrix.num_questions(), false);
    std::vector<bool> picked(matrix.num_passages(), false);
    std::vector<std::size_t> subset;
    for (;;) {
        std::size_t best = matrix.num_passages();
        std::size_t best_gain = 0;
        for (std::size_t j = 0; j < matrix.num_passages(); ++j) {
            if (picked[j]) continue;
            std::size_t gain = 0;
            for (std::size_t i = 0; i < matrix.num_questions(); ++i)
                if (answerable[i] && !covered[i] && matrix.at(i, j) >= eta) ++gain;
            if (gain > best_gain) {
                best = j;
                best_gain = gain;
            }
        }
        if (best_gain == 0) break;
        picked[best] = true;
        subset.push_back(best);
        for (std::size_t i = 0; i < matrix.num_questions(); ++i)
            if (matrix.at(i, best) >= eta) covered[i] = true;
    }
    // Later picks can cover everything an earlier pick contributed; drop such
    // members, latest first, so that every kept passage is needed.
    auto covered_without = [&](std::size_t skip) {
        for (std::size_t i = 0; i < matrix.num_questions(); ++i) {
            if (!answerable[i]) continue;
            bool hit = false;
            for (std::size_t k = 0; k < subset.size() && !hit; ++k)
                hit = k != skip && matrix.at(i, subset[k]) >= eta;
            if (!hit) return false;
        }
        return true;
    };
    for (std::size_t k = subset.size(); k-- > 0;)
        if (covered_without(k)) subset.erase(subset.begin() + static_cast<std::ptrdiff_t>(k));
    return subset;
}

namespace {

struct BuiltTopic {
    Topic topic;
    RatingMatrix matrix;
    std::vector<Passage> passages;
};

BuiltTopic build_one(const RawExample& ex, Gateway& gateway, Judge& judge, const BuildConfig& config,
                     const Tokenizer& tokenizer) {
    validate(ex);
    BuiltTopic out;
    out.topic.topic_id = ex.example_id;
    out.topic.summary = ex.summary;
    out.topic.query = synthesize_query(gateway, ex.summary);
    auto questions = synthesize_questions(gateway, ex.summary, config.n_questions);

    for (std::size_t d = 0; d < ex.documents.size(); ++d) {
        if (trim(ex.documents[d]).empty()) continue;
        auto doc_id = ex.example_id + "-d" + std::to_string(d);
        auto texts = decontextualize(gateway, ex.documents[d], config.max_segment_tokens, tokenizer);
        for (std::size_t k = 0; k < texts.size(); ++k) {
            Passage p;
            p.passage_id = doc_id + "-p" + std::to_string(k);
            p.source_doc_id = doc_id;
            p.text = std::move(texts[k].text);
            p.token_count = tokenizer.count(p.text);
            if (texts[k].fallback) p.provenance = "raw_segment";
            out.passages.push_back(std::move(p));
        }
    }
    if (out.passages.empty()) throw ValidationError("no passage could be derived from the documents");

    out.matrix = judge_matrix(ex.example_id, questions, out.passages, judge, config.parallelism);
    auto flags = filter_questions(out.matrix, config.eta);
    for (std::size_t i = 0; i < questions.size(); ++i) out.topic.questions.push_back({i, questions[i], flags[i]});
    for (const auto& p : out.passages) out.topic.oracle_passage_ids.push_back(p.passage_id);
    for (auto j : build_required_subset(out.matrix, flags, config.eta))
        out.topic.required_subset_ids.push_back(out.passages[j].passage_id);

    validate(out.topic);
    validate(out.topic, out.matrix, config.eta);
    return out;
}

}  // namespace

BuildResult build_dataset(std::span<const RawExample> examples, Gateway& gateway, Judge& judge,
                          const BuildConfig& config, const Tokenizer& tokenizer) {
    BuildResult result;
    result.dataset.eta = config.eta;
    std::vector<Passage> corpus;
    std::unordered_set<std::string> topic_ids;
    for (const auto& ex : examples) {
        try {
            if (topic_ids.contains(ex.example_id)) throw ValidationError("duplicate example_id");
            auto built = build_one(ex, gateway, judge, config, tokenizer);
            topic_ids.insert(ex.example_id);
            for (auto& p : built.passages) corpus.push_back(std::move(p));
            result.dataset.matrices.emplace(ex.example_id, std::move(built.matrix));
            result.dataset.topics.push_back(std::move(built.topic));
        } catch (const Error& e) {
            result.skipped.push_back({ex.example_id, e.what()});
        }
    }
    result.dataset.corpus = Corpus(std::move(corpus));
    return result;
}

void save_build(const BuildResult& result, const std::filesystem::path& dir) {
    save_dataset(result.dataset, dir);
    json skipped = json::array();
    for (const auto& s : result.skipped) skipped.push_back({{"example_id", s.example_id}, {"reason", s.reason}});
    json report{{"topics", result.dataset.topics.size()},
                {"passages", result.dataset.corpus.size()},
                {"skipped", std::move(skipped)}};
    std::ofstream out(dir / "build_report.json", std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / "build_report.json").string());
    out << report.dump(2) << '\n';
}

}  // namespace crux

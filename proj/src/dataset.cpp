#include "crux/dataset.hpp"

#include <algorithm>
#include <set>
#include <unordered_set>

#include "crux/error.hpp"
#include "jsonl.hpp"

namespace crux {

using detail::json;

std::vector<std::size_t> Topic::answerable_indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < questions.size(); ++i)
        if (questions[i].answerable) out.push_back(i);
    return out;
}

RatingMatrix::RatingMatrix(std::string topic_id, std::vector<std::string> passage_ids,
                           std::vector<std::vector<int>> ratings)
    : topic_id_(std::move(topic_id)), passage_ids_(std::move(passage_ids)), ratings_(std::move(ratings)) {
    for (std::size_t j = 0; j < passage_ids_.size(); ++j) column_.emplace(passage_ids_[j], j);
}

std::optional<std::size_t> RatingMatrix::column_of(const std::string& passage_id) const {
    auto it = column_.find(passage_id);
    if (it == column_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> RetrievalContext::passage_ids() const {
    std::vector<std::string> ids;
    ids.reserve(entries.size());
    for (const auto& e : entries) ids.push_back(e.passage_id);
    return ids;
}

Corpus::Corpus(std::vector<Passage> passages) : passages_(std::move(passages)) {
    for (std::size_t i = 0; i < passages_.size(); ++i) {
        if (!by_id_.emplace(passages_[i].passage_id, i).second)
            throw ValidationError("duplicate passage_id: " + passages_[i].passage_id);
    }
}

const Passage* Corpus::find(const std::string& passage_id) const {
    auto it = by_id_.find(passage_id);
    return it == by_id_.end() ? nullptr : &passages_[it->second];
}

const Passage& Corpus::at(const std::string& passage_id) const {
    if (const auto* p = find(passage_id)) return *p;
    throw ValidationError("unknown passage_id: " + passage_id);
}

// -- validation ---------------------------------------------------------------

namespace {

[[noreturn]] void fail(const std::string& topic_id, const std::string& rule) {
    throw ValidationError("topic " + topic_id + ": " + rule);
}

}  // namespace

void validate(const Topic& topic) {
    if (topic.topic_id.empty()) throw ValidationError("topic with empty topic_id");
    if (topic.questions.empty()) fail(topic.topic_id, "questions must be non-empty");
    for (std::size_t i = 0; i < topic.questions.size(); ++i) {
        if (topic.questions[i].question_idx != i)
            fail(topic.topic_id, "question_idx values must be contiguous from 0");
    }
    if (std::none_of(topic.questions.begin(), topic.questions.end(),
                     [](const SubQuestion& q) { return q.answerable; }))
        fail(topic.topic_id, "no answerable question survives filtering");
    std::unordered_set<std::string> oracle;
    for (const auto& id : topic.oracle_passage_ids) {
        if (!oracle.insert(id).second) fail(topic.topic_id, "duplicate oracle passage " + id);
    }
    std::unordered_set<std::string> required;
    for (const auto& id : topic.required_subset_ids) {
        if (!oracle.contains(id))
            fail(topic.topic_id, "required subset passage " + id + " is not an oracle passage");
        if (!required.insert(id).second) fail(topic.topic_id, "duplicate required passage " + id);
    }
}

void validate(const RatingMatrix& matrix) {
    if (matrix.passage_ids().size() != std::set<std::string>(matrix.passage_ids().begin(),
                                                              matrix.passage_ids().end()).size())
        fail(matrix.topic_id(), "matrix passage ids must be unique");
    for (const auto& row : matrix.ratings()) {
        if (row.size() != matrix.num_passages()) fail(matrix.topic_id(), "ragged rating matrix");
        for (int r : row)
            if (r < 0 || r > 5) fail(matrix.topic_id(), "rating " + std::to_string(r) + " outside 0..5");
    }
}

void validate(const Topic& topic, const RatingMatrix& matrix, int eta) {
    validate(matrix);
    if (matrix.num_questions() != topic.questions.size())
        fail(topic.topic_id, "matrix rows do not match question count");
    if (matrix.passage_ids() != topic.oracle_passage_ids)
        fail(topic.topic_id, "matrix columns do not match oracle passages");
    for (std::size_t i = 0; i < topic.questions.size(); ++i) {
        if (!topic.questions[i].answerable) continue;
        const auto& row = matrix.ratings()[i];
        if (std::none_of(row.begin(), row.end(), [eta](int r) { return r >= eta; }))
            fail(topic.topic_id, "answerable question " + std::to_string(i) + " has no oracle passage rated >= eta");
    }
}

void validate(const RetrievalContext& context, const Corpus& corpus) {
    std::unordered_set<std::string> seen;
    std::size_t tokens = 0;
    for (const auto& e : context.entries) {
        if (!seen.insert(e.passage_id).second) fail(context.topic_id, "duplicate passage in context " + e.passage_id);
        tokens += corpus.at(e.passage_id).token_count;
    }
    if (tokens != context.total_tokens) fail(context.topic_id, "context total_tokens mismatch");
}

RetrievalContext make_context(std::string topic_id, std::vector<ContextEntry> entries, const Corpus& corpus) {
    RetrievalContext ctx{std::move(topic_id), std::move(entries), 0};
    for (const auto& e : ctx.entries) ctx.total_tokens += corpus.at(e.passage_id).token_count;
    validate(ctx, corpus);
    return ctx;
}

// -- corpus -------------------------------------------------------------------

Corpus load_corpus(const std::filesystem::path& path, const Tokenizer& tokenizer) {
    std::vector<Passage> passages;
    std::unordered_set<std::string> ids;
    detail::for_each_record(path, [&](const json& rec, std::size_t line) {
        Passage p;
        p.passage_id = rec.at("passage_id").get<std::string>();
        p.source_doc_id = rec.value("source_doc_id", std::string{});
        p.text = rec.at("text").get<std::string>();
        if (p.text.empty()) throw ParseError("passage " + p.passage_id + " has empty text", line);
        if (rec.contains("token_count") && !rec["token_count"].is_null())
            p.token_count = rec["token_count"].get<std::size_t>();
        else
            p.token_count = tokenizer.count(p.text);
        p.provenance = rec.value("provenance", std::string{});
        if (!ids.insert(p.passage_id).second)
            throw ParseError("duplicate passage_id " + p.passage_id, line);
        passages.push_back(std::move(p));
    });
    return Corpus(std::move(passages));
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
    detail::JsonlWriter out(path);
    for (const auto& p : corpus.passages()) {
        json rec{{"passage_id", p.passage_id},
                 {"source_doc_id", p.source_doc_id},
                 {"text", p.text},
                 {"token_count", p.token_count}};
        if (!p.provenance.empty()) rec["provenance"] = p.provenance;
        out.write(rec);
    }
}

// -- topics -------------------------------------------------------------------

void save_topics(const std::vector<Topic>& topics, const std::filesystem::path& path) {
    for (const auto& t : topics) validate(t);
    detail::JsonlWriter out(path);
    for (const auto& t : topics) {
        json questions = json::array();
        for (const auto& q : t.questions)
            questions.push_back({{"idx", q.question_idx}, {"text", q.text}, {"answerable", q.answerable}});
        out.write(json{{"topic_id", t.topic_id},
                       {"query", t.query},
                       {"summary", t.summary},
                       {"questions", std::move(questions)},
                       {"oracle_passage_ids", t.oracle_passage_ids},
                       {"required_subset_ids", t.required_subset_ids}});
    }
}

std::vector<Topic> load_topics(const std::filesystem::path& path) {
    std::vector<Topic> topics;
    detail::for_each_record(path, [&](const json& rec, std::size_t) {
        Topic t;
        t.topic_id = rec.at("topic_id").get<std::string>();
        t.query = rec.at("query").get<std::string>();
        t.summary = rec.at("summary").get<std::string>();
        for (const auto& q : rec.at("questions")) {
            t.questions.push_back({q.at("idx").get<std::size_t>(), q.at("text").get<std::string>(),
                                   q.value("answerable", true)});
        }
        t.oracle_passage_ids = rec.at("oracle_passage_ids").get<std::vector<std::string>>();
        t.required_subset_ids = rec.at("required_subset_ids").get<std::vector<std::string>>();
        validate(t);
        topics.push_back(std::move(t));
    });
    return topics;
}

// -- matrices -----------------------------------------------------------------

void save_matrices(const std::vector<RatingMatrix>& matrices, const std::filesystem::path& path) {
    detail::JsonlWriter out(path);
    for (const auto& m : matrices) {
        validate(m);
        out.write(json{{"topic_id", m.topic_id()}, {"passage_ids", m.passage_ids()}, {"ratings", m.ratings()}});
    }
}

std::vector<RatingMatrix> load_matrices(const std::filesystem::path& path) {
    std::vector<RatingMatrix> out;
    detail::for_each_record(path, [&](const json& rec, std::size_t) {
        RatingMatrix m(rec.at("topic_id").get<std::string>(),
                       rec.at("passage_ids").get<std::vector<std::string>>(),
                       rec.at("ratings").get<std::vector<std::vector<int>>>());
        validate(m);
        out.push_back(std::move(m));
    });
    return out;
}

// -- contexts -----------------------------------------------------------------

void save_contexts(const std::vector<RetrievalContext>& contexts, const std::filesystem::path& path) {
    detail::JsonlWriter out(path);
    for (const auto& c : contexts) {
        json entries = json::array();
        for (const auto& e : c.entries) entries.push_back({{"passage_id", e.passage_id}, {"score", e.score}});
        out.write(json{{"topic_id", c.topic_id}, {"entries", std::move(entries)}, {"total_tokens", c.total_tokens}});
    }
}

std::vector<RetrievalContext> load_contexts(const std::filesystem::path& path) {
    std::vector<RetrievalContext> out;
    detail::for_each_record(path, [&](const json& rec, std::size_t) {
        RetrievalContext c;
        c.topic_id = rec.at("topic_id").get<std::string>();
        for (const auto& e : rec.at("entries"))
            c.entries.push_back({e.at("passage_id").get<std::string>(), e.value("score", 0.0)});
        c.total_tokens = rec.at("total_tokens").get<std::size_t>();
        out.push_back(std::move(c));
    });
    return out;
}

// -- dataset directory --------------------------------------------------------

const RatingMatrix& Dataset::matrix(const std::string& topic_id) const {
    auto it = matrices.find(topic_id);
    if (it == matrices.end()) throw ValidationError("no rating matrix for topic " + topic_id);
    return it->second;
}

RetrievalContext Dataset::oracle_context(const Topic& topic) const {
    std::vector<ContextEntry> entries;
    double score = static_cast<double>(topic.required_subset_ids.size());
    for (const auto& id : topic.required_subset_ids) entries.push_back({id, score--});
    return make_context(topic.topic_id, std::move(entries), corpus);
}

void save_dataset(const Dataset& dataset, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    save_corpus(dataset.corpus, dir / "corpus.jsonl");
    save_topics(dataset.topics, dir / "topics.jsonl");
    std::vector<RatingMatrix> ms;
    for (const auto& t : dataset.topics) ms.push_back(dataset.matrix(t.topic_id));
    save_matrices(ms, dir / "matrices.jsonl");
    std::ofstream meta(dir / "meta.json", std::ios::binary);
    meta << json{{"eta", dataset.eta}, {"tokenizer", "whitespace"}}.dump() << '\n';
}

Dataset load_dataset(const std::filesystem::path& dir) {
    Dataset ds;
    if (std::filesystem::exists(dir / "meta.json"))
        ds.eta = json::parse(detail::read_file(dir / "meta.json")).value("eta", 3);
    ds.corpus = load_corpus(dir / "corpus.jsonl");
    ds.topics = load_topics(dir / "topics.jsonl");
    for (auto& m : load_matrices(dir / "matrices.jsonl")) {
        auto id = m.topic_id();
        ds.matrices.emplace(std::move(id), std::move(m));
    }
    for (const auto& t : ds.topics) {
        validate(t, ds.matrix(t.topic_id), ds.eta);
        for (const auto& id : t.oracle_passage_ids) ds.corpus.at(id);
    }
    return ds;
}

}  // namespace crux

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "crux/error.hpp"
#include "crux/retrieval.hpp"
#include "jsonl.hpp"

namespace crux {

using detail::json;

std::vector<std::string> RankedList::passage_ids() const {
    std::vector<std::string> ids;
    ids.reserve(candidates.size());
    for (const auto& c : candidates) ids.push_back(c.passage_id);
    return ids;
}

InvertedIndex InvertedIndex::build(std::span<const Passage> passages, const Analyzer& analyzer) {
    if (passages.empty()) throw ValidationError("cannot index an empty corpus");
    InvertedIndex idx(analyzer);
    for (const auto& p : passages) {
        auto doc = static_cast<std::uint32_t>(idx.doc_ids_.size());
        if (!idx.doc_by_id_.emplace(p.passage_id, doc).second)
            throw ValidationError("duplicate passage_id: " + p.passage_id);
        idx.doc_ids_.push_back(p.passage_id);
        auto terms = analyzer.terms(p.text);
        idx.doc_lengths_.push_back(static_cast<std::uint32_t>(terms.size()));
        std::map<std::string, std::uint32_t> tf;
        for (auto& t : terms) ++tf[t];
        for (auto& [term, f] : tf) idx.postings_[term].push_back({doc, f});
    }
    idx.finalize();
    return idx;
}

void InvertedIndex::finalize() {
    total_length_ = 0;
    for (auto len : doc_lengths_) total_length_ += len;
    avgdl_ = static_cast<double>(total_length_) / static_cast<double>(doc_ids_.size());
}

std::optional<std::uint32_t> InvertedIndex::doc_length(const std::string& passage_id) const {
    auto it = doc_by_id_.find(passage_id);
    if (it == doc_by_id_.end()) return std::nullopt;
    return doc_lengths_[it->second];
}

const std::vector<Posting>* InvertedIndex::postings(const std::string& term) const {
    auto it = postings_.find(term);
    return it == postings_.end() ? nullptr : &it->second;
}

std::size_t InvertedIndex::df(const std::string& term) const {
    const auto* p = postings(term);
    return p ? p->size() : 0;
}

std::uint64_t InvertedIndex::corpus_frequency(const std::string& term) const {
    std::uint64_t cf = 0;
    if (const auto* p = postings(term))
        for (const auto& posting : *p) cf += posting.tf;
    return cf;
}

bool InvertedIndex::same_content(const InvertedIndex& other) const {
    return doc_ids_ == other.doc_ids_ && doc_lengths_ == other.doc_lengths_ && postings_ == other.postings_;
}

void InvertedIndex::save(const std::filesystem::path& path) const {
    detail::JsonlWriter out(path);
    out.write(json{{"docs", doc_ids_}, {"lengths", doc_lengths_}});
    std::vector<const std::string*> terms;
    terms.reserve(postings_.size());
    for (const auto& [t, _] : postings_) terms.push_back(&t);
    std::sort(terms.begin(), terms.end(), [](const auto* a, const auto* b) { return *a < *b; });
    for (const auto* t : terms) {
        json plist = json::array();
        for (const auto& p : postings_.at(*t)) plist.push_back({p.doc, p.tf});
        out.write(json{{"t", *t}, {"p", std::move(plist)}});
    }
}

InvertedIndex InvertedIndex::load(const std::filesystem::path& path, const Analyzer& analyzer) {
    InvertedIndex idx(analyzer);
    bool header = false;
    detail::for_each_record(path, [&](const json& rec, std::size_t line) {
        if (!header) {
            idx.doc_ids_ = rec.at("docs").get<std::vector<std::string>>();
            idx.doc_lengths_ = rec.at("lengths").get<std::vector<std::uint32_t>>();
            if (idx.doc_ids_.size() != idx.doc_lengths_.size() || idx.doc_ids_.empty())
                throw ParseError("index header is inconsistent", line);
            for (std::uint32_t d = 0; d < idx.doc_ids_.size(); ++d)
                if (!idx.doc_by_id_.emplace(idx.doc_ids_[d], d).second)
                    throw ParseError("duplicate passage_id in index: " + idx.doc_ids_[d], line);
            header = true;
            return;
        }
        auto& plist = idx.postings_[rec.at("t").get<std::string>()];
        for (const auto& p : rec.at("p")) {
            auto doc = p.at(0).get<std::uint32_t>();
            if (doc >= idx.doc_ids_.size()) throw ParseError("posting refers to unknown doc", line);
            plist.push_back({doc, p.at(1).get<std::uint32_t>()});
        }
    });
    if (!header) throw ParseError("empty index file");
    idx.finalize();
    return idx;
}

// -- BM25 ---------------------------------------------------------------------

double bm25_idf(std::size_t num_docs, std::size_t df) {
    auto n = static_cast<double>(num_docs);
    auto d = static_cast<double>(df);
    return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

namespace {

RankedList top_k(std::vector<ContextEntry> scored, std::size_t k, std::string topic_id) {
    auto cmp = [](const ContextEntry& a, const ContextEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.passage_id < b.passage_id;
    };
    k = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), cmp);
    scored.resize(k);
    return {std::move(topic_id), std::move(scored)};
}

}  // namespace

RankedList bm25_search(const InvertedIndex& index, std::string_view query, std::size_t k, const Bm25Params& params,
                       std::string topic_id) {
    if (k == 0) throw UsageError("bm25_search: k must be >= 1");
    std::unordered_map<std::uint32_t, double> acc;
    const double avgdl = index.avgdl();
    for (const auto& term : index.analyzer().terms(query)) {
        const auto* plist = index.postings(term);
        if (!plist) continue;
        double idf = bm25_idf(index.num_docs(), plist->size());
        for (const auto& p : *plist) {
            double tf = p.tf;
            double norm = params.k1 * (1.0 - params.b + params.b * index.doc_length(p.doc) / avgdl);
            acc[p.doc] += idf * tf * (params.k1 + 1.0) / (tf + norm);
        }
    }
    std::vector<ContextEntry> scored;
    scored.reserve(acc.size());
    for (const auto& [doc, s] : acc) scored.push_back({index.doc_id(doc), s});
    return top_k(std::move(scored), k, std::move(topic_id));
}

// -- run files ----------------------------------------------------------------

std::string format_run(const std::vector<RankedList>& runs, std::string_view tag) {
    std::ostringstream os;
    os.precision(17);
    for (const auto& run : runs) {
        std::size_t rank = 1;
        for (const auto& c : run.candidates)
            os << run.topic_id << ' ' << c.passage_id << ' ' << rank++ << ' ' << c.score << ' ' << tag << '\n';
    }
    return os.str();
}

void write_run(const std::vector<RankedList>& runs, const std::filesystem::path& path, std::string_view tag) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << format_run(runs, tag);
}

std::vector<RankedList> read_run(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<RankedList> runs;
    std::unordered_map<std::string, std::size_t> index;
    std::vector<std::vector<std::pair<std::size_t, ContextEntry>>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string topic, pid, tag;
        std::size_t rank = 0;
        double score = 0.0;
        if (!(ls >> topic)) continue;
        if (!(ls >> pid >> rank >> score)) throw ParseError("run line needs 'topic passage rank score tag'", line_no);
        auto [it, inserted] = index.emplace(topic, runs.size());
        if (inserted) {
            runs.push_back({topic, {}});
            rows.emplace_back();
        }
        rows[it->second].push_back({rank, {pid, score}});
    }
    for (std::size_t i = 0; i < runs.size(); ++i) {
        std::stable_sort(rows[i].begin(), rows[i].end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        for (auto& [_, e] : rows[i]) runs[i].candidates.push_back(std::move(e));
    }
    return runs;
}

}  // namespace crux

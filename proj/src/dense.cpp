#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

#include "crux/error.hpp"
#include "crux/retrieval.hpp"

namespace crux {

std::vector<std::vector<double>> EmbeddingProvider::embed_batch(std::span<const std::string> texts) {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(embed(t));
    return out;
}

std::vector<double> HashingEmbedder::embed(std::string_view text) {
    std::vector<double> v(dimension_, 0.0);
    for (const auto& term : analyzer_.terms(text)) {
        std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
        for (unsigned char c : term) {
            h ^= c;
            h *= 1099511628211ULL;
        }
        v[h % dimension_] += (h >> 63) ? -1.0 : 1.0;
    }
    double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (norm > 0.0)
        for (auto& x : v) x /= norm;
    return v;
}

EmbeddingStore EmbeddingStore::build(EmbeddingProvider& provider, const Corpus& corpus) {
    EmbeddingStore store(provider.dimension());
    std::vector<std::string> texts;
    texts.reserve(corpus.size());
    for (const auto& p : corpus.passages()) texts.push_back(p.text);
    auto vectors = provider.embed_batch(texts);
    if (vectors.size() != corpus.size()) throw ValidationError("embedding provider returned wrong batch size");
    for (std::size_t i = 0; i < corpus.size(); ++i) store.add(corpus.passages()[i].passage_id, std::move(vectors[i]));
    return store;
}

void EmbeddingStore::add(const std::string& passage_id, std::vector<double> vector) {
    if (dimension_ == 0) dimension_ = vector.size();
    if (vector.size() != dimension_)
        throw ValidationError("embedding dimension mismatch for " + passage_id + ": " + std::to_string(vector.size()) +
                              " != " + std::to_string(dimension_));
    if (!vectors_.emplace(passage_id, std::move(vector)).second)
        throw ValidationError("duplicate embedding for " + passage_id);
    ids_.push_back(passage_id);
}

const std::vector<double>* EmbeddingStore::find(const std::string& passage_id) const {
    auto it = vectors_.find(passage_id);
    return it == vectors_.end() ? nullptr : &it->second;
}

const std::vector<double>& EmbeddingStore::at(const std::string& passage_id) const {
    if (const auto* v = find(passage_id)) return *v;
    throw ValidationError("no embedding for passage " + passage_id);
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ValidationError("vector dimension mismatch");
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double cosine(std::span<const double> a, std::span<const double> b) {
    double na = std::sqrt(dot(a, a));
    double nb = std::sqrt(dot(b, b));
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

RankedList dense_search(const std::vector<double>& query_vector, const EmbeddingStore& store, std::size_t k,
                        std::string topic_id) {
    if (k == 0) throw UsageError("dense_search: k must be >= 1");
    if (query_vector.size() != store.dimension())
        throw ValidationError("query dimension " + std::to_string(query_vector.size()) + " != corpus dimension " +
                              std::to_string(store.dimension()));
    std::vector<ContextEntry> scored;
    scored.reserve(store.size());
    for (const auto& id : store.ids()) scored.push_back({id, dot(query_vector, store.at(id))});
    auto cmp = [](const ContextEntry& a, const ContextEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.passage_id < b.passage_id;
    };
    k = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), cmp);
    scored.resize(k);
    return {std::move(topic_id), std::move(scored)};
}

RankedList dense_search(EmbeddingProvider& provider, const EmbeddingStore& store, std::string_view query,
                        std::size_t k, std::string topic_id) {
    return dense_search(provider.embed(query), store, k, std::move(topic_id));
}

// -- MMR ----------------------------------------------------------------------

RankedList mmr_rerank(const RankedList& candidates, const EmbeddingStore& vectors, double lambda, std::size_t k) {
    if (lambda < 0.0 || lambda > 1.0) throw UsageError("mmr lambda must be in [0,1]");
    const auto& in = candidates.candidates;
    const std::size_t n = in.size();
    k = std::min(k, n);
    RankedList out{candidates.topic_id, {}};
    if (k == 0) return out;

    double lo = in.front().score, hi = in.front().score;
    for (const auto& c : in) {
        lo = std::min(lo, c.score);
        hi = std::max(hi, c.score);
    }
    std::vector<double> rel(n, 1.0);
    if (hi > lo)
        for (std::size_t i = 0; i < n; ++i) rel[i] = (in[i].score - lo) / (hi - lo);

    std::vector<const std::vector<double>*> vec(n);
    for (std::size_t i = 0; i < n; ++i) vec[i] = &vectors.at(in[i].passage_id);

    std::vector<double> max_sim(n, 0.0);
    std::vector<bool> taken(n, false);
    for (std::size_t step = 0; step < k; ++step) {
        std::size_t best = n;
        double best_val = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i]) continue;
            double val = step == 0 ? rel[i] : lambda * rel[i] - (1.0 - lambda) * max_sim[i];
            if (best == n || val > best_val) {
                best = i;
                best_val = val;
            }
        }
        taken[best] = true;
        out.candidates.push_back({in[best].passage_id, static_cast<double>(k - step)});
        for (std::size_t i = 0; i < n; ++i)
            if (!taken[i]) max_sim[i] = std::max(max_sim[i], cosine(*vec[i], *vec[best]));
    }
    return out;
}

// -- plug-in re-ranking ---------------------------------------------------------

RerankOutput TermOverlapScorer::score(std::string_view query, std::span<const std::string> passages) {
    static const Analyzer analyzer = Analyzer::english();
    auto q = analyzer.terms(query);
    std::unordered_set<std::string> wanted(q.begin(), q.end());
    std::vector<double> scores;
    scores.reserve(passages.size());
    for (const auto& p : passages) {
        auto terms = analyzer.terms(p);
        std::unordered_set<std::string> have(terms.begin(), terms.end());
        std::size_t hit = 0;
        for (const auto& t : wanted) hit += have.contains(t) ? 1 : 0;
        scores.push_back(wanted.empty() ? 0.0 : static_cast<double>(hit) / static_cast<double>(wanted.size()));
    }
    return scores;
}

RankedList external_rerank(const RankedList& candidates, std::string_view query, const Corpus& corpus,
                           RerankScorer& scorer) {
    const auto& in = candidates.candidates;
    std::vector<std::string> texts;
    texts.reserve(in.size());
    for (const auto& c : in) texts.push_back(corpus.at(c.passage_id).text);
    auto result = scorer.score(query, texts);

    RankedList out{candidates.topic_id, {}};
    if (auto* scores = std::get_if<std::vector<double>>(&result)) {
        if (scores->size() != in.size())
            throw ValidationError("reranker returned " + std::to_string(scores->size()) + " scores for " +
                                  std::to_string(in.size()) + " candidates");
        std::vector<std::size_t> order(in.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return (*scores)[a] > (*scores)[b]; });
        for (auto i : order) out.candidates.push_back({in[i].passage_id, (*scores)[i]});
        return out;
    }
    const auto& perm = std::get<std::vector<std::size_t>>(result);
    if (perm.size() != in.size())
        throw ValidationError("reranker returned a permutation of size " + std::to_string(perm.size()) + " for " +
                              std::to_string(in.size()) + " candidates");
    std::vector<bool> seen(in.size(), false);
    for (std::size_t r = 0; r < perm.size(); ++r) {
        auto i = perm[r];
        if (i >= in.size() || seen[i]) throw ValidationError("reranker returned an invalid permutation");
        seen[i] = true;
        out.candidates.push_back({in[i].passage_id, static_cast<double>(in.size() - r)});
    }
    return out;
}

// -- assembly -----------------------------------------------------------------

RetrievalContext assemble_context(const RankedList& ranked, const Corpus& corpus, const Budget& budget) {
    RetrievalContext ctx{ranked.topic_id, {}, 0};
    const std::size_t token_limit = budget.token_limit();
    std::unordered_set<std::string> seen;
    for (const auto& c : ranked.candidates) {
        if (budget.max_passages && ctx.entries.size() >= *budget.max_passages) break;
        if (!seen.insert(c.passage_id).second) continue;
        const auto& p = corpus.at(c.passage_id);
        if (ctx.total_tokens + p.token_count > token_limit) break;
        ctx.entries.push_back(c);
        ctx.total_tokens += p.token_count;
    }
    return ctx;
}

}  // namespace crux

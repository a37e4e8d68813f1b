#include "crux/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <thread>
#include <unordered_set>

#include "crux/error.hpp"
#include "crux/text.hpp"
#include "jsonl.hpp"

namespace crux {

using detail::json;

// -- configuration ------------------------------------------------------------

namespace {

std::string unquote(std::string v) {
    if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front())
        return v.substr(1, v.size() - 2);
    return v;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc{} || ptr != value.data() + value.size())
        throw UsageError("config: " + key + " expects a number, got '" + value + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "on" || value == "1") return true;
    if (value == "false" || value == "off" || value == "0") return false;
    throw UsageError("config: " + key + " expects true or false, got '" + value + "'");
}

}  // namespace

PipelineConfig PipelineConfig::parse(std::string_view text) {
    PipelineConfig c;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            if (line[i] == '#' && !quoted) {
                line.resize(i);
                break;
            }
        }
        auto stripped = trim(line);
        if (stripped.empty() || stripped.front() == '[') continue;
        auto eq = stripped.find('=');
        if (eq == std::string::npos) throw ParseError("config: expected key = value", line_no);
        auto key = trim(std::string_view(stripped).substr(0, eq));
        auto value = unquote(trim(std::string_view(stripped).substr(eq + 1)));

        if (key == "run_id") c.run_id = value;
        else if (key == "method") c.method = value;
        else if (key == "reranker") c.reranker = value;
        else if (key == "lambda") c.mmr_lambda = parse_number<double>(key, value);
        else if (key == "depth") c.depth = parse_number<std::size_t>(key, value);
        else if (key == "k_policy") c.k_policy = value;
        else if (key == "k") c.k = parse_number<std::size_t>(key, value);
        else if (key == "token_budget") c.token_budget = value;
        else if (key == "token_cap") c.token_cap = parse_number<std::size_t>(key, value);
        else if (key == "eta") c.eta = parse_number<int>(key, value);
        else if (key == "alpha") c.alpha = parse_number<double>(key, value);
        else if (key == "w") c.w = parse_number<double>(key, value);
        else if (key == "generation") c.generation = parse_bool(key, value);
        else if (key == "seed") c.seed = parse_number<std::uint64_t>(key, value);
        else if (key == "embedding_dim") c.embedding_dim = parse_number<std::size_t>(key, value);
        else if (key == "embed_url") c.embed_url = value;
        else if (key == "rerank_url") c.rerank_url = value;
        else if (key == "threads") c.threads = parse_number<int>(key, value);
        else throw ParseError("config: unknown key '" + key + "'", line_no);
    }
    c.validate();
    return c;
}

PipelineConfig PipelineConfig::load(const std::filesystem::path& path) {
    return parse(detail::read_file(path));
}

void PipelineConfig::validate() const {
    if (method != "bm25" && method != "dense") throw UsageError("config: method must be bm25 or dense");
    if (reranker != "none" && reranker != "mmr" && reranker != "plugin")
        throw UsageError("config: reranker must be none, mmr or plugin");
    if (k_policy != "oracle" && k_policy != "fixed") throw UsageError("config: k_policy must be oracle or fixed");
    if (token_budget != "oracle_tokens" && token_budget != "cap_only")
        throw UsageError("config: token_budget must be oracle_tokens or cap_only");
    if (k_policy == "fixed" && k == 0) throw UsageError("config: k must be >= 1");
    if (depth == 0) throw UsageError("config: depth must be >= 1");
    if (eta < 1 || eta > 5) throw UsageError("config: eta must be in 1..5");
    if (!(alpha > 0.0 && alpha < 1.0)) throw UsageError("config: alpha must be in (0,1)");
    if (!(w > 0.0)) throw UsageError("config: w must be positive");
    if (mmr_lambda < 0.0 || mmr_lambda > 1.0) throw UsageError("config: lambda must be in [0,1]");
    if (token_cap == 0) throw UsageError("config: token_cap must be positive");
}

ReportConfig PipelineConfig::report_config() const {
    ReportConfig r;
    r.eta = eta;
    r.alpha = alpha;
    r.w = w;
    r.k_policy = k_policy == "fixed" ? "fixed:" + std::to_string(k) : k_policy;
    r.token_budget = token_budget;
    r.method = method;
    r.reranker = reranker == "mmr" ? "mmr:" + json(mmr_lambda).dump() : reranker;
    r.seed = seed;
    return r;
}

// -- judgment cache -----------------------------------------------------------

int JudgmentCache::rate(std::string_view question, std::string_view text) {
    auto key = content_key(question, text);
    std::promise<int> promise;
    std::shared_future<int> result;
    bool owner = false;
    {
        std::lock_guard lock(mutex_);
        auto [it, inserted] = entries_.try_emplace(key);
        if (inserted) {
            it->second = promise.get_future().share();
            owner = true;
        }
        result = it->second;
    }
    if (owner) {
        try {
            int rating = std::clamp(judge_.rate(question, text), 0, 5);
            ++calls_;
            promise.set_value(rating);
        } catch (...) {
            promise.set_exception(std::current_exception());
            std::lock_guard lock(mutex_);
            entries_.erase(key);
            throw;
        }
    }
    return result.get();
}

void JudgmentCache::seed(std::string_view question, std::string_view text, int rating) {
    std::promise<int> promise;
    promise.set_value(rating);
    std::lock_guard lock(mutex_);
    entries_.try_emplace(content_key(question, text), promise.get_future().share());
}

std::size_t JudgmentCache::size() const {
    std::lock_guard lock(mutex_);
    return entries_.size();
}

// -- grading ------------------------------------------------------------------

GradeTable grade_passages(const Topic& topic, const RatingMatrix& matrix, const Corpus& corpus,
                          std::span<const std::string> passage_ids, JudgmentCache& cache) {
    GradeTable grades;
    for (auto qi : topic.answerable_indices()) {
        std::vector<int> row;
        row.reserve(passage_ids.size());
        for (const auto& id : passage_ids) {
            if (auto col = matrix.column_of(id))
                row.push_back(matrix.at(qi, *col));
            else
                row.push_back(cache.rate(topic.questions[qi].text, corpus.at(id).text));
        }
        grades.push_back(std::move(row));
    }
    return grades;
}

std::vector<int> grade_text(const Topic& topic, std::string_view text, JudgmentCache& cache) {
    std::vector<int> out;
    for (auto qi : topic.answerable_indices()) out.push_back(cache.rate(topic.questions[qi].text, text));
    return out;
}

std::string format_context(const RetrievalContext& context, const Corpus& corpus) {
    std::string out;
    for (std::size_t i = 0; i < context.entries.size(); ++i) {
        if (i) out += "\n\n";
        out += "[" + std::to_string(i + 1) + "] " + normalize_whitespace(corpus.at(context.entries[i].passage_id).text);
    }
    return out;
}

namespace {

const char* const kNoContext = "(no context provided)";

double text_coverage(const std::vector<int>& ratings, int eta) {
    std::vector<bool> bits;
    for (int r : ratings) bits.push_back(r >= eta);
    return coverage(bits);
}

std::optional<double> maybe_density(double cov, std::size_t tokens, double cov_star, std::size_t tokens_star,
                                    double w) {
    if (tokens == 0 || tokens_star == 0 || cov_star <= 0.0) return std::nullopt;
    return density(cov, tokens, cov_star, tokens_star, w);
}

// Everything about Z* a topic's metrics are normalised against.
struct OracleRef {
    RetrievalContext context;
    GradeTable grades;
    double coverage = 0.0;
};

OracleRef oracle_ref(const Dataset& ds, const Topic& topic, int eta) {
    OracleRef ref;
    ref.context = ds.oracle_context(topic);
    ref.grades = grades_from_matrix(topic, ds.matrix(topic.topic_id), ref.context.passage_ids());
    ref.coverage = coverage(answerability(ref.grades, eta));
    return ref;
}

std::string generate_report(Gateway& gateway, const std::string& query, const std::string& context,
                            std::size_t budget, const PipelineConfig& config) {
    auto params = GenParams::text();
    params.seed = static_cast<std::int64_t>(config.seed);
    auto reply = gateway.generate(TemplateId::report_gen,
                                  {{"query", query}, {"context", context}, {"budget", std::to_string(budget)}},
                                  params);
    return default_tokenizer().truncate(trim(reply), budget);
}

// Runs `fn(i)` for i in [0, n) on up to `threads` workers; results are
// written by index, so the output order never depends on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn fn) {
    std::atomic<std::size_t> next{0};
    std::mutex mutex;
    std::exception_ptr error;
    std::size_t error_index = n;
    auto worker = [&] {
        for (;;) {
            auto i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(mutex);
                if (i < error_index) {
                    error_index = i;
                    error = std::current_exception();
                }
            }
        }
    };
    auto count = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, threads)), n);
    if (count <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace

std::vector<MetricReport> run_reference_bounds(const Dataset& dataset, Gateway& gateway, JudgmentCache& cache,
                                               const PipelineConfig& config, std::vector<Generation>* generations) {
    config.validate();
    const auto& tok = default_tokenizer();
    const std::size_t n = dataset.topics.size();
    std::vector<TopicMetrics> direct(n), oracle_result(n), oracle_retrieval(n);
    std::vector<std::optional<Generation>> direct_y(n), oracle_y(n);
    std::vector<bool> excluded(n, false);

    parallel_for(n, config.threads, [&](std::size_t t) {
        const auto& topic = dataset.topics[t];
        if (topic.answerable_indices().empty()) {
            excluded[t] = true;
            return;
        }
        auto ref = oracle_ref(dataset, topic, config.eta);
        auto budget = ref.context.total_tokens;

        if (config.generation) {
            auto y = generate_report(gateway, topic.query, kNoContext, budget, config);
            auto ratings = grade_text(topic, y, cache);
            direct[t].cov_y = text_coverage(ratings, config.eta);
            direct_y[t] = Generation{"direct-prompting", topic.topic_id, std::move(y), std::move(ratings)};
        }

        auto cov_star_y = text_coverage(grade_text(topic, topic.summary, cache), config.eta);
        oracle_result[t].cov_y = cov_star_y;
        oracle_result[t].den_y = maybe_density(cov_star_y, tok.count(topic.summary), ref.coverage, budget, config.w);

        auto& m = oracle_retrieval[t];
        m.cov_z = ref.coverage;
        m.alpha_ndcg = alpha_ndcg(ref.grades, ref.grades, config.eta, config.alpha);
        m.den_z = maybe_density(ref.coverage, budget, ref.coverage, budget, config.w);
        std::unordered_set<std::string> relevant(topic.oracle_passage_ids.begin(), topic.oracle_passage_ids.end());
        auto ids = ref.context.passage_ids();
        auto rel = relevance_metrics(ids, relevant, ids.size());
        m.recall = rel.recall;
        m.map = rel.map;
        m.ndcg = rel.ndcg;
        if (config.generation) {
            auto y = generate_report(gateway, topic.query, format_context(ref.context, dataset.corpus), budget, config);
            auto ratings = grade_text(topic, y, cache);
            m.cov_y = text_coverage(ratings, config.eta);
            m.den_y = maybe_density(*m.cov_y, tok.count(y), ref.coverage, budget, config.w);
            oracle_y[t] = Generation{"oracle-retrieval", topic.topic_id, std::move(y), std::move(ratings)};
        }
    });

    auto make = [&](std::string run_id, std::vector<TopicMetrics>& rows, std::string method) {
        MetricReport r;
        r.run_id = std::move(run_id);
        r.config = config.report_config();
        r.config.method = std::move(method);
        r.config.reranker = "none";
        for (std::size_t t = 0; t < n; ++t) {
            if (excluded[t])
                r.excluded_topics.push_back(dataset.topics[t].topic_id);
            else
                r.per_topic.emplace_back(dataset.topics[t].topic_id, rows[t]);
        }
        if (!config.generation && r.run_id != "oracle-result")
            r.warnings.push_back("generation disabled: result metrics are absent");
        r.aggregate();
        return r;
    };
    std::vector<MetricReport> out;
    out.push_back(make("direct-prompting", direct, "none"));
    out.push_back(make("oracle-result", oracle_result, "none"));
    out.push_back(make("oracle-retrieval", oracle_retrieval, "oracle"));

    if (generations) {
        for (auto* ys : {&direct_y, &oracle_y})
            for (auto& g : *ys)
                if (g) generations->push_back(std::move(*g));
    }
    return out;
}

RunOutput run_pipeline(const Dataset& dataset, const PipelineConfig& config, const Resources& resources,
                       Gateway& gateway, JudgmentCache& cache) {
    config.validate();
    if (config.method == "bm25" && !resources.index) throw UsageError("bm25 retrieval needs an inverted index");
    if (config.method == "dense" && (!resources.embedder || !resources.store))
        throw UsageError("dense retrieval needs an embedding provider and precomputed passage embeddings");
    if (config.reranker == "mmr" && !resources.store)
        throw UsageError("mmr re-ranking needs precomputed passage embeddings");
    if (config.reranker == "plugin" && !resources.plugin) throw UsageError("plugin re-ranking needs a scorer");
    if (resources.store && resources.embedder && resources.store->dimension() != resources.embedder->dimension())
        throw UsageError("embedding dimension mismatch between provider and store");

    const auto& tok = default_tokenizer();
    const std::size_t n = dataset.topics.size();
    std::vector<std::optional<TopicMetrics>> rows(n);
    std::vector<RankedList> rankings(n);
    std::vector<RetrievalContext> contexts(n);
    std::vector<std::optional<Generation>> ys(n);
    std::vector<std::string> warnings(n);

    parallel_for(n, config.threads, [&](std::size_t t) {
        const auto& topic = dataset.topics[t];
        const auto& matrix = dataset.matrix(topic.topic_id);

        RankedList ranked = config.method == "bm25"
                                ? bm25_search(*resources.index, topic.query, config.depth, {}, topic.topic_id)
                                : dense_search(*resources.embedder, *resources.store, topic.query, config.depth,
                                               topic.topic_id);
        if (config.reranker == "mmr")
            ranked = mmr_rerank(ranked, *resources.store, config.mmr_lambda, ranked.candidates.size());
        else if (config.reranker == "plugin")
            ranked = external_rerank(ranked, topic.query, dataset.corpus, *resources.plugin);
        ranked.topic_id = topic.topic_id;

        if (topic.answerable_indices().empty()) {
            rankings[t] = std::move(ranked);
            contexts[t] = {topic.topic_id, {}, 0};
            return;
        }
        auto ref = oracle_ref(dataset, topic, config.eta);
        if (ref.coverage < 1.0)
            warnings[t] = "topic " + topic.topic_id + ": oracle context does not cover every answerable question";

        Budget budget;
        budget.hard_cap = std::min(config.token_cap, kHardTokenCap);
        budget.max_passages = config.k_policy == "oracle" ? ref.context.entries.size() : config.k;
        if (config.token_budget == "oracle_tokens") budget.max_tokens = ref.context.total_tokens;
        auto z = assemble_context(ranked, dataset.corpus, budget);

        auto ids = z.passage_ids();
        auto grades = grade_passages(topic, matrix, dataset.corpus, ids, cache);
        TopicMetrics m;
        m.cov_z = ids.empty() ? 0.0 : coverage(answerability(grades, config.eta));
        m.alpha_ndcg = ids.empty() ? 0.0 : alpha_ndcg(grades, ref.grades, config.eta, config.alpha);
        m.den_z = maybe_density(*m.cov_z, z.total_tokens, ref.coverage, ref.context.total_tokens, config.w);

        std::unordered_set<std::string> relevant(topic.oracle_passage_ids.begin(), topic.oracle_passage_ids.end());
        auto ranked_ids = ranked.passage_ids();
        auto rel = relevance_metrics(ranked_ids, relevant, *budget.max_passages);
        m.recall = rel.recall;
        m.map = rel.map;
        m.ndcg = rel.ndcg;

        if (config.generation) {
            auto limit = config.token_budget == "oracle_tokens" ? ref.context.total_tokens : budget.hard_cap;
            auto y = generate_report(gateway, topic.query, format_context(z, dataset.corpus), limit, config);
            auto ratings = grade_text(topic, y, cache);
            m.cov_y = text_coverage(ratings, config.eta);
            m.den_y = maybe_density(*m.cov_y, tok.count(y), ref.coverage, ref.context.total_tokens, config.w);
            ys[t] = Generation{config.run_id, topic.topic_id, std::move(y), std::move(ratings)};
        }
        rows[t] = m;
        rankings[t] = std::move(ranked);
        contexts[t] = std::move(z);
    });

    RunOutput out;
    out.report.run_id = config.run_id;
    out.report.config = config.report_config();
    for (std::size_t t = 0; t < n; ++t) {
        const auto& id = dataset.topics[t].topic_id;
        if (rows[t])
            out.report.per_topic.emplace_back(id, *rows[t]);
        else
            out.report.excluded_topics.push_back(id);
        if (!warnings[t].empty()) out.report.warnings.push_back(warnings[t]);
        if (ys[t]) out.generations.push_back(std::move(*ys[t]));
    }
    out.report.aggregate();
    out.rankings = std::move(rankings);
    out.contexts = std::move(contexts);
    return out;
}

// -- correlation --------------------------------------------------------------

CorrelationTable correlate_runs(const std::vector<MetricReport>& reports, std::string_view target_field) {
    if (reports.size() < 2) throw UsageError("correlate_runs needs at least 2 reports");
    CorrelationTable table;
    table.target = std::string(target_field);
    std::vector<double> target;
    for (const auto& r : reports) {
        table.run_ids.push_back(r.run_id);
        const auto& v = r.aggregates.field(target_field);
        if (!v) throw UsageError("report " + r.run_id + " has no aggregate " + std::string(target_field));
        target.push_back(*v);
    }
    if (reports.size() < 3)
        table.warnings.push_back("only " + std::to_string(reports.size()) + " runs: correlation is unstable");

    auto guarded = [](auto fn) -> std::optional<double> {
        try {
            return fn();
        } catch (const UndefinedMetric&) {
            return std::nullopt;
        }
    };
    for (auto name : TopicMetrics::kFields) {
        if (name == target_field) continue;
        std::vector<double> values;
        for (const auto& r : reports)
            if (const auto& v = r.aggregates.field(name)) values.push_back(*v);
        if (values.size() != reports.size()) continue;
        CorrelationRow row{std::string(name), guarded([&] { return kendall_tau(values, target); }),
                           guarded([&] { return spearman_rho(values, target); }),
                           guarded([&] { return pearson_r(values, target); })};
        if (!row.kendall) table.warnings.push_back(row.field + ": constant across runs, correlation undefined");
        table.rows.push_back(std::move(row));
    }
    return table;
}

std::string serialize_correlation(const CorrelationTable& table) {
    json rows = json::array();
    auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
    for (const auto& r : table.rows)
        rows.push_back({{"field", r.field}, {"kendall_tau", opt(r.kendall)}, {"spearman", opt(r.spearman)},
                        {"pearson", opt(r.pearson)}});
    json out{{"target", table.target}, {"runs", table.run_ids}, {"rows", std::move(rows)},
             {"warnings", table.warnings}};
    return out.dump() + "\n";
}

std::string render_correlation(const CorrelationTable& table) {
    std::string out = "target: " + table.target + " (" + std::to_string(table.run_ids.size()) + " runs)\n";
    char line[128];
    std::snprintf(line, sizeof line, "%-12s %9s %9s %9s\n", "metric", "kendall", "spearman", "pearson");
    out += line;
    auto cell = [](const std::optional<double>& v) {
        char buf[32];
        if (v)
            std::snprintf(buf, sizeof buf, "%.3f", *v);
        else
            std::snprintf(buf, sizeof buf, "-");
        return std::string(buf);
    };
    for (const auto& r : table.rows) {
        std::snprintf(line, sizeof line, "%-12s %9s %9s %9s\n", r.field.c_str(), cell(r.kendall).c_str(),
                      cell(r.spearman).c_str(), cell(r.pearson).c_str());
        out += line;
    }
    for (const auto& w : table.warnings) out += "warning: " + w + "\n";
    return out;
}

// -- sampling -----------------------------------------------------------------

std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
    if (n == 0) throw UsageError("uniform_below: empty range");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
    for (;;) {
        auto x = rng();
        if (x < limit) return x % n;
    }
}

std::vector<RetrievalContext> sample_contexts(const std::vector<RankedList>& run, const Corpus& corpus,
                                              std::size_t n_contexts, std::size_t context_size,
                                              std::size_t pool_depth, std::uint64_t seed) {
    if (context_size == 0) throw UsageError("sample_contexts: context size must be >= 1");
    if (context_size > pool_depth) throw UsageError("sample_contexts: context size exceeds the pool depth");
    std::mt19937_64 rng(seed);
    std::vector<RetrievalContext> out;
    for (const auto& list : run) {
        if (pool_depth > list.candidates.size())
            throw UsageError("sample_contexts: topic " + list.topic_id + " has only " +
                             std::to_string(list.candidates.size()) + " candidates, pool depth is " +
                             std::to_string(pool_depth));
        for (std::size_t c = 0; c < n_contexts; ++c) {
            std::vector<std::size_t> pool(pool_depth);
            std::iota(pool.begin(), pool.end(), 0);
            std::vector<ContextEntry> entries;
            for (std::size_t i = 0; i < context_size; ++i) {
                auto j = i + uniform_below(rng, pool_depth - i);
                std::swap(pool[i], pool[j]);
                entries.push_back(list.candidates[pool[i]]);
            }
            out.push_back(make_context(list.topic_id, std::move(entries), corpus));
        }
    }
    return out;
}

// -- generations --------------------------------------------------------------

void write_generations(const std::vector<Generation>& generations, const std::filesystem::path& path) {
    detail::JsonlWriter out(path);
    for (const auto& g : generations)
        out.write(json{{"run_id", g.run_id}, {"topic_id", g.topic_id}, {"text", g.text}, {"ratings", g.ratings}});
}

std::vector<Generation> read_generations(const std::filesystem::path& path) {
    std::vector<Generation> out;
    detail::for_each_record(path, [&](const json& rec, std::size_t) {
        out.push_back({rec.at("run_id").get<std::string>(), rec.at("topic_id").get<std::string>(),
                       rec.at("text").get<std::string>(), rec.value("ratings", std::vector<int>{})});
    });
    return out;
}

}  // namespace crux

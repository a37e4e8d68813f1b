#include <map>
#include <set>
#include <thread>

#include "crux/error.hpp"
#include "crux/harness.hpp"
#include "support.hpp"

using namespace crux;
using crux::test::TempDir;

namespace {

struct SlowCountingJudge final : Judge {
    std::atomic<int> calls{0};
    int rate(std::string_view, std::string_view text) override {
        ++calls;
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        return static_cast<int>(text.size() % 6);
    }
};

MetricReport report_with(const std::string& id, std::map<std::string, double> values) {
    MetricReport r;
    r.run_id = id;
    for (const auto& [k, v] : values) r.aggregates.field(k) = v;
    return r;
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("config parsing") {
    auto c = PipelineConfig::parse(
        "# pipeline\n[run]\nrun_id = \"bm25 # mmr\"\nmethod = dense\nreranker = mmr\nlambda = 0.25\n"
        "k_policy = fixed\nk = 4 # trailing\ngeneration = true\nseed = 99\n");
    CHECK(c.run_id == "bm25 # mmr");
    CHECK(c.method == "dense");
    CHECK(c.mmr_lambda == 0.25);
    CHECK(c.k == 4);
    CHECK(c.generation);
    CHECK(c.seed == 99);
    CHECK(c.report_config().k_policy == "fixed:4");
    CHECK(c.report_config().reranker == "mmr:0.25");

    CHECK_THROWS_AS(PipelineConfig::parse("colour = red\n"), ParseError);
    CHECK_THROWS_AS(PipelineConfig::parse("method\n"), ParseError);
    CHECK_THROWS_AS(PipelineConfig::parse("method = sparse\n"), UsageError);
    CHECK_THROWS_AS(PipelineConfig::parse("eta = 7\n"), UsageError);
    CHECK_THROWS_AS(PipelineConfig::parse("k = many\n"), UsageError);
    CHECK_THROWS_AS(PipelineConfig::parse("lambda = 1.5\n"), UsageError);
}

TEST_CASE("bundled configs load") {
    for (auto name : {"bm25.toml", "bm25_mmr.toml", "dense.toml", "bm25_plugin.toml"})
        CHECK_NOTHROW(PipelineConfig::load(std::filesystem::path(CRUX_TEST_DATA) / "configs" / name));
}

TEST_CASE("cache issues one judge call per unique pair under contention") {
    SlowCountingJudge judge;
    JudgmentCache cache(judge);
    std::vector<std::jthread> threads;
    std::vector<int> results(16);
    for (int t = 0; t < 16; ++t)
        threads.emplace_back([&, t] { results[t] = cache.rate("q", t % 2 ? "odd text" : "even"); });
    threads.clear();
    CHECK(judge.calls == 2);
    CHECK(cache.judge_calls() == 2);
    CHECK(cache.size() == 2);
    for (int t = 0; t < 16; ++t) CHECK(results[t] == (t % 2 ? 2 : 4));
}

TEST_CASE("seeded entries are not overwritten and skip the judge") {
    SlowCountingJudge judge;
    JudgmentCache cache(judge);
    cache.seed("q", "c", 5);
    cache.seed("q", "c", 1);
    CHECK(cache.rate("q", "c") == 5);
    CHECK(judge.calls == 0);
}

TEST_CASE("judge errors are not cached") {
    struct Failing final : Judge {
        int n = 0;
        int rate(std::string_view, std::string_view) override {
            if (n++ == 0) throw TransportError("down");
            return 3;
        }
    } judge;
    JudgmentCache cache(judge);
    CHECK_THROWS_AS(cache.rate("q", "c"), TransportError);
    CHECK(cache.rate("q", "c") == 3);
}

TEST_CASE("format context numbers passages") {
    Corpus corpus({test::passage("a", "first  passage"), test::passage("b", "second")});
    auto z = make_context("t", {{"a", 1}, {"b", 0.5}}, corpus);
    CHECK(format_context(z, corpus) == "[1] first passage\n\n[2] second");
}

TEST_CASE("reference bounds on the mock dataset") {
    const auto& ds = test::mock_dataset();
    REQUIRE(ds.topics.size() == 10);
    Gateway gw(std::make_shared<OfflineModel>(), test::no_wait_retry());
    GatewayJudge judge(gw);
    JudgmentCache cache(judge);
    auto config = PipelineConfig::parse("generation = true\n");
    std::vector<Generation> gens;
    auto bounds = run_reference_bounds(ds, gw, cache, config, &gens);
    REQUIRE(bounds.size() == 3);
    CHECK(bounds[0].run_id == "direct-prompting");
    CHECK(bounds[2].run_id == "oracle-retrieval");
    for (const auto& [topic, m] : bounds[2].per_topic) {
        CHECK(*m.cov_z == 1.0);
        CHECK(*m.alpha_ndcg == 1.0);
        CHECK(*m.den_z == 1.0);
        CHECK(*m.map == *m.recall);
        CHECK(*m.ndcg == 1.0);
    }
    CHECK(*bounds[2].aggregates.cov_z == 1.0);
    CHECK_FALSE(bounds[1].aggregates.cov_z.has_value());
    CHECK(gens.size() == 20);

    config.generation = false;
    auto quiet = run_reference_bounds(ds, gw, cache, config);
    CHECK_FALSE(quiet[2].aggregates.cov_y.has_value());
    CHECK_FALSE(quiet[0].warnings.empty());
}

TEST_CASE("pipeline respects the oracle budgets") {
    const auto& ds = test::mock_dataset();
    auto index = InvertedIndex::build(ds.corpus);
    HashingEmbedder embedder(128);
    auto store = EmbeddingStore::build(embedder, ds.corpus);
    TermOverlapScorer plugin;
    Resources res{&index, &embedder, &store, &plugin};
    Gateway gw(std::make_shared<OfflineModel>(), test::no_wait_retry());
    GatewayJudge judge(gw);
    JudgmentCache cache(judge);

    for (auto cfg : {"method = bm25\ngeneration = true\n", "method = dense\nreranker = mmr\n",
                     "reranker = plugin\nk_policy = fixed\nk = 3\ntoken_budget = cap_only\n"}) {
        auto config = PipelineConfig::parse(cfg);
        auto out = run_pipeline(ds, config, res, gw, cache);
        REQUIRE(out.contexts.size() == ds.topics.size());
        CHECK(out.report.per_topic.size() == ds.topics.size());
        for (std::size_t t = 0; t < ds.topics.size(); ++t) {
            auto z_star = ds.oracle_context(ds.topics[t]);
            const auto& z = out.contexts[t];
            CHECK(z.total_tokens <= kHardTokenCap);
            if (config.k_policy == "oracle") {
                CHECK(z.entries.size() <= z_star.entries.size());
                CHECK(z.total_tokens <= z_star.total_tokens);
            } else {
                CHECK(z.entries.size() <= 3);
            }
            const auto& m = out.report.per_topic[t].second;
            CHECK(*m.cov_z >= 0.0);
            CHECK(*m.cov_z <= 1.0);
            CHECK(m.cov_y.has_value() == config.generation);
        }
        CHECK(out.generations.size() == (config.generation ? ds.topics.size() : 0));
    }
}

TEST_CASE("pipeline is deterministic across thread counts") {
    const auto& ds = test::mock_dataset();
    auto index = InvertedIndex::build(ds.corpus);
    Resources res{&index, nullptr, nullptr, nullptr};
    Gateway gw(std::make_shared<OfflineModel>(), test::no_wait_retry());
    GatewayJudge judge(gw);
    JudgmentCache c1(judge), c2(judge);
    auto a = PipelineConfig::parse("threads = 1\ngeneration = true\n");
    auto b = PipelineConfig::parse("threads = 8\ngeneration = true\n");
    CHECK(serialize_reports({run_pipeline(ds, a, res, gw, c1).report}) ==
          serialize_reports({run_pipeline(ds, b, res, gw, c2).report}));
}

TEST_CASE("pipeline reports missing resources") {
    const auto& ds = test::mock_dataset();
    Gateway gw(std::make_shared<OfflineModel>(), test::no_wait_retry());
    GatewayJudge judge(gw);
    JudgmentCache cache(judge);
    CHECK_THROWS_AS(run_pipeline(ds, PipelineConfig{}, Resources{}, gw, cache), UsageError);
}

TEST_CASE("correlation across runs") {
    std::vector<MetricReport> reports{report_with("r1", {{"cov_y", 0.1}, {"cov_z", 0.2}, {"recall", 0.9}, {"map", 0.5}}),
                                      report_with("r2", {{"cov_y", 0.4}, {"cov_z", 0.5}, {"recall", 0.8}, {"map", 0.5}}),
                                      report_with("r3", {{"cov_y", 0.3}, {"cov_z", 0.6}, {"recall", 0.7}, {"map", 0.5}}),
                                      report_with("r4", {{"cov_y", 0.8}, {"cov_z", 0.9}, {"recall", 0.1}, {"map", 0.5}})};
    auto table = correlate_runs(reports, "cov_y");
    REQUIRE(table.rows.size() == 3);
    std::map<std::string, CorrelationRow> rows;
    for (const auto& r : table.rows) rows[r.field] = r;
    CHECK(std::abs(*rows["cov_z"].kendall - 4.0 / 6.0) < 1e-12);
    CHECK(std::abs(*rows["recall"].kendall + 4.0 / 6.0) < 1e-12);
    CHECK_FALSE(rows["map"].kendall.has_value());
    CHECK(table.warnings.size() == 1);
    auto json = serialize_correlation(table);
    CHECK(json.find("\"kendall_tau\":null") != std::string::npos);
    CHECK(render_correlation(table).find("cov_z") != std::string::npos);

    reports.resize(2);
    CHECK(correlate_runs(reports, "cov_y").warnings.front().find("unstable") != std::string::npos);
    reports.resize(1);
    CHECK_THROWS_AS(correlate_runs(reports, "cov_y"), UsageError);
}

TEST_CASE("uniform_below stays in range and covers it") {
    std::mt19937_64 rng(1);
    std::vector<int> hits(7, 0);
    for (int i = 0; i < 7000; ++i) ++hits[uniform_below(rng, 7)];
    for (int h : hits) CHECK(h > 800);
    CHECK_THROWS_AS(uniform_below(rng, 0), UsageError);
}

TEST_CASE("sampled contexts are seeded draws without replacement") {
    std::vector<Passage> ps;
    RankedList list{"t", {}};
    for (int i = 0; i < 20; ++i) {
        ps.push_back(test::passage("p" + std::to_string(i), "text " + std::to_string(i)));
        list.candidates.push_back({"p" + std::to_string(i), 20.0 - i});
    }
    Corpus corpus(ps);
    auto a = sample_contexts({list}, corpus, 50, 5, 10, 42);
    auto b = sample_contexts({list}, corpus, 50, 5, 10, 42);
    auto c = sample_contexts({list}, corpus, 50, 5, 10, 43);
    CHECK(a == b);
    CHECK(a != c);
    REQUIRE(a.size() == 50);
    for (const auto& z : a) {
        std::set<std::string> ids;
        for (const auto& e : z.entries) {
            ids.insert(e.passage_id);
            CHECK(std::stoi(e.passage_id.substr(1)) < 10);
        }
        CHECK(ids.size() == 5);
    }
    CHECK_THROWS_AS(sample_contexts({list}, corpus, 1, 5, 30, 1), UsageError);
    CHECK_THROWS_AS(sample_contexts({list}, corpus, 1, 11, 10, 1), UsageError);
}

TEST_CASE("generations round trip") {
    TempDir dir;
    std::vector<Generation> g{{"run", "t1", "A report.\nTwo lines.", {5, 0, 3}}, {"run", "t2", "", {}}};
    write_generations(g, dir / "g.jsonl");
    auto back = read_generations(dir / "g.jsonl");
    REQUIRE(back.size() == 2);
    CHECK(back[0].text == g[0].text);
    CHECK(back[0].ratings == g[0].ratings);
    CHECK(back[1].topic_id == "t2");
}

}  // TEST_SUITE

TEST_SUITE("report") {

TEST_CASE("aggregates are means of present values") {
    MetricReport r;
    TopicMetrics a, b;
    a.cov_z = 0.5;
    b.cov_z = 1.0;
    a.cov_y = 0.2;
    r.per_topic = {{"t1", a}, {"t2", b}};
    r.aggregate();
    CHECK(*r.aggregates.cov_z == 0.75);
    CHECK(*r.aggregates.cov_y == 0.2);
    CHECK_FALSE(r.aggregates.den_z.has_value());
}

TEST_CASE("report round trip and table") {
    TempDir dir;
    MetricReport r;
    r.run_id = "bm25";
    TopicMetrics m;
    m.cov_z = 1.0 / 3.0;
    m.alpha_ndcg = 0.84;
    r.per_topic = {{"t1", m}};
    r.excluded_topics = {"t9"};
    r.warnings = {"w"};
    r.config.method = "bm25";
    r.aggregate();
    write_reports({r}, dir / "r.jsonl");
    auto back = read_reports(dir / "r.jsonl");
    REQUIRE(back.size() == 1);
    CHECK(back[0] == r);
    auto table = render_table({r});
    CHECK(table.find("33.3") != std::string::npos);
    CHECK(table.find("-") != std::string::npos);
}

}  // TEST_SUITE

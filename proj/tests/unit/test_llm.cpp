#include <random>
#include <set>

#include "crux/error.hpp"
#include "crux/llm.hpp"
#include "support.hpp"

using namespace crux;
using crux::test::ScriptedModel;
using crux::test::TempDir;

TEST_SUITE("llm") {

TEST_CASE("every template renders with its documented placeholders") {
    Bindings b{{"document", "DOC"}, {"n", "3"}, {"question", "Q?"}, {"context", "CTX"},
               {"report", "REP"}, {"query", "QRY"}, {"budget", "100"}};
    for (auto id : {TemplateId::question_gen, TemplateId::passage_gen, TemplateId::grading, TemplateId::query_gen,
                    TemplateId::report_gen}) {
        const auto& t = prompt(id);
        Bindings needed;
        for (const auto& name : t.placeholders()) needed[name] = b.at(name);
        auto text = t.render(needed);
        CHECK(text.find('{' + t.placeholders().front() + '}') == std::string::npos);
        CHECK(template_from_string(to_string(id)) == id);
    }
}

TEST_CASE("query template carries the few-shot exemplar") {
    auto text = prompt(TemplateId::query_gen).render({{"report", "REP"}});
    CHECK(text.find("Project Blue Book") != std::string::npos);
    CHECK(text.find("REP") != std::string::npos);
}

TEST_CASE("unbound placeholder is a usage error") {
    CHECK_THROWS_AS(prompt(TemplateId::grading).render({{"question", "q"}}), UsageError);
}

TEST_CASE("placeholder text inside bindings is not expanded") {
    auto text = prompt(TemplateId::grading).render({{"question", "{context}"}, {"context", "C"}});
    CHECK(text.find("{context}") != std::string::npos);
}

TEST_CASE("grading render is injective over (question, context)") {
    std::set<std::string> seen;
    std::vector<std::string> parts{"a", "b", "a b", "", "{x}", "Context: a"};
    std::size_t pairs = 0;
    for (const auto& q : parts)
        for (const auto& c : parts) {
            ++pairs;
            seen.insert(prompt(TemplateId::grading).render({{"question", q}, {"context", c}}));
        }
    CHECK(seen.size() == pairs);
}

TEST_CASE("transient failures are retried and counted") {
    auto model = std::make_shared<ScriptedModel>();
    model->replies = {"4"};
    model->failures_before_success = 2;
    Gateway gw(model, test::no_wait_retry(3));
    CHECK(gw.generate(TemplateId::grading, {{"question", "q"}, {"context", "c"}}, GenParams::judge()) == "4");
    CHECK(gw.retries() == 2);
    CHECK(gw.calls() == 3);
}

TEST_CASE("exhausted retries raise a transport error") {
    auto model = std::make_shared<ScriptedModel>();
    model->failures_before_success = 10;
    Gateway gw(model, test::no_wait_retry(2));
    CHECK_THROWS_AS(gw.generate(TemplateId::grading, {{"question", "q"}, {"context", "c"}}, GenParams::judge()),
                    TransportError);
    CHECK(gw.calls() == 3);
}

TEST_CASE("gateway passes the rendered prompt and parameters") {
    auto model = std::make_shared<ScriptedModel>();
    Gateway gw(model, test::no_wait_retry());
    GenParams p{0.0, 1.0, 16, 42};
    gw.generate(TemplateId::grading, {{"question", "QQ"}, {"context", "CC"}}, p);
    REQUIRE(model->seen.size() == 1);
    CHECK(model->seen[0].prompt.find("QQ") != std::string::npos);
    CHECK(model->seen[0].params.seed == 42);
    CHECK(model->seen[0].template_id == TemplateId::grading);
}

TEST_CASE("rating parse") {
    CHECK(parse_rating("5") == 5);
    CHECK(parse_rating("N/A \xE2\x80\x94 cannot determine") == 0);
    CHECK(parse_rating("Rating: 4 because the context is mostly complete") == 4);
    CHECK(parse_rating("") == 0);
    CHECK(parse_rating("9") == 0);
    CHECK(parse_rating("-3 then 2") == 2);
    CHECK(parse_rating("3.5") == 0);
    CHECK(parse_rating("abc3 x") == 0);
    CHECK(parse_rating("12 or 3") == 3);
}

TEST_CASE("rating parse is total and bounded") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> byte(0, 255), len(0, 40);
    for (int i = 0; i < 2000; ++i) {
        std::string s;
        for (int j = 0, n = len(rng); j < n; ++j) s.push_back(static_cast<char>(byte(rng)));
        int r = parse_rating(s);
        CHECK((r >= 0 && r <= 5));
    }
}

TEST_CASE("content keys are hex sha-256 and separate fields") {
    auto k = content_key("q", "c");
    CHECK(k.size() == 64);
    CHECK(k != content_key("qc", ""));
    // sha256 of the single separator byte 0x1f
    CHECK(content_key("", "") == "ffe679bb831c95b67dc17819c63c5090d221aac6f4c7bf530f594ab43d21fa1e");
}

TEST_CASE("fixture judge lookups") {
    TempDir dir;
    test::write_file(dir / "f.jsonl",
                     "{\"question\":\"q1\",\"context\":\"c1\",\"rating\":4}\n"
                     "{\"key\":\"" + content_key("q2", "c2") + "\",\"rating\":1}\n");
    auto fixture = load_judge_fixture(dir / "f.jsonl");
    FixtureJudge judge(fixture);
    CHECK(judge.rate("q1", "c1") == 4);
    CHECK(judge.rate("q1", "c1") == 4);
    CHECK(judge.rate("q2", "c2") == 1);
    CHECK(judge.rate("q3", "c3") == 0);
}

TEST_CASE("fixture judge falls back when given a fallback") {
    struct Constant final : Judge {
        int calls = 0;
        int rate(std::string_view, std::string_view) override { return ++calls, 2; }
    } fallback;
    FixtureJudge judge({{content_key("q", "c"), 5}}, &fallback);
    CHECK(judge.rate("q", "c") == 5);
    CHECK(judge.rate("other", "c") == 2);
    CHECK(fallback.calls == 1);
}

TEST_CASE("fixture rejects ratings outside 0..5") {
    TempDir dir;
    test::write_file(dir / "f.jsonl", "{\"question\":\"q\",\"context\":\"c\",\"rating\":7}\n");
    CHECK_THROWS_AS(load_judge_fixture(dir / "f.jsonl"), ParseError);
}

TEST_CASE("offline model is deterministic and grades by overlap") {
    auto model = std::make_shared<OfflineModel>();
    Gateway gw(model, test::no_wait_retry());
    GatewayJudge judge(gw);
    const std::string q = "What does the report say about the bridge toll revenue?";
    CHECK(judge.rate(q, "The bridge toll revenue doubled last year.") >= 3);
    CHECK(judge.rate(q, "Unrelated text about football.") < 3);
    CHECK(judge.rate(q, "The bridge toll revenue doubled.") == judge.rate(q, "The bridge toll revenue doubled."));
}

TEST_CASE("mock judge uses the fixture first") {
    auto judge = mock_judge({{content_key("q", "c"), 1}});
    CHECK(judge->rate("q", "c") == 1);
}

}  // TEST_SUITE

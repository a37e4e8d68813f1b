// crux: command-line front end for dataset construction, retrieval, and evaluation.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>

#include <CLI11.hpp>

#include "crux/annotation.hpp"
#include "crux/builder.hpp"
#include "crux/error.hpp"
#include "crux/harness.hpp"
#include "crux/llm.hpp"
#include "crux/report.hpp"
#include "crux/retrieval.hpp"

namespace {

using namespace crux;

struct ModelOptions {
    bool mock = false;
    std::string fixture;
    int max_in_flight = 8;
};

void add_model_options(CLI::App* cmd, ModelOptions& o) {
    cmd->add_flag("--mock", o.mock, "Use the deterministic offline model instead of an HTTP endpoint");
    cmd->add_option("--mock-fixture", o.fixture,
                    "Judge fixture (JSON lines); unknown pairs fall back to the offline judge. Implies --mock")
        ->check(CLI::ExistingFile);
    cmd->add_option("--max-in-flight", o.max_in_flight, "Concurrent model requests")->check(CLI::PositiveNumber);
}

// Owns the gateway and the judge stack for one command.
struct Models {
    std::unique_ptr<Gateway> gateway;
    std::unique_ptr<Judge> base;
    std::unique_ptr<Judge> judge;

    explicit Models(const ModelOptions& o) {
        std::shared_ptr<TextModel> model;
        if (o.mock || !o.fixture.empty())
            model = std::make_shared<OfflineModel>();
        else
            model = make_http_model(HttpModelConfig::from_env());
        gateway = std::make_unique<Gateway>(std::move(model), RetryPolicy{}, o.max_in_flight);
        base = std::make_unique<GatewayJudge>(*gateway);
        if (!o.fixture.empty())
            judge = std::make_unique<FixtureJudge>(load_judge_fixture(o.fixture), base.get());
    }

    Judge& active() { return judge ? *judge : *base; }
};

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << text;
}

std::unique_ptr<EmbeddingProvider> make_embedder(const std::string& url, std::size_t dim) {
    if (!url.empty()) return make_http_embedder(url, dim);
    return std::make_unique<HashingEmbedder>(dim);
}

Corpus corpus_of(const std::string& dataset_dir) { return load_corpus(std::filesystem::path(dataset_dir) / "corpus.jsonl"); }

AnnotationServer* g_server = nullptr;
extern "C" void handle_signal(int) {
    if (g_server) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"crux: controlled evaluation of retrieval-augmented contexts"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "crux 0.1.0");

    // build
    auto* build = app.add_subcommand("build", "Build topics, passages and rating matrices from examples");
    std::string build_input, build_out;
    BuildConfig build_cfg;
    ModelOptions build_models;
    build->add_option("--input", build_input, "Examples (JSON lines)")->required()->check(CLI::ExistingFile);
    build->add_option("--out-dir", build_out, "Output dataset directory")->required();
    build->add_option("--n-questions", build_cfg.n_questions, "Sub-questions per topic")->check(CLI::PositiveNumber);
    build->add_option("--eta", build_cfg.eta, "Answerability threshold")->check(CLI::Range(1, 5));
    build->add_option("--segment-tokens", build_cfg.max_segment_tokens, "Pre-split documents above this length")
        ->check(CLI::PositiveNumber);
    add_model_options(build, build_models);

    // index
    auto* index = app.add_subcommand("index", "Build the BM25 inverted index of a dataset corpus");
    std::string index_dataset, index_out;
    index->add_option("--dataset", index_dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    index->add_option("--out", index_out, "Index file (default DATASET/index.jsonl)");

    // search
    auto* search = app.add_subcommand("search", "Retrieve candidates for every topic query");
    std::string search_dataset, search_method = "bm25", search_out, search_index, search_embed_url, search_tag;
    std::size_t search_k = 100, search_dim = 256;
    search->add_option("--dataset", search_dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    search->add_option("--method", search_method, "bm25 or dense")->check(CLI::IsMember({"bm25", "dense"}));
    search->add_option("--k", search_k, "Candidates per topic")->check(CLI::PositiveNumber);
    search->add_option("--index", search_index, "Prebuilt index file")->check(CLI::ExistingFile);
    search->add_option("--embed-url", search_embed_url, "Embedding service base URL (dense)");
    search->add_option("--dim", search_dim, "Embedding dimension (dense)")->check(CLI::PositiveNumber);
    search->add_option("--tag", search_tag, "Run tag");
    search->add_option("--out", search_out, "Run file (default stdout)");

    // rerank
    auto* rerank = app.add_subcommand("rerank", "Re-rank a run with MMR or an external scorer");
    std::string rerank_dataset, rerank_run, rerank_method = "mmr", rerank_out, rerank_url, rerank_embed_url, rerank_tag;
    double rerank_lambda = 0.5;
    std::size_t rerank_k = 0, rerank_dim = 256;
    rerank->add_option("--dataset", rerank_dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    rerank->add_option("--run", rerank_run, "Input run file")->required()->check(CLI::ExistingFile);
    rerank->add_option("--method", rerank_method, "mmr or plugin")->check(CLI::IsMember({"mmr", "plugin"}));
    rerank->add_option("--lambda", rerank_lambda, "MMR trade-off")->check(CLI::Range(0.0, 1.0));
    rerank->add_option("--k", rerank_k, "Keep the top k (default: all)");
    rerank->add_option("--rerank-url", rerank_url, "Re-ranking service base URL (plugin; default term overlap)");
    rerank->add_option("--embed-url", rerank_embed_url, "Embedding service base URL (mmr)");
    rerank->add_option("--dim", rerank_dim, "Embedding dimension (mmr)")->check(CLI::PositiveNumber);
    rerank->add_option("--tag", rerank_tag, "Run tag");
    rerank->add_option("--out", rerank_out, "Run file (default stdout)");

    // assemble
    auto* assemble = app.add_subcommand("assemble", "Cut ranked runs into budgeted retrieval contexts");
    std::string asm_dataset, asm_run, asm_policy = "oracle", asm_budget = "oracle_tokens", asm_out;
    std::size_t asm_k = 10, asm_cap = kHardTokenCap;
    assemble->add_option("--dataset", asm_dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    assemble->add_option("--run", asm_run, "Run file")->required()->check(CLI::ExistingFile);
    assemble->add_option("--k-policy", asm_policy, "oracle or fixed")->check(CLI::IsMember({"oracle", "fixed"}));
    assemble->add_option("--k", asm_k, "Passages per context (fixed policy)")->check(CLI::PositiveNumber);
    assemble->add_option("--token-budget", asm_budget, "oracle_tokens or cap_only")
        ->check(CLI::IsMember({"oracle_tokens", "cap_only"}));
    assemble->add_option("--token-cap", asm_cap, "Hard token cap (at most 2500)")->check(CLI::PositiveNumber);
    assemble->add_option("--out", asm_out, "Contexts file (JSON lines)")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "Run a retrieval pipeline and score it");
    std::string eval_dataset, eval_config, eval_out, eval_generations, eval_run_out, eval_contexts_out;
    ModelOptions eval_models;
    eval->add_option("--dataset", eval_dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    eval->add_option("--config", eval_config, "Pipeline config (key = value)")->required()->check(CLI::ExistingFile);
    eval->add_option("--out", eval_out, "Report file (JSON lines)")->required();
    eval->add_option("--generations", eval_generations, "Write generated results here");
    eval->add_option("--run-out", eval_run_out, "Write the ranked run here");
    eval->add_option("--contexts-out", eval_contexts_out, "Write the assembled contexts here");
    add_model_options(eval, eval_models);

    // bounds
    auto* bounds = app.add_subcommand("bounds", "Score the reference bounds (direct prompting, oracle result, oracle retrieval)");
    std::string bounds_dataset, bounds_config, bounds_out, bounds_generations;
    ModelOptions bounds_models;
    bounds->add_option("--dataset", bounds_dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    bounds->add_option("--config", bounds_config, "Pipeline config (eta, alpha, w, generation)")->check(CLI::ExistingFile);
    bounds->add_option("--out", bounds_out, "Report file (JSON lines)")->required();
    bounds->add_option("--generations", bounds_generations, "Write generated results here");
    add_model_options(bounds, bounds_models);

    // correlate
    auto* correlate = app.add_subcommand("correlate", "Rank-correlate a target metric with the others across runs");
    std::vector<std::string> corr_reports;
    std::string corr_target = "cov_y", corr_out;
    correlate->add_option("--reports", corr_reports, "Report files")->required()->check(CLI::ExistingFile);
    correlate->add_option("--target", corr_target, "Target aggregate field");
    correlate->add_option("--out", corr_out, "Write the table as JSON here");

    // table
    auto* table = app.add_subcommand("table", "Render report files as a plain-text table");
    std::vector<std::string> table_reports;
    table->add_option("--reports", table_reports, "Report files")->required()->check(CLI::ExistingFile);

    // sample-contexts
    auto* sample = app.add_subcommand("sample-contexts", "Draw random contexts from the top of a run");
    std::string sample_dataset, sample_run, sample_out;
    std::size_t sample_n = 16, sample_size = 10, sample_pool = 50;
    std::uint64_t sample_seed = 7;
    sample->add_option("--dataset", sample_dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    sample->add_option("--run", sample_run, "Run file")->required()->check(CLI::ExistingFile);
    sample->add_option("--n", sample_n, "Contexts per topic");
    sample->add_option("--size", sample_size, "Passages per context")->check(CLI::PositiveNumber);
    sample->add_option("--pool", sample_pool, "Pool depth")->check(CLI::PositiveNumber);
    sample->add_option("--seed", sample_seed, "Random seed");
    sample->add_option("--out", sample_out, "Contexts file (JSON lines)")->required();

    // serve
    auto* serve = app.add_subcommand("serve", "Serve the annotation API");
    std::string serve_dataset, serve_annotators, serve_journal = "journal.jsonl", serve_host = "127.0.0.1";
    std::vector<std::string> serve_reports;
    int serve_port = 8080, serve_eta = 3;
    std::size_t serve_t2 = 2;
    std::uint64_t serve_seed = 7;
    serve->add_option("--dataset", serve_dataset, "Dataset directory")->required()->check(CLI::ExistingDirectory);
    serve->add_option("--reports", serve_reports, "Generation files from eval/bounds")->required()->check(CLI::ExistingFile);
    serve->add_option("--annotators", serve_annotators, "Annotator registry (JSON)")->required()->check(CLI::ExistingFile);
    serve->add_option("--journal", serve_journal, "Append-only judgment journal");
    serve->add_option("--host", serve_host, "Bind address");
    serve->add_option("--port", serve_port, "Port")->check(CLI::Range(0, 65535));
    serve->add_option("--eta", serve_eta, "Answerability threshold")->check(CLI::Range(1, 5));
    serve->add_option("--t2-per-topic", serve_t2, "Passage-rating tasks per topic");
    serve->add_option("--seed", serve_seed, "Seed for passage-rating task selection");

    CLI11_PARSE(app, argc, argv);

    try {
        if (build->parsed()) {
            Models models(build_models);
            build_cfg.parallelism = build_models.max_in_flight;
            auto examples = load_examples(build_input);
            auto result = build_dataset(examples, *models.gateway, models.active(), build_cfg);
            save_build(result, build_out);
            for (const auto& s : result.skipped)
                std::fprintf(stderr, "skipped %s: %s\n", s.example_id.c_str(), s.reason.c_str());
            std::fprintf(stderr, "built %zu topics, %zu passages (%zu skipped)\n", result.dataset.topics.size(),
                         result.dataset.corpus.size(), result.skipped.size());
        } else if (index->parsed()) {
            auto idx = InvertedIndex::build(corpus_of(index_dataset));
            auto out = index_out.empty() ? std::filesystem::path(index_dataset) / "index.jsonl" : std::filesystem::path(index_out);
            idx.save(out);
            std::fprintf(stderr, "indexed %zu passages, %zu terms\n", idx.num_docs(), idx.num_terms());
        } else if (search->parsed()) {
            auto ds = load_dataset(search_dataset);
            std::vector<RankedList> runs;
            if (search_method == "bm25") {
                auto idx = search_index.empty() ? InvertedIndex::build(ds.corpus) : InvertedIndex::load(search_index);
                for (const auto& t : ds.topics) runs.push_back(bm25_search(idx, t.query, search_k, {}, t.topic_id));
            } else {
                auto embedder = make_embedder(search_embed_url, search_dim);
                auto store = EmbeddingStore::build(*embedder, ds.corpus);
                for (const auto& t : ds.topics) runs.push_back(dense_search(*embedder, store, t.query, search_k, t.topic_id));
            }
            write_text(search_out, format_run(runs, search_tag.empty() ? search_method : search_tag));
        } else if (rerank->parsed()) {
            auto ds = load_dataset(rerank_dataset);
            std::map<std::string, const Topic*> topics;
            for (const auto& t : ds.topics) topics.emplace(t.topic_id, &t);
            auto runs = read_run(rerank_run);
            std::optional<EmbeddingStore> store;
            std::unique_ptr<RerankScorer> scorer;
            if (rerank_method == "mmr") {
                auto embedder = make_embedder(rerank_embed_url, rerank_dim);
                store = EmbeddingStore::build(*embedder, ds.corpus);
            } else if (!rerank_url.empty()) {
                scorer = make_http_reranker(rerank_url);
            } else {
                scorer = std::make_unique<TermOverlapScorer>();
            }
            for (auto& r : runs) {
                auto k = rerank_k == 0 ? r.candidates.size() : std::min(rerank_k, r.candidates.size());
                if (rerank_method == "mmr") {
                    r = mmr_rerank(r, *store, rerank_lambda, k);
                } else {
                    auto it = topics.find(r.topic_id);
                    if (it == topics.end()) throw ValidationError("run references unknown topic " + r.topic_id);
                    auto id = r.topic_id;
                    r = external_rerank(r, it->second->query, ds.corpus, *scorer);
                    r.topic_id = id;
                    r.candidates.resize(k);
                }
            }
            write_text(rerank_out, format_run(runs, rerank_tag.empty() ? rerank_method : rerank_tag));
        } else if (assemble->parsed()) {
            auto ds = load_dataset(asm_dataset);
            std::map<std::string, const Topic*> topics;
            for (const auto& t : ds.topics) topics.emplace(t.topic_id, &t);
            std::vector<RetrievalContext> contexts;
            for (const auto& r : read_run(asm_run)) {
                auto it = topics.find(r.topic_id);
                if (it == topics.end()) throw ValidationError("run references unknown topic " + r.topic_id);
                auto oracle = ds.oracle_context(*it->second);
                Budget budget;
                budget.hard_cap = std::min(asm_cap, kHardTokenCap);
                budget.max_passages = asm_policy == "oracle" ? oracle.entries.size() : asm_k;
                if (asm_budget == "oracle_tokens") budget.max_tokens = oracle.total_tokens;
                contexts.push_back(assemble_context(r, ds.corpus, budget));
            }
            save_contexts(contexts, asm_out);
        } else if (eval->parsed()) {
            auto ds = load_dataset(eval_dataset);
            auto cfg = PipelineConfig::load(eval_config);
            Models models(eval_models);
            JudgmentCache cache(models.active());

            std::optional<InvertedIndex> idx;
            std::unique_ptr<EmbeddingProvider> embedder;
            std::optional<EmbeddingStore> store;
            std::unique_ptr<RerankScorer> plugin;
            Resources res;
            if (cfg.method == "bm25") {
                idx = InvertedIndex::build(ds.corpus);
                res.index = &*idx;
            }
            if (cfg.method == "dense" || cfg.reranker == "mmr") {
                embedder = make_embedder(cfg.embed_url, cfg.embedding_dim);
                store = EmbeddingStore::build(*embedder, ds.corpus);
                res.embedder = embedder.get();
                res.store = &*store;
            }
            if (cfg.reranker == "plugin") {
                plugin = cfg.rerank_url.empty() ? std::unique_ptr<RerankScorer>(std::make_unique<TermOverlapScorer>())
                                                : make_http_reranker(cfg.rerank_url);
                res.plugin = plugin.get();
            }
            auto out = run_pipeline(ds, cfg, res, *models.gateway, cache);
            write_reports({out.report}, eval_out);
            if (!eval_generations.empty()) write_generations(out.generations, eval_generations);
            if (!eval_run_out.empty()) write_run(out.rankings, eval_run_out, cfg.run_id);
            if (!eval_contexts_out.empty()) save_contexts(out.contexts, eval_contexts_out);
            std::fprintf(stderr, "%s", render_table({out.report}).c_str());
            std::fprintf(stderr, "judge calls: %llu (cache entries %zu)\n",
                         static_cast<unsigned long long>(cache.judge_calls()), cache.size());
        } else if (bounds->parsed()) {
            auto ds = load_dataset(bounds_dataset);
            auto cfg = bounds_config.empty() ? PipelineConfig{} : PipelineConfig::load(bounds_config);
            Models models(bounds_models);
            JudgmentCache cache(models.active());
            std::vector<Generation> gens;
            auto reports = run_reference_bounds(ds, *models.gateway, cache, cfg, &gens);
            write_reports(reports, bounds_out);
            if (!bounds_generations.empty()) write_generations(gens, bounds_generations);
            std::fprintf(stderr, "%s", render_table(reports).c_str());
        } else if (correlate->parsed()) {
            std::vector<MetricReport> reports;
            for (const auto& f : corr_reports)
                for (auto& r : read_reports(f)) reports.push_back(std::move(r));
            auto t = correlate_runs(reports, corr_target);
            if (!corr_out.empty()) write_text(corr_out, serialize_correlation(t));
            std::cout << render_correlation(t);
        } else if (table->parsed()) {
            std::vector<MetricReport> reports;
            for (const auto& f : table_reports)
                for (auto& r : read_reports(f)) reports.push_back(std::move(r));
            std::cout << render_table(reports);
        } else if (sample->parsed()) {
            auto corpus = corpus_of(sample_dataset);
            auto contexts = sample_contexts(read_run(sample_run), corpus, sample_n, sample_size, sample_pool, sample_seed);
            save_contexts(contexts, sample_out);
        } else if (serve->parsed()) {
            auto ds = load_dataset(serve_dataset);
            std::vector<Generation> gens;
            for (const auto& f : serve_reports)
                for (auto& g : read_generations(f)) gens.push_back(std::move(g));
            AnnotationService service(make_task_bundle(ds, gens, serve_t2, 2, serve_seed),
                                      load_annotators(serve_annotators), std::filesystem::path(serve_journal),
                                      serve_eta);
            AnnotationServer server(service);
            g_server = &server;
            std::signal(SIGINT, handle_signal);
            std::signal(SIGTERM, handle_signal);
            std::fprintf(stderr, "serving on %s:%d\n", serve_host.c_str(), serve_port);
            server.listen(serve_host, serve_port);
            g_server = nullptr;
        }
    } catch (const UsageError& e) {
        std::fprintf(stderr, "crux: usage error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "crux: error: %s\n", e.what());
        return 1;
    }
    return 0;
}

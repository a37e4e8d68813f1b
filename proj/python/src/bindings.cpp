#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <unordered_set>

#include "crux/builder.hpp"
#include "crux/error.hpp"
#include "crux/llm.hpp"
#include "crux/metrics.hpp"
#include "crux/retrieval.hpp"

namespace py = pybind11;
using namespace crux;

namespace {

std::vector<std::pair<std::string, double>> pairs(const RankedList& list) {
    std::vector<std::pair<std::string, double>> out;
    for (const auto& c : list.candidates) out.emplace_back(c.passage_id, c.score);
    return out;
}

}  // namespace

PYBIND11_MODULE(_crux, m) {
    m.doc() = "Retrieval-context evaluation: coverage, alpha-nDCG, density, BM25 and rank statistics.";

    auto error = py::register_exception<Error>(m, "CruxError");
    py::register_exception<ParseError>(m, "ParseError", error.ptr());
    py::register_exception<ValidationError>(m, "ValidationError", error.ptr());
    py::register_exception<UsageError>(m, "UsageError", error.ptr());
    py::register_exception<UndefinedMetric>(m, "UndefinedMetric", error.ptr());

    m.def("answerability", &answerability, py::arg("grades"), py::arg("eta") = 3,
          "Per-question flags: max grade over passages reaches eta.");
    m.def("coverage", py::overload_cast<const std::vector<bool>&>(&coverage), py::arg("bits"));
    m.def("alpha_ndcg", &alpha_ndcg, py::arg("context"), py::arg("ideal_set"), py::arg("eta") = 3,
          py::arg("alpha") = 0.5);
    m.def("ideal_order", &ideal_order, py::arg("grades"), py::arg("eta") = 3, py::arg("alpha") = 0.5);
    m.def("density", &density, py::arg("cov_z"), py::arg("tokens_z"), py::arg("cov_star"), py::arg("tokens_star"),
          py::arg("w") = 0.5);
    m.def(
        "relevance_metrics",
        [](const std::vector<std::string>& ranked, const std::vector<std::string>& relevant, std::size_t k) {
            auto s = relevance_metrics(ranked, std::unordered_set<std::string>(relevant.begin(), relevant.end()), k);
            return py::dict(py::arg("recall") = s.recall, py::arg("map") = s.map, py::arg("ndcg") = s.ndcg);
        },
        py::arg("ranked_ids"), py::arg("relevant"), py::arg("k"));

    m.def("kendall_tau", [](const std::vector<double>& x, const std::vector<double>& y) { return kendall_tau(x, y); });
    m.def("spearman_rho", [](const std::vector<double>& x, const std::vector<double>& y) { return spearman_rho(x, y); });
    m.def("pearson_r", [](const std::vector<double>& x, const std::vector<double>& y) { return pearson_r(x, y); });
    m.def("fleiss_kappa", &fleiss_kappa, py::arg("labels"), py::arg("categories"));

    m.def(
        "required_subset",
        [](const std::vector<std::vector<int>>& ratings, int eta) {
            std::vector<std::string> ids;
            for (std::size_t j = 0; j < (ratings.empty() ? 0 : ratings.front().size()); ++j)
                ids.push_back("p" + std::to_string(j));
            RatingMatrix matrix("topic", ids, ratings);
            return build_required_subset(matrix, filter_questions(matrix, eta), eta);
        },
        py::arg("ratings"), py::arg("eta") = 3, "Greedy required subset as column indices in pick order.");

    m.def("parse_rating", [](const std::string& reply) { return parse_rating(reply); });
    m.def("content_key", [](const std::string& q, const std::string& c) { return content_key(q, c); });

    m.def(
        "bm25_search",
        [](const std::vector<std::pair<std::string, std::string>>& docs, const std::string& query, std::size_t k,
           double k1, double b, bool stopwords) {
            std::vector<Passage> passages;
            for (const auto& [id, text] : docs) passages.push_back({id, id, text, 0, {}});
            auto index = InvertedIndex::build(passages, stopwords ? Analyzer::english() : Analyzer::plain());
            return pairs(bm25_search(index, query, k, Bm25Params{k1, b}));
        },
        py::arg("docs"), py::arg("query"), py::arg("k") = 10, py::arg("k1") = 0.9, py::arg("b") = 0.4,
        py::arg("stopwords") = true, "Rank (id, text) pairs; returns (id, score) pairs.");

    py::class_<Dataset>(m, "Dataset")
        .def_static("load", &load_dataset, py::arg("directory"))
        .def_readonly("eta", &Dataset::eta)
        .def_property_readonly("topic_ids",
                               [](const Dataset& d) {
                                   std::vector<std::string> ids;
                                   for (const auto& t : d.topics) ids.push_back(t.topic_id);
                                   return ids;
                               })
        .def("passage_text", [](const Dataset& d, const std::string& id) { return d.corpus.at(id).text; })
        .def("ratings", [](const Dataset& d, const std::string& topic) { return d.matrix(topic).ratings(); })
        .def("oracle_context", [](const Dataset& d, const std::string& topic) {
            for (const auto& t : d.topics)
                if (t.topic_id == topic) return d.oracle_context(t).passage_ids();
            throw UsageError("unknown topic " + topic);
        });
}

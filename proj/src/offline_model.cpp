// Deterministic offline model. It imitates what the real prompts ask for
// closely enough to drive the whole pipeline without an endpoint:
//   query_gen    -> a report request built from the first summary sentence
//   question_gen -> one question per summary sentence
//   passage_gen  -> 1-3 contiguous sentence groups
//   grading      -> term-overlap rating between question and context
//   report_gen   -> leading sentences of every supplied passage

#include <algorithm>
#include <set>
#include <string>

#include "crux/analyzer.hpp"
#include "crux/error.hpp"
#include "crux/llm.hpp"
#include "crux/text.hpp"

namespace crux {
namespace {

const std::string kQuestionPrefix = "What does the report say about ";

std::string strip_terminal_punct(std::string s) {
    while (!s.empty() && (s.back() == '.' || s.back() == '!' || s.back() == '?')) s.pop_back();
    return s;
}

std::string lower_first(std::string s) {
    if (!s.empty() && s[0] >= 'A' && s[0] <= 'Z') s[0] = static_cast<char>(s[0] - 'A' + 'a');
    return s;
}

std::string query_reply(const Bindings& b) {
    auto sentences = split_sentences(b.at("report"));
    if (sentences.empty()) return "";
    auto focus = strip_terminal_punct(normalize_whitespace(sentences.front()));
    // Reply continues the primed "<r>" of the prompt.
    return "Please write a report covering the following: " + focus + ". Include the key facts, figures and "
           "reactions described in the sources.</r>";
}

std::string questions_reply(const Bindings& b) {
    std::size_t n = 0;
    try {
        n = std::stoul(b.at("n"));
    } catch (const std::exception&) {
        throw UsageError("question_gen requires a numeric {n}");
    }
    auto sentences = split_sentences(b.at("document"));
    std::string out;
    for (std::size_t i = 0; i < sentences.size() && i < n; ++i) {
        auto q = kQuestionPrefix + lower_first(strip_terminal_punct(normalize_whitespace(sentences[i]))) + "?";
        out += (i == 0 ? "" : "\n<q>") + q + "</q>";
    }
    return out;
}

std::string passages_reply(const Bindings& b) {
    auto sentences = split_sentences(b.at("document"));
    if (sentences.empty()) return "";
    std::size_t groups = sentences.size() <= 2 ? 1 : (sentences.size() <= 5 ? 2 : 3);
    std::string out;
    std::size_t begin = 0;
    for (std::size_t g = 0; g < groups; ++g) {
        std::size_t end = (g + 1) * sentences.size() / groups;
        std::string body;
        for (std::size_t i = begin; i < end; ++i) body += (i == begin ? "" : " ") + sentences[i];
        out += (g == 0 ? "" : "\n<p>") + body + "</p>";
        begin = end;
    }
    return out;
}

std::string grading_reply(const Bindings& b) {
    static const Analyzer analyzer = Analyzer::english();
    static const std::set<std::string> filler = {"what", "does", "report", "say", "about", "did", "how",
                                                 "which", "who", "when", "where", "why"};
    std::set<std::string> wanted;
    for (auto& t : analyzer.terms(b.at("question")))
        if (!filler.contains(t)) wanted.insert(t);
    if (wanted.empty()) return "0";
    auto ctx_terms = analyzer.terms(b.at("context"));
    std::set<std::string> have(ctx_terms.begin(), ctx_terms.end());
    std::size_t hit = std::count_if(wanted.begin(), wanted.end(), [&](const auto& t) { return have.contains(t); });
    double frac = static_cast<double>(hit) / static_cast<double>(wanted.size());
    int rating = frac >= 0.9 ? 5 : frac >= 0.75 ? 4 : frac >= 0.6 ? 3 : frac >= 0.45 ? 2 : frac >= 0.3 ? 1 : 0;
    return std::to_string(rating);
}

std::string report_reply(const Bindings& b) {
    auto blocks = split_paragraphs(b.at("context"));
    std::string out;
    for (const auto& block : blocks) {
        auto text = block;
        // Drop the "[n] " passage marker.
        if (!text.empty() && text[0] == '[') {
            auto close = text.find("] ");
            if (close != std::string::npos) text = text.substr(close + 2);
        }
        auto sentences = split_sentences(text);
        for (std::size_t i = 0; i < sentences.size() && i < 2; ++i) out += (out.empty() ? "" : " ") + sentences[i];
    }
    if (out.empty()) out = "This report responds to the request: " + normalize_whitespace(b.at("query"));
    return out;
}

}  // namespace

std::string OfflineModel::complete(const Request& request) {
    switch (request.template_id) {
    case TemplateId::query_gen: return query_reply(request.bindings);
    case TemplateId::question_gen: return questions_reply(request.bindings);
    case TemplateId::passage_gen: return passages_reply(request.bindings);
    case TemplateId::grading: return grading_reply(request.bindings);
    case TemplateId::report_gen: return report_reply(request.bindings);
    }
    throw UsageError("offline model: unknown template");
}

}  // namespace crux

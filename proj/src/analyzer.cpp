#include "crux/analyzer.hpp"

namespace crux {

Analyzer Analyzer::english() {
    // Same 33-word set as the classic Lucene English analyzer.
    return Analyzer({"a",    "an",   "and",   "are",  "as",   "at",    "be",   "but",  "by",
                     "for",  "if",   "in",    "into", "is",   "it",    "no",   "not",  "of",
                     "on",   "or",   "such",  "that", "the",  "their", "then", "there",
                     "these", "they", "this", "to",   "was",  "will",  "with"});
}

Analyzer Analyzer::plain() { return Analyzer({}); }

std::vector<std::string> Analyzer::terms(std::string_view text) const {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty() && !stopwords_.contains(cur)) out.push_back(cur);
        cur.clear();
    };
    for (char ch : text) {
        auto c = static_cast<unsigned char>(ch);
        if (c >= 0x80 || (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z')) {
            cur.push_back(static_cast<char>(c));
        } else if (c >= 'A' && c <= 'Z') {
            cur.push_back(static_cast<char>(c - 'A' + 'a'));
        } else {
            flush();
        }
    }
    flush();
    return out;
}

}  // namespace crux

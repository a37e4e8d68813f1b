#pragma once

#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

namespace crux {

/// Lowercases ASCII, splits on white space and ASCII punctuation, and drops
/// stopwords. Bytes >= 0x80 are kept as word characters.
class Analyzer {
  public:
    /// English stopword list shipped with the library.
    static Analyzer english();
    /// No stopword removal.
    static Analyzer plain();

    std::vector<std::string> terms(std::string_view text) const;
    bool is_stopword(std::string_view term) const { return stopwords_.contains(std::string(term)); }

  private:
    explicit Analyzer(std::unordered_set<std::string> stopwords) : stopwords_(std::move(stopwords)) {}
    std::unordered_set<std::string> stopwords_;
};

}  // namespace crux

#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace crux {

/// Token boundary inside the original text, in bytes.
struct TokenSpan {
    std::size_t begin;
    std::size_t end;
};

class Tokenizer {
  public:
    virtual ~Tokenizer() = default;

    virtual std::vector<TokenSpan> spans(std::string_view text) const = 0;

    std::vector<std::string> tokenize(std::string_view text) const;
    std::size_t count(std::string_view text) const { return spans(text).size(); }
    /// Prefix of `text` holding at most `max_tokens` tokens, cut right after the
    /// last kept token.
    std::string truncate(std::string_view text, std::size_t max_tokens) const;
};

/// Splits on Unicode white space (ASCII blanks, NBSP, U+2000..U+200A, U+3000, ...).
class WhitespaceTokenizer final : public Tokenizer {
  public:
    std::vector<TokenSpan> spans(std::string_view text) const override;
};

const Tokenizer& default_tokenizer();

}  // namespace crux

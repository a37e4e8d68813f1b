#include "crux/tokenizer.hpp"

#include <cstdint>

namespace crux {
namespace {

// Decodes one UTF-8 code point at `pos`; invalid bytes decode as themselves.
std::uint32_t decode(std::string_view s, std::size_t pos, std::size_t& len) {
    auto b0 = static_cast<unsigned char>(s[pos]);
    if (b0 < 0x80) {
        len = 1;
        return b0;
    }
    int extra = 0;
    std::uint32_t cp = 0;
    if ((b0 & 0xE0) == 0xC0) {
        extra = 1;
        cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
        extra = 2;
        cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
        extra = 3;
        cp = b0 & 0x07;
    } else {
        len = 1;
        return b0;
    }
    if (pos + extra >= s.size()) {
        len = 1;
        return b0;
    }
    for (int i = 1; i <= extra; ++i) {
        auto b = static_cast<unsigned char>(s[pos + i]);
        if ((b & 0xC0) != 0x80) {
            len = 1;
            return b0;
        }
        cp = (cp << 6) | (b & 0x3F);
    }
    len = static_cast<std::size_t>(extra) + 1;
    return cp;
}

bool is_unicode_space(std::uint32_t cp) {
    switch (cp) {
    case 0x09: case 0x0A: case 0x0B: case 0x0C: case 0x0D: case 0x20:
    case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
    case 0x202F: case 0x205F: case 0x3000:
        return true;
    default:
        return cp >= 0x2000 && cp <= 0x200A;
    }
}

}  // namespace

std::vector<std::string> Tokenizer::tokenize(std::string_view text) const {
    std::vector<std::string> out;
    for (auto [b, e] : spans(text)) out.emplace_back(text.substr(b, e - b));
    return out;
}

std::string Tokenizer::truncate(std::string_view text, std::size_t max_tokens) const {
    auto sp = spans(text);
    if (sp.size() <= max_tokens) return std::string(text);
    if (max_tokens == 0) return {};
    return std::string(text.substr(0, sp[max_tokens - 1].end));
}

std::vector<TokenSpan> WhitespaceTokenizer::spans(std::string_view text) const {
    std::vector<TokenSpan> out;
    std::size_t pos = 0;
    std::size_t start = 0;
    bool in_token = false;
    while (pos < text.size()) {
        std::size_t len = 1;
        auto cp = decode(text, pos, len);
        if (is_unicode_space(cp)) {
            if (in_token) out.push_back({start, pos});
            in_token = false;
        } else if (!in_token) {
            start = pos;
            in_token = true;
        }
        pos += len;
    }
    if (in_token) out.push_back({start, text.size()});
    return out;
}

const Tokenizer& default_tokenizer() {
    static const WhitespaceTokenizer tok;
    return tok;
}

}  // namespace crux

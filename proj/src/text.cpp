#include "crux/text.hpp"

#include <cctype>

namespace crux {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

std::string normalize_whitespace(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending = false;
    for (char c : s) {
        if (is_space(c)) {
            pending = !out.empty();
            continue;
        }
        if (pending) out.push_back(' ');
        pending = false;
        out.push_back(c);
    }
    return out;
}

std::vector<std::string> split_paragraphs(std::string_view text) {
    std::vector<std::string> out;
    std::string current;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        if (trim(line).empty()) {
            if (auto t = trim(current); !t.empty()) out.push_back(std::move(t));
            current.clear();
        } else {
            if (!current.empty()) current.push_back('\n');
            current.append(line);
        }
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    if (auto t = trim(current); !t.empty()) out.push_back(std::move(t));
    return out;
}

std::vector<std::string> split_sentences(std::string_view text) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c != '.' && c != '!' && c != '?') continue;
        std::size_t j = i + 1;
        while (j < text.size() && (text[j] == '"' || text[j] == '\'' || text[j] == ')')) ++j;
        if (j < text.size() && !is_space(text[j])) continue;
        if (auto s = trim(text.substr(start, j - start)); !s.empty()) out.push_back(std::move(s));
        start = j;
        i = j;
    }
    if (start < text.size())
        if (auto s = trim(text.substr(start)); !s.empty()) out.push_back(std::move(s));
    return out;
}

std::vector<std::string> extract_tagged(std::string_view reply, std::string_view tag) {
    const std::string open = "<" + std::string(tag) + ">";
    const std::string close = "</" + std::string(tag) + ">";
    std::vector<std::string> out;
    auto first_open = reply.find(open);
    auto first_close = reply.find(close);
    std::size_t pos = 0;
    if (first_close != std::string_view::npos && (first_open == std::string_view::npos || first_close < first_open)) {
        if (auto s = trim(reply.substr(0, first_close)); !s.empty()) out.push_back(std::move(s));
        pos = first_close + close.size();
    }
    while (true) {
        auto o = reply.find(open, pos);
        if (o == std::string_view::npos) break;
        auto c = reply.find(close, o + open.size());
        if (c == std::string_view::npos) break;
        if (auto s = trim(reply.substr(o + open.size(), c - o - open.size())); !s.empty())
            out.push_back(std::move(s));
        pos = c + close.size();
    }
    return out;
}

std::string extract_first_tagged(std::string_view reply, std::string_view tag) {
    const std::string open = "<" + std::string(tag) + ">";
    const std::string close = "</" + std::string(tag) + ">";
    auto o = reply.find(open);
    auto c = reply.find(close);
    if (c != std::string_view::npos && (o == std::string_view::npos || c < o)) return trim(reply.substr(0, c));
    if (o == std::string_view::npos) return {};
    auto body = reply.substr(o + open.size());
    auto end = body.find(close);
    return trim(end == std::string_view::npos ? body : body.substr(0, end));
}

}  // namespace crux

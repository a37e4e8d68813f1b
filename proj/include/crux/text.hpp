#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace crux {

std::string trim(std::string_view s);
/// Collapses runs of ASCII white space into one blank and trims the ends.
std::string normalize_whitespace(std::string_view s);

/// Blocks separated by one or more blank lines, trimmed, empties dropped.
std::vector<std::string> split_paragraphs(std::string_view text);
/// Sentence split on `.`, `!`, `?` followed by white space.
std::vector<std::string> split_sentences(std::string_view text);

/// All `<tag>...</tag>` spans in order, trimmed. When the reply opens with
/// a closing tag (the prompt ended with the opening tag), the leading text
/// counts as the first span.
std::vector<std::string> extract_tagged(std::string_view reply, std::string_view tag);

/// Text of the first span. An unclosed opening tag yields everything after it;
/// returns an empty string when the reply carries no tag at all.
std::string extract_first_tagged(std::string_view reply, std::string_view tag);

}  // namespace crux

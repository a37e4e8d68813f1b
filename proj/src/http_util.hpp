#pragma once

#include <chrono>
#include <string>

#include "jsonl.hpp"

namespace crux::detail {

/// `scheme://host[:port]` and the path prefix of a base URL.
struct UrlParts {
    std::string origin;
    std::string prefix;
};

UrlParts split_url(const std::string& url);

/// POSTs a JSON body and returns the parsed JSON reply. Connection failures,
/// 429 and 5xx raise a transient TransportError; other non-2xx codes raise a
/// permanent one.
json post_json(const std::string& base_url, const std::string& path, const json& body,
               const std::string& bearer, std::chrono::milliseconds timeout);

}  // namespace crux::detail

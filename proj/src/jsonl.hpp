#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include <json.hpp>

#include "crux/error.hpp"

namespace crux::detail {

using json = nlohmann::ordered_json;

/// Calls `fn(record, line_no)` for every non-blank line of a JSON-lines file.
inline void for_each_record(const std::filesystem::path& path,
                            const std::function<void(const json&, std::size_t)>& fn) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(path.filename().string() + ": malformed record: " + e.what(), line_no);
        }
        if (!record.is_object()) throw ParseError(path.filename().string() + ": record is not an object", line_no);
        try {
            fn(record, line_no);
        } catch (const json::exception& e) {
            throw ParseError(path.filename().string() + ": " + e.what(), line_no);
        }
    }
}

class JsonlWriter {
  public:
    explicit JsonlWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
        if (!out_) throw Error("cannot write " + path.string());
    }
    void write(const json& record) { out_ << record.dump() << '\n'; }

  private:
    std::ofstream out_;
};

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace crux::detail

#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <string>

#include <json.hpp>

#include "sieves/error.hpp"

namespace sieves {

using json = nlohmann::json;

// Invokes `fn(record, line_number)` for every non-blank line. Line numbers are
// 1-based. Malformed JSON raises ParseError with the line number.
inline void for_each_jsonl(std::istream& in,
                           const std::function<void(const json&, std::size_t)>& fn) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(lineno, "record", std::string("malformed JSON (") + e.what() + ")");
    }
    if (!record.is_object()) throw ParseError(lineno, "record", "expected a JSON object");
    fn(record, lineno);
  }
}

inline std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError(path.string(), "cannot open file");
  return in;
}

// Writes to a sibling temporary file and renames it into place, so readers
// never observe a half-written output.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out << content;
    if (!out) throw Error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// Field accessors used by every record decoder. `what` names the field in
// error messages.
namespace field {

inline const json& require(const json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) throw ParseError(line, key, "missing required field");
  return *it;
}

inline std::string string(const json& v, const std::string& what, std::size_t line) {
  if (!v.is_string()) throw ParseError(line, what, "expected a string");
  return v.get<std::string>();
}

inline double number(const json& v, const std::string& what, std::size_t line) {
  if (!v.is_number()) throw ParseError(line, what, "expected a number");
  return v.get<double>();
}

inline long long integer(const json& v, const std::string& what, std::size_t line) {
  if (!v.is_number_integer()) throw ParseError(line, what, "expected an integer");
  return v.get<long long>();
}

inline bool boolean(const json& v, const std::string& what, std::size_t line) {
  if (!v.is_boolean()) throw ParseError(line, what, "expected a boolean");
  return v.get<bool>();
}

}  // namespace field

}  // namespace sieves

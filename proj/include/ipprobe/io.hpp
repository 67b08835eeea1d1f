#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "ipprobe/error.hpp"
#include "ipprobe/rng.hpp"
#include "ipprobe/serialization.hpp"

namespace ipprobe::io {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw config_error("cannot write '" + path.string() + "'");
  out << contents;
}

// Calls `fn(json, line_number)` for every non-blank line. Parse and
// validation errors are rethrown with file:line context.
inline void for_each_jsonl(const std::filesystem::path& path,
                           const std::function<void(const Json&, std::size_t)>& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open '" + path.string() + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(Json::parse(line), line_no);
    } catch (const nlohmann::json::parse_error& e) {
      throw validation_error("ParseError", path.string() + ":" + std::to_string(line_no) +
                                               ": " + e.what());
    } catch (const Error& e) {
      throw Error(e.category(), e.code(),
                  path.string() + ":" + std::to_string(line_no) + ": " + e.message());
    }
  }
}

inline std::string to_jsonl_line(const Json& j) { return j.dump() + "\n"; }

inline std::string hash_hex(std::string_view bytes) {
  static constexpr char digits[] = "0123456789abcdef";
  std::uint64_t h = rng::fnv1a(bytes);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

inline std::string file_hash(const std::filesystem::path& path) {
  return "fnv1a64:" + hash_hex(read_file(path));
}

}  // namespace ipprobe::io

#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <string>
#include <unistd.h>
#include <vector>

#include <json.hpp>

#include "notegen/error.hpp"

namespace notegen::io {

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("error reading " + path.string());
  return ss.str();
}

// Writes to a sibling temp file and renames it over `path`, so readers see
// either the old content or the complete new content.
inline void atomic_write(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  const fs::path tmp = path.string() + ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) {
      std::error_code ignored;
      fs::remove(tmp, ignored);
      throw IoError("error writing " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    std::error_code ignored;
    fs::remove(tmp, ignored);
    throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

inline std::string to_jsonl(const std::vector<nlohmann::json>& rows) {
  std::string out;
  for (const auto& r : rows) {
    out += r.dump();
    out += '\n';
  }
  return out;
}

// Parses one JSON value per non-blank line. With `tolerate_torn_tail`, an
// unparseable final line (an interrupted append) is dropped instead of
// raising.
inline std::vector<nlohmann::json> parse_jsonl(const std::string& data, const std::string& origin,
                                               bool tolerate_torn_tail = false) {
  std::vector<nlohmann::json> rows;
  std::istringstream in(data);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      if (tolerate_torn_tail && in.peek() == std::char_traits<char>::eof()) break;
      throw IoError(origin + ":" + std::to_string(line_no) + ": invalid JSON line");
    }
    rows.push_back(std::move(j));
  }
  return rows;
}

inline std::vector<nlohmann::json> read_jsonl(const fs::path& path) {
  return parse_jsonl(read_file(path), path.string());
}

// Append-only line journal, flushed after every line. Safe for concurrent
// appends.
class Journal {
 public:
  explicit Journal(const fs::path& path) : path_(path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | std::ios::app);
    if (!out_) throw IoError("cannot open journal " + path.string());
  }

  void append(const nlohmann::json& row) {
    std::lock_guard lock(mu_);
    out_ << row.dump() << '\n';
    out_.flush();
    if (!out_) throw IoError("error appending to " + path_.string());
  }

 private:
  fs::path path_;
  std::ofstream out_;
  std::mutex mu_;
};

}  // namespace notegen::io

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "notegen/error.hpp"

namespace notegen::csv {

struct Record {
  std::size_t line = 0;  // 1-based physical line where the record starts
  std::vector<std::string> fields;
};

// RFC-4180 style reader: fields may be quoted with '"', quoted fields may
// contain the delimiter, newlines and doubled quotes. CRLF and LF line endings
// are both accepted. Lines that are completely empty are skipped.
//
// An unterminated quote raises IoError, since no sensible row boundary exists
// after it.
inline std::vector<Record> read(std::string_view data, char delimiter = ',') {
  std::vector<Record> records;
  Record current;
  std::string field;
  bool in_quotes = false;
  bool field_was_quoted = false;
  bool record_has_content = false;
  std::size_t line = 1;
  current.line = 1;

  auto end_field = [&] {
    current.fields.push_back(std::move(field));
    field.clear();
    field_was_quoted = false;
  };
  auto end_record = [&] {
    if (record_has_content || !current.fields.empty() || !field.empty() || field_was_quoted) {
      end_field();
      records.push_back(std::move(current));
    }
    current = Record{};
    field.clear();
    field_was_quoted = false;
    record_has_content = false;
  };

  for (std::size_t i = 0; i < data.size(); ++i) {
    const char ch = data[i];
    if (in_quotes) {
      if (ch == '"') {
        if (i + 1 < data.size() && data[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (ch == '\n') ++line;
        field.push_back(ch);
      }
      continue;
    }
    if (ch == '"' && field.empty() && !field_was_quoted) {
      in_quotes = true;
      field_was_quoted = true;
      record_has_content = true;
    } else if (ch == delimiter) {
      end_field();
      record_has_content = true;
    } else if (ch == '\n' || ch == '\r') {
      if (ch == '\r' && i + 1 < data.size() && data[i + 1] == '\n') ++i;
      end_record();
      ++line;
      current.line = line;
    } else {
      field.push_back(ch);
      record_has_content = true;
    }
  }
  if (in_quotes) {
    throw IoError("unterminated quoted field starting in record at line " +
                  std::to_string(current.line));
  }
  end_record();
  return records;
}

inline bool needs_quoting(std::string_view field, char delimiter) {
  if (field.empty()) return false;
  for (char ch : field) {
    if (ch == delimiter || ch == '"' || ch == '\n' || ch == '\r') return true;
  }
  return false;
}

inline void append_field(std::string& out, std::string_view field, char delimiter) {
  if (!needs_quoting(field, delimiter)) {
    out.append(field);
    return;
  }
  out.push_back('"');
  for (char ch : field) {
    if (ch == '"') out.push_back('"');
    out.push_back(ch);
  }
  out.push_back('"');
}

inline std::string write_record(const std::vector<std::string>& fields, char delimiter = ',') {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out.push_back(delimiter);
    append_field(out, fields[i], delimiter);
  }
  out.push_back('\n');
  return out;
}

}  // namespace notegen::csv

#pragma once

#include <algorithm>
#include <charconv>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "notegen/csv.hpp"
#include "notegen/error.hpp"
#include "notegen/text.hpp"
#include "notegen/timestamp.hpp"

namespace notegen {

struct ChartEvent {
  std::string subject_id;
  std::string hadm_id;
  Timestamp charttime;
  std::string item_label;
  std::string value_text;
  std::optional<double> value_num;
  std::optional<std::string> unit;

  friend bool operator==(const ChartEvent&, const ChartEvent&) = default;
};

struct ClinicalNote {
  std::string note_id;
  std::string subject_id;
  std::string hadm_id;
  Timestamp charttime;
  std::string category;
  std::string description;
  std::string text;

  friend bool operator==(const ClinicalNote&, const ClinicalNote&) = default;
};

enum class ParseMode { strict, lenient };

struct RowError {
  std::size_t row = 0;   // 1-based data row (header excluded)
  std::size_t line = 0;  // physical line where the row starts
  std::string reason;
};

template <class T>
struct ParseResult {
  std::vector<T> records;
  std::vector<RowError> errors;
  std::vector<std::string> warnings;
  std::size_t data_rows = 0;
};

enum class TableKind { chart_events, notes };

// Maps logical field names onto the column names of one input file.
struct SchemaMap {
  std::map<std::string, std::string> columns;
  std::string date_format = kDefaultDateFormat;
  char delimiter = ',';

  static const std::vector<std::string>& required_fields(TableKind kind) {
    static const std::vector<std::string> chart{"subject_id", "hadm_id", "charttime",
                                                "item_label", "value_text"};
    static const std::vector<std::string> notes{"note_id",  "subject_id",  "hadm_id", "charttime",
                                                "category", "description", "text"};
    return kind == TableKind::chart_events ? chart : notes;
  }

  static const std::vector<std::string>& optional_fields(TableKind kind) {
    static const std::vector<std::string> chart{"value_num", "unit"};
    static const std::vector<std::string> notes{};
    return kind == TableKind::chart_events ? chart : notes;
  }

  // Logical names mapped onto themselves.
  static SchemaMap identity(TableKind kind) {
    SchemaMap m;
    for (const auto& f : required_fields(kind)) m.columns[f] = f;
    for (const auto& f : optional_fields(kind)) m.columns[f] = f;
    return m;
  }

  // Column names of MIMIC-III CHARTEVENTS joined with D_ITEMS, and NOTEEVENTS.
  static SchemaMap mimic(TableKind kind) {
    SchemaMap m;
    if (kind == TableKind::chart_events) {
      m.columns = {{"subject_id", "SUBJECT_ID"}, {"hadm_id", "HADM_ID"},
                   {"charttime", "CHARTTIME"},   {"item_label", "LABEL"},
                   {"value_text", "VALUE"},      {"value_num", "VALUENUM"},
                   {"unit", "VALUEUOM"}};
    } else {
      m.columns = {{"note_id", "ROW_ID"},         {"subject_id", "SUBJECT_ID"},
                   {"hadm_id", "HADM_ID"},        {"charttime", "CHARTTIME"},
                   {"category", "CATEGORY"},      {"description", "DESCRIPTION"},
                   {"text", "TEXT"}};
    }
    return m;
  }

  void validate(TableKind kind) const {
    const auto& req = required_fields(kind);
    const auto& opt = optional_fields(kind);
    for (const auto& [logical, column] : columns) {
      const bool known = std::find(req.begin(), req.end(), logical) != req.end() ||
                         std::find(opt.begin(), opt.end(), logical) != opt.end();
      if (!known) throw ConfigError("unknown logical field in schema map: " + logical);
      if (text::trim(column).empty())
        throw ConfigError("schema map field '" + logical + "' has an empty column name");
    }
    for (const auto& f : req) {
      if (!columns.contains(f)) throw ConfigError("schema map does not map required field: " + f);
    }
    std::map<std::string, std::string> owner;
    for (const auto& [logical, column] : columns) {
      const auto [it, fresh] = owner.try_emplace(std::string(text::trim(column)), logical);
      if (!fresh)
        throw ConfigError("schema map sends both " + it->second + " and " + logical + " to column '" + column + "'");
    }
  }
};

namespace detail {

// Column index per mapped logical field, resolved against a header row.
// Optional fields whose column is absent are simply left unmapped.
inline std::map<std::string, std::size_t> resolve_columns(const std::vector<std::string>& header,
                                                          const SchemaMap& schema, TableKind kind) {
  const auto& opt = SchemaMap::optional_fields(kind);
  std::unordered_map<std::string, std::vector<std::size_t>> positions;
  for (std::size_t i = 0; i < header.size(); ++i) {
    std::string name(text::trim(header[i]));
    if (i == 0 && name.starts_with("\xEF\xBB\xBF")) name.erase(0, 3);
    positions[name].push_back(i);
  }
  std::map<std::string, std::size_t> out;
  for (const auto& [logical, column] : schema.columns) {
    const auto it = positions.find(std::string(text::trim(column)));
    if (it == positions.end() && std::find(opt.begin(), opt.end(), logical) != opt.end()) continue;
    if (it == positions.end())
      throw SchemaError("input header is missing mapped column '" + column + "' (for " + logical +
                        ")");
    if (it->second.size() > 1)
      throw SchemaError("input header has duplicate column '" + column + "'");
    out[logical] = it->second.front();
  }
  return out;
}

inline std::optional<double> parse_decimal(std::string_view s) {
  s = text::trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::string format_decimal(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// Thrown by row converters; caught by parse_table and turned into a RowError.
struct RowReject {
  std::string reason;
};

struct RowView {
  const std::vector<std::string>& fields;
  const std::map<std::string, std::size_t>& index;

  std::string_view get(const std::string& logical) const {
    const auto it = index.find(logical);
    if (it == index.end()) return {};
    return fields[it->second];
  }
  bool has(const std::string& logical) const { return index.contains(logical); }
};

// Drives header resolution, row splitting and strict/lenient error handling.
// `convert` returns the record or throws RowReject.
template <class T, class Convert>
ParseResult<T> parse_table(std::string_view source, const SchemaMap& schema, TableKind kind,
                           ParseMode mode, Convert convert) {
  schema.validate(kind);
  ParseResult<T> result;
  const auto rows = csv::read(source, schema.delimiter);
  if (rows.empty()) throw SchemaError("input has no header row");
  const auto index = resolve_columns(rows.front().fields, schema, kind);
  const std::size_t width = rows.front().fields.size();

  for (std::size_t r = 1; r < rows.size(); ++r) {
    const std::size_t row_no = r;
    ++result.data_rows;
    std::string reason;
    if (rows[r].fields.size() != width) {
      reason = "expected " + std::to_string(width) + " fields, found " +
               std::to_string(rows[r].fields.size());
    } else {
      try {
        result.records.push_back(convert(RowView{rows[r].fields, index}));
        continue;
      } catch (const RowReject& reject) {
        reason = reject.reason;
      }
    }
    if (mode == ParseMode::strict) throw RowParseError(row_no, reason);
    result.errors.push_back(RowError{row_no, rows[r].line, reason});
  }
  return result;
}

inline Timestamp require_time(std::string_view raw, const SchemaMap& schema) {
  const auto ts = parse_timestamp(raw, schema.date_format);
  if (!ts) throw RowReject{std::string("unparseable charttime '") + std::string(raw) + "'"};
  return *ts;
}

inline std::string require_nonempty(std::string_view raw, const char* field) {
  const auto v = text::trim(raw);
  if (v.empty()) throw RowReject{std::string("empty ") + field};
  return std::string(v);
}

}  // namespace detail

inline ParseResult<ChartEvent> parse_chart_events(std::string_view source, const SchemaMap& schema,
                                                  ParseMode mode = ParseMode::strict) {
  return detail::parse_table<ChartEvent>(
      source, schema, TableKind::chart_events, mode, [&](const detail::RowView& row) {
        ChartEvent ev;
        ev.subject_id = detail::require_nonempty(row.get("subject_id"), "subject_id");
        ev.hadm_id = detail::require_nonempty(row.get("hadm_id"), "hadm_id");
        ev.charttime = detail::require_time(row.get("charttime"), schema);
        ev.item_label = detail::require_nonempty(row.get("item_label"), "item_label");
        ev.value_text = std::string(row.get("value_text"));
        if (row.has("value_num")) {
          const auto raw = text::trim(row.get("value_num"));
          if (!raw.empty()) {
            ev.value_num = detail::parse_decimal(raw);
            if (!ev.value_num)
              throw detail::RowReject{std::string("unparseable value_num '") + std::string(raw) + "'"};
          }
        }
        if (row.has("unit")) {
          const auto u = text::trim(row.get("unit"));
          if (!u.empty()) ev.unit = std::string(u);
        }
        return ev;
      });
}

inline ParseResult<ClinicalNote> parse_notes(std::string_view source, const SchemaMap& schema,
                                             ParseMode mode = ParseMode::strict) {
  auto result = detail::parse_table<ClinicalNote>(
      source, schema, TableKind::notes, mode, [&](const detail::RowView& row) {
        ClinicalNote note;
        note.note_id = detail::require_nonempty(row.get("note_id"), "note_id");
        note.subject_id = detail::require_nonempty(row.get("subject_id"), "subject_id");
        note.hadm_id = detail::require_nonempty(row.get("hadm_id"), "hadm_id");
        note.charttime = detail::require_time(row.get("charttime"), schema);
        note.category = std::string(text::trim(row.get("category")));
        note.description = std::string(text::trim(row.get("description")));
        note.text = std::string(row.get("text"));
        if (text::trim(note.text).empty()) throw detail::RowReject{"empty text"};
        return note;
      });

  std::map<std::string, std::size_t> seen;
  for (const auto& note : result.records) ++seen[note.note_id];
  for (const auto& [id, count] : seen) {
    if (count > 1)
      result.warnings.push_back("duplicate note_id '" + id + "' appears " +
                                std::to_string(count) + " times; all kept");
  }
  return result;
}

// Writes records back out with the schema's column names, in logical field
// order. Parsing the output under the same schema yields the same records.
inline std::string serialize_chart_events(const std::vector<ChartEvent>& events,
                                          const SchemaMap& schema) {
  std::vector<std::string> order;
  for (const auto* list : {&SchemaMap::required_fields(TableKind::chart_events),
                           &SchemaMap::optional_fields(TableKind::chart_events)}) {
    for (const auto& f : *list)
      if (schema.columns.contains(f)) order.push_back(f);
  }
  std::vector<std::string> header;
  for (const auto& f : order) header.push_back(schema.columns.at(f));
  std::string out = csv::write_record(header, schema.delimiter);
  for (const auto& ev : events) {
    std::vector<std::string> row;
    for (const auto& f : order) {
      if (f == "subject_id") row.push_back(ev.subject_id);
      else if (f == "hadm_id") row.push_back(ev.hadm_id);
      else if (f == "charttime") row.push_back(ev.charttime.iso());
      else if (f == "item_label") row.push_back(ev.item_label);
      else if (f == "value_text") row.push_back(ev.value_text);
      else if (f == "value_num") row.push_back(ev.value_num ? detail::format_decimal(*ev.value_num) : "");
      else if (f == "unit") row.push_back(ev.unit.value_or(""));
    }
    out += csv::write_record(row, schema.delimiter);
  }
  return out;
}

inline std::string serialize_notes(const std::vector<ClinicalNote>& notes, const SchemaMap& schema) {
  const auto& order = SchemaMap::required_fields(TableKind::notes);
  std::vector<std::string> header;
  for (const auto& f : order) header.push_back(schema.columns.at(f));
  std::string out = csv::write_record(header, schema.delimiter);
  for (const auto& n : notes) {
    out += csv::write_record(
        {n.note_id, n.subject_id, n.hadm_id, n.charttime.iso(), n.category, n.description, n.text},
        schema.delimiter);
  }
  return out;
}

// Case-insensitive substring match of any pattern against
// "category description".
inline std::vector<ClinicalNote> filter_attending_progress_notes(
    const std::vector<ClinicalNote>& notes, const std::vector<std::string>& patterns) {
  if (patterns.empty()) throw ConfigError("attending note pattern list is empty");
  std::vector<std::string> lowered;
  for (const auto& p : patterns) lowered.push_back(text::lower(p));
  std::vector<ClinicalNote> out;
  for (const auto& note : notes) {
    const std::string haystack = text::lower(note.category + " " + note.description);
    const bool hit = std::any_of(lowered.begin(), lowered.end(), [&](const std::string& p) {
      return haystack.find(p) != std::string::npos;
    });
    if (hit) out.push_back(note);
  }
  return out;
}

}  // namespace notegen

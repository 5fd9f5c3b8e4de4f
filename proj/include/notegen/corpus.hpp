#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "notegen/error.hpp"
#include "notegen/ingest.hpp"
#include "notegen/text.hpp"

namespace notegen {

// Byte span of a note's Assessment & Plan section.
struct AAndPSection {
  std::string note_id;
  std::size_t span_start = 0;
  std::size_t span_end = 0;
  std::string text;

  friend bool operator==(const AAndPSection&, const AAndPSection&) = default;
};

struct AnnotationInstance {
  std::string instance_id;
  std::string subject_id;
  std::string hadm_id;
  ClinicalNote prior_note;
  AAndPSection prior_aandp;
  ClinicalNote next_note;
  AAndPSection next_aandp;
  std::vector<ChartEvent> interim_events;

  friend bool operator==(const AnnotationInstance&, const AnnotationInstance&) = default;
};

inline const std::vector<std::string>& default_aandp_headers() {
  static const std::vector<std::string> h{"assessment and plan", "a/p", "assessment:",
                                          "impression and plan"};
  return h;
}

// Headers that close an A&P section. These follow A&P in common inpatient
// progress note templates.
inline const std::vector<std::string>& default_section_terminators() {
  static const std::vector<std::string> h{
      "icu care",       "total time spent", "protected section", "physician attestation",
      "attending attestation", "signed electronically", "subjective", "objective",
      "physical exam",  "review of systems", "labs / radiology", "chief complaint"};
  return h;
}

struct SectionPatterns {
  std::vector<std::string> headers = default_aandp_headers();
  std::vector<std::string> terminators = default_section_terminators();
};

namespace detail {

struct Line {
  std::size_t begin;       // first byte of the line
  std::size_t text_begin;  // first non-blank byte
  std::size_t end;         // one past the last byte, excluding '\n'
};

inline std::vector<Line> split_lines(std::string_view s) {
  std::vector<Line> lines;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    std::size_t end = s.find('\n', pos);
    if (end == std::string_view::npos) end = s.size();
    std::size_t tb = pos;
    while (tb < end && (s[tb] == ' ' || s[tb] == '\t')) ++tb;
    lines.push_back(Line{pos, tb, end});
    if (end == s.size()) break;
    pos = end + 1;
  }
  return lines;
}

// Length of the longest pattern the line starts with, or 0.
inline std::size_t header_match(std::string_view line, const std::vector<std::string>& patterns) {
  std::size_t best = 0;
  for (const auto& p : patterns) {
    if (!p.empty() && p.size() > best && text::istarts_with(line, p)) best = p.size();
  }
  return best;
}

}  // namespace detail

// Locates the first line starting (case-insensitively, after indentation) with
// any header pattern, and returns the text after the header up to the next
// terminator header line or the end of the note, with surrounding whitespace
// excluded from the span. A header with nothing after it is skipped in favour
// of the next matching header.
inline std::optional<AAndPSection> extract_aandp(
    const ClinicalNote& note, const std::vector<std::string>& header_patterns,
    const std::vector<std::string>& terminators = default_section_terminators()) {
  const std::string_view body = note.text;
  const auto lines = detail::split_lines(body);
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const auto& line = lines[li];
    const auto line_text = body.substr(line.text_begin, line.end - line.text_begin);
    const std::size_t matched = detail::header_match(line_text, header_patterns);
    if (matched == 0) continue;

    std::size_t start = line.text_begin + matched;
    if (start < body.size() && body[start] == ':') ++start;
    std::size_t end = body.size();
    for (std::size_t lj = li + 1; lj < lines.size(); ++lj) {
      const auto& next = lines[lj];
      const auto next_text = body.substr(next.text_begin, next.end - next.text_begin);
      if (detail::header_match(next_text, terminators) > 0) {
        end = next.begin;
        break;
      }
    }
    while (start < end && text::is_space(body[start])) ++start;
    while (end > start && text::is_space(body[end - 1])) --end;
    if (start < end) {
      return AAndPSection{note.note_id, start, end, std::string(body.substr(start, end - start))};
    }
  }
  return std::nullopt;
}

inline std::optional<AAndPSection> extract_aandp(const ClinicalNote& note,
                                                 const SectionPatterns& patterns) {
  return extract_aandp(note, patterns.headers, patterns.terminators);
}

inline std::string make_instance_id(const ClinicalNote& prior, const ClinicalNote& next) {
  return prior.subject_id + "/" + prior.hadm_id + "/" + prior.note_id + ">" + next.note_id;
}

// Pairs consecutive eligible notes within each admission. A note is eligible
// when it has an A&P section. Interim events for a pair are those of the same
// admission charted in (prior.charttime, next.charttime]; pairs without any are
// dropped. Admissions are emitted in (subject_id, hadm_id) order, pairs in time
// order, interim events in time order with input order breaking ties.
inline std::vector<AnnotationInstance> build_instances(const std::vector<ClinicalNote>& notes,
                                                       const std::vector<ChartEvent>& events,
                                                       const SectionPatterns& patterns = {},
                                                       Diagnostics* diag = nullptr) {
  using AdmissionKey = std::pair<std::string, std::string>;
  struct Eligible {
    const ClinicalNote* note;
    AAndPSection aandp;
  };

  std::map<AdmissionKey, std::vector<Eligible>> by_admission;
  for (const auto& note : notes) {
    auto section = extract_aandp(note, patterns);
    if (!section) continue;
    by_admission[{note.subject_id, note.hadm_id}].push_back(Eligible{&note, std::move(*section)});
  }

  std::map<AdmissionKey, std::vector<const ChartEvent*>> events_by_admission;
  for (const auto& ev : events) events_by_admission[{ev.subject_id, ev.hadm_id}].push_back(&ev);
  for (auto& [key, list] : events_by_admission) {
    std::stable_sort(list.begin(), list.end(), [](const ChartEvent* a, const ChartEvent* b) {
      return a->charttime < b->charttime;
    });
  }

  std::vector<AnnotationInstance> out;
  for (auto& [key, eligible] : by_admission) {
    std::sort(eligible.begin(), eligible.end(), [](const Eligible& a, const Eligible& b) {
      if (a.note->charttime != b.note->charttime) return a.note->charttime < b.note->charttime;
      return a.note->note_id < b.note->note_id;
    });
    for (std::size_t i = 1; i < eligible.size(); ++i) {
      if (eligible[i].note->charttime == eligible[i - 1].note->charttime) {
        warn(diag, "notes " + eligible[i - 1].note->note_id + " and " + eligible[i].note->note_id +
                       " in admission " + key.second +
                       " share a charttime; ordered by note_id");
      }
    }
    if (eligible.size() < 2) continue;

    const auto ev_it = events_by_admission.find(key);
    static const std::vector<const ChartEvent*> kNone;
    const auto& adm_events = ev_it == events_by_admission.end() ? kNone : ev_it->second;

    for (std::size_t i = 0; i + 1 < eligible.size(); ++i) {
      const auto& prior = eligible[i];
      const auto& next = eligible[i + 1];
      const auto lo = std::upper_bound(
          adm_events.begin(), adm_events.end(), prior.note->charttime,
          [](const Timestamp& t, const ChartEvent* e) { return t < e->charttime; });
      const auto hi = std::upper_bound(
          adm_events.begin(), adm_events.end(), next.note->charttime,
          [](const Timestamp& t, const ChartEvent* e) { return t < e->charttime; });
      if (lo >= hi) continue;

      AnnotationInstance inst;
      inst.instance_id = make_instance_id(*prior.note, *next.note);
      inst.subject_id = key.first;
      inst.hadm_id = key.second;
      inst.prior_note = *prior.note;
      inst.prior_aandp = prior.aandp;
      inst.next_note = *next.note;
      inst.next_aandp = next.aandp;
      inst.interim_events.reserve(static_cast<std::size_t>(hi - lo));
      for (auto it = lo; it != hi; ++it) inst.interim_events.push_back(**it);
      out.push_back(std::move(inst));
    }
  }
  return out;
}

// Number of maximal whitespace-delimited tokens.
inline std::size_t word_count(std::string_view s) {
  std::size_t count = 0;
  bool in_word = false;
  for (char ch : s) {
    if (text::is_space(ch)) {
      in_word = false;
    } else if (!in_word) {
      in_word = true;
      ++count;
    }
  }
  return count;
}

enum class Deviation { population, sample };

struct Summary {
  std::size_t count = 0;
  double mean = 0;
  double median = 0;
  double sd = 0;
};

inline Summary summarize(std::vector<double> values, Deviation kind = Deviation::population) {
  Summary s;
  s.count = values.size();
  if (values.empty()) return s;
  double sum = 0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  s.median = values.size() % 2 == 1 ? values[mid] : (values[mid - 1] + values[mid]) / 2.0;
  double ss = 0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  const std::size_t denom = kind == Deviation::sample ? values.size() - 1 : values.size();
  s.sd = denom == 0 ? 0.0 : std::sqrt(ss / static_cast<double>(denom));
  return s;
}

struct DatasetStats {
  std::size_t patient_count = 0;
  std::size_t instance_count = 0;
  double mean_instances_per_patient = 0;
  double median_instances_per_patient = 0;
  Summary interim_rows;
  Summary prior_length;
  Summary next_length;
  // Next A&P length over instances where the next section is longer than the
  // prior one ("added") and the rest, ties included ("reduced").
  Summary next_length_added;
  Summary next_length_reduced;
  std::size_t added_count = 0;
  std::size_t reduced_count = 0;
};

inline DatasetStats compute_stats(const std::vector<AnnotationInstance>& instances,
                                  Deviation kind = Deviation::population) {
  DatasetStats st;
  st.instance_count = instances.size();
  if (instances.empty()) return st;

  std::map<std::string, std::size_t> per_patient;
  std::vector<double> rows, prior_len, next_len, added, reduced;
  for (const auto& inst : instances) {
    ++per_patient[inst.subject_id];
    rows.push_back(static_cast<double>(inst.interim_events.size()));
    const auto p = word_count(inst.prior_aandp.text);
    const auto n = word_count(inst.next_aandp.text);
    prior_len.push_back(static_cast<double>(p));
    next_len.push_back(static_cast<double>(n));
    (n > p ? added : reduced).push_back(static_cast<double>(n));
  }
  std::vector<double> counts;
  for (const auto& [id, c] : per_patient) counts.push_back(static_cast<double>(c));
  const Summary per = summarize(counts, kind);

  st.patient_count = per_patient.size();
  st.mean_instances_per_patient = per.mean;
  st.median_instances_per_patient = per.median;
  st.interim_rows = summarize(rows, kind);
  st.prior_length = summarize(prior_len, kind);
  st.next_length = summarize(next_len, kind);
  st.next_length_added = summarize(added, kind);
  st.next_length_reduced = summarize(reduced, kind);
  st.added_count = added.size();
  st.reduced_count = reduced.size();
  return st;
}

// Plain-text table with the row layout of the dataset statistics table.
inline std::string format_stats_table(const DatasetStats& st) {
  std::string out;
  char buf[160];
  auto row = [&](const char* label, const std::string& value) {
    std::snprintf(buf, sizeof buf, "%-42s %s\n", label, value.c_str());
    out += buf;
  };
  auto num = [](double v, int prec) {
    char b[32];
    std::snprintf(b, sizeof b, "%.*f", prec, v);
    return std::string(b);
  };
  auto triple = [&](const char* label, const Summary& s) {
    std::snprintf(buf, sizeof buf, "%-42s %10.1f %10.1f %10.1f\n", label, s.mean, s.median, s.sd);
    out += buf;
  };
  row("Item", "Count");
  row("Patients", std::to_string(st.patient_count));
  row("Annotation instances (note pairs)", std::to_string(st.instance_count));
  row("  Mean instances / patient", num(st.mean_instances_per_patient, 1));
  row("  Median instances / patient", num(st.median_instances_per_patient, 1));
  std::snprintf(buf, sizeof buf, "%-42s %10s %10s %10s\n", "", "Mean", "Median", "SD");
  out += buf;
  triple("Structured chart data (rows)", st.interim_rows);
  triple("Prior A&P length (words)", st.prior_length);
  triple("Next A&P length (words)", st.next_length);
  const std::string added = "  when text added (total: " + std::to_string(st.added_count) + ")";
  const std::string reduced =
      "  when text reduced (total: " + std::to_string(st.reduced_count) + ")";
  triple(added.c_str(), st.next_length_added);
  triple(reduced.c_str(), st.next_length_reduced);
  return out;
}

}  // namespace notegen

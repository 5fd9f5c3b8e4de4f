#pragma once

#include <algorithm>
#include <cstdio>
#include <limits>
#include <map>
#include <memory>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "notegen/error.hpp"
#include "notegen/ingest.hpp"
#include "notegen/text.hpp"
#include "notegen/timestamp.hpp"

namespace notegen {

inline constexpr std::size_t kDefaultChunkBudget = 1200;
inline constexpr std::size_t kDefaultContextSize = 2048;

struct ChartBlock {
  Timestamp time;
  std::vector<std::string> entries;

  friend bool operator==(const ChartBlock&, const ChartBlock&) = default;
};

// Events grouped by timestamp, each timestamp listed once.
struct CondensedChart {
  std::vector<ChartBlock> blocks;

  std::size_t entry_count() const {
    std::size_t n = 0;
    for (const auto& b : blocks) n += b.entries.size();
    return n;
  }
};

// Token count estimator. Implementations must return 0 for the empty string
// and be monotone under concatenation.
class Tokenizer {
 public:
  virtual ~Tokenizer() = default;
  virtual std::size_t estimate(std::string_view text) const = 0;
  virtual std::string name() const = 0;
};

// ceil(bytes / 4): the usual subword approximation for English text.
class ByteRatioTokenizer final : public Tokenizer {
 public:
  std::size_t estimate(std::string_view text) const override { return (text.size() + 3) / 4; }
  std::string name() const override { return "bytes4"; }
};

// Whitespace-delimited words.
class WordTokenizer final : public Tokenizer {
 public:
  std::size_t estimate(std::string_view s) const override {
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
  std::string name() const override { return "words"; }
};

inline std::unique_ptr<Tokenizer> make_tokenizer(const std::string& name) {
  if (name == "bytes4") return std::make_unique<ByteRatioTokenizer>();
  if (name == "words") return std::make_unique<WordTokenizer>();
  throw ConfigError("unknown tokenizer: " + name);
}

namespace detail {

inline std::string single_line(std::string_view s) {
  std::string out(text::trim(s));
  for (char& ch : out) {
    if (ch == '\n' || ch == '\r' || ch == '\t') ch = ' ';
  }
  return out;
}

inline std::string format_sig4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

}  // namespace detail

// "label: value unit", value_text preferred over value_num, unit omitted
// when absent. Embedded line breaks are flattened so an entry is one line.
inline std::string format_entry(const ChartEvent& ev) {
  std::string value = detail::single_line(ev.value_text);
  if (value.empty() && ev.value_num) value = detail::format_sig4(*ev.value_num);
  std::string out = detail::single_line(ev.item_label) + ":";
  if (!value.empty()) out += " " + value;
  if (ev.unit && !text::trim(*ev.unit).empty()) out += " " + detail::single_line(*ev.unit);
  return out;
}

inline CondensedChart condense(const std::vector<ChartEvent>& events) {
  std::vector<std::size_t> order(events.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ea = events[a];
    const auto& eb = events[b];
    if (ea.charttime != eb.charttime) return ea.charttime < eb.charttime;
    return ea.item_label < eb.item_label;
  });
  CondensedChart chart;
  for (std::size_t idx : order) {
    const auto& ev = events[idx];
    if (chart.blocks.empty() || chart.blocks.back().time != ev.charttime)
      chart.blocks.push_back(ChartBlock{ev.charttime, {}});
    chart.blocks.back().entries.push_back(format_entry(ev));
  }
  return chart;
}

inline std::vector<std::string> render_lines(const CondensedChart& chart) {
  std::vector<std::string> lines;
  for (const auto& block : chart.blocks) {
    lines.push_back("[" + block.time.minute_label() + "]");
    for (const auto& e : block.entries) lines.push_back("  " + e);
  }
  return lines;
}

// One "[YYYY-MM-DD HH:MM]" header per block, entries indented two spaces,
// every line newline-terminated.
inline std::string render(const CondensedChart& chart) {
  std::string out;
  for (const auto& line : render_lines(chart)) {
    out += line;
    out += '\n';
  }
  return out;
}

inline constexpr std::string_view kTruncationMarker = "\xE2\x80\xA6[truncated]";

struct ChunkPlan {
  std::vector<std::string> chunks;  // each a run of newline-terminated lines
  std::vector<std::size_t> estimates;
  std::size_t budget = 0;
  std::vector<std::string> warnings;
  std::size_t truncated_lines = 0;

  std::size_t size() const { return chunks.size(); }
};

namespace detail {

// Longest codepoint-aligned prefix of `line` such that prefix + marker + '\n'
// fits in `budget`.
inline std::string truncate_to_fit(const std::string& line, const Tokenizer& tok,
                                   std::size_t budget) {
  auto fits = [&](std::size_t n) {
    std::string candidate = line.substr(0, n);
    candidate += kTruncationMarker;
    candidate += '\n';
    return tok.estimate(candidate) <= budget;
  };
  if (!fits(0)) {
    throw PreconditionError("chunk budget " + std::to_string(budget) +
                            " cannot hold even the truncation marker");
  }
  std::size_t lo = 0, hi = line.size();
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo + 1) / 2;
    if (fits(mid)) lo = mid;
    else hi = mid - 1;
  }
  const std::size_t cut = text::utf8_floor(line, lo);
  return line.substr(0, cut) + std::string(kTruncationMarker);
}

}  // namespace detail

// Greedy in-order packing of atomic lines: a line joins the current chunk
// unless the chunk's estimate would exceed the budget, in which case a new
// chunk starts. A line that alone exceeds the budget is cut down and marked.
inline ChunkPlan plan_chunks(const std::vector<std::string>& lines, const Tokenizer& tok,
                             std::size_t budget) {
  if (budget == 0) throw PreconditionError("chunk budget must be positive");
  ChunkPlan plan;
  plan.budget = budget;
  std::string current;
  auto flush = [&] {
    if (current.empty()) return;
    plan.estimates.push_back(tok.estimate(current));
    plan.chunks.push_back(std::move(current));
    current.clear();
  };
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string line = lines[i] + "\n";
    if (tok.estimate(line) > budget) {
      const std::size_t before = tok.estimate(line);
      line = detail::truncate_to_fit(lines[i], tok, budget) + "\n";
      ++plan.truncated_lines;
      plan.warnings.push_back("line " + std::to_string(i + 1) + " estimated at " +
                              std::to_string(before) + " tokens exceeds budget " +
                              std::to_string(budget) + "; truncated");
    }
    if (!current.empty() && tok.estimate(current + line) > budget) flush();
    current += line;
  }
  flush();
  return plan;
}

}  // namespace notegen

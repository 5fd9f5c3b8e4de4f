#include <gtest/gtest.h>

#include <random>

#include "notegen/condense.hpp"
#include "test_support.hpp"

using namespace notegen;
using tsupport::event;
using tsupport::hours;

TEST(FormatEntry, ValueTextPreferredUnitOptional) {
  auto e = event("H1", hours(0), "Heart Rate", "92");
  e.value_num = 92;
  e.unit = "bpm";
  EXPECT_EQ(format_entry(e), "Heart Rate: 92 bpm");
  e.value_text.clear();
  e.value_num = 0.123456;
  EXPECT_EQ(format_entry(e), "Heart Rate: 0.1235 bpm");
  auto f = event("H1", hours(0), "Mental status", "alert\nand oriented");
  EXPECT_EQ(format_entry(f), "Mental status: alert and oriented");
}

TEST(Condense, GroupsByTimestampInOrder) {
  std::vector<ChartEvent> ev{event("H1", hours(2), "Temp", "37"), event("H1", hours(1), "HR", "80"),
                             event("H1", hours(2), "HR", "85")};
  const auto c = condense(ev);
  ASSERT_EQ(c.blocks.size(), 2u);
  EXPECT_EQ(c.blocks[0].entries, std::vector<std::string>{"HR: 80"});
  EXPECT_EQ(c.blocks[1].entries, (std::vector<std::string>{"HR: 85", "Temp: 37"}));
  EXPECT_EQ(render(c), "[2150-01-01 01:00]\n  HR: 80\n[2150-01-01 02:00]\n  HR: 85\n  Temp: 37\n");
  EXPECT_EQ(c.entry_count(), 3u);
}

TEST(Condense, EmptyInput) {
  EXPECT_TRUE(condense({}).blocks.empty());
  EXPECT_EQ(render(condense({})), "");
}

TEST(Condense, SecondsKeepBlocksDistinct) {
  std::vector<ChartEvent> ev{event("H1", Timestamp{hours(1).seconds + 5}, "HR", "1"),
                             event("H1", hours(1), "HR", "2")};
  const auto lines = render_lines(condense(ev));
  ASSERT_EQ(lines.size(), 4u);
  EXPECT_NE(lines[0], lines[2]);
}

TEST(Tokenizers, Estimates) {
  ByteRatioTokenizer b;
  EXPECT_EQ(b.estimate(""), 0u);
  EXPECT_EQ(b.estimate("abcd"), 1u);
  EXPECT_EQ(b.estimate("abcde"), 2u);
  WordTokenizer w;
  EXPECT_EQ(w.estimate(" a b  c "), 3u);
  EXPECT_EQ(make_tokenizer("words")->name(), "words");
  EXPECT_THROW(make_tokenizer("gpt"), ConfigError);
}

TEST(PlanChunks, SingleChunkWhenEverythingFits) {
  ByteRatioTokenizer tok;
  const std::vector<std::string> lines{"[t]", "  a: 1", "  b: 2"};
  const auto plan = plan_chunks(lines, tok, 1200);
  ASSERT_EQ(plan.size(), 1u);
  EXPECT_EQ(plan.chunks[0], "[t]\n  a: 1\n  b: 2\n");
}

TEST(PlanChunks, EmptyInputGivesNoChunks) {
  ByteRatioTokenizer tok;
  EXPECT_EQ(plan_chunks({}, tok, 10).size(), 0u);
  EXPECT_THROW(plan_chunks({"x"}, tok, 0), PreconditionError);
}

TEST(PlanChunks, OverlongLineIsTruncatedUtf8Safe) {
  ByteRatioTokenizer tok;
  std::string big;
  for (int i = 0; i < 200; ++i) big += "\xC3\xA9";  // é
  const auto plan = plan_chunks({"short", big, "tail"}, tok, 20);
  EXPECT_EQ(plan.truncated_lines, 1u);
  ASSERT_FALSE(plan.warnings.empty());
  for (std::size_t i = 0; i < plan.size(); ++i) EXPECT_LE(plan.estimates[i], 20u);
  bool found = false;
  for (const auto& c : plan.chunks) {
    const auto at = c.find(kTruncationMarker);
    if (at == std::string::npos) continue;
    found = true;
    // Prefix before the marker must end on a whole two-byte codepoint.
    const auto start = c.rfind('\n', at) == std::string::npos ? 0 : c.rfind('\n', at) + 1;
    EXPECT_EQ((at - start) % 2, 0u);
  }
  EXPECT_TRUE(found);
}

TEST(PlanChunks, LawsOnRandomRenderings) {
  std::mt19937 rng(11);
  ByteRatioTokenizer tok;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ChartEvent> ev;
    std::uniform_int_distribution<int> n(1, 300), h(0, 48), len(1, 30);
    const int count = n(rng);
    for (int i = 0; i < count; ++i)
      ev.push_back(event("H1", hours(h(rng)), "L" + std::to_string(i % 17), std::string(len(rng), 'v')));
    const auto lines = render_lines(condense(ev));
    const std::string rendered = render(condense(ev));
    for (std::size_t budget : {std::size_t{40}, std::size_t{200}, std::size_t{1200}}) {
      const auto plan = plan_chunks(lines, tok, budget);
      std::string joined;
      for (std::size_t i = 0; i < plan.size(); ++i) {
        EXPECT_LE(plan.estimates[i], budget);
        EXPECT_EQ(plan.estimates[i], tok.estimate(plan.chunks[i]));
        joined += plan.chunks[i];
      }
      EXPECT_EQ(joined, rendered);
      if (budget >= tok.estimate(rendered)) {
        EXPECT_EQ(plan.size(), 1u);
      }
    }
  }
}

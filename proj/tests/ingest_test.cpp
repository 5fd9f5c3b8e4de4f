#include <gtest/gtest.h>

#include "notegen/csv.hpp"
#include "notegen/ingest.hpp"
#include "notegen/io.hpp"
#include "test_support.hpp"

using namespace notegen;

namespace {

const std::string kEvents =
    "subject_id,hadm_id,charttime,item_label,value_text,value_num,unit\n"
    "P1,H1,2150-01-01 08:00:00,Heart Rate,92,92,bpm\n"
    "P1,H1,2150-01-01 08:00:00,Mental status,alert,,\n";

}  // namespace

TEST(Timestamp, ParsesDefaultFormatAndVariants) {
  const auto t = parse_timestamp("2150-03-01 09:05:07");
  ASSERT_TRUE(t);
  EXPECT_EQ(t->iso(), "2150-03-01 09:05:07");
  EXPECT_EQ(parse_timestamp("2150-03-01T09:05:07.250Z"), t);
  EXPECT_EQ(parse_timestamp("2150-03-01 09:05:00")->minute_label(), "2150-03-01 09:05");
  EXPECT_EQ(t->minute_label(), "2150-03-01 09:05:07");
  EXPECT_EQ(parse_timestamp("01/03/2150 09:05", "%d/%m/%Y %H:%M")->iso(), "2150-03-01 09:05:00");
}

TEST(Timestamp, RejectsGarbageAndImpossibleDates) {
  EXPECT_FALSE(parse_timestamp("not-a-time"));
  EXPECT_FALSE(parse_timestamp("2150-02-30 00:00:00"));
  EXPECT_FALSE(parse_timestamp(""));
}

TEST(Timestamp, CivilRoundTrip) {
  for (std::int64_t s : {std::int64_t{0}, std::int64_t{-86401}, std::int64_t{5'000'000'000}}) {
    Timestamp t{s};
    EXPECT_EQ(parse_timestamp(t.iso()), t) << s;
  }
}

TEST(Csv, QuotedMultilineFieldsAndCrlf) {
  const auto rows = csv::read("a,b\r\n\"x, \"\"y\"\"\nz\",2\r\n\r\n3,4", ',');
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1].fields[0], "x, \"y\"\nz");
  EXPECT_EQ(rows[1].line, 2u);
  EXPECT_EQ(rows[2].fields[1], "4");
  EXPECT_EQ(rows[2].line, 5u);
}

TEST(Csv, UnterminatedQuoteIsIoError) { EXPECT_THROW(csv::read("a\n\"open", ','), IoError); }

TEST(Csv, WriteQuotesOnlyWhenNeeded) {
  EXPECT_EQ(csv::write_record({"a", "b,c", "d\"e", "f\ng"}, ','), "a,\"b,c\",\"d\"\"e\",\"f\ng\"\n");
}

TEST(ParseChartEvents, TypicalRow) {
  auto r = parse_chart_events(kEvents, SchemaMap::identity(TableKind::chart_events));
  ASSERT_EQ(r.records.size(), 2u);
  const auto& e = r.records[0];
  EXPECT_EQ(e.item_label, "Heart Rate");
  EXPECT_EQ(e.value_text, "92");
  ASSERT_TRUE(e.value_num);
  EXPECT_DOUBLE_EQ(*e.value_num, 92.0);
  EXPECT_EQ(e.unit, std::optional<std::string>("bpm"));
  EXPECT_FALSE(r.records[1].value_num);
  EXPECT_FALSE(r.records[1].unit);
}

TEST(ParseChartEvents, MissingRequiredColumnIsSchemaError) {
  EXPECT_THROW(parse_chart_events("subject_id,hadm_id,charttime\nP1,H1,2150-01-01 00:00:00\n",
                                  SchemaMap::identity(TableKind::chart_events)),
               SchemaError);
}

TEST(ParseChartEvents, OptionalColumnsMayBeAbsent) {
  auto r = parse_chart_events("subject_id,hadm_id,charttime,item_label,value_text\nP1,H1,2150-01-01 00:00:00,HR,80\n",
                              SchemaMap::identity(TableKind::chart_events));
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_FALSE(r.records[0].value_num);
}

TEST(ParseChartEvents, StrictModeRaisesWithRowNumber) {
  const std::string bad = kEvents + "P1,H1,yesterday,HR,1,1,bpm\n";
  try {
    parse_chart_events(bad, SchemaMap::identity(TableKind::chart_events), ParseMode::strict);
    FAIL() << "no exception";
  } catch (const RowParseError& e) {
    EXPECT_EQ(e.row(), 3u);
  }
}

TEST(ParseChartEvents, LenientModeCollectsErrors) {
  const std::string bad = kEvents + "P1,H1,yesterday,HR,1,1,bpm\nP1,H1,2150-01-01 09:00:00,,1,1,bpm\nP1,H1\n";
  auto r = parse_chart_events(bad, SchemaMap::identity(TableKind::chart_events), ParseMode::lenient);
  EXPECT_EQ(r.records.size(), 2u);
  ASSERT_EQ(r.errors.size(), 3u);
  EXPECT_EQ(r.errors[0].row, 3u);
  EXPECT_EQ(r.errors[2].row, 5u);
  EXPECT_EQ(r.data_rows, 5u);
}

TEST(ParseChartEvents, UnparseableNumberIsRowError) {
  auto r = parse_chart_events("subject_id,hadm_id,charttime,item_label,value_text,value_num\n"
                              "P1,H1,2150-01-01 00:00:00,HR,x,abc\n",
                              SchemaMap::identity(TableKind::chart_events), ParseMode::lenient);
  EXPECT_TRUE(r.records.empty());
  ASSERT_EQ(r.errors.size(), 1u);
}

TEST(ParseChartEvents, MimicPresetAndBom) {
  const std::string src =
      "\xEF\xBB\xBFSUBJECT_ID,HADM_ID,CHARTTIME,LABEL,VALUE,VALUENUM,VALUEUOM\n"
      "7,8,2150-01-01 08:00:00,Heart Rate,92,92,bpm\n";
  auto r = parse_chart_events(src, SchemaMap::mimic(TableKind::chart_events));
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].subject_id, "7");
}

TEST(ParseChartEvents, SerializeRoundTrip) {
  const auto schema = SchemaMap::identity(TableKind::chart_events);
  auto r = parse_chart_events(kEvents + "P2,H9,2150-01-02 00:00:00,\"Note, with comma\",\"multi\nline\",0.1,\n",
                              schema);
  ASSERT_EQ(r.records.size(), 3u);
  auto again = parse_chart_events(serialize_chart_events(r.records, schema), schema);
  EXPECT_EQ(again.records, r.records);
}

TEST(ParseNotes, TextIsByteExactAndDuplicateIdsWarn) {
  const auto schema = SchemaMap::identity(TableKind::notes);
  const std::string src =
      "note_id,subject_id,hadm_id,charttime,category,description,text\n"
      "1,P1,H1,2150-01-01 08:00:00,Physician,Attending Progress,\"  line one\n\nline \"\"two\"\"  \"\n"
      "1,P1,H1,2150-01-02 08:00:00,Physician,Attending Progress,x\n";
  auto r = parse_notes(src, schema);
  ASSERT_EQ(r.records.size(), 2u);
  EXPECT_EQ(r.records[0].text, "  line one\n\nline \"two\"  ");
  EXPECT_FALSE(r.warnings.empty());
  EXPECT_EQ(parse_notes(serialize_notes(r.records, schema), schema).records, r.records);
}

TEST(ParseNotes, FixtureFileParsesLeniently) {
  auto r = parse_notes(io::read_file(tsupport::fixture("notes.csv")), SchemaMap::mimic(TableKind::notes),
                       ParseMode::lenient);
  EXPECT_EQ(r.records.size(), 96u);
  EXPECT_TRUE(r.errors.empty());
  auto ev = parse_chart_events(io::read_file(tsupport::fixture("chart_events.csv")),
                               SchemaMap::mimic(TableKind::chart_events), ParseMode::lenient);
  EXPECT_EQ(ev.errors.size(), 2u);
  EXPECT_EQ(ev.records.size() + ev.errors.size(), ev.data_rows);
}

TEST(SchemaMap, ValidateRejectsDuplicateColumns) {
  auto s = SchemaMap::identity(TableKind::notes);
  s.columns["text"] = "note_id";
  EXPECT_THROW(s.validate(TableKind::notes), ConfigError);
}

TEST(FilterAttending, SubstringCaseInsensitive) {
  using tsupport::hours;
  std::vector<ClinicalNote> notes{
      tsupport::note("1", "H1", hours(0), "x"),
      tsupport::note("2", "H1", hours(1), "x", "P1", "Physician Resident Progress Note"),
      tsupport::note("3", "H1", hours(2), "x", "P1", "ATTENDING PROGRESS NOTE - MICU"),
  };
  auto kept = filter_attending_progress_notes(notes, {"attending progress"});
  ASSERT_EQ(kept.size(), 2u);
  EXPECT_EQ(kept[0].note_id, "1");
  EXPECT_EQ(kept[1].note_id, "3");
  EXPECT_THROW(filter_attending_progress_notes(notes, {}), ConfigError);
}

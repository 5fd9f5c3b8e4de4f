#include <gtest/gtest.h>

#include <cstdlib>

#include "notegen/config.hpp"
#include "test_support.hpp"

using namespace notegen;

namespace {

RunConfig from_text(const std::string& ini, const std::vector<std::string>& overrides = {}) {
  auto doc = parse_ini(ini);
  apply_overrides(doc, overrides);
  return interpret_config(doc, "/base");
}

}  // namespace

TEST(Ini, ParsesSectionsCommentsAndRejectsDuplicates) {
  const auto doc = parse_ini("# c\n[a]\nx = 1\n; c\n[b]\ny=two words\n");
  EXPECT_EQ(doc.at("a").at("x"), "1");
  EXPECT_EQ(doc.at("b").at("y"), "two words");
  EXPECT_THROW(parse_ini("[a]\nx=1\nx=2\n"), ConfigError);
  EXPECT_THROW(parse_ini("x=1\n"), ConfigError);
  EXPECT_THROW(parse_ini("[a\n"), ConfigError);
  EXPECT_THROW(parse_ini("[a]\nnovalue\n"), ConfigError);
}

TEST(Config, Defaults) {
  const auto cfg = from_text("");
  EXPECT_EQ(cfg.pipeline.chunk_budget, kDefaultChunkBudget);
  EXPECT_EQ(cfg.context_size, kDefaultContextSize);
  EXPECT_EQ(cfg.pipeline.max_tokens_complaints, 128);
  EXPECT_EQ(cfg.pipeline.max_tokens_summary, 512);
  EXPECT_EQ(cfg.pipeline.max_tokens_note, 768);
  EXPECT_EQ(cfg.pipeline.temperature, 0.0);
  EXPECT_EQ(cfg.attending_patterns, std::vector<std::string>{"attending progress"});
  EXPECT_EQ(cfg.output_dir, fs::path("/base/out"));
  EXPECT_FALSE(cfg.concept_metric);
}

TEST(Config, UnknownSectionsAndKeysRejected) {
  EXPECT_THROW(from_text("[nope]\nx=1\n"), ConfigError);
  EXPECT_THROW(from_text("[llm]\nmodle=x\n"), ConfigError);
  EXPECT_THROW(from_text("[condense]\nchunk_budget=abc\n"), ConfigError);
  EXPECT_THROW(from_text("[condense]\nchunk_budget=10\n"), ConfigError);
  EXPECT_THROW(from_text("[condense]\nchunk_budget=4000\n"), ConfigError);
  EXPECT_THROW(from_text("[run]\nparallelism=0\n"), ConfigError);
  EXPECT_THROW(from_text("[llm]\nbackend=grpc\n"), ConfigError);
  EXPECT_THROW(from_text("[prompts]\nbogus.user=x\n"), ConfigError);
}

TEST(Config, SchemaPresetsAndOverrides) {
  const auto cfg = from_text("[inputs]\nnotes=n.csv\n[schema.notes]\npreset=mimic\ntext=NOTE_BODY\ndelimiter=tab\n");
  ASSERT_TRUE(cfg.notes);
  EXPECT_EQ(cfg.notes->path, fs::path("/base/n.csv"));
  EXPECT_EQ(cfg.notes->schema.columns.at("text"), "NOTE_BODY");
  EXPECT_EQ(cfg.notes->schema.columns.at("note_id"), "ROW_ID");
  EXPECT_EQ(cfg.notes->schema.delimiter, '\t');
}

TEST(Config, PromptOverridesUnescapeNewlines) {
  const auto cfg = from_text("[prompts]\ngenerate_note.user=Prior:\\n{prior_aandp}\\nSummary: {summary}\n");
  EXPECT_EQ(cfg.pipeline.templates.get(TemplateId::generate_note).user, "Prior:\n{prior_aandp}\nSummary: {summary}");
}

TEST(Config, HashIgnoresOperationalKeys) {
  const std::string base = "[llm]\nmodel=a\n[run]\nparallelism=1\n";
  const auto h = from_text(base).hash;
  EXPECT_EQ(from_text(base, {"run.parallelism=8", "llm.token=secret", "run.log_level=debug"}).hash, h);
  EXPECT_NE(from_text(base, {"llm.model=b"}).hash, h);
  EXPECT_NE(from_text(base, {"condense.chunk_budget=600"}).hash, h);
  EXPECT_THROW(from_text(base, {"noequals"}), ConfigError);
}

TEST(Config, EnvironmentOverridesBaseAndToken) {
  setenv("NOTEGEN_LLM_BASE", "http://10.0.0.1:9000", 1);
  setenv("NOTEGEN_LLM_TOKEN", "abc", 1);
  auto doc = parse_ini("[llm]\nbase=http://localhost:1\n");
  apply_environment(doc);
  const auto cfg = interpret_config(doc, ".");
  unsetenv("NOTEGEN_LLM_BASE");
  unsetenv("NOTEGEN_LLM_TOKEN");
  EXPECT_EQ(cfg.http.base, "http://10.0.0.1:9000");
  EXPECT_EQ(cfg.http.token, "abc");
}

TEST(Config, FixtureConfigLoads) {
  const auto cfg = load_config(tsupport::fixture("config.ini"));
  EXPECT_EQ(cfg.backend, "mock");
  ASSERT_TRUE(cfg.mock_script);
  EXPECT_TRUE(fs::exists(*cfg.mock_script));
  EXPECT_TRUE(cfg.concept_metric);
  EXPECT_EQ(cfg.parallelism, 2u);
  EXPECT_EQ(cfg.hash.size(), 16u);
}

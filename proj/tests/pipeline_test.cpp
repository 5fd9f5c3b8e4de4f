#include <gtest/gtest.h>

#include <random>

#include "notegen/pipeline.hpp"
#include "notegen/serialize.hpp"
#include "test_support.hpp"

using namespace notegen;
using tsupport::event;
using tsupport::hours;

namespace {

std::shared_ptr<MockChatBackend> script(const std::string& complaints = "septic shock; atrial fibrillation") {
  return std::make_shared<MockChatBackend>(MockChatBackend::from_json(nlohmann::json::parse(R"([
    {"template_id": "chief_complaints", "response": )" + nlohmann::json(complaints).dump() + R"(},
    {"template_id": "summarize_initial", "response": "S0-{digest}"},
    {"template_id": "summarize_refine", "response": "SR-{digest}"},
    {"template_id": "generate_note", "response": "Plan {digest}"}
  ])")));
}

AnnotationInstance instance_with(std::size_t n_events, std::mt19937& rng, const std::string& id = "i") {
  AnnotationInstance inst;
  inst.instance_id = id;
  inst.subject_id = "P1";
  inst.hadm_id = "H1";
  inst.prior_aandp.text = "Septic shock: on pressors.\nAFib: rate control.";
  inst.next_aandp.text = "Septic shock: improving.";
  std::uniform_int_distribution<int> h(1, 24), v(40, 160);
  for (std::size_t i = 0; i < n_events; ++i)
    inst.interim_events.push_back(event("H1", hours(h(rng)), "Label" + std::to_string(i % 23), std::to_string(v(rng))));
  return inst;
}

LlmClient client_for(std::shared_ptr<ChatBackend> backend) {
  return LlmClient(std::move(backend), std::make_shared<ByteRatioTokenizer>());
}

}  // namespace

TEST(ChiefComplaints, SplitRules) {
  EXPECT_EQ(split_complaints("septic shock; atrial fibrillation"),
            (std::vector<std::string>{"septic shock", "atrial fibrillation"}));
  EXPECT_TRUE(split_complaints("").empty());
  EXPECT_EQ(split_complaints("anemia\n"), std::vector<std::string>{"anemia"});
  EXPECT_EQ(split_complaints(" a ;; b\n\n c "), (std::vector<std::string>{"a", "b", "c"}));
}

TEST(ChiefComplaints, EmptyResponseWarnsAndPipelineContinues) {
  std::mt19937 rng(1);
  auto client = client_for(script(""));
  const auto rec = run_instance(instance_with(5, rng), PipelineConfig{}, client);
  ASSERT_TRUE(rec.ok) << rec.error;
  EXPECT_TRUE(rec.chief_complaints.empty());
  EXPECT_FALSE(rec.warnings.empty());
  EXPECT_NE(rec.calls[1].messages.back().content.find("none identified"), std::string::npos);
}

TEST(SummarizeChart, ZeroChunksIsPrecondition) {
  auto client = client_for(script());
  PipelineConfig cfg;
  CallSequence calls(client, cfg, "x");
  EXPECT_THROW(summarize_chart(ChunkPlan{}, {}, calls, cfg), PreconditionError);
}

TEST(RunInstance, CallCountLawAndRefineCarriesPreviousSummary) {
  std::mt19937 rng(3);
  PipelineConfig cfg;
  cfg.chunk_budget = 200;
  auto client = client_for(script());
  for (std::size_t n : {1, 5, 30, 120, 400}) {
    const auto rec = run_instance(instance_with(n, rng), cfg, client);
    ASSERT_TRUE(rec.ok) << rec.error;
    EXPECT_GE(rec.chunk_count, 1u);
    EXPECT_EQ(rec.llm_call_count, rec.chunk_count + 2);
    EXPECT_EQ(rec.intermediate_summaries.size(), rec.chunk_count);
    EXPECT_EQ(rec.final_summary, rec.intermediate_summaries.back());
    EXPECT_EQ(rec.calls.front().template_id, "chief_complaints");
    EXPECT_EQ(rec.calls.back().template_id, "generate_note");
    for (std::size_t i = 1; i < rec.chunk_count; ++i) {
      const auto& call = rec.calls[1 + i];
      EXPECT_EQ(call.template_id, "summarize_refine");
      EXPECT_NE(call.messages.back().content.find(rec.intermediate_summaries[i - 1]), std::string::npos);
    }
    EXPECT_NE(rec.calls.back().messages.back().content.find(rec.final_summary), std::string::npos);
  }
}

TEST(RunInstance, RequestIdsAreNumbered) {
  std::mt19937 rng(4);
  auto client = client_for(script());
  const auto rec = run_instance(instance_with(3, rng, "P1/H1/a>b"), PipelineConfig{}, client);
  ASSERT_EQ(rec.calls.size(), 3u);
  EXPECT_EQ(rec.calls[0].request_id, "P1/H1/a>b#1:chief_complaints");
  EXPECT_EQ(rec.calls[2].request_id, "P1/H1/a>b#3:generate_note");
}

TEST(RunInstance, ZeroEventsFailsAtSummarize) {
  std::mt19937 rng(5);
  auto client = client_for(script());
  const auto rec = run_instance(instance_with(0, rng), PipelineConfig{}, client);
  EXPECT_FALSE(rec.ok);
  EXPECT_EQ(rec.failed_stage, "summarize");
  EXPECT_EQ(rec.llm_call_count, 1u);
}

TEST(RunInstance, BackendFailureNamesStage) {
  std::mt19937 rng(6);
  auto mock = std::make_shared<MockChatBackend>(MockChatBackend::from_json(nlohmann::json::parse(R"([
    {"template_id": "chief_complaints", "response": "x"},
    {"template_id": "summarize_initial", "fail": "protocol"}
  ])")));
  auto client = client_for(mock);
  const auto rec = run_instance(instance_with(4, rng), PipelineConfig{}, client);
  EXPECT_FALSE(rec.ok);
  EXPECT_EQ(rec.failed_stage, "summarize");
  EXPECT_EQ(rec.calls.size(), 2u);
  EXPECT_TRUE(rec.calls[1].error);
}

TEST(RunInstance, MaxTokensLoweredToFitContext) {
  std::mt19937 rng(7);
  auto client = client_for(script());
  const auto rec = run_instance(instance_with(400, rng), PipelineConfig{}, client);
  ASSERT_TRUE(rec.ok) << rec.error;
  for (const auto& c : rec.calls) {
    std::size_t prompt = 0;
    for (const auto& m : c.messages) prompt += ByteRatioTokenizer{}.estimate(m.content);
    EXPECT_LE(prompt + static_cast<std::size_t>(c.max_tokens), kDefaultContextSize) << c.request_id;
  }
}

TEST(RunInstance, TemperatureAndModelPassedThrough) {
  std::mt19937 rng(8);
  PipelineConfig cfg;
  cfg.model = "llama";
  auto client = client_for(script());
  const auto rec = run_instance(instance_with(3, rng), cfg, client);
  for (const auto& c : rec.calls) {
    EXPECT_EQ(c.model, "llama");
    EXPECT_EQ(c.temperature, 0.0);
  }
  EXPECT_EQ(rec.calls[0].max_tokens, kMaxTokensComplaints);
  EXPECT_EQ(rec.calls[1].max_tokens, kMaxTokensSummary);
}

TEST(PriorBaseline, CopiesPrior) {
  std::mt19937 rng(9);
  const auto inst = instance_with(2, rng);
  const auto rec = baseline_record(inst);
  EXPECT_EQ(rec.predicted_aandp, inst.prior_aandp.text);
  EXPECT_EQ(rec.llm_call_count, 0u);
  EXPECT_EQ(rec.mode, "prior-baseline");
}

TEST(RunBatch, OrderAndDeterminismAcrossParallelism) {
  std::mt19937 rng(10);
  std::vector<AnnotationInstance> insts;
  for (int i = 0; i < 30; ++i) insts.push_back(instance_with(1 + i * 7, rng, "inst" + std::to_string(i)));
  PipelineConfig cfg;
  cfg.chunk_budget = 300;
  auto c1 = client_for(script());
  auto c8 = client_for(script());
  const auto a = run_batch(insts, cfg, c1, 1);
  std::size_t seen = 0;
  const auto b = run_batch(insts, cfg, c8, 8, [&](const GenerationRecord&) { ++seen; });
  EXPECT_EQ(seen, insts.size());
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].instance_id, insts[i].instance_id);
    EXPECT_EQ(record_to_json(a[i], false).dump(), record_to_json(b[i], false).dump());
  }
  EXPECT_EQ(c1.transcript().size(), c8.transcript().size());
  EXPECT_THROW(run_batch(insts, cfg, c1, 0), PreconditionError);
}

TEST(RunBatch, CallbackExceptionPropagates) {
  std::mt19937 rng(11);
  std::vector<AnnotationInstance> insts;
  for (int i = 0; i < 10; ++i) insts.push_back(instance_with(3, rng, std::to_string(i)));
  auto client = client_for(script());
  EXPECT_THROW(run_batch(insts, PipelineConfig{}, client, 4,
                         [](const GenerationRecord&) { throw IoError("disk full"); }),
               IoError);
}

TEST(Serialize, RecordRoundTrip) {
  std::mt19937 rng(12);
  auto client = client_for(script());
  const auto rec = run_instance(instance_with(6, rng), PipelineConfig{}, client);
  const auto j = record_to_json(rec);
  EXPECT_EQ(record_to_json(record_from_json(j)).dump(), j.dump());
  EXPECT_FALSE(record_to_json(rec, false).contains("wall_time_ms"));
}

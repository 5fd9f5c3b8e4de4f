#pragma once

#include <atomic>
#include <chrono>
#include <exception>
#include <functional>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "notegen/condense.hpp"
#include "notegen/corpus.hpp"
#include "notegen/error.hpp"
#include "notegen/llm.hpp"
#include "notegen/text.hpp"

namespace notegen {

struct PipelineConfig {
  std::string model = "local-model";
  std::size_t chunk_budget = kDefaultChunkBudget;
  int max_tokens_complaints = kMaxTokensComplaints;
  int max_tokens_summary = kMaxTokensSummary;
  int max_tokens_note = kMaxTokensNote;
  double temperature = 0.0;
  TemplateSet templates = TemplateSet::defaults();
  // When prompt + max_tokens would overflow the context, lower max_tokens to
  // what is left, provided at least this many tokens remain. Otherwise the
  // request is refused with a BudgetError.
  int min_completion_tokens = 64;
};

struct SummaryState {
  std::string summary_text;
  std::size_t chunks_consumed = 0;
  std::vector<std::string> intermediate_summaries;
};

struct GenerationRecord {
  std::string instance_id;
  std::string mode = "generate";
  bool ok = true;
  std::string failed_stage;
  std::string error;
  std::vector<std::string> chief_complaints;
  std::size_t chunk_count = 0;
  std::vector<std::string> intermediate_summaries;
  std::string final_summary;
  std::string predicted_aandp;
  std::size_t llm_call_count = 0;
  std::vector<CallLog> calls;
  std::vector<std::string> warnings;
  std::int64_t wall_time_ms = 0;
};

// Issues the calls of one instance, numbering request ids and keeping the
// instance's slice of the transcript.
class CallSequence {
 public:
  CallSequence(LlmClient& client, const PipelineConfig& config, std::string instance_id)
      : client_(client), config_(config), instance_id_(std::move(instance_id)) {}

  std::string call(TemplateId id, const std::map<std::string, std::string>& slots, int max_tokens) {
    LlmRequest req;
    req.model = config_.model;
    req.messages = render_prompt(id, slots, config_.templates);
    req.temperature = config_.temperature;
    req.template_id = to_string(id);
    req.request_id = instance_id_ + "#" + std::to_string(calls_.size() + 1) + ":" + req.template_id;
    req.max_tokens = fit_max_tokens(req, max_tokens);
    return client_.complete(req, &calls_).text;
  }

  const std::vector<CallLog>& calls() const { return calls_; }
  std::vector<CallLog> take_calls() { return std::move(calls_); }
  std::vector<std::string>& warnings() { return warnings_; }

 private:
  int fit_max_tokens(const LlmRequest& req, int desired) {
    const std::size_t context = client_.options().context_size;
    const std::size_t prompt = client_.prompt_estimate(req.messages);
    if (prompt + static_cast<std::size_t>(desired) <= context || prompt >= context) return desired;
    const auto left = static_cast<int>(context - prompt);
    if (left < config_.min_completion_tokens) return desired;
    warnings_.push_back(req.request_id + ": max_tokens lowered from " + std::to_string(desired) +
                        " to " + std::to_string(left) + " to fit the context");
    return left;
  }

  LlmClient& client_;
  const PipelineConfig& config_;
  std::string instance_id_;
  std::vector<CallLog> calls_;
  std::vector<std::string> warnings_;
};

// Splits the backend's answer on semicolons and newlines.
inline std::vector<std::string> split_complaints(const std::string& response) {
  std::vector<std::string> out;
  std::string current;
  auto push = [&] {
    const auto t = text::trim(current);
    if (!t.empty()) out.emplace_back(t);
    current.clear();
  };
  for (char ch : response) {
    if (ch == ';' || ch == '\n') push();
    else current.push_back(ch);
  }
  push();
  return out;
}

inline std::vector<std::string> extract_chief_complaints(const std::string& prior_aandp,
                                                         CallSequence& calls,
                                                         const PipelineConfig& config) {
  if (text::trim(prior_aandp).empty()) throw PreconditionError("prior A&P is empty");
  const std::string response = calls.call(TemplateId::chief_complaints,
                                          {{"prior_aandp", prior_aandp}},
                                          config.max_tokens_complaints);
  auto complaints = split_complaints(response);
  if (complaints.empty())
    calls.warnings().push_back("no chief complaints extracted; summarizing without guidance");
  return complaints;
}

inline std::string complaints_slot(const std::vector<std::string>& complaints) {
  return complaints.empty() ? std::string("none identified") : text::join(complaints, "; ");
}

// First chunk gets the initial-summary prompt; each later chunk refines the
// summary produced by the call before it.
inline SummaryState summarize_chart(const ChunkPlan& plan, const std::vector<std::string>& complaints,
                                    CallSequence& calls, const PipelineConfig& config) {
  if (plan.chunks.empty()) throw PreconditionError("cannot summarize zero chunks");
  SummaryState state;
  const std::string guidance = complaints_slot(complaints);
  for (std::size_t i = 0; i < plan.chunks.size(); ++i) {
    std::string summary;
    if (i == 0) {
      summary = calls.call(TemplateId::summarize_initial,
                           {{"complaints", guidance}, {"chunk", plan.chunks[i]}},
                           config.max_tokens_summary);
    } else {
      summary = calls.call(TemplateId::summarize_refine,
                           {{"complaints", guidance},
                            {"previous_summary", state.summary_text},
                            {"chunk", plan.chunks[i]}},
                           config.max_tokens_summary);
    }
    if (text::trim(summary).empty())
      throw PreconditionError("backend returned an empty summary for chunk " + std::to_string(i + 1));
    state.summary_text = summary;
    state.intermediate_summaries.push_back(std::move(summary));
    state.chunks_consumed = i + 1;
  }
  return state;
}

inline std::string generate_next_aandp(const std::string& prior_aandp, const std::string& summary,
                                       CallSequence& calls, const PipelineConfig& config) {
  if (text::trim(prior_aandp).empty()) throw PreconditionError("prior A&P is empty");
  if (text::trim(summary).empty()) throw PreconditionError("chart summary is empty");
  return calls.call(TemplateId::generate_note, {{"prior_aandp", prior_aandp}, {"summary", summary}},
                    config.max_tokens_note);
}

inline std::string prior_baseline(const AnnotationInstance& instance) { return instance.prior_aandp.text; }

inline GenerationRecord baseline_record(const AnnotationInstance& instance) {
  GenerationRecord rec;
  rec.instance_id = instance.instance_id;
  rec.mode = "prior-baseline";
  rec.predicted_aandp = prior_baseline(instance);
  return rec;
}

inline ChunkPlan plan_instance_chunks(const AnnotationInstance& instance, const Tokenizer& tok,
                                      std::size_t budget) {
  return plan_chunks(render_lines(condense(instance.interim_events)), tok, budget);
}

// condense -> plan_chunks -> chief complaints -> iterative summary -> next
// A&P. Never throws; a failing stage is reported in the record.
inline GenerationRecord run_instance(const AnnotationInstance& instance, const PipelineConfig& config,
                                     LlmClient& client) {
  const auto start = std::chrono::steady_clock::now();
  GenerationRecord rec;
  rec.instance_id = instance.instance_id;
  CallSequence calls(client, config, instance.instance_id);
  std::string stage = "condense";
  try {
    const auto lines = render_lines(condense(instance.interim_events));
    stage = "plan_chunks";
    const ChunkPlan plan = plan_chunks(lines, client.tokenizer(), config.chunk_budget);
    rec.chunk_count = plan.size();
    rec.warnings.insert(rec.warnings.end(), plan.warnings.begin(), plan.warnings.end());
    stage = "chief_complaints";
    rec.chief_complaints = extract_chief_complaints(instance.prior_aandp.text, calls, config);
    stage = "summarize";
    SummaryState state = summarize_chart(plan, rec.chief_complaints, calls, config);
    rec.intermediate_summaries = std::move(state.intermediate_summaries);
    rec.final_summary = state.summary_text;
    stage = "generate";
    rec.predicted_aandp = generate_next_aandp(instance.prior_aandp.text, rec.final_summary, calls, config);
  } catch (const std::exception& e) {
    rec.ok = false;
    rec.failed_stage = stage;
    rec.error = e.what();
  }
  rec.warnings.insert(rec.warnings.end(), calls.warnings().begin(), calls.warnings().end());
  rec.llm_call_count = calls.calls().size();
  rec.calls = calls.take_calls();
  rec.wall_time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::steady_clock::now() - start)
                         .count();
  return rec;
}

using RecordCallback = std::function<void(const GenerationRecord&)>;

// Runs instances on `parallelism` workers. Output order is input order.
// `on_done` is invoked once per finished record, serialized across workers.
inline std::vector<GenerationRecord> run_batch(const std::vector<AnnotationInstance>& instances,
                                               const PipelineConfig& config, LlmClient& client,
                                               std::size_t parallelism,
                                               const RecordCallback& on_done = {}) {
  if (parallelism < 1) throw PreconditionError("parallelism must be at least 1");
  std::vector<GenerationRecord> records(instances.size());
  std::atomic<std::size_t> next{0};
  std::mutex done_mu;
  std::exception_ptr callback_error;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= instances.size()) return;
      records[i] = run_instance(instances[i], config, client);
      if (on_done) {
        std::lock_guard lock(done_mu);
        if (callback_error) return;
        try {
          on_done(records[i]);
        } catch (...) {
          callback_error = std::current_exception();
          next.store(instances.size());
          return;
        }
      }
    }
  };
  const std::size_t workers = std::min(parallelism, std::max<std::size_t>(instances.size(), 1));
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
  }
  if (callback_error) std::rethrow_exception(callback_error);
  return records;
}

}  // namespace notegen

#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "notegen/corpus.hpp"
#include "notegen/error.hpp"
#include "notegen/eval.hpp"
#include "notegen/ingest.hpp"
#include "notegen/llm.hpp"
#include "notegen/pipeline.hpp"

// JSON forms of the persisted records. Timestamps are written as
// "YYYY-MM-DD HH:MM:SS".
namespace notegen {

using nlohmann::json;

namespace detail {

inline Timestamp json_time(const json& j, const char* key) {
  const auto raw = j.at(key).get<std::string>();
  const auto ts = parse_timestamp(raw);
  if (!ts) throw IoError(std::string("bad timestamp in field ") + key + ": " + raw);
  return *ts;
}

}  // namespace detail

inline void to_json(json& j, const ChartEvent& e) {
  j = json{{"subject_id", e.subject_id}, {"hadm_id", e.hadm_id}, {"charttime", e.charttime.iso()},
           {"item_label", e.item_label}, {"value_text", e.value_text}};
  j["value_num"] = e.value_num ? json(*e.value_num) : json(nullptr);
  j["unit"] = e.unit ? json(*e.unit) : json(nullptr);
}

inline void from_json(const json& j, ChartEvent& e) {
  e.subject_id = j.at("subject_id").get<std::string>();
  e.hadm_id = j.at("hadm_id").get<std::string>();
  e.charttime = detail::json_time(j, "charttime");
  e.item_label = j.at("item_label").get<std::string>();
  e.value_text = j.value("value_text", std::string());
  e.value_num.reset();
  e.unit.reset();
  if (j.contains("value_num") && !j["value_num"].is_null()) e.value_num = j["value_num"].get<double>();
  if (j.contains("unit") && !j["unit"].is_null()) e.unit = j["unit"].get<std::string>();
}

inline void to_json(json& j, const ClinicalNote& n) {
  j = json{{"note_id", n.note_id},         {"subject_id", n.subject_id},
           {"hadm_id", n.hadm_id},         {"charttime", n.charttime.iso()},
           {"category", n.category},       {"description", n.description},
           {"text", n.text}};
}

inline void from_json(const json& j, ClinicalNote& n) {
  n.note_id = j.at("note_id").get<std::string>();
  n.subject_id = j.at("subject_id").get<std::string>();
  n.hadm_id = j.at("hadm_id").get<std::string>();
  n.charttime = detail::json_time(j, "charttime");
  n.category = j.value("category", std::string());
  n.description = j.value("description", std::string());
  n.text = j.at("text").get<std::string>();
}

inline void to_json(json& j, const AAndPSection& s) {
  j = json{{"note_id", s.note_id}, {"span_start", s.span_start}, {"span_end", s.span_end}, {"text", s.text}};
}

inline void from_json(const json& j, AAndPSection& s) {
  s.note_id = j.at("note_id").get<std::string>();
  s.span_start = j.at("span_start").get<std::size_t>();
  s.span_end = j.at("span_end").get<std::size_t>();
  s.text = j.at("text").get<std::string>();
}

enum class EventStorage { inline_events, sidecar };

// One instance per line. With EventStorage::sidecar the events are left out
// and the line names the sidecar file that carries them.
inline json instance_to_json(const AnnotationInstance& inst, EventStorage storage,
                             const std::string& sidecar_name = {}) {
  json j{{"instance_id", inst.instance_id}, {"subject_id", inst.subject_id}, {"hadm_id", inst.hadm_id},
         {"prior_note", inst.prior_note},   {"prior_aandp", inst.prior_aandp}, {"next_note", inst.next_note},
         {"next_aandp", inst.next_aandp},   {"interim_event_count", inst.interim_events.size()}};
  if (storage == EventStorage::inline_events) j["interim_events"] = inst.interim_events;
  else j["interim_events_ref"] = sidecar_name;
  return j;
}

inline AnnotationInstance instance_from_json(const json& j) {
  AnnotationInstance inst;
  inst.instance_id = j.at("instance_id").get<std::string>();
  inst.subject_id = j.at("subject_id").get<std::string>();
  inst.hadm_id = j.at("hadm_id").get<std::string>();
  inst.prior_note = j.at("prior_note").get<ClinicalNote>();
  inst.prior_aandp = j.at("prior_aandp").get<AAndPSection>();
  inst.next_note = j.at("next_note").get<ClinicalNote>();
  inst.next_aandp = j.at("next_aandp").get<AAndPSection>();
  if (j.contains("interim_events")) inst.interim_events = j["interim_events"].get<std::vector<ChartEvent>>();
  return inst;
}

inline json summary_to_json(const Summary& s) {
  return json{{"count", s.count}, {"mean", s.mean}, {"median", s.median}, {"sd", s.sd}};
}

inline json stats_to_json(const DatasetStats& st) {
  return json{{"patients", st.patient_count},
              {"instances", st.instance_count},
              {"mean_instances_per_patient", st.mean_instances_per_patient},
              {"median_instances_per_patient", st.median_instances_per_patient},
              {"interim_rows", summary_to_json(st.interim_rows)},
              {"prior_aandp_words", summary_to_json(st.prior_length)},
              {"next_aandp_words", summary_to_json(st.next_length)},
              {"next_aandp_words_added", summary_to_json(st.next_length_added)},
              {"next_aandp_words_reduced", summary_to_json(st.next_length_reduced)},
              {"added_count", st.added_count},
              {"reduced_count", st.reduced_count}};
}

inline json messages_to_json(const std::vector<ChatMessage>& messages) {
  json arr = json::array();
  for (const auto& m : messages) arr.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return arr;
}

inline json call_to_json(const CallLog& c, bool with_timing) {
  json j{{"request_id", c.request_id}, {"template_id", c.template_id},   {"model", c.model},
         {"messages", messages_to_json(c.messages)}, {"max_tokens", c.max_tokens},
         {"temperature", c.temperature}, {"attempts", c.attempts}};
  j["response"] = c.response ? json(*c.response) : json(nullptr);
  j["error"] = c.error ? json(*c.error) : json(nullptr);
  if (with_timing) j["latency_ms"] = c.latency_ms;
  return j;
}

inline CallLog call_from_json(const json& j) {
  CallLog c;
  c.request_id = j.value("request_id", std::string());
  c.template_id = j.value("template_id", std::string());
  c.model = j.value("model", std::string());
  for (const auto& m : j.value("messages", json::array()))
    c.messages.push_back(ChatMessage{role_from_string(m.at("role").get<std::string>()),
                                     m.at("content").get<std::string>()});
  c.max_tokens = j.value("max_tokens", 0);
  c.temperature = j.value("temperature", 0.0);
  c.attempts = j.value("attempts", 0);
  if (j.contains("response") && !j["response"].is_null()) c.response = j["response"].get<std::string>();
  if (j.contains("error") && !j["error"].is_null()) c.error = j["error"].get<std::string>();
  c.latency_ms = j.value("latency_ms", std::int64_t{0});
  return c;
}

// Timing fields (wall_time_ms, per-call latency) are included only when
// `with_timing` is set, so two runs can be compared byte-for-byte without them.
inline json record_to_json(const GenerationRecord& r, bool with_timing = true) {
  json calls = json::array();
  for (const auto& c : r.calls) calls.push_back(call_to_json(c, with_timing));
  json j{{"instance_id", r.instance_id},
         {"mode", r.mode},
         {"status", r.ok ? "ok" : "failed"},
         {"chief_complaints", r.chief_complaints},
         {"chunk_count", r.chunk_count},
         {"intermediate_summaries", r.intermediate_summaries},
         {"final_summary", r.final_summary},
         {"predicted_aandp", r.predicted_aandp},
         {"llm_call_count", r.llm_call_count},
         {"warnings", r.warnings},
         {"calls", calls}};
  if (!r.ok) {
    j["failed_stage"] = r.failed_stage;
    j["error"] = r.error;
  }
  if (with_timing) j["wall_time_ms"] = r.wall_time_ms;
  return j;
}

inline GenerationRecord record_from_json(const json& j) {
  GenerationRecord r;
  r.instance_id = j.at("instance_id").get<std::string>();
  r.mode = j.value("mode", std::string("generate"));
  r.ok = j.value("status", std::string("ok")) == "ok";
  r.failed_stage = j.value("failed_stage", std::string());
  r.error = j.value("error", std::string());
  r.chief_complaints = j.value("chief_complaints", std::vector<std::string>{});
  r.chunk_count = j.value("chunk_count", std::size_t{0});
  r.intermediate_summaries = j.value("intermediate_summaries", std::vector<std::string>{});
  r.final_summary = j.value("final_summary", std::string());
  r.predicted_aandp = j.value("predicted_aandp", std::string());
  r.llm_call_count = j.value("llm_call_count", std::size_t{0});
  r.warnings = j.value("warnings", std::vector<std::string>{});
  for (const auto& c : j.value("calls", json::array())) r.calls.push_back(call_from_json(c));
  r.wall_time_ms = j.value("wall_time_ms", std::int64_t{0});
  return r;
}

inline json score_to_json(const PrScore& s) {
  return json{{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}};
}

inline PrScore score_from_json(const json& j) {
  return PrScore{j.at("precision").get<double>(), j.at("recall").get<double>(), j.at("f1").get<double>()};
}

inline json scores_to_json(const InstanceScores& s) {
  json j{{"instance_id", s.instance_id},     {"rouge1", score_to_json(s.rouge1)},
         {"rouge2", score_to_json(s.rouge2)}, {"rougeL", score_to_json(s.rougeL)},
         {"rougeLsum", score_to_json(s.rougeLsum)}, {"notes", s.notes}};
  j["embed"] = s.embed ? score_to_json(*s.embed) : json(nullptr);
  j["concept"] = s.concept_score ? score_to_json(*s.concept_score) : json(nullptr);
  return j;
}

inline InstanceScores scores_from_json(const json& j) {
  InstanceScores s;
  s.instance_id = j.at("instance_id").get<std::string>();
  s.rouge1 = score_from_json(j.at("rouge1"));
  s.rouge2 = score_from_json(j.at("rouge2"));
  s.rougeL = score_from_json(j.at("rougeL"));
  s.rougeLsum = score_from_json(j.at("rougeLsum"));
  if (j.contains("embed") && !j["embed"].is_null()) s.embed = score_from_json(j["embed"]);
  if (j.contains("concept") && !j["concept"].is_null()) s.concept_score = score_from_json(j["concept"]);
  s.notes = j.value("notes", std::vector<std::string>{});
  return s;
}

inline json report_summary_to_json(const EvalReport& r) {
  json macro = json::object();
  for (const auto& [name, m] : r.macro)
    macro[name] = json{{"count", m.count}, {"precision", m.mean.precision}, {"recall", m.mean.recall},
                       {"f1", m.mean.f1}};
  return json{{"instance_count", r.instance_count}, {"failures", r.failures}, {"macro", macro}};
}

inline EvalReport report_from_summary_json(const json& j) {
  EvalReport r;
  r.instance_count = j.value("instance_count", std::size_t{0});
  r.failures = j.value("failures", std::size_t{0});
  const json macro = j.value("macro", json::object());
  for (const auto& [name, m] : macro.items()) {
    r.macro[name] = MetricMean{m.value("count", std::size_t{0}),
                               PrScore{m.at("precision").get<double>(), m.at("recall").get<double>(),
                                       m.at("f1").get<double>()}};
  }
  return r;
}

}  // namespace notegen

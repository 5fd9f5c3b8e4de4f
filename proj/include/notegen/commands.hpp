#pragma once

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "notegen/condense.hpp"
#include "notegen/config.hpp"
#include "notegen/corpus.hpp"
#include "notegen/error.hpp"
#include "notegen/eval.hpp"
#include "notegen/ingest.hpp"
#include "notegen/io.hpp"
#include "notegen/llm.hpp"
#include "notegen/pipeline.hpp"
#include "notegen/serialize.hpp"

namespace notegen::cli {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode : int { kOk = 0, kUsage = 1, kIo = 2, kProtocol = 3 };

inline int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const SchemaError*>(&e) ||
      dynamic_cast<const RowParseError*>(&e) || dynamic_cast<const PreconditionError*>(&e))
    return kUsage;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const fs::filesystem_error*>(&e)) return kIo;
  if (dynamic_cast<const TransportError*>(&e) || dynamic_cast<const ProtocolError*>(&e) ||
      dynamic_cast<const ScriptingError*>(&e))
    return kProtocol;
  return kUsage;
}

enum class LogLevel { error = 0, warn = 1, info = 2, debug = 3 };

inline LogLevel parse_log_level(const std::string& s) {
  if (s == "error") return LogLevel::error;
  if (s == "warn" || s == "warning") return LogLevel::warn;
  if (s == "info") return LogLevel::info;
  if (s == "debug") return LogLevel::debug;
  throw ConfigError("log level must be error, warn, info or debug: " + s);
}

struct Context {
  std::ostream& out = std::cout;
  std::ostream& err = std::cerr;
  LogLevel level = LogLevel::info;
  bool resume = false;

  void log(LogLevel at, const std::string& msg) const {
    if (at > level) return;
    static constexpr const char* names[] = {"error", "warn", "info", "debug"};
    err << "[" << names[static_cast<int>(at)] << "] " << msg << "\n";
  }
  void warn(const std::string& msg) const { log(LogLevel::warn, msg); }
  void info(const std::string& msg) const { log(LogLevel::info, msg); }
};

inline std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline fs::path instances_path(const RunConfig& cfg) { return cfg.output_dir / "instances.jsonl"; }
inline fs::path sidecar_path(const fs::path& instances) {
  return instances.parent_path() / (instances.stem().string() + ".events.jsonl");
}

inline std::vector<AnnotationInstance> load_instances(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw IoError("instances file not found: " + path.string());
  const auto rows = io::read_jsonl(path);
  std::vector<AnnotationInstance> out;
  std::map<std::string, std::vector<ChartEvent>> sidecar;
  bool sidecar_loaded = false;
  for (const auto& row : rows) {
    auto inst = instance_from_json(row);
    if (row.contains("interim_events_ref")) {
      if (!sidecar_loaded) {
        const fs::path side = path.parent_path() / row["interim_events_ref"].get<std::string>();
        for (const auto& s : io::read_jsonl(side))
          sidecar[s.at("instance_id").get<std::string>()] = s.at("events").get<std::vector<ChartEvent>>();
        sidecar_loaded = true;
      }
      const auto it = sidecar.find(inst.instance_id);
      if (it == sidecar.end()) throw IoError("sidecar has no events for instance " + inst.instance_id);
      inst.interim_events = it->second;
    }
    out.push_back(std::move(inst));
  }
  return out;
}

template <class T>
void report_parse(const Context& ctx, const std::string& what, const ParseResult<T>& r) {
  ctx.info(what + ": " + std::to_string(r.records.size()) + " records from " + std::to_string(r.data_rows) +
           " rows");
  for (const auto& w : r.warnings) ctx.warn(what + ": " + w);
  const std::size_t shown = std::min<std::size_t>(r.errors.size(), 20);
  for (std::size_t i = 0; i < shown; ++i)
    ctx.warn(what + ": skipped row " + std::to_string(r.errors[i].row) + " (line " +
             std::to_string(r.errors[i].line) + "): " + r.errors[i].reason);
  if (r.errors.size() > shown)
    ctx.warn(what + ": " + std::to_string(r.errors.size() - shown) + " more rows skipped");
}

// ---- build-dataset ---------------------------------------------------------

inline int cmd_build_dataset(const RunConfig& cfg, const Context& ctx) {
  if (!cfg.notes) throw ConfigError("inputs.notes is not configured");
  if (!cfg.chart_events) throw ConfigError("inputs.chart_events is not configured");
  require_file(cfg.notes->path, "inputs.notes");
  require_file(cfg.chart_events->path, "inputs.chart_events");

  const auto notes = parse_notes(io::read_file(cfg.notes->path), cfg.notes->schema, cfg.parse_mode);
  report_parse(ctx, "notes", notes);
  const auto events =
      parse_chart_events(io::read_file(cfg.chart_events->path), cfg.chart_events->schema, cfg.parse_mode);
  report_parse(ctx, "chart_events", events);
  if (notes.records.empty()) ctx.warn("notes input has no usable notes; the dataset will be empty");

  const auto attending = filter_attending_progress_notes(notes.records, cfg.attending_patterns);
  ctx.info("attending progress notes: " + std::to_string(attending.size()));
  Diagnostics diag;
  const auto instances = build_instances(attending, events.records, cfg.sections, &diag);
  for (const auto& w : diag.warnings) ctx.warn(w);

  const fs::path out_path = instances_path(cfg);
  const fs::path side = sidecar_path(out_path);
  std::vector<json> rows, side_rows;
  for (const auto& inst : instances) {
    rows.push_back(instance_to_json(inst, cfg.event_storage, side.filename().string()));
    if (cfg.event_storage == EventStorage::sidecar)
      side_rows.push_back(json{{"instance_id", inst.instance_id}, {"events", inst.interim_events}});
  }
  const DatasetStats stats = compute_stats(instances, cfg.deviation);
  if (cfg.event_storage == EventStorage::sidecar) io::atomic_write(side, io::to_jsonl(side_rows));
  io::atomic_write(out_path, io::to_jsonl(rows));
  io::atomic_write(cfg.output_dir / "dataset_stats.json", stats_to_json(stats).dump(2) + "\n");
  io::atomic_write(cfg.output_dir / "build_manifest.json",
                   json{{"config_hash", cfg.hash},
                        {"created", utc_now()},
                        {"notes_input", cfg.notes->path.string()},
                        {"chart_events_input", cfg.chart_events->path.string()},
                        {"note_rows", notes.data_rows},
                        {"note_row_errors", notes.errors.size()},
                        {"event_rows", events.data_rows},
                        {"event_row_errors", events.errors.size()},
                        {"attending_notes", attending.size()},
                        {"instances", instances.size()}}
                           .dump(2) + "\n");
  ctx.out << format_stats_table(stats);
  ctx.info("wrote " + std::to_string(instances.size()) + " instances to " + out_path.string());
  return kOk;
}

// ---- stats -----------------------------------------------------------------

inline int cmd_stats(const RunConfig& cfg, const Context& ctx, const fs::path& instances_file) {
  const auto instances = load_instances(instances_file);
  const DatasetStats stats = compute_stats(instances, cfg.deviation);
  io::atomic_write(cfg.output_dir / "dataset_stats.json", stats_to_json(stats).dump(2) + "\n");
  ctx.out << format_stats_table(stats);
  return kOk;
}

// ---- run -------------------------------------------------------------------

enum class RunMode { generate, prior_baseline };

inline RunMode parse_run_mode(const std::string& s) {
  if (s == "generate") return RunMode::generate;
  if (s == "prior-baseline") return RunMode::prior_baseline;
  throw ConfigError("run mode must be generate or prior-baseline: " + s);
}

inline std::string mode_name(RunMode m) { return m == RunMode::generate ? "generate" : "prior-baseline"; }

inline fs::path records_path(const RunConfig& cfg, RunMode mode) {
  return cfg.output_dir / (mode == RunMode::generate ? "generations.jsonl" : "prior_baseline.jsonl");
}

inline std::shared_ptr<ChatBackend> make_backend(const RunConfig& cfg) {
  if (cfg.backend == "mock") {
    require_file(cfg.mock_script, "llm.mock_script");
    const auto doc = json::parse(io::read_file(*cfg.mock_script), nullptr, false);
    if (doc.is_discarded()) throw ConfigError("mock script is not valid JSON: " + cfg.mock_script->string());
    return std::make_shared<MockChatBackend>(MockChatBackend::from_json(doc));
  }
  return std::make_shared<HttpChatBackend>(cfg.http);
}

inline std::string sanitize_filename(const std::string& id) {
  std::string out;
  for (char c : id) out.push_back(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' ? c : '_');
  return out;
}

struct RunSummary {
  std::size_t total = 0;
  std::size_t skipped = 0;
  std::size_t ok = 0;
  std::size_t failed = 0;
  std::size_t backend_calls = 0;
};

inline int cmd_run(const RunConfig& cfg, const Context& ctx, RunMode mode, const fs::path& instances_file,
                   RunSummary* summary_out = nullptr) {
  const auto instances = load_instances(instances_file);
  const fs::path out_path = records_path(cfg, mode);
  const fs::path manifest_path = out_path.string() + ".manifest.json";
  const fs::path journal_path = out_path.string() + ".partial";
  const fs::path transcript_path = cfg.output_dir / (out_path.stem().string() + ".transcript.jsonl");

  // Successful records from a previous run (final file and interrupted
  // journal) are kept when resuming; failed ones are retried.
  std::map<std::string, json> previous;
  std::string previous_transcript;
  if (ctx.resume) {
    if (fs::exists(manifest_path)) {
      const auto manifest = json::parse(io::read_file(manifest_path), nullptr, false);
      if (manifest.is_discarded()) throw IoError("unreadable manifest " + manifest_path.string());
      if (manifest.value("config_hash", std::string()) != cfg.hash)
        throw ConfigError("configuration changed since the previous run (hash " +
                          manifest.value("config_hash", std::string()) + " vs " + cfg.hash +
                          "); refusing to resume");
    }
    auto absorb = [&](const std::vector<json>& rows) {
      for (const auto& r : rows)
        if (r.value("status", std::string()) == "ok") previous[r.at("instance_id").get<std::string>()] = r;
    };
    if (fs::exists(out_path)) absorb(io::read_jsonl(out_path));
    if (fs::exists(journal_path)) absorb(io::parse_jsonl(io::read_file(journal_path), journal_path.string(), true));
    if (fs::exists(transcript_path)) previous_transcript = io::read_file(transcript_path);
  }

  std::vector<AnnotationInstance> todo;
  for (const auto& inst : instances)
    if (!previous.contains(inst.instance_id)) todo.push_back(inst);

  RunSummary summary;
  summary.total = instances.size();
  summary.skipped = instances.size() - todo.size();
  if (summary.skipped > 0) ctx.info("resuming: " + std::to_string(summary.skipped) + " instances already done");

  std::vector<GenerationRecord> fresh;
  std::string transcript_text = previous_transcript;
  std::string backend_identity = "none";
  if (mode == RunMode::prior_baseline) {
    for (const auto& inst : todo) fresh.push_back(baseline_record(inst));
  } else {
    auto backend = make_backend(cfg);
    backend_identity = backend->identity();
    LlmClient client(backend, std::shared_ptr<const Tokenizer>(make_tokenizer(cfg.tokenizer)), cfg.client);
    if (cfg.dump_condensed) {
      const fs::path dir = cfg.output_dir / "condensed";
      for (const auto& inst : todo)
        io::atomic_write(dir / (sanitize_filename(inst.instance_id) + ".txt"), render(condense(inst.interim_events)));
    }
    std::unique_ptr<io::Journal> journal;
    if (!ctx.resume) {
      std::error_code ignored;
      fs::remove(journal_path, ignored);
    }
    if (!todo.empty()) journal = std::make_unique<io::Journal>(journal_path);
    std::size_t done = 0;
    fresh = run_batch(todo, cfg.pipeline, client, cfg.parallelism, [&](const GenerationRecord& rec) {
      journal->append(record_to_json(rec));
      ++done;
      if (!rec.ok) ctx.warn(rec.instance_id + " failed at " + rec.failed_stage + ": " + rec.error);
      ctx.log(LogLevel::debug, "finished " + rec.instance_id + " (" + std::to_string(done) + "/" +
                                   std::to_string(todo.size()) + ")");
    });
    summary.backend_calls = client.transcript().size();
    for (const auto& c : client.transcript().snapshot()) transcript_text += call_to_json(c, true).dump() + "\n";
  }

  std::map<std::string, const GenerationRecord*> fresh_by_id;
  for (const auto& r : fresh) fresh_by_id[r.instance_id] = &r;
  std::vector<json> rows;
  for (const auto& inst : instances) {
    if (const auto it = previous.find(inst.instance_id); it != previous.end()) {
      rows.push_back(it->second);
      ++summary.ok;
      continue;
    }
    const auto* rec = fresh_by_id.at(inst.instance_id);
    rows.push_back(record_to_json(*rec));
    ++(rec->ok ? summary.ok : summary.failed);
  }

  io::atomic_write(out_path, io::to_jsonl(rows));
  if (mode == RunMode::generate) io::atomic_write(transcript_path, transcript_text);
  io::atomic_write(manifest_path, json{{"config_hash", cfg.hash},
                                       {"mode", mode_name(mode)},
                                       {"backend", backend_identity},
                                       {"model", mode == RunMode::generate ? cfg.pipeline.model : "none"},
                                       {"created", utc_now()},
                                       {"instances_file", instances_file.string()},
                                       {"instances", summary.total},
                                       {"ok", summary.ok},
                                       {"failed", summary.failed},
                                       {"backend_calls", summary.backend_calls}}
                                      .dump(2) + "\n");
  std::error_code ignored;
  fs::remove(journal_path, ignored);

  ctx.out << mode_name(mode) << ": " << summary.total << " instances, " << summary.ok << " ok, " << summary.failed
          << " failed, " << summary.skipped << " resumed, " << summary.backend_calls << " backend calls\n";
  ctx.info("wrote " + out_path.string());
  if (summary_out != nullptr) *summary_out = summary;
  return kOk;
}

// ---- evaluate --------------------------------------------------------------

inline std::unique_ptr<Embedder> make_embedder(const RunConfig& cfg) {
  if (cfg.embedder == "onehot") return std::make_unique<OneHotEmbedder>();
  if (cfg.embedder == "hashed") return std::make_unique<HashedTrigramEmbedder>();
  if (cfg.embedder == "http") return std::make_unique<HttpEmbedder>(cfg.embed_http);
  return nullptr;
}

inline int cmd_evaluate(const RunConfig& cfg, const Context& ctx, const fs::path& predictions_file,
                        const fs::path& instances_file, EvalReport* report_out = nullptr) {
  std::unique_ptr<ConceptLexicon> lexicon;
  if (cfg.concept_metric) {
    require_file(cfg.lexicon, "eval.lexicon");
    Diagnostics diag;
    lexicon = std::make_unique<ConceptLexicon>(ConceptLexicon::from_tsv(io::read_file(*cfg.lexicon), &diag));
    for (const auto& w : diag.warnings) ctx.warn(w);
    if (lexicon->empty()) throw ConfigError("concept lexicon is empty: " + cfg.lexicon->string());
  }
  auto embedder = make_embedder(cfg);

  const auto instances = load_instances(instances_file);
  std::map<std::string, const AnnotationInstance*> by_id;
  for (const auto& inst : instances) by_id[inst.instance_id] = &inst;

  if (!fs::is_regular_file(predictions_file)) throw IoError("predictions file not found: " + predictions_file.string());
  const auto predictions = io::read_jsonl(predictions_file);
  EvalOptions opts;
  opts.rouge = cfg.rouge;
  opts.embedder = embedder.get();
  opts.lexicon = lexicon.get();

  std::vector<InstanceScores> scored;
  std::size_t failures = 0;
  std::set<std::string> seen;
  for (const auto& row : predictions) {
    const auto id = row.at("instance_id").get<std::string>();
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw ConfigError("prediction for unknown instance_id: " + id);
    if (!seen.insert(id).second) throw ConfigError("duplicate prediction for instance_id: " + id);
    if (row.value("status", std::string("ok")) != "ok") {
      ++failures;
      continue;
    }
    auto s = score_instance(id, row.value("predicted_aandp", std::string()), it->second->next_aandp.text, opts);
    for (const auto& n : s.notes) ctx.warn(id + ": " + n);
    scored.push_back(std::move(s));
  }
  EvalReport report = aggregate(std::move(scored), failures);

  std::vector<json> rows;
  for (const auto& s : report.instances) rows.push_back(scores_to_json(s));
  json summary = report_summary_to_json(report);
  summary["config_hash"] = cfg.hash;
  summary["predictions"] = predictions_file.string();
  summary["label"] = predictions_file.stem().string();
  summary["created"] = utc_now();
  const std::string stem = predictions_file.stem().string();
  io::atomic_write(cfg.output_dir / ("eval_" + stem + ".scores.jsonl"), io::to_jsonl(rows));
  io::atomic_write(cfg.output_dir / ("eval_" + stem + ".summary.json"), summary.dump(2) + "\n");

  ctx.out << format_report_table({{stem, report}});
  if (failures > 0) ctx.out << failures << " failed generations were not scored\n";
  if (report_out != nullptr) *report_out = std::move(report);
  return kOk;
}

// ---- report ----------------------------------------------------------------

// Prints one row per evaluation summary file; with no files, every
// eval_*.summary.json in the output directory.
inline int cmd_report(const RunConfig& cfg, const Context& ctx, std::vector<fs::path> summaries) {
  if (summaries.empty() && fs::is_directory(cfg.output_dir)) {
    for (const auto& entry : fs::directory_iterator(cfg.output_dir)) {
      const auto name = entry.path().filename().string();
      if (name.starts_with("eval_") && name.ends_with(".summary.json")) summaries.push_back(entry.path());
    }
    std::sort(summaries.begin(), summaries.end());
  }
  if (summaries.empty()) throw IoError("no evaluation summaries found in " + cfg.output_dir.string());
  std::vector<std::pair<std::string, EvalReport>> rows;
  for (const auto& p : summaries) {
    const auto j = json::parse(io::read_file(p), nullptr, false);
    if (j.is_discarded()) throw IoError("unreadable summary " + p.string());
    rows.emplace_back(j.value("label", p.stem().string()), report_from_summary_json(j));
  }
  ctx.out << format_report_table(rows);
  return kOk;
}

}  // namespace notegen::cli

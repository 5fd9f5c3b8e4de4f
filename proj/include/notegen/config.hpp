#pragma once

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "notegen/condense.hpp"
#include "notegen/corpus.hpp"
#include "notegen/error.hpp"
#include "notegen/eval.hpp"
#include "notegen/ingest.hpp"
#include "notegen/io.hpp"
#include "notegen/llm.hpp"
#include "notegen/pipeline.hpp"
#include "notegen/serialize.hpp"
#include "notegen/text.hpp"

namespace notegen {

namespace fs = std::filesystem;

// section -> key -> value, as read from an INI-style file:
//
//   # comment
//   [section]
//   key = value
using IniDocument = std::map<std::string, std::map<std::string, std::string>>;

inline IniDocument parse_ini(std::string_view data, const std::string& origin = "config") {
  IniDocument doc;
  std::string section;
  std::size_t line_no = 0, pos = 0;
  while (pos < data.size()) {
    std::size_t end = data.find('\n', pos);
    if (end == std::string_view::npos) end = data.size();
    const auto line = text::trim(data.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    const auto where = origin + ":" + std::to_string(line_no);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header");
      section = std::string(text::trim(line.substr(1, line.size() - 2)));
      if (section.empty()) throw ConfigError(where + ": empty section name");
      doc[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ConfigError(where + ": expected key = value");
    if (section.empty()) throw ConfigError(where + ": key outside of any section");
    const std::string key(text::trim(line.substr(0, eq)));
    if (key.empty()) throw ConfigError(where + ": empty key");
    auto& sec = doc[section];
    if (sec.contains(key)) throw ConfigError(where + ": duplicate key " + section + "." + key);
    sec[key] = std::string(text::trim(line.substr(eq + 1)));
  }
  return doc;
}

struct InputSpec {
  fs::path path;
  SchemaMap schema;
};

struct RunConfig {
  fs::path base_dir = ".";

  std::optional<InputSpec> chart_events;
  std::optional<InputSpec> notes;

  std::vector<std::string> attending_patterns;
  SectionPatterns sections;
  ParseMode parse_mode = ParseMode::lenient;
  EventStorage event_storage = EventStorage::inline_events;
  Deviation deviation = Deviation::population;

  std::string tokenizer = "bytes4";
  std::size_t context_size = kDefaultContextSize;
  bool dump_condensed = false;

  PipelineConfig pipeline;
  std::string backend = "mock";
  HttpBackendOptions http;
  ClientOptions client;
  std::optional<fs::path> mock_script;

  RougeOptions rouge;
  std::string embedder = "none";
  HttpEmbedderOptions embed_http;
  bool concept_metric = false;
  std::optional<fs::path> lexicon;

  std::size_t parallelism = 1;
  fs::path output_dir = "out";
  std::string log_level = "info";

  std::string hash;  // digest of everything that affects outputs
};

namespace detail {

inline bool parse_bool(const std::string& key, const std::string& v) {
  const auto l = text::lower(v);
  if (l == "true" || l == "yes" || l == "1" || l == "on") return true;
  if (l == "false" || l == "no" || l == "0" || l == "off") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

template <class Int>
Int parse_int(const std::string& key, const std::string& v) {
  Int out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc{} || ptr != v.data() + v.size()) throw ConfigError(key + ": expected an integer, got '" + v + "'");
  return out;
}

inline double parse_double(const std::string& key, const std::string& v) {
  const auto d = detail::parse_decimal(v);
  if (!d) throw ConfigError(key + ": expected a number, got '" + v + "'");
  return *d;
}

inline char parse_delimiter(const std::string& v) {
  if (v == "tab" || v == "\\t") return '\t';
  if (v == "comma") return ',';
  if (v == "pipe") return '|';
  if (v == "semicolon") return ';';
  if (v.size() == 1) return v[0];
  throw ConfigError("delimiter must be a single character or tab/comma/pipe/semicolon: '" + v + "'");
}

inline SchemaMap parse_schema(const std::map<std::string, std::string>& sec, TableKind kind,
                              const std::string& name) {
  SchemaMap schema = SchemaMap::identity(kind);
  if (const auto it = sec.find("preset"); it != sec.end()) {
    if (it->second == "mimic") schema = SchemaMap::mimic(kind);
    else if (it->second != "identity") throw ConfigError(name + ".preset: expected mimic or identity");
  }
  for (const auto& [key, value] : sec) {
    if (key == "preset") continue;
    if (key == "delimiter") schema.delimiter = parse_delimiter(value);
    else if (key == "date_format") schema.date_format = value;
    else if (value.empty()) schema.columns.erase(key);
    else schema.columns[key] = value;
  }
  schema.validate(kind);
  return schema;
}

inline const std::map<std::string, std::vector<std::string>>& known_keys() {
  static const std::map<std::string, std::vector<std::string>> keys{
      {"inputs", {"chart_events", "notes"}},
      {"corpus", {"attending_patterns", "aandp_headers", "section_terminators", "parse_mode", "event_storage", "sd"}},
      {"condense", {"tokenizer", "chunk_budget", "context_size", "dump"}},
      {"llm",
       {"backend", "base", "path", "token", "model", "timeout_ms", "retries", "backoff_ms", "max_backoff_ms",
        "max_in_flight", "mock_script", "temperature", "max_tokens_complaints", "max_tokens_summary",
        "max_tokens_note", "min_completion_tokens"}},
      {"eval", {"stem", "stopwords", "embedder", "embed_base", "embed_path", "concept", "lexicon"}},
      {"run", {"parallelism", "output_dir", "log_level"}},
  };
  return keys;
}

// Keys that never change what a command produces.
inline bool excluded_from_hash(const std::string& section, const std::string& key) {
  return (section == "run" && (key == "parallelism" || key == "log_level" || key == "output_dir")) ||
         (section == "llm" && (key == "token" || key == "max_in_flight"));
}

}  // namespace detail

// Applies "section.key=value" overrides onto a parsed document.
inline void apply_overrides(IniDocument& doc, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    const auto dot = o.rfind('.', eq);
    if (eq == std::string::npos || dot == std::string::npos || dot == 0)
      throw ConfigError("override must look like section.key=value: " + o);
    doc[std::string(text::trim(o.substr(0, dot)))][std::string(text::trim(o.substr(dot + 1, eq - dot - 1)))] =
        std::string(text::trim(o.substr(eq + 1)));
  }
}

// Environment variables NOTEGEN_LLM_BASE and NOTEGEN_LLM_TOKEN take
// precedence over [llm] base/token.
inline void apply_environment(IniDocument& doc) {
  if (const char* base = std::getenv("NOTEGEN_LLM_BASE"); base != nullptr && *base != '\0')
    doc["llm"]["base"] = base;
  if (const char* token = std::getenv("NOTEGEN_LLM_TOKEN"); token != nullptr && *token != '\0')
    doc["llm"]["token"] = token;
}

inline RunConfig interpret_config(const IniDocument& doc, const fs::path& base_dir) {
  RunConfig cfg;
  cfg.base_dir = base_dir;
  auto resolve = [&](const std::string& p) -> fs::path {
    fs::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };

  std::string canonical;
  for (const auto& [section, entries] : doc) {
    const bool schema_section = section == "schema.chart_events" || section == "schema.notes";
    const bool prompt_section = section == "prompts";
    const auto known = detail::known_keys().find(section);
    if (!schema_section && !prompt_section && known == detail::known_keys().end())
      throw ConfigError("unknown config section [" + section + "]");
    for (const auto& [key, value] : entries) {
      if (known != detail::known_keys().end() &&
          std::find(known->second.begin(), known->second.end(), key) == known->second.end())
        throw ConfigError("unknown config key " + section + "." + key);
      if (!detail::excluded_from_hash(section, key)) canonical += section + "." + key + "=" + value + "\n";
    }
  }

  auto get = [&](const std::string& section, const std::string& key) -> std::optional<std::string> {
    const auto s = doc.find(section);
    if (s == doc.end()) return std::nullopt;
    const auto k = s->second.find(key);
    if (k == s->second.end()) return std::nullopt;
    return k->second;
  };
  auto section = [&](const std::string& name) {
    const auto s = doc.find(name);
    return s == doc.end() ? std::map<std::string, std::string>{} : s->second;
  };

  if (auto v = get("inputs", "chart_events"))
    cfg.chart_events = InputSpec{resolve(*v), detail::parse_schema(section("schema.chart_events"),
                                                                   TableKind::chart_events, "schema.chart_events")};
  if (auto v = get("inputs", "notes"))
    cfg.notes = InputSpec{resolve(*v), detail::parse_schema(section("schema.notes"), TableKind::notes,
                                                            "schema.notes")};

  if (auto v = get("corpus", "attending_patterns")) cfg.attending_patterns = text::split_list(*v, '|');
  else cfg.attending_patterns = {"attending progress"};
  if (auto v = get("corpus", "aandp_headers")) cfg.sections.headers = text::split_list(*v, '|');
  if (auto v = get("corpus", "section_terminators")) cfg.sections.terminators = text::split_list(*v, '|');
  if (cfg.sections.headers.empty()) throw ConfigError("corpus.aandp_headers is empty");
  if (auto v = get("corpus", "parse_mode")) {
    if (*v == "strict") cfg.parse_mode = ParseMode::strict;
    else if (*v != "lenient") throw ConfigError("corpus.parse_mode: expected strict or lenient");
  }
  if (auto v = get("corpus", "event_storage")) {
    if (*v == "sidecar") cfg.event_storage = EventStorage::sidecar;
    else if (*v != "inline") throw ConfigError("corpus.event_storage: expected inline or sidecar");
  }
  if (auto v = get("corpus", "sd")) {
    if (*v == "sample") cfg.deviation = Deviation::sample;
    else if (*v != "population") throw ConfigError("corpus.sd: expected population or sample");
  }

  if (auto v = get("condense", "tokenizer")) cfg.tokenizer = *v;
  make_tokenizer(cfg.tokenizer);
  if (auto v = get("condense", "chunk_budget"))
    cfg.pipeline.chunk_budget = detail::parse_int<std::size_t>("condense.chunk_budget", *v);
  if (auto v = get("condense", "context_size"))
    cfg.context_size = detail::parse_int<std::size_t>("condense.context_size", *v);
  if (auto v = get("condense", "dump")) cfg.dump_condensed = detail::parse_bool("condense.dump", *v);
  if (cfg.pipeline.chunk_budget < 64) throw ConfigError("condense.chunk_budget must be at least 64");
  if (cfg.context_size < cfg.pipeline.chunk_budget)
    throw ConfigError("condense.context_size must be at least the chunk budget");
  cfg.client.context_size = cfg.context_size;

  if (auto v = get("llm", "backend")) cfg.backend = *v;
  if (cfg.backend != "mock" && cfg.backend != "http") throw ConfigError("llm.backend: expected mock or http");
  if (auto v = get("llm", "base")) cfg.http.base = *v;
  if (auto v = get("llm", "path")) cfg.http.path = *v;
  if (auto v = get("llm", "token")) cfg.http.token = *v;
  if (auto v = get("llm", "model")) cfg.pipeline.model = *v;
  if (auto v = get("llm", "timeout_ms"))
    cfg.http.timeout = std::chrono::milliseconds(detail::parse_int<long>("llm.timeout_ms", *v));
  if (auto v = get("llm", "retries")) cfg.client.max_retries = detail::parse_int<int>("llm.retries", *v);
  if (auto v = get("llm", "backoff_ms"))
    cfg.client.initial_backoff = std::chrono::milliseconds(detail::parse_int<long>("llm.backoff_ms", *v));
  if (auto v = get("llm", "max_backoff_ms"))
    cfg.client.max_backoff = std::chrono::milliseconds(detail::parse_int<long>("llm.max_backoff_ms", *v));
  if (auto v = get("llm", "max_in_flight"))
    cfg.client.max_in_flight = detail::parse_int<std::ptrdiff_t>("llm.max_in_flight", *v);
  if (auto v = get("llm", "mock_script")) cfg.mock_script = resolve(*v);
  if (auto v = get("llm", "temperature")) cfg.pipeline.temperature = detail::parse_double("llm.temperature", *v);
  if (auto v = get("llm", "max_tokens_complaints"))
    cfg.pipeline.max_tokens_complaints = detail::parse_int<int>("llm.max_tokens_complaints", *v);
  if (auto v = get("llm", "max_tokens_summary"))
    cfg.pipeline.max_tokens_summary = detail::parse_int<int>("llm.max_tokens_summary", *v);
  if (auto v = get("llm", "max_tokens_note"))
    cfg.pipeline.max_tokens_note = detail::parse_int<int>("llm.max_tokens_note", *v);
  if (auto v = get("llm", "min_completion_tokens"))
    cfg.pipeline.min_completion_tokens = detail::parse_int<int>("llm.min_completion_tokens", *v);
  if (cfg.client.max_retries < 0) throw ConfigError("llm.retries must be non-negative");
  if (cfg.client.max_in_flight < 1) throw ConfigError("llm.max_in_flight must be at least 1");
  if (cfg.pipeline.temperature < 0) throw ConfigError("llm.temperature must be non-negative");

  for (const auto& [key, value] : section("prompts")) {
    const auto dot = key.find('.');
    if (dot == std::string::npos) throw ConfigError("prompts keys look like <template>.<system|user>[_file]: " + key);
    const TemplateId id = template_id_from_string(key.substr(0, dot));
    const std::string part = key.substr(dot + 1);
    PromptTemplate t = cfg.pipeline.templates.get(id);
    std::string content = value;
    if (part == "system_file" || part == "user_file") {
      content = io::read_file(resolve(value));
      canonical += "prompts." + key + ".digest=" + text::hex64(text::fnv1a(content)) + "\n";
    } else {
      // Inline values may spell line breaks as \n.
      std::string unescaped;
      for (std::size_t i = 0; i < content.size(); ++i) {
        if (content[i] == '\\' && i + 1 < content.size() && content[i + 1] == 'n') {
          unescaped.push_back('\n');
          ++i;
        } else {
          unescaped.push_back(content[i]);
        }
      }
      content = unescaped;
    }
    if (part == "system" || part == "system_file") t.system = content;
    else if (part == "user" || part == "user_file") t.user = content;
    else throw ConfigError("unknown prompt part: " + key);
    cfg.pipeline.templates.set(id, t);
  }

  if (auto v = get("eval", "stem")) cfg.rouge.stem = detail::parse_bool("eval.stem", *v);
  if (auto v = get("eval", "stopwords")) cfg.rouge.remove_stopwords = detail::parse_bool("eval.stopwords", *v);
  if (auto v = get("eval", "embedder")) cfg.embedder = *v;
  if (cfg.embedder != "none" && cfg.embedder != "onehot" && cfg.embedder != "hashed" && cfg.embedder != "http")
    throw ConfigError("eval.embedder: expected none, onehot, hashed or http");
  if (auto v = get("eval", "embed_base")) cfg.embed_http.base = *v;
  if (auto v = get("eval", "embed_path")) cfg.embed_http.path = *v;
  cfg.embed_http.token = cfg.http.token;
  if (auto v = get("eval", "concept")) cfg.concept_metric = detail::parse_bool("eval.concept", *v);
  if (auto v = get("eval", "lexicon")) cfg.lexicon = resolve(*v);

  if (auto v = get("run", "parallelism")) cfg.parallelism = detail::parse_int<std::size_t>("run.parallelism", *v);
  if (auto v = get("run", "output_dir")) cfg.output_dir = resolve(*v);
  else cfg.output_dir = resolve("out");
  if (auto v = get("run", "log_level")) cfg.log_level = *v;
  if (cfg.parallelism < 1) throw ConfigError("run.parallelism must be at least 1");

  if (cfg.mock_script && fs::exists(*cfg.mock_script))
    canonical += "mock_script.digest=" + text::hex64(text::fnv1a(io::read_file(*cfg.mock_script))) + "\n";
  cfg.hash = text::hex64(text::fnv1a(canonical));
  return cfg;
}

inline RunConfig load_config(const fs::path& path, const std::vector<std::string>& overrides = {}) {
  IniDocument doc = parse_ini(io::read_file(path), path.string());
  apply_overrides(doc, overrides);
  apply_environment(doc);
  return interpret_config(doc, path.has_parent_path() ? path.parent_path() : fs::path("."));
}

inline void require_file(const std::optional<fs::path>& p, const std::string& what) {
  if (!p) throw ConfigError(what + " is not configured");
  if (!fs::is_regular_file(*p)) throw ConfigError(what + " does not exist: " + p->string());
}

}  // namespace notegen

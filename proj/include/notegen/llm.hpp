#pragma once

#include <algorithm>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "notegen/condense.hpp"
#include "notegen/error.hpp"
#include "notegen/http.hpp"
#include "notegen/text.hpp"

namespace notegen {

enum class Role { system, user, assistant };

inline std::string to_string(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

inline Role role_from_string(const std::string& s) {
  if (s == "system") return Role::system;
  if (s == "user") return Role::user;
  if (s == "assistant") return Role::assistant;
  throw ProtocolError(0, "unknown chat role: " + s);
}

struct ChatMessage {
  Role role = Role::user;
  std::string content;

  friend bool operator==(const ChatMessage&, const ChatMessage&) = default;
};

inline constexpr int kMaxTokensComplaints = 128;
inline constexpr int kMaxTokensSummary = 512;
inline constexpr int kMaxTokensNote = 768;

struct LlmRequest {
  std::string model;
  std::vector<ChatMessage> messages;
  int max_tokens = kMaxTokensNote;
  double temperature = 0.0;
  std::string request_id;
  std::string template_id;  // which prompt produced the messages; used by the mock
};

struct LlmResponse {
  std::string text;
  std::optional<int> prompt_tokens;
  std::optional<int> completion_tokens;
  std::int64_t latency_ms = 0;
};

// ---- Prompt templates ------------------------------------------------------

enum class TemplateId { chief_complaints, summarize_initial, summarize_refine, generate_note };

inline std::string to_string(TemplateId id) {
  switch (id) {
    case TemplateId::chief_complaints: return "chief_complaints";
    case TemplateId::summarize_initial: return "summarize_initial";
    case TemplateId::summarize_refine: return "summarize_refine";
    case TemplateId::generate_note: return "generate_note";
  }
  return "";
}

inline TemplateId template_id_from_string(const std::string& s) {
  for (auto id : {TemplateId::chief_complaints, TemplateId::summarize_initial,
                  TemplateId::summarize_refine, TemplateId::generate_note}) {
    if (to_string(id) == s) return id;
  }
  throw ConfigError("unknown prompt template id: " + s);
}

// A system message plus a user message with {slot} placeholders. Slot names
// are lowercase identifiers; other brace text is literal.
struct PromptTemplate {
  std::string system;
  std::string user;
};

class TemplateSet {
 public:
  static TemplateSet defaults() {
    TemplateSet set;
    const std::string sys =
        "You are a clinical documentation assistant helping physicians write inpatient "
        "progress notes. Be concise and factual, and do not invent findings.";
    set.templates_[TemplateId::chief_complaints] = {
        sys,
        "Here is the Assessment and Plan section of the patient's most recent progress note:\n\n"
        "{prior_aandp}\n\n"
        "List the patient's current chief complaints (the active problems being managed). "
        "Output only the problems, separated by semicolons."};
    set.templates_[TemplateId::summarize_initial] = {
        sys,
        "Current chief complaints: {complaints}\n\n"
        "Structured chart data charted since that note, grouped by timestamp:\n\n"
        "{chunk}\n"
        "Summarize the clinically relevant findings in this data, with attention to the chief "
        "complaints. Output only the summary."};
    set.templates_[TemplateId::summarize_refine] = {
        sys,
        "Current chief complaints: {complaints}\n\n"
        "Existing summary of earlier chart data:\n\n"
        "{previous_summary}\n\n"
        "Additional structured chart data, grouped by timestamp:\n\n"
        "{chunk}\n"
        "Update the existing summary with any clinically relevant findings from the additional "
        "data, with attention to the chief complaints. Output only the updated summary."};
    set.templates_[TemplateId::generate_note] = {
        sys,
        "Assessment and Plan section of the prior progress note:\n\n"
        "{prior_aandp}\n\n"
        "Summary of structured chart data charted since the prior note:\n\n"
        "{summary}\n\n"
        "Write the Assessment and Plan section of the next progress note. Output only that "
        "section."};
    return set;
  }

  const PromptTemplate& get(TemplateId id) const { return templates_.at(id); }
  void set(TemplateId id, PromptTemplate t) { templates_[id] = std::move(t); }

 private:
  std::map<TemplateId, PromptTemplate> templates_;
};

namespace detail {

inline bool is_slot_char(char c) { return (c >= 'a' && c <= 'z') || c == '_' || (c >= '0' && c <= '9'); }

// Single-pass substitution: slot values are inserted verbatim and never
// rescanned for placeholders.
inline std::string substitute(const std::string& tmpl, const std::map<std::string, std::string>& slots) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      std::size_t j = i + 1;
      while (j < tmpl.size() && is_slot_char(tmpl[j])) ++j;
      if (j < tmpl.size() && tmpl[j] == '}' && j > i + 1) {
        const std::string name = tmpl.substr(i + 1, j - i - 1);
        const auto it = slots.find(name);
        if (it == slots.end() || text::trim(it->second).empty()) throw RenderError(name);
        out += it->second;
        i = j + 1;
        continue;
      }
    }
    out.push_back(tmpl[i]);
    ++i;
  }
  return out;
}

}  // namespace detail

// Returns [system, user] (system omitted when the template's system text is
// empty).
inline std::vector<ChatMessage> render_prompt(TemplateId id,
                                              const std::map<std::string, std::string>& slots,
                                              const TemplateSet& templates = TemplateSet::defaults()) {
  const auto& t = templates.get(id);
  std::vector<ChatMessage> out;
  if (!text::trim(t.system).empty())
    out.push_back(ChatMessage{Role::system, detail::substitute(t.system, slots)});
  out.push_back(ChatMessage{Role::user, detail::substitute(t.user, slots)});
  return out;
}

// ---- Transcript ------------------------------------------------------------

struct CallLog {
  std::string request_id;
  std::string template_id;
  std::string model;
  std::vector<ChatMessage> messages;
  int max_tokens = 0;
  double temperature = 0;
  int attempts = 0;
  std::optional<std::string> response;
  std::optional<std::string> error;
  std::int64_t latency_ms = 0;
};

// Append-only, internally synchronized log of every complete() call.
class Transcript {
 public:
  void append(CallLog entry) {
    std::lock_guard lock(mu_);
    entries_.push_back(std::move(entry));
  }
  std::size_t size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
  }
  std::vector<CallLog> snapshot() const {
    std::lock_guard lock(mu_);
    return entries_;
  }

 private:
  mutable std::mutex mu_;
  std::vector<CallLog> entries_;
};

// ---- Backends --------------------------------------------------------------

// A failure worth retrying (connection refused, timeout, 5xx/429).
class TransientFailure : public TransportError {
 public:
  using TransportError::TransportError;
};

// One request attempt against a chat-completion provider. Implementations
// must be safe to call concurrently.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual LlmResponse send(const LlmRequest& request) = 0;
  virtual std::string identity() const = 0;
};

inline nlohmann::json request_body(const LlmRequest& r) {
  nlohmann::json msgs = nlohmann::json::array();
  for (const auto& m : r.messages) msgs.push_back({{"role", to_string(m.role)}, {"content", m.content}});
  return {{"model", r.model},
          {"messages", msgs},
          {"max_tokens", r.max_tokens},
          {"temperature", r.temperature},
          {"stream", false}};
}

struct HttpBackendOptions {
  std::string base = "http://127.0.0.1:8080";
  std::string path = "/v1/chat/completions";
  std::string token;
  std::chrono::milliseconds timeout{120000};
};

// POSTs chat-completions requests and reads choices[0].message.content.
class HttpChatBackend final : public ChatBackend {
 public:
  explicit HttpChatBackend(HttpBackendOptions opts)
      : opts_(std::move(opts)), endpoint_(http::parse_endpoint(opts_.base, opts_.path)) {}

  LlmResponse send(const LlmRequest& request) override {
    const auto start = std::chrono::steady_clock::now();
    const auto reply = http::post_json(endpoint_, request_body(request).dump(), opts_.token, opts_.timeout);
    if (!reply.transport_ok)
      throw TransientFailure("request to " + endpoint_.host_port + endpoint_.path +
                             " failed: " + reply.transport_error);
    if (http::retryable_status(reply.status))
      throw TransientFailure("status " + std::to_string(reply.status) + ": " + http::excerpt(reply.body));
    if (reply.status < 200 || reply.status >= 300)
      throw ProtocolError(reply.status, "status " + std::to_string(reply.status) + ": " +
                                            http::excerpt(reply.body));
    LlmResponse out = parse_response(reply.status, reply.body);
    out.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::steady_clock::now() - start)
                         .count();
    return out;
  }

  std::string identity() const override { return "http:" + endpoint_.host_port + endpoint_.path; }

  static LlmResponse parse_response(int status, const std::string& body) {
    const auto doc = nlohmann::json::parse(body, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
      throw ProtocolError(status, "response is not a JSON object: " + http::excerpt(body));
    const auto choices = doc.find("choices");
    if (choices == doc.end() || !choices->is_array() || choices->empty())
      throw ProtocolError(status, "response has no choices: " + http::excerpt(body));
    const auto& first = choices->front();
    LlmResponse out;
    if (first.contains("message") && first["message"].contains("content") &&
        first["message"]["content"].is_string()) {
      out.text = first["message"]["content"].get<std::string>();
    } else if (first.contains("text") && first["text"].is_string()) {
      out.text = first["text"].get<std::string>();
    } else {
      throw ProtocolError(status, "first choice carries no message content: " + http::excerpt(body));
    }
    if (const auto usage = doc.find("usage"); usage != doc.end() && usage->is_object()) {
      if (usage->contains("prompt_tokens") && (*usage)["prompt_tokens"].is_number_integer())
        out.prompt_tokens = (*usage)["prompt_tokens"].get<int>();
      if (usage->contains("completion_tokens") && (*usage)["completion_tokens"].is_number_integer())
        out.completion_tokens = (*usage)["completion_tokens"].get<int>();
    }
    return out;
  }

 private:
  HttpBackendOptions opts_;
  http::Endpoint endpoint_;
};

// A scripted rule: matches on template id and/or a substring of the joined
// message contents. `fail` injects "transport" (retryable) or "protocol"
// failures instead of a response.
struct MockRule {
  std::optional<std::string> template_id;
  std::optional<std::string> contains;
  std::string response;
  std::optional<std::string> fail;
};

// Deterministic backend: the response is a pure function of the script and
// the request. In responses, "{digest}" expands to a 16-hex-digit digest of
// the joined message contents, so distinct prompts yield distinct text.
class MockChatBackend final : public ChatBackend {
 public:
  explicit MockChatBackend(std::vector<MockRule> rules) : rules_(std::move(rules)) {}

  static MockChatBackend from_json(const nlohmann::json& doc) {
    const nlohmann::json* list = &doc;
    if (doc.is_object() && doc.contains("rules")) list = &doc["rules"];
    if (!list->is_array()) throw ConfigError("mock script must be a JSON array of rules");
    std::vector<MockRule> rules;
    for (const auto& item : *list) {
      if (!item.is_object()) throw ConfigError("mock script rule must be an object");
      MockRule rule;
      if (item.contains("template_id")) rule.template_id = item["template_id"].get<std::string>();
      if (item.contains("contains")) rule.contains = item["contains"].get<std::string>();
      if (item.contains("response")) rule.response = item["response"].get<std::string>();
      if (item.contains("fail")) rule.fail = item["fail"].get<std::string>();
      if (!item.contains("response") && !rule.fail)
        throw ConfigError("mock script rule needs \"response\" or \"fail\"");
      rules.push_back(std::move(rule));
    }
    return MockChatBackend(std::move(rules));
  }

  LlmResponse send(const LlmRequest& request) override {
    std::string joined;
    for (const auto& m : request.messages) {
      joined += m.content;
      joined += '\n';
    }
    for (const auto& rule : rules_) {
      if (rule.template_id && *rule.template_id != request.template_id) continue;
      if (rule.contains && joined.find(*rule.contains) == std::string::npos) continue;
      if (rule.fail) {
        if (*rule.fail == "protocol") throw ProtocolError(400, "scripted protocol failure");
        throw TransientFailure("scripted transport failure");
      }
      LlmResponse out;
      out.text = expand(rule.response, joined);
      return out;
    }
    throw ScriptingError("mock script has no rule matching template '" + request.template_id +
                         "' (request " + request.request_id + ")");
  }

  std::string identity() const override { return "mock:" + std::to_string(rules_.size()) + "-rules"; }

 private:
  static std::string expand(const std::string& response, const std::string& joined) {
    static const std::string key = "{digest}";
    std::string out;
    std::size_t pos = 0;
    for (;;) {
      const auto hit = response.find(key, pos);
      out += response.substr(pos, hit == std::string::npos ? std::string::npos : hit - pos);
      if (hit == std::string::npos) break;
      out += text::hex64(text::fnv1a(joined));
      pos = hit + key.size();
    }
    return out;
  }

  std::vector<MockRule> rules_;
};

// ---- Client ----------------------------------------------------------------

struct ClientOptions {
  std::size_t context_size = kDefaultContextSize;
  int max_retries = 2;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::milliseconds max_backoff{8000};
  std::ptrdiff_t max_in_flight = 4;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

// Wraps a backend with request validation, the context budget check, retry
// with exponential backoff, an in-flight bound and the audit transcript.
// Shareable across threads.
class LlmClient {
 public:
  LlmClient(std::shared_ptr<ChatBackend> backend, std::shared_ptr<const Tokenizer> tokenizer,
            ClientOptions opts = {}, Sleeper sleeper = {})
      : backend_(std::move(backend)),
        tokenizer_(std::move(tokenizer)),
        opts_(opts),
        sleeper_(sleeper ? std::move(sleeper)
                         : Sleeper([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })),
        slots_(std::make_unique<std::counting_semaphore<4096>>(std::clamp<std::ptrdiff_t>(opts.max_in_flight, 1, 4096))) {
    if (!backend_) throw ConfigError("LlmClient requires a backend");
    if (!tokenizer_) throw ConfigError("LlmClient requires a tokenizer");
  }

  std::size_t prompt_estimate(const std::vector<ChatMessage>& messages) const {
    std::size_t n = 0;
    for (const auto& m : messages) n += tokenizer_->estimate(m.content);
    return n;
  }

  // Every call, failed or not, lands in the transcript; `local`, when given,
  // receives a copy of the same entry.
  LlmResponse complete(const LlmRequest& request, std::vector<CallLog>* local = nullptr) {
    CallLog log;
    log.request_id = request.request_id;
    log.template_id = request.template_id;
    log.model = request.model;
    log.messages = request.messages;
    log.max_tokens = request.max_tokens;
    log.temperature = request.temperature;
    const auto start = std::chrono::steady_clock::now();
    try {
      validate(request);
      LlmResponse response = send_with_retry(request, log.attempts);
      log.response = response.text;
      log.latency_ms = elapsed_ms(start);
      response.latency_ms = log.latency_ms;
      if (local != nullptr) local->push_back(log);
      transcript_.append(std::move(log));
      return response;
    } catch (const std::exception& e) {
      log.error = e.what();
      log.latency_ms = elapsed_ms(start);
      if (local != nullptr) local->push_back(log);
      transcript_.append(std::move(log));
      throw;
    }
  }

  Transcript& transcript() { return transcript_; }
  const Transcript& transcript() const { return transcript_; }
  const ClientOptions& options() const { return opts_; }
  const Tokenizer& tokenizer() const { return *tokenizer_; }
  std::string backend_identity() const { return backend_->identity(); }

 private:
  static std::int64_t elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start)
        .count();
  }

  void validate(const LlmRequest& r) const {
    if (r.max_tokens < 1) throw PreconditionError("max_tokens must be at least 1");
    if (r.temperature < 0) throw PreconditionError("temperature must be non-negative");
    if (r.messages.empty()) throw PreconditionError("request has no messages");
    for (const auto& m : r.messages) {
      if (m.role != Role::assistant && text::trim(m.content).empty())
        throw PreconditionError(to_string(m.role) + " message content is empty");
    }
    const std::size_t need = prompt_estimate(r.messages) + static_cast<std::size_t>(r.max_tokens);
    if (need > opts_.context_size) {
      throw BudgetError("request " + r.request_id + " needs " + std::to_string(need) +
                        " tokens (prompt estimate + max_tokens), context size is " +
                        std::to_string(opts_.context_size));
    }
  }

  LlmResponse send_with_retry(const LlmRequest& r, int& attempts) {
    struct SlotGuard {
      std::counting_semaphore<4096>& s;
      explicit SlotGuard(std::counting_semaphore<4096>& sem) : s(sem) { s.acquire(); }
      ~SlotGuard() { s.release(); }
    };
    auto backoff = opts_.initial_backoff;
    for (;;) {
      ++attempts;
      try {
        SlotGuard guard(*slots_);
        return backend_->send(r);
      } catch (const TransientFailure& e) {
        if (attempts > opts_.max_retries) {
          throw TransportError("giving up on request " + r.request_id + " after " +
                               std::to_string(attempts) + " attempts: " + e.what());
        }
      }
      sleeper_(backoff);
      backoff = std::min(backoff * 2, opts_.max_backoff);
    }
  }

  std::shared_ptr<ChatBackend> backend_;
  std::shared_ptr<const Tokenizer> tokenizer_;
  ClientOptions opts_;
  Sleeper sleeper_;
  std::unique_ptr<std::counting_semaphore<4096>> slots_;
  Transcript transcript_;
};

}  // namespace notegen

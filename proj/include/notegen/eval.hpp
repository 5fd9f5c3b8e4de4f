#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "notegen/error.hpp"
#include "notegen/http.hpp"
#include "notegen/porter.hpp"
#include "notegen/text.hpp"

namespace notegen {

struct PrScore {
  double precision = 0;
  double recall = 0;
  double f1 = 0;

  static PrScore from_pr(double p, double r) {
    return PrScore{p, r, (p + r) > 0 ? 2 * p * r / (p + r) : 0.0};
  }

  // Ratios of `overlap` to the predicted and gold sizes; an empty side gives 0.
  static PrScore from_counts(double overlap, double pred_total, double gold_total) {
    const double p = pred_total > 0 ? overlap / pred_total : 0.0;
    const double r = gold_total > 0 ? overlap / gold_total : 0.0;
    return from_pr(p, r);
  }

  friend bool operator==(const PrScore&, const PrScore&) = default;
};

// ---- Tokenization ----------------------------------------------------------

inline bool is_token_byte(unsigned char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

// Lowercased maximal runs of alphanumerics. Non-ASCII bytes count as
// alphanumeric so UTF-8 words stay whole.
inline std::vector<std::string> tokenize_words(std::string_view s) {
  std::vector<std::string> out;
  std::string current;
  for (char ch : s) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_token_byte(c)) {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

inline const std::unordered_set<std::string>& english_stopwords() {
  static const std::unordered_set<std::string> words{
      "a",     "about", "above", "after", "again", "against", "all",   "am",    "an",    "and",
      "any",   "are",   "as",    "at",    "be",    "because", "been",  "before", "being", "below",
      "between", "both", "but",  "by",    "can",   "could",   "did",   "do",    "does",  "doing",
      "down",  "during", "each", "few",   "for",   "from",    "further", "had", "has",   "have",
      "having", "he",   "her",   "here",  "hers",  "herself", "him",   "himself", "his", "how",
      "i",     "if",    "in",    "into",  "is",    "it",      "its",   "itself", "just", "me",
      "more",  "most",  "my",    "myself", "no",   "nor",     "not",   "now",   "of",    "off",
      "on",    "once",  "only",  "or",    "other", "our",     "ours",  "ourselves", "out", "over",
      "own",   "same",  "she",   "should", "so",   "some",    "such",  "than",  "that",  "the",
      "their", "theirs", "them", "themselves", "then", "there", "these", "they", "this", "those",
      "through", "to",  "too",   "under", "until", "up",      "very",  "was",   "we",    "were",
      "what",  "when",  "where", "which", "while", "who",     "whom",  "why",   "will",  "with",
      "would", "you",   "your",  "yours", "yourself", "yourselves"};
  return words;
}

struct RougeOptions {
  bool stem = false;
  bool remove_stopwords = false;
};

inline std::vector<std::string> tokenize_for_rouge(std::string_view s, const RougeOptions& opts = {}) {
  auto tokens = tokenize_words(s);
  if (!opts.stem && !opts.remove_stopwords) return tokens;
  std::vector<std::string> out;
  PorterStemmer stemmer;
  for (auto& t : tokens) {
    if (opts.remove_stopwords && english_stopwords().contains(t)) continue;
    out.push_back(opts.stem && t.size() > 3 ? stemmer.stem(t) : std::move(t));
  }
  return out;
}

// ---- ROUGE -----------------------------------------------------------------

namespace detail {

inline std::unordered_map<std::string, std::size_t> ngram_counts(const std::vector<std::string>& toks,
                                                                 std::size_t n) {
  std::unordered_map<std::string, std::size_t> counts;
  if (toks.size() < n) return counts;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key = toks[i];
    for (std::size_t k = 1; k < n; ++k) {
      key += '\x1f';
      key += toks[i + k];
    }
    ++counts[key];
  }
  return counts;
}

inline std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// Indices into `ref` of one LCS between `ref` and `cand`.
inline std::vector<std::size_t> lcs_indices(const std::vector<std::string>& ref,
                                            const std::vector<std::string>& cand) {
  const std::size_t n = ref.size(), m = cand.size();
  std::vector<std::vector<std::size_t>> t(n + 1, std::vector<std::size_t>(m + 1, 0));
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      t[i][j] = ref[i - 1] == cand[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
  std::vector<std::size_t> idx;
  std::size_t i = n, j = m;
  while (i > 0 && j > 0) {
    if (ref[i - 1] == cand[j - 1]) {
      idx.push_back(i - 1);
      --i;
      --j;
    } else if (t[i][j - 1] > t[i - 1][j]) {
      --j;
    } else {
      --i;
    }
  }
  std::reverse(idx.begin(), idx.end());
  return idx;
}

}  // namespace detail

inline PrScore rouge_n_tokens(const std::vector<std::string>& pred, const std::vector<std::string>& gold,
                              std::size_t n) {
  const auto pc = detail::ngram_counts(pred, n);
  const auto gc = detail::ngram_counts(gold, n);
  std::size_t overlap = 0, pred_total = 0, gold_total = 0;
  for (const auto& [g, c] : pc) {
    pred_total += c;
    if (const auto it = gc.find(g); it != gc.end()) overlap += std::min(c, it->second);
  }
  for (const auto& [g, c] : gc) gold_total += c;
  return PrScore::from_counts(static_cast<double>(overlap), static_cast<double>(pred_total),
                              static_cast<double>(gold_total));
}

inline PrScore rouge_n(std::string_view pred, std::string_view gold, std::size_t n,
                       const RougeOptions& opts = {}) {
  if (n != 1 && n != 2) throw PreconditionError("rouge_n supports n = 1 or 2");
  return rouge_n_tokens(tokenize_for_rouge(pred, opts), tokenize_for_rouge(gold, opts), n);
}

inline PrScore rouge_l_tokens(const std::vector<std::string>& pred, const std::vector<std::string>& gold) {
  const auto lcs = static_cast<double>(detail::lcs_length(pred, gold));
  return PrScore::from_counts(lcs, static_cast<double>(pred.size()), static_cast<double>(gold.size()));
}

inline PrScore rouge_l(std::string_view pred, std::string_view gold, const RougeOptions& opts = {}) {
  return rouge_l_tokens(tokenize_for_rouge(pred, opts), tokenize_for_rouge(gold, opts));
}

// Splits on newlines, and after '.', '!' or '?' followed by whitespace or the
// end of text.
inline std::vector<std::string> split_sentences(std::string_view s) {
  std::vector<std::string> out;
  std::string current;
  auto push = [&] {
    if (!text::trim(current).empty()) out.emplace_back(text::trim(current));
    current.clear();
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    const char ch = s[i];
    if (ch == '\n' || ch == '\r') {
      push();
      continue;
    }
    current.push_back(ch);
    if ((ch == '.' || ch == '!' || ch == '?') && (i + 1 == s.size() || text::is_space(s[i + 1]))) push();
  }
  push();
  return out;
}

// Summary-level LCS: for each gold sentence, the union of its LCS matches
// against every predicted sentence; matched tokens are clipped by their
// overall counts on both sides.
inline PrScore rouge_lsum(std::string_view pred, std::string_view gold, const RougeOptions& opts = {}) {
  std::vector<std::vector<std::string>> pred_sents, gold_sents;
  for (const auto& s : split_sentences(pred)) {
    auto t = tokenize_for_rouge(s, opts);
    if (!t.empty()) pred_sents.push_back(std::move(t));
  }
  for (const auto& s : split_sentences(gold)) {
    auto t = tokenize_for_rouge(s, opts);
    if (!t.empty()) gold_sents.push_back(std::move(t));
  }
  std::unordered_map<std::string, std::size_t> pred_counts, gold_counts;
  std::size_t pred_total = 0, gold_total = 0;
  for (const auto& s : pred_sents)
    for (const auto& t : s) ++pred_counts[t], ++pred_total;
  for (const auto& s : gold_sents)
    for (const auto& t : s) ++gold_counts[t], ++gold_total;

  std::size_t hits = 0;
  for (const auto& ref : gold_sents) {
    std::set<std::size_t> uni;
    for (const auto& cand : pred_sents) {
      const auto idx = detail::lcs_indices(ref, cand);
      uni.insert(idx.begin(), idx.end());
    }
    for (std::size_t i : uni) {
      const auto& tok = ref[i];
      auto& g = gold_counts[tok];
      auto& p = pred_counts[tok];
      if (g > 0 && p > 0) {
        ++hits;
        --g;
        --p;
      }
    }
  }
  return PrScore::from_counts(static_cast<double>(hits), static_cast<double>(pred_total),
                              static_cast<double>(gold_total));
}

// ---- Embedding match -------------------------------------------------------

using Vector = std::vector<float>;

// Maps a text to one vector per token.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::vector<Vector> embed(std::string_view text) = 0;
  virtual std::string name() const = 0;
};

// One-hot vector per distinct token (shared vocabulary across calls), so the
// cosine of two tokens is 1 when equal and 0 otherwise. Vectors have varying
// length; missing trailing components are zero.
class OneHotEmbedder final : public Embedder {
 public:
  std::vector<Vector> embed(std::string_view s) override {
    std::vector<Vector> out;
    std::lock_guard lock(mu_);
    for (const auto& tok : tokenize_words(s)) {
      const auto [it, inserted] = vocab_.try_emplace(tok, vocab_.size());
      Vector v(it->second + 1, 0.0f);
      v[it->second] = 1.0f;
      out.push_back(std::move(v));
    }
    return out;
  }
  std::string name() const override { return "onehot"; }

 private:
  std::mutex mu_;
  std::unordered_map<std::string, std::size_t> vocab_;
};

// Character-trigram hashing into a fixed dimension. Offline stand-in for a
// contextual encoder: tokens sharing subwords get graded similarity.
class HashedTrigramEmbedder final : public Embedder {
 public:
  explicit HashedTrigramEmbedder(std::size_t dim = 256) : dim_(dim) {}

  std::vector<Vector> embed(std::string_view s) override {
    std::vector<Vector> out;
    for (const auto& tok : tokenize_words(s)) {
      Vector v(dim_, 0.0f);
      const std::string padded = "#" + tok + "#";
      for (std::size_t i = 0; i + 3 <= padded.size(); ++i)
        v[text::fnv1a(std::string_view(padded).substr(i, 3)) % dim_] += 1.0f;
      out.push_back(std::move(v));
    }
    return out;
  }
  std::string name() const override { return "hashed"; }

 private:
  std::size_t dim_;
};

struct HttpEmbedderOptions {
  std::string base;
  std::string path = "/embed";
  std::string token;
  std::chrono::milliseconds timeout{60000};
};

// POSTs {"text": ...}; accepts either a bare array of vectors or an object
// with an "embeddings" array.
class HttpEmbedder final : public Embedder {
 public:
  explicit HttpEmbedder(HttpEmbedderOptions opts)
      : opts_(std::move(opts)), endpoint_(http::parse_endpoint(opts_.base, opts_.path)) {}

  std::vector<Vector> embed(std::string_view s) override {
    const nlohmann::json body = {{"text", std::string(s)}};
    const auto reply = http::post_json(endpoint_, body.dump(), opts_.token, opts_.timeout);
    if (!reply.transport_ok) throw TransportError("embedding request failed: " + reply.transport_error);
    if (reply.status < 200 || reply.status >= 300)
      throw ProtocolError(reply.status, "embedding status " + std::to_string(reply.status) + ": " +
                                            http::excerpt(reply.body));
    return parse(reply.status, reply.body);
  }

  static std::vector<Vector> parse(int status, const std::string& raw) {
    const auto doc = nlohmann::json::parse(raw, nullptr, false);
    const nlohmann::json* arr = &doc;
    if (doc.is_object() && doc.contains("embeddings")) arr = &doc["embeddings"];
    if (doc.is_discarded() || !arr->is_array())
      throw ProtocolError(status, "embedding response is not an array of vectors");
    std::vector<Vector> out;
    for (const auto& row : *arr) {
      if (!row.is_array()) throw ProtocolError(status, "embedding row is not an array");
      Vector v;
      for (const auto& x : row) {
        if (!x.is_number()) throw ProtocolError(status, "embedding component is not a number");
        v.push_back(x.get<float>());
      }
      out.push_back(std::move(v));
    }
    return out;
  }

  std::string name() const override { return "http:" + endpoint_.host_port + endpoint_.path; }

 private:
  HttpEmbedderOptions opts_;
  http::Endpoint endpoint_;
};

namespace detail {

inline double cosine(const Vector& a, const Vector& b) {
  double dot = 0, na = 0, nb = 0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) dot += static_cast<double>(a[i]) * b[i];
  for (float x : a) na += static_cast<double>(x) * x;
  for (float x : b) nb += static_cast<double>(x) * x;
  if (na == 0 || nb == 0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// Mean over rows of `from` of the best cosine against any row of `to`.
inline double mean_best_match(const std::vector<Vector>& from, const std::vector<Vector>& to) {
  if (from.empty() || to.empty()) return 0.0;
  double total = 0;
  for (const auto& f : from) {
    double best = -1.0;
    for (const auto& t : to) best = std::max(best, cosine(f, t));
    total += best;
  }
  return std::clamp(total / static_cast<double>(from.size()), 0.0, 1.0);
}

}  // namespace detail

// Greedy token matching by cosine similarity without IDF weighting. Two
// empty texts count as a perfect match.
inline PrScore greedy_embedding_f1(std::string_view pred, std::string_view gold, Embedder& embedder) {
  const auto pv = embedder.embed(pred);
  const auto gv = embedder.embed(gold);
  if (pv.empty() && gv.empty()) return PrScore{1, 1, 1};
  const double r = detail::mean_best_match(gv, pv);
  const double p = detail::mean_best_match(pv, gv);
  return PrScore::from_pr(p, r);
}

// ---- Concepts --------------------------------------------------------------

// Normalized surface term -> concept identifier.
class ConceptLexicon {
 public:
  static std::string normalize(std::string_view term) { return text::join(tokenize_words(term), " "); }

  // Returns false when the term is already present (the first mapping wins).
  bool add(std::string_view term, std::string concept_id) {
    const std::string key = normalize(term);
    if (key.empty()) throw ConfigError("lexicon term is empty after normalization");
    if (text::trim(concept_id).empty()) throw ConfigError("lexicon concept id is empty for term: " + key);
    const auto tokens = static_cast<std::size_t>(std::count(key.begin(), key.end(), ' ') + 1);
    const auto [it, inserted] = entries_.try_emplace(key, std::string(text::trim(concept_id)));
    if (inserted) max_tokens_ = std::max(max_tokens_, tokens);
    return inserted;
  }

  // "term<TAB>concept_id" per line; blank lines and '#' comments skipped.
  static ConceptLexicon from_tsv(std::string_view data, Diagnostics* diag = nullptr) {
    ConceptLexicon lex;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= data.size()) {
      std::size_t end = data.find('\n', pos);
      if (end == std::string_view::npos) end = data.size();
      std::string_view line = data.substr(pos, end - pos);
      ++line_no;
      pos = end + 1;
      if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
      if (text::trim(line).empty() || text::trim(line).front() == '#') {
        if (end == data.size()) break;
        continue;
      }
      const auto tab = line.find('\t');
      if (tab == std::string_view::npos)
        throw ConfigError("lexicon line " + std::to_string(line_no) + " has no tab separator");
      const auto term = line.substr(0, tab);
      auto id = line.substr(tab + 1);
      if (const auto t2 = id.find('\t'); t2 != std::string_view::npos) id = id.substr(0, t2);
      if (!lex.add(term, std::string(id)))
        warn(diag, "lexicon line " + std::to_string(line_no) + ": duplicate term '" + normalize(term) +
                       "' ignored");
      if (end == data.size()) break;
    }
    return lex;
  }

  const std::string* lookup(const std::string& normalized) const {
    const auto it = entries_.find(normalized);
    return it == entries_.end() ? nullptr : &it->second;
  }

  std::size_t max_term_tokens() const { return max_tokens_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }

 private:
  std::unordered_map<std::string, std::string> entries_;
  std::size_t max_tokens_ = 0;
};

// Left-to-right greedy longest match over normalized tokens; a match consumes
// its tokens.
inline std::set<std::string> extract_concepts(std::string_view s, const ConceptLexicon& lexicon) {
  if (lexicon.empty()) throw PreconditionError("concept lexicon is empty");
  const auto tokens = tokenize_words(s);
  std::set<std::string> found;
  std::size_t i = 0;
  while (i < tokens.size()) {
    const std::size_t longest = std::min(lexicon.max_term_tokens(), tokens.size() - i);
    std::size_t matched = 0;
    std::string key;
    for (std::size_t len = longest; len >= 1; --len) {
      key = tokens[i];
      for (std::size_t k = 1; k < len; ++k) key += " " + tokens[i + k];
      if (const auto* id = lexicon.lookup(key)) {
        found.insert(*id);
        matched = len;
        break;
      }
    }
    i += matched > 0 ? matched : 1;
  }
  return found;
}

// Set overlap of extracted concepts. Both sets empty scores 1.0: there is
// nothing to disagree on.
inline PrScore concept_f1_sets(const std::set<std::string>& pred, const std::set<std::string>& gold) {
  if (pred.empty() && gold.empty()) return PrScore{1, 1, 1};
  std::size_t overlap = 0;
  for (const auto& c : pred) overlap += gold.contains(c) ? 1 : 0;
  return PrScore::from_counts(static_cast<double>(overlap), static_cast<double>(pred.size()),
                              static_cast<double>(gold.size()));
}

inline PrScore concept_f1(std::string_view pred, std::string_view gold, const ConceptLexicon& lexicon) {
  return concept_f1_sets(extract_concepts(pred, lexicon), extract_concepts(gold, lexicon));
}

// ---- Scoring & aggregation -------------------------------------------------

struct InstanceScores {
  std::string instance_id;
  PrScore rouge1, rouge2, rougeL, rougeLsum;
  std::optional<PrScore> embed;
  std::optional<PrScore> concept_score;
  std::vector<std::string> notes;
};

struct EvalOptions {
  RougeOptions rouge;
  Embedder* embedder = nullptr;             // no embedding metric when null
  const ConceptLexicon* lexicon = nullptr;  // no concept metric when null
};

inline InstanceScores score_instance(const std::string& instance_id, std::string_view pred,
                                     std::string_view gold, const EvalOptions& opts) {
  InstanceScores s;
  s.instance_id = instance_id;
  const auto pt = tokenize_for_rouge(pred, opts.rouge);
  const auto gt = tokenize_for_rouge(gold, opts.rouge);
  s.rouge1 = rouge_n_tokens(pt, gt, 1);
  s.rouge2 = rouge_n_tokens(pt, gt, 2);
  s.rougeL = rouge_l_tokens(pt, gt);
  s.rougeLsum = rouge_lsum(pred, gold, opts.rouge);
  if (opts.embedder != nullptr) {
    try {
      s.embed = greedy_embedding_f1(pred, gold, *opts.embedder);
    } catch (const std::exception& e) {
      s.notes.push_back(std::string("embedding metric unavailable: ") + e.what());
    }
  }
  if (opts.lexicon != nullptr) s.concept_score = concept_f1(pred, gold, *opts.lexicon);
  return s;
}

struct MetricMean {
  std::size_t count = 0;
  PrScore mean;
};

struct EvalReport {
  std::vector<InstanceScores> instances;
  std::map<std::string, MetricMean> macro;  // keyed by metric name
  std::size_t instance_count = 0;
  std::size_t failures = 0;
};

inline const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> names{"rouge1", "rouge2", "rougeL", "rougeLsum", "embed", "concept"};
  return names;
}

inline std::optional<PrScore> metric(const InstanceScores& s, const std::string& name) {
  if (name == "rouge1") return s.rouge1;
  if (name == "rouge2") return s.rouge2;
  if (name == "rougeL") return s.rougeL;
  if (name == "rougeLsum") return s.rougeLsum;
  if (name == "embed") return s.embed;
  if (name == "concept") return s.concept_score;
  return std::nullopt;
}

// Unweighted mean over the instances carrying each metric. Values are summed
// in sorted order so the result does not depend on instance order.
inline EvalReport aggregate(std::vector<InstanceScores> scored, std::size_t failures = 0) {
  EvalReport report;
  report.instance_count = scored.size();
  report.failures = failures;
  for (const auto& name : metric_names()) {
    std::vector<double> p, r, f;
    for (const auto& s : scored) {
      if (const auto m = metric(s, name)) {
        p.push_back(m->precision);
        r.push_back(m->recall);
        f.push_back(m->f1);
      }
    }
    if (p.empty()) continue;
    auto mean = [](std::vector<double> v) {
      std::sort(v.begin(), v.end());
      double sum = 0;
      for (double x : v) sum += x;
      return sum / static_cast<double>(v.size());
    };
    report.macro[name] = MetricMean{p.size(), PrScore{mean(p), mean(r), mean(f)}};
  }
  report.instances = std::move(scored);
  return report;
}

// Scores ×100, one column per metric.
inline std::string format_report_table(const std::vector<std::pair<std::string, EvalReport>>& rows) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-24s %8s %8s %8s %8s %8s %8s %8s %8s %8s\n", "Run", "R-1", "R-2", "R-L",
                "R-Lsum", "Emb-P", "Emb-R", "Emb-F1", "Concept", "n");
  out += buf;
  for (const auto& [label, rep] : rows) {
    auto cell = [&](const std::string& m, int which) -> std::string {
      const auto it = rep.macro.find(m);
      if (it == rep.macro.end()) return "-";
      const auto& s = it->second.mean;
      const double v = which == 0 ? s.precision : which == 1 ? s.recall : s.f1;
      char b[32];
      std::snprintf(b, sizeof b, "%.2f", v * 100.0);
      return b;
    };
    std::snprintf(buf, sizeof buf, "%-24s %8s %8s %8s %8s %8s %8s %8s %8s %8zu\n", label.c_str(),
                  cell("rouge1", 2).c_str(), cell("rouge2", 2).c_str(), cell("rougeL", 2).c_str(),
                  cell("rougeLsum", 2).c_str(), cell("embed", 0).c_str(), cell("embed", 1).c_str(),
                  cell("embed", 2).c_str(), cell("concept", 2).c_str(), rep.instance_count);
    out += buf;
  }
  return out;
}

}  // namespace notegen

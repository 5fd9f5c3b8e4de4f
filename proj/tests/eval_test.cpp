#include <gtest/gtest.h>

#include <random>

#include "notegen/eval.hpp"
#include "notegen/io.hpp"
#include "test_support.hpp"

using namespace notegen;

namespace {

constexpr double kTol = 1e-9;

double ratio(std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); }

double f1(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

ConceptLexicon small_lexicon() {
  ConceptLexicon lex;
  lex.add("atrial fibrillation", "C1");
  lex.add("fibrillation", "C2");
  lex.add("septic shock", "C3");
  return lex;
}

}  // namespace

TEST(Tokenize, LowercaseAlnumRuns) {
  EXPECT_EQ(tokenize_words("Pt's BP: 120/80, HR=92."),
            (std::vector<std::string>{"pt", "s", "bp", "120", "80", "hr", "92"}));
  EXPECT_EQ(tokenize_words("caf\xC3\xA9 ok"), (std::vector<std::string>{"caf\xC3\xA9", "ok"}));
}

TEST(Porter, ReferenceVectors) {
  PorterStemmer s;
  const std::vector<std::pair<std::string, std::string>> cases{
      {"caresses", "caress"},  {"ponies", "poni"},         {"ties", "ti"},          {"caress", "caress"},
      {"cats", "cat"},         {"feed", "feed"},           {"agreed", "agre"},      {"plastered", "plaster"},
      {"motoring", "motor"},   {"sing", "sing"},           {"conflated", "conflat"}, {"troubled", "troubl"},
      {"sized", "size"},       {"hopping", "hop"},         {"tanned", "tan"},       {"falling", "fall"},
      {"hissing", "hiss"},     {"fizzed", "fizz"},         {"failing", "fail"},     {"filing", "file"},
      {"happy", "happi"},      {"sky", "sky"},             {"relational", "relat"}, {"conditional", "condit"},
      {"rational", "ration"},  {"digitizer", "digit"},     {"operator", "oper"},    {"feudalism", "feudal"},
      {"decisiveness", "decis"}, {"hopefulness", "hope"}, {"callousness", "callous"}, {"formative", "form"},
      {"formalize", "formal"}, {"electrical", "electr"},   {"hopeful", "hope"},     {"goodness", "good"},
      {"revival", "reviv"},    {"allowance", "allow"},     {"inference", "infer"},  {"airliner", "airlin"},
      {"adjustable", "adjust"}, {"defensible", "defens"},  {"replacement", "replac"}, {"adoption", "adopt"},
      {"communism", "commun"}, {"activate", "activ"},      {"effective", "effect"}, {"probate", "probat"},
      {"rate", "rate"},        {"cease", "ceas"},          {"controll", "control"}, {"roll", "roll"},
      {"generalizations", "gener"}, {"oscillators", "oscil"}, {"conformabli", "conform"},
      {"analogousli", "analog"}, {"sensibiliti", "sensibl"}};
  for (const auto& [in, out] : cases) EXPECT_EQ(s.stem(in), out) << in;
}

TEST(RougeOptions, StemOnlyLongTokensAndStopwords) {
  RougeOptions o{true, false};
  EXPECT_EQ(tokenize_for_rouge("the cats ties", o), (std::vector<std::string>{"the", "cat", "ti"}));
  EXPECT_EQ(tokenize_for_rouge("was ties", RougeOptions{true, false})[0], "was");
  EXPECT_EQ(tokenize_for_rouge("the cats", RougeOptions{false, true}), std::vector<std::string>{"cats"});
  EXPECT_DOUBLE_EQ(rouge_n("running fast", "runs fast", 1, o).f1, 1.0);
}

TEST(Rouge, WorkedExamples) {
  const auto r1 = rouge_n("the cat sat", "the cat sat on the mat", 1);
  EXPECT_NEAR(r1.precision, 1.0, kTol);
  EXPECT_NEAR(r1.recall, 0.5, kTol);
  EXPECT_NEAR(r1.f1, 2.0 / 3.0, kTol);
  const auto r2 = rouge_n("the cat sat", "the cat sat on the mat", 2);
  EXPECT_NEAR(r2.precision, 1.0, kTol);
  EXPECT_NEAR(r2.recall, 0.4, kTol);
  EXPECT_DOUBLE_EQ(rouge_n("", "abc", 1).f1, 0.0);
  EXPECT_DOUBLE_EQ(rouge_n("abc", "", 1).f1, 0.0);
  EXPECT_THROW(rouge_n("a", "a", 3), PreconditionError);
  const auto l = rouge_l("a b c d", "a x c d e");
  EXPECT_NEAR(l.precision, 0.75, kTol);
  EXPECT_NEAR(l.recall, 0.6, kTol);
}

TEST(Rouge, ClippedCounts) {
  const auto r = rouge_n("the the the the", "the cat", 1);
  EXPECT_NEAR(r.precision, 0.25, kTol);
  EXPECT_NEAR(r.recall, 0.5, kTol);
}

TEST(Rouge, MatchesBruteForceOracle) {
  std::mt19937 rng(99);
  for (int i = 0; i < 300; ++i) {
    const auto p = tsupport::random_tokens(rng, 10, 5);
    const auto g = tsupport::random_tokens(rng, 10, 5);
    for (std::size_t n : {1u, 2u}) {
      const auto got = rouge_n_tokens(p, g, n);
      const auto hits = tsupport::ngram_overlap_bruteforce(p, g, n);
      const double pp = ratio(hits, tsupport::ngram_total(p, n)), rr = ratio(hits, tsupport::ngram_total(g, n));
      EXPECT_NEAR(got.precision, pp, kTol);
      EXPECT_NEAR(got.recall, rr, kTol);
      EXPECT_NEAR(got.f1, f1(pp, rr), kTol);
    }
    const auto lcs = tsupport::lcs_recursive(p, g);
    const auto got = rouge_l_tokens(p, g);
    EXPECT_NEAR(got.precision, ratio(lcs, p.size()), kTol);
    EXPECT_NEAR(got.recall, ratio(lcs, g.size()), kTol);
  }
}

TEST(Rouge, Invariants) {
  std::mt19937 rng(5);
  for (int i = 0; i < 200; ++i) {
    auto p = tsupport::random_tokens(rng, 10, 6);
    const auto g = tsupport::random_tokens(rng, 10, 6);
    if (!g.empty()) {
      EXPECT_NEAR(rouge_n_tokens(g, g, 1).f1, 1.0, kTol);
      EXPECT_NEAR(rouge_l_tokens(g, g).f1, 1.0, kTol);
    }
    for (auto* s : {&p}) {
      const auto a = rouge_n_tokens(*s, g, 1), b = rouge_n_tokens(g, *s, 1);
      EXPECT_NEAR(a.precision, b.recall, kTol);
      EXPECT_NEAR(a.f1, b.f1, kTol);
    }
    // Appending tokens absent from gold never raises precision.
    auto longer = p;
    longer.push_back("zzz-not-in-gold");
    EXPECT_LE(rouge_n_tokens(longer, g, 1).precision, rouge_n_tokens(p, g, 1).precision + kTol);
    EXPECT_LE(rouge_l_tokens(longer, g).precision, rouge_l_tokens(p, g).precision + kTol);
  }
}

TEST(RougeLsum, SentenceSplitAndUnionLcs) {
  EXPECT_EQ(split_sentences("A b. C d!\nE f"), (std::vector<std::string>{"A b.", "C d!", "E f"}));
  EXPECT_EQ(split_sentences("v 1.5 mg"), std::vector<std::string>{"v 1.5 mg"});
  // gold sentence "a b c d"; predictions "a b" and "c d" together cover it.
  const auto s = rouge_lsum("a b.\nc d.", "a b c d.");
  EXPECT_NEAR(s.recall, 1.0, kTol);
  EXPECT_NEAR(s.precision, 1.0, kTol);
  EXPECT_LT(rouge_l("a b.\nc d x.", "c d a b.").f1, 1.0);
  EXPECT_NEAR(rouge_lsum("Sepsis. AKI.", "Sepsis. AKI.").f1, 1.0, kTol);
}

TEST(RougeLsum, ClipsRepeatedMatches) {
  // Both predicted sentences match the same gold token; it counts once.
  const auto s = rouge_lsum("x.\nx.", "x.");
  EXPECT_NEAR(s.recall, 1.0, kTol);
  EXPECT_NEAR(s.precision, 0.5, kTol);
}

TEST(Embedding, OneHotIdentityAndDisjoint) {
  OneHotEmbedder e;
  EXPECT_NEAR(greedy_embedding_f1("septic shock improving", "septic shock improving", e).f1, 1.0, kTol);
  EXPECT_NEAR(greedy_embedding_f1("alpha", "beta", e).f1, 0.0, kTol);
  const auto half = greedy_embedding_f1("alpha beta", "alpha", e);
  EXPECT_NEAR(half.precision, 0.5, kTol);
  EXPECT_NEAR(half.recall, 1.0, kTol);
  EXPECT_NEAR(greedy_embedding_f1("", "", e).f1, 1.0, kTol);
  EXPECT_NEAR(greedy_embedding_f1("", "x", e).f1, 0.0, kTol);
}

TEST(Embedding, HashedTrigramGradedSimilarity) {
  HashedTrigramEmbedder e;
  const double same = greedy_embedding_f1("fibrillation", "fibrillation", e).f1;
  const double near = greedy_embedding_f1("fibrillation", "fibrillating", e).f1;
  const double far = greedy_embedding_f1("fibrillation", "zq", e).f1;
  EXPECT_NEAR(same, 1.0, 1e-6);
  EXPECT_GT(near, far);
  EXPECT_LT(near, 1.0);
}

TEST(Embedding, HttpParseShapes) {
  EXPECT_EQ(HttpEmbedder::parse(200, "[[1,0],[0,1]]").size(), 2u);
  EXPECT_EQ(HttpEmbedder::parse(200, R"({"embeddings":[[0.5]]})")[0][0], 0.5f);
  EXPECT_THROW(HttpEmbedder::parse(200, R"({"x":1})"), ProtocolError);
  EXPECT_THROW(HttpEmbedder::parse(200, "[[\"a\"]]"), ProtocolError);
}

TEST(Concepts, LongestMatchTrace) {
  const auto lex = small_lexicon();
  EXPECT_EQ(extract_concepts("atrial fibrillation noted", lex), std::set<std::string>{"C1"});
  EXPECT_EQ(extract_concepts("fibrillation noted", lex), std::set<std::string>{"C2"});
  EXPECT_EQ(extract_concepts("Atrial Fibrillation, then fibrillation again", lex),
            (std::set<std::string>{"C1", "C2"}));
  EXPECT_EQ(extract_concepts("atrial flutter", lex), std::set<std::string>{});
  EXPECT_EQ(extract_concepts("septic shock; septic shock", lex), std::set<std::string>{"C3"});
  EXPECT_THROW(extract_concepts("x", ConceptLexicon{}), PreconditionError);
}

TEST(Concepts, SetF1) {
  const auto s = concept_f1_sets({"C1", "C2"}, {"C1", "C3"});
  EXPECT_EQ(s.precision, 0.5);
  EXPECT_EQ(s.recall, 0.5);
  EXPECT_EQ(s.f1, 0.5);
  EXPECT_EQ(concept_f1_sets({"C1"}, {"C1"}).f1, 1.0);
  EXPECT_EQ(concept_f1_sets({}, {"C1"}).f1, 0.0);
  EXPECT_EQ(concept_f1_sets({}, {}).f1, 1.0);
}

TEST(Concepts, LexiconTsv) {
  Diagnostics diag;
  const auto lex = ConceptLexicon::from_tsv("# c\nAtrial  Fibrillation\tC1\n\nanemia\tC9\textra\natrial fibrillation\tC7\n", &diag);
  EXPECT_EQ(lex.size(), 2u);
  EXPECT_EQ(*lex.lookup("atrial fibrillation"), "C1");
  EXPECT_EQ(diag.warnings.size(), 1u);
  EXPECT_EQ(lex.max_term_tokens(), 2u);
  EXPECT_THROW(ConceptLexicon::from_tsv("no tab here\n"), ConfigError);
  const auto fixture = ConceptLexicon::from_tsv(io::read_file(tsupport::fixture("lexicon.tsv")));
  EXPECT_FALSE(fixture.empty());
}

TEST(Aggregate, MacroMeanAndOrderIndependence) {
  std::vector<InstanceScores> v;
  for (int i = 0; i < 5; ++i) {
    InstanceScores s;
    s.instance_id = std::to_string(i);
    s.rouge1 = PrScore::from_pr(0.1 * i, 0.2);
    if (i % 2 == 0) s.embed = PrScore{1, 1, 1};
    v.push_back(s);
  }
  const auto a = aggregate(v, 1);
  std::reverse(v.begin(), v.end());
  const auto b = aggregate(v, 1);
  EXPECT_EQ(a.macro.at("rouge1").mean, b.macro.at("rouge1").mean);
  EXPECT_NEAR(a.macro.at("rouge1").mean.precision, 0.2, kTol);
  EXPECT_EQ(a.macro.at("embed").count, 3u);
  EXPECT_FALSE(a.macro.contains("concept"));
  EXPECT_EQ(a.failures, 1u);
  char expected[32];
  std::snprintf(expected, sizeof expected, "%.2f", a.macro.at("rouge1").mean.f1 * 100);
  const auto table = format_report_table({{"run", a}});
  EXPECT_NE(table.find(expected), std::string::npos);
  EXPECT_NE(table.find("100.00"), std::string::npos);
}

TEST(ScoreInstance, IdentityScoresOne) {
  OneHotEmbedder e;
  const auto lex = small_lexicon();
  const std::string t = "Septic shock: continue pressors.\nAtrial fibrillation: rate control.";
  const auto s = score_instance("x", t, t, EvalOptions{{}, &e, &lex});
  EXPECT_NEAR(s.rouge1.f1, 1.0, kTol);
  EXPECT_NEAR(s.rouge2.f1, 1.0, kTol);
  EXPECT_NEAR(s.rougeL.f1, 1.0, kTol);
  EXPECT_NEAR(s.rougeLsum.f1, 1.0, kTol);
  EXPECT_NEAR(s.embed->f1, 1.0, kTol);
  EXPECT_NEAR(s.concept_score->f1, 1.0, kTol);
}

TEST(ScoreInstance, EmbedderFailureLeavesMetricAbsent) {
  struct Broken : Embedder {
    std::vector<Vector> embed(std::string_view) override { throw TransportError("down"); }
    std::string name() const override { return "broken"; }
  } broken;
  const auto s = score_instance("x", "a", "a", EvalOptions{{}, &broken, nullptr});
  EXPECT_FALSE(s.embed);
  EXPECT_EQ(s.notes.size(), 1u);
}

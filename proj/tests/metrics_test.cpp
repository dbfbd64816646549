#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <map>

#include "refute/metrics.hpp"
#include "support.hpp"

namespace refute::metrics {
namespace {

using Tokens = std::vector<std::string>;

// Multiset oracle: explicit n-gram counts, overlap = sum of minimum counts.
std::size_t oracle_overlap(const Tokens& c, const Tokens& r, std::size_t n) {
  auto grams = [&](const Tokens& t) {
    std::map<Tokens, std::size_t> m;
    for (std::size_t i = 0; i + n <= t.size(); ++i) ++m[Tokens(t.begin() + i, t.begin() + i + n)];
    return m;
  };
  auto gc = grams(c), gr = grams(r);
  std::size_t o = 0;
  for (const auto& [g, k] : gc)
    if (auto it = gr.find(g); it != gr.end()) o += std::min(k, it->second);
  return o;
}

// Memoized recursive LCS.
std::size_t oracle_lcs(const Tokens& a, const Tokens& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  std::function<std::size_t(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> std::size_t {
    if (i == a.size() || j == b.size()) return 0;
    auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::size_t v = a[i] == b[j] ? 1 + go(i + 1, j + 1) : std::max(go(i + 1, j), go(i, j + 1));
    return memo[key] = v;
  };
  return go(0, 0);
}

Tokens random_tokens(Rng& rng, std::size_t max_len) {
  static const Tokens alphabet = {"a", "b", "c", "d", "e"};
  Tokens t(uniform_index(rng, max_len + 1));
  for (auto& x : t) x = alphabet[uniform_index(rng, alphabet.size())];
  return t;
}

TEST(Tokenize, LowercasesAndDropsPunctuation) {
  EXPECT_EQ(tokenize_for_rouge("The cat, sat."), (Tokens{"the", "cat", "sat"}));
  EXPECT_EQ(tokenize_for_rouge("\xe2\x80\x9cQuoted\xe2\x80\x9d \xe2\x80\x94 text"), (Tokens{"quoted", "text"}));
  EXPECT_EQ(tokenize_for_rouge("\xc2\xabguillemets\xc2\xbb"), (Tokens{"guillemets"}));
  for (std::string s : {"The cat, sat.", "A-b c!", "  x  "}) {
    auto once = tokenize_for_rouge(s);
    std::string joined;
    for (const auto& t : once) joined += t + " ";
    EXPECT_EQ(tokenize_for_rouge(joined), once);
  }
}

TEST(Rouge, HandPairs) {
  auto r1 = rouge_n("the cat sat on the mat", "the cat sat on a mat", 1);
  EXPECT_EQ(r1.overlap, 5u);
  EXPECT_NEAR(r1.f1(), 5.0 / 6.0, 1e-12);
  auto r2 = rouge_n("the cat sat on the mat", "the cat sat on a mat", 2);
  EXPECT_EQ(r2.overlap, 3u);
  EXPECT_NEAR(r2.precision(), 3.0 / 5.0, 1e-12);
  auto l = rouge_l("a b c d", "a c b d");
  EXPECT_EQ(l.overlap, 3u);
  EXPECT_NEAR(l.f1(), 3.0 / 4.0, 1e-12);
  EXPECT_DOUBLE_EQ(rouge_n("x y", "x y", 1).f1(), 1.0);
  EXPECT_DOUBLE_EQ(rouge_n("x y", "z w", 1).f1(), 0.0);
  EXPECT_DOUBLE_EQ(rouge_n("", "z w", 1).f1(), 0.0);
  EXPECT_DOUBLE_EQ(rouge_n("a", "a", 2).f1(), 0.0);
  EXPECT_NEAR(rouge_n("a a a", "a", 1).precision(), 1.0 / 3.0, 1e-12);
  EXPECT_THROW(rouge_n("a", "a", 0), Error);
}

TEST(Rouge, MatchesMultisetAndLcsOracles) {
  Rng rng(31);
  for (int t = 0; t < 200; ++t) {
    auto c = random_tokens(rng, 12), r = random_tokens(rng, 12);
    for (std::size_t n : {1, 2, 3}) {
      auto s = rouge_n(c, r, n);
      std::size_t o = oracle_overlap(c, r, n);
      EXPECT_EQ(s.overlap, o);
      EXPECT_EQ(s.candidate_total, c.size() >= n ? c.size() - n + 1 : 0);
      double cand = static_cast<double>(s.candidate_total), ref = static_cast<double>(s.reference_total);
      double p = cand > 0 ? o / cand : 0, rc = ref > 0 ? o / ref : 0;
      EXPECT_NEAR(s.f1(), p + rc > 0 ? 2 * p * rc / (p + rc) : 0.0, 1e-12);
      EXPECT_NEAR(rouge_n(r, c, n).f1(), s.f1(), 1e-12);
    }
    EXPECT_EQ(lcs_length(c, r), oracle_lcs(c, r));
    EXPECT_EQ(lcs_length(r, c), lcs_length(c, r));
    EXPECT_NEAR(rouge_l(c, r).f1(), rouge_l(r, c).f1(), 1e-12);
  }
}

TEST(BertScoreTest, IdentityIsOne) {
  HashedEmbedder e;
  auto s = bertscore("The mayor tripled spending.", "the mayor tripled spending", e);
  EXPECT_NEAR(s.precision, 1.0, 1e-12);
  EXPECT_NEAR(s.recall, 1.0, 1e-12);
  EXPECT_NEAR(s.f1, 1.0, 1e-12);
  EXPECT_TRUE(s.warnings.empty());
}

TEST(BertScoreTest, HandCasesWithLookupTable) {
  LookupEmbedder e({{"a", {1, 0}}, {"b", {0, 1}}, {"c", {2, 0}}}, "hand");
  EXPECT_EQ(e.dim(), 2u);
  auto orth = bertscore("a a", "b", e);
  EXPECT_NEAR(orth.f1, 0.0, 1e-12);
  auto two = bertscore("a b", "a", e);
  EXPECT_NEAR(two.precision, 0.5, 1e-12);
  EXPECT_NEAR(two.recall, 1.0, 1e-12);
  EXPECT_NEAR(two.f1, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(bertscore("c", "a", e).f1, 1.0, 1e-12);  // cosine ignores length
  EXPECT_NEAR(bertscore("zzz", "zzz", e).f1, 1.0, 1e-12);
  EXPECT_NEAR(bertscore("zzz", "a", e).f1, 0.0, 1e-12);
  auto empty = bertscore("", "a", e);
  EXPECT_EQ(empty.f1, 0.0);
  EXPECT_EQ(empty.warnings.size(), 1u);
}

TEST(BertScoreTest, LookupLoadsTextTable) {
  testing::TempDir dir;
  write_file_atomic(dir / "emb.txt", "a 1 0\nb 0 1\n");
  auto e = LookupEmbedder::load_text(dir / "emb.txt");
  EXPECT_EQ(e.dim(), 2u);
  EXPECT_NEAR(bertscore("a", "b", e).f1, 0.0, 1e-12);
  write_file_atomic(dir / "bad.txt", "a 1 0\nb 0\n");
  EXPECT_THROW(LookupEmbedder::load_text(dir / "bad.txt"), Error);
}

TEST(BertScoreTest, HashedEmbedderIsDeterministicUnitNorm) {
  HashedEmbedder e(16, 5);
  auto v = e.embed({"alpha", "beta", "alpha"});
  ASSERT_EQ(v.size(), 3u);
  EXPECT_EQ(v[0], v[2]);
  double n = 0;
  for (double x : v[1]) n += x * x;
  EXPECT_NEAR(n, 1.0, 1e-12);
  EXPECT_EQ(HashedEmbedder(16, 5).embed({"alpha"})[0], v[0]);
}

TEST(JudgeTemplatesTest, ShippedFilesMatchBuiltins) {
  auto b = JudgeTemplates::builtin();
  for (const auto* t : {&b.correctness, &b.completeness}) {
    auto f = JudgeTemplate::load(std::filesystem::path(REFUTE_SOURCE_DIR) / "templates" / (t->id + ".txt"));
    EXPECT_EQ(f.id, t->id);
    EXPECT_EQ(f.body, t->body);
  }
  auto r = b.correctness.render("JUST", "REF");
  EXPECT_NE(r.find("JUST"), std::string::npos);
  EXPECT_NE(r.find("REF"), std::string::npos);
  EXPECT_EQ(r.find("{{"), std::string::npos);
}

TEST(Judge, ParsesScores) {
  EXPECT_EQ(parse_score("0.7"), 0.7);
  EXPECT_EQ(parse_score("Score: 0.85."), 0.85);
  EXPECT_EQ(parse_score("1"), 1.0);
  EXPECT_EQ(parse_score(".5"), 0.5);
  EXPECT_FALSE(parse_score("excellent"));
}

TEST(Judge, ScoresClampsAndGivesUp) {
  FunctionOracle ok([](const std::string&) { return "0.7"; });
  auto s = judge_justification("j", "r", ok);
  EXPECT_EQ(s.correctness, 0.7);
  EXPECT_EQ(s.completeness, 0.7);
  EXPECT_TRUE(s.judged());
  EXPECT_EQ(ok.calls(), 2u);

  FunctionOracle high([](const std::string&) { return "1.4"; });
  auto h = judge_justification("j", "r", high);
  EXPECT_EQ(h.correctness, 1.0);
  EXPECT_EQ(h.warnings.size(), 2u);

  FunctionOracle prose([](const std::string&) { return "It is quite good."; });
  auto p = judge_justification("j", "r", prose);
  EXPECT_FALSE(p.judged());
  EXPECT_FALSE(p.correctness);
  EXPECT_EQ(prose.calls(), 4u);
  EXPECT_EQ(p.raw_responses.size(), 4u);
}

TEST(Judge, SeparateDimensionsAndUnreachableJudge) {
  FunctionOracle split([](const std::string& p) {
    return p.find("Score correctness") != std::string::npos ? "0.2" : "0.9";
  });
  auto s = judge_justification("j", "r", split);
  EXPECT_EQ(s.correctness, 0.2);
  EXPECT_EQ(s.completeness, 0.9);

  struct Down : Oracle {
    OracleResponse send(const OracleRequest&) override { throw TransportError("refused"); }
    std::string id() const override { return "down"; }
  } down;
  auto d = judge_justification("j", "r", down, JudgeTemplates::builtin(), 0);
  EXPECT_FALSE(d.judged());
  EXPECT_EQ(d.warnings.size(), 2u);
  auto j = to_json(d);
  EXPECT_TRUE(j.at("correctness").is_null());
}

TEST(Aggregate, PerLabelMeans) {
  using corpus::VeracityLabel;
  auto one = per_label_report({{VeracityLabel::True, {{"rouge1", 0.5}}}});
  EXPECT_EQ(one.cells.at("rouge1")[3], 0.5);
  EXPECT_FALSE(one.cells.at("rouge1")[0]);

  auto two = per_label_report({{VeracityLabel::False, {{"m", 0.2}}},
                               {VeracityLabel::False, {{"m", 0.4}}},
                               {VeracityLabel::Unproven, {}}});
  EXPECT_NEAR(*two.cells.at("m")[0], 0.3, 1e-15);
  EXPECT_EQ(two.counts.at("m")[0], 2u);
  EXPECT_FALSE(two.cells.at("m")[2]);

  auto fixed = per_label_report({{VeracityLabel::False, {{"m", 1.0}}}}, {"m", "other"});
  EXPECT_EQ(fixed.metrics, (std::vector<std::string>{"m", "other"}));
  EXPECT_FALSE(fixed.cells.at("other")[0]);
}

TEST(Aggregate, PermutationInvariantToTheBit) {
  Rng rng(12);
  std::vector<ScoredItem> items;
  for (int i = 0; i < 300; ++i)
    items.push_back({corpus::kAllLabels[uniform_index(rng, 4)], {{"m", uniform01(rng) * 1e-3 + uniform01(rng)}}});
  auto base = per_label_report(items);
  for (int t = 0; t < 10; ++t) {
    shuffle(items, rng);
    auto r = per_label_report(items);
    EXPECT_EQ(r.cells, base.cells);
  }
  auto table = format_per_label_table({{"RefuteClaim-7F", base}});
  EXPECT_NE(table.find("RefuteClaim-7F"), std::string::npos);
  EXPECT_EQ(per_label_table_json({{"RefuteClaim-7F", base}}).size(), 1u);
}

}  // namespace
}  // namespace refute::metrics

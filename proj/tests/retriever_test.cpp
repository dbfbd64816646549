#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "refute/retriever.hpp"
#include "support.hpp"

namespace refute::retriever {
namespace {

// Independent scalar oracle: plain sums of exponentials, long double.
double oracle_nll(const Vector& c, const std::vector<Vector>& pos, const std::vector<Vector>& neg, std::size_t t) {
  auto dot = [&](const Vector& x) {
    long double s = 0;
    for (std::size_t i = 0; i < c.size(); ++i) s += static_cast<long double>(c[i]) * x[i];
    return s;
  };
  long double denom = 0;
  for (const auto& p : pos) denom += std::exp(dot(p));
  for (const auto& n : neg) denom += std::exp(dot(n));
  return static_cast<double>(-std::log(std::exp(dot(pos[t])) / denom));
}

Vector random_vec(Rng& rng, std::size_t d, double scale = 1.0) {
  Vector v(d);
  for (auto& x : v) x = normal(rng, 0.0, scale);
  return v;
}

TEST(Similarity, DotProduct) {
  EXPECT_EQ(similarity(Vector{1, 0}, Vector{0, 1}), 0.0);
  EXPECT_EQ(similarity(Vector{1, 2}, Vector{3, 4}), 11.0);
  EXPECT_THROW(similarity(Vector{1, 2}, Vector{1}), Error);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    auto a = random_vec(rng, 7), b = random_vec(rng, 7);
    EXPECT_EQ(similarity(a, b), similarity(b, a));
  }
}

TEST(Nll, HandExamples) {
  EXPECT_NEAR(nll_loss({0.3, -1.2}, {{2.0, 5.0}}, {}, 0), 0.0, 1e-12);
  EXPECT_NEAR(nll_loss({1, 0}, {{0.7, 3}}, {{0.7, -2}}, 0), std::log(2.0), 1e-12);
  EXPECT_NEAR(nll_loss({1, 0}, {{1, 0}}, {{0, 1}}, 0), std::log1p(std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(nll_loss({1, 0}, {{1, 0}}, {{0, 1}}, 0), 0.313262, 1e-6);
  EXPECT_THROW(nll_loss({1}, {}, {{1}}, 0), Error);
  EXPECT_THROW(nll_loss({1}, {{1}}, {}, 1), Error);
}

TEST(Nll, MatchesScalarOracleAndIsShiftInvariant) {
  Rng rng(2);
  for (int t = 0; t < 200; ++t) {
    std::size_t d = 1 + uniform_index(rng, 8), a = 1 + uniform_index(rng, 4), b = uniform_index(rng, 9);
    auto c = random_vec(rng, d);
    std::vector<Vector> pos, neg;
    for (std::size_t i = 0; i < a; ++i) pos.push_back(random_vec(rng, d));
    for (std::size_t i = 0; i < b; ++i) neg.push_back(random_vec(rng, d));
    std::size_t target = uniform_index(rng, a);
    double l = nll_loss(c, pos, neg, target);
    EXPECT_NEAR(l, oracle_nll(c, pos, neg, target), 1e-9);
    EXPECT_GE(l, 0.0);

    // Appending a coordinate where the claim is 1 and every candidate holds
    // the same value adds that constant to every similarity.
    double shift = uniform(rng, -20, 20);
    auto c2 = c;
    c2.push_back(1.0);
    auto p2 = pos, n2 = neg;
    for (auto& v : p2) v.push_back(shift);
    for (auto& v : n2) v.push_back(shift);
    EXPECT_NEAR(nll_loss(c2, p2, n2, target), l, 1e-9);
  }
}

TEST(Nll, LargeSimilaritiesStayFinite) {
  double l = nll_loss({1}, {{800}}, {{790}}, 0);
  EXPECT_TRUE(std::isfinite(l));
  EXPECT_NEAR(l, std::log1p(std::exp(-10.0)), 1e-12);
}

TEST(Nll, GradientMatchesCentralDifferences) {
  Rng rng(3);
  const double h = 1e-5;
  for (int t = 0; t < 50; ++t) {
    std::size_t d = 1 + uniform_index(rng, 8), a = 1 + uniform_index(rng, 4), b = uniform_index(rng, 9);
    auto c = random_vec(rng, d, 0.7);
    std::vector<Vector> pos, neg;
    for (std::size_t i = 0; i < a; ++i) pos.push_back(random_vec(rng, d, 0.7));
    for (std::size_t i = 0; i < b; ++i) neg.push_back(random_vec(rng, d, 0.7));
    std::size_t target = uniform_index(rng, a);
    auto g = nll_loss_grad(c, pos, neg, target);
    EXPECT_NEAR(g.loss, nll_loss(c, pos, neg, target), 1e-12);

    auto check = [&](double& x, double analytic) {
      double keep = x;
      x = keep + h;
      double up = nll_loss(c, pos, neg, target);
      x = keep - h;
      double down = nll_loss(c, pos, neg, target);
      x = keep;
      double numeric = (up - down) / (2 * h);
      double err = std::abs(numeric - analytic) / std::max(1e-6, std::abs(numeric) + std::abs(analytic));
      EXPECT_LT(err, 1e-4) << numeric << " vs " << analytic;
    };
    for (std::size_t i = 0; i < d; ++i) check(c[i], g.claim[i]);
    for (std::size_t j = 0; j < a; ++j)
      for (std::size_t i = 0; i < d; ++i) check(pos[j][i], g.positives[j][i]);
    for (std::size_t j = 0; j < b; ++j)
      for (std::size_t i = 0; i < d; ++i) check(neg[j][i], g.negatives[j][i]);
  }
}

TEST(Encoder, IdentityVocabularyGivesBasisVectors) {
  EncoderConfig cfg;
  cfg.dim = 3;
  BagOfWordsEncoder enc(cfg, {1, 0, 0, 0, 1, 0, 0, 0, 1}, {{"a", 0}, {"b", 1}, {"c", 2}});
  EXPECT_EQ(enc.encode("a"), (Vector{1, 0, 0}));
  EXPECT_EQ(enc.encode("A, b!"), (Vector{0.5, 0.5, 0}));
  EXPECT_EQ(enc.encode("zzz"), (Vector{0, 0, 0}));
}

TEST(Encoder, DeterministicAndFinite) {
  EncoderConfig cfg;
  cfg.dim = 16;
  cfg.buckets = 512;
  auto enc = BagOfWordsEncoder::random(cfg, 9);
  auto v = enc.encode("The mayor tripled spending");
  EXPECT_EQ(v.size(), 16u);
  EXPECT_EQ(v, enc.encode("The mayor tripled spending"));
  for (double x : v) EXPECT_TRUE(std::isfinite(x));
  EXPECT_EQ(BagOfWordsEncoder::random(cfg, 9).weights(), enc.weights());
}

TEST(Encoder, SaveLoadRoundTrip) {
  testing::TempDir dir;
  EncoderConfig cfg;
  cfg.dim = 8;
  cfg.buckets = 64;
  for (bool shared : {true, false}) {
    auto pair = EncoderPair::create(cfg, 4, shared);
    EXPECT_EQ(pair.shared(), shared);
    auto p = dir / (shared ? "s" : "u");
    save_encoders(pair, p);
    auto back = load_encoders(p);
    EXPECT_EQ(back.shared(), shared);
    EXPECT_EQ(back.claim->weights(), pair.claim->weights());
    EXPECT_EQ(back.sentence->weights(), pair.sentence->weights());
    EXPECT_EQ(back.claim->config().max_len, cfg.max_len);
  }
  EXPECT_THROW(load_encoders(dir / "missing"), Error);
}

TEST(Triples, NegativesComeFromOtherClaims) {
  std::vector<ReviewedClaim> items = {{"x", "solar panels", {"Solar panels are cheap."}},
                                      {"y", "wind farms", {"Wind farms grew."}}};
  auto b = build_training_triples(items, 1, 1, 5);
  ASSERT_EQ(b.triples.size(), 2u);
  EXPECT_EQ(b.triples[0].positives, (std::vector<std::string>{"Solar panels are cheap."}));
  EXPECT_EQ(b.triples[0].negatives, (std::vector<std::string>{"Wind farms grew."}));
  EXPECT_EQ(b.triples[1].negatives, (std::vector<std::string>{"Solar panels are cheap."}));
}

TEST(Triples, PositivesByOverlapDeterministicAndSkipsEmptyReviews) {
  std::vector<ReviewedClaim> items = {
      {"x", "tax on sugar drinks", {"Nothing here.", "Sugar drinks tax passed.", "A tax rose."}},
      {"y", "bus fares", {}},
      {"z", "rail", {"Rail one.", "Rail two.", "Other."}}};
  auto a = build_training_triples(items, 2, 2, 7);
  ASSERT_EQ(a.triples.size(), 2u);
  EXPECT_EQ(a.warnings.size(), 1u);
  EXPECT_EQ(a.triples[0].positives, (std::vector<std::string>{"Sugar drinks tax passed.", "A tax rose."}));
  for (const auto& n : a.triples[0].negatives)
    EXPECT_NE(std::find(items[2].review_sentences.begin(), items[2].review_sentences.end(), n),
              items[2].review_sentences.end());
  auto again = build_training_triples(items, 2, 2, 7);
  EXPECT_EQ(again.triples, a.triples);
}

std::vector<TrainingTriple> memorization_fixture() {
  static const std::vector<std::string> topics = {"water", "roads", "schools", "police", "hospital",
                                                  "parks", "taxes",  "housing", "energy", "transit",
                                                  "farms", "ports",  "tourism", "prisons", "museums",
                                                  "fishing", "mining", "forests", "airports", "libraries"};
  std::vector<TrainingTriple> out;
  for (std::size_t i = 0; i < topics.size(); ++i) {
    const auto& t = topics[i];
    const auto& other = topics[(i + 7) % topics.size()];
    out.push_back({"spending on " + t + " doubled", {"the " + t + " budget records"},
                   {"the " + other + " budget records"}});
  }
  return out;
}

TEST(Training, LossDecreasesOnMemorizationFixture) {
  auto triples = memorization_fixture();
  EncoderConfig cfg;
  cfg.dim = 16;
  cfg.buckets = 1024;
  auto pair = EncoderPair::create(cfg, 1, false);
  TrainConfig tc;
  tc.epochs = 30;
  tc.batch = 4;
  tc.lr = 0.05;
  tc.mode = NegativeMode::Explicit;
  auto r = train_retriever(triples, pair, tc);
  ASSERT_EQ(r.loss_curve.size(), 31u);
  EXPECT_LT(r.loss_curve.back(), r.loss_curve.front());
  EXPECT_LT(r.loss_curve[15], r.loss_curve[0]);
  EXPECT_LT(r.loss_curve[30], r.loss_curve[15]);
  EXPECT_NEAR(r.loss_curve.back(), evaluate_loss(triples, pair, tc), 1e-12);
}

TEST(Training, ZeroLearningRateKeepsLossConstant) {
  auto triples = memorization_fixture();
  EncoderConfig cfg;
  cfg.dim = 8;
  cfg.buckets = 256;
  auto pair = EncoderPair::create(cfg, 2, true);
  TrainConfig tc;
  tc.epochs = 5;
  tc.lr = 0.0;
  auto r = train_retriever(triples, pair, tc);
  for (double l : r.loss_curve) EXPECT_NEAR(l, r.loss_curve.front(), 1e-12);
  EXPECT_THROW(train_retriever({}, pair, tc), Error);
}

TEST(Retrieval, HandRankingAndTies) {
  auto ref = corpus::ArticleRef::from_uri("u");
  std::vector<Candidate> c = {{ref, 0, "s0", {1, 0}}, {ref, 1, "s1", {0, 1}}, {ref, 2, "s2", {0.5, 0}}};
  auto top = rank_top_k({1, 0}, c, 2);
  ASSERT_EQ(top.size(), 2u);
  EXPECT_EQ(top[0].sentence_index, 0u);
  EXPECT_EQ(top[1].sentence_index, 2u);
  EXPECT_EQ(rank_top_k({1, 0}, c, 50).size(), 3u);

  std::vector<Candidate> tie = {{ref, 5, "b", {1, 0}}, {ref, 3, "a", {1, 0}}};
  auto t = rank_top_k({1, 0}, tie, 2);
  EXPECT_EQ(t[0].sentence_index, 3u);
  EXPECT_EQ(t[1].sentence_index, 5u);
}

TEST(Retrieval, MatchesBruteForceSortAndIsPermutationInvariant) {
  Rng rng(4);
  std::vector<corpus::ArticleRef> refs = {corpus::ArticleRef::from_uri("a"), corpus::ArticleRef::from_uri("b"),
                                          corpus::ArticleRef::from_uri("c")};
  for (int t = 0; t < 30; ++t) {
    std::vector<Candidate> cands;
    std::size_t n = 1 + uniform_index(rng, 200);
    for (std::size_t i = 0; i < n; ++i) {
      // Small integer grid so exact ties are frequent.
      Vector v = {static_cast<double>(uniform_index(rng, 4)), static_cast<double>(uniform_index(rng, 4))};
      cands.push_back({refs[uniform_index(rng, 3)], i, "s" + std::to_string(i), v});
    }
    Vector q = {1.0, static_cast<double>(uniform_index(rng, 3))};
    auto brute = cands;
    std::sort(brute.begin(), brute.end(), [&](const Candidate& x, const Candidate& y) {
      double sx = q[0] * x.vec[0] + q[1] * x.vec[1], sy = q[0] * y.vec[0] + q[1] * y.vec[1];
      if (sx != sy) return sx > sy;
      if (x.source != y.source) return x.source < y.source;
      return x.sentence_index < y.sentence_index;
    });
    for (std::size_t k : {std::size_t{1}, std::size_t{5}, std::size_t{50}, n + 3}) {
      auto got = rank_top_k(q, cands, k);
      ASSERT_EQ(got.size(), std::min(k, n));
      for (std::size_t i = 0; i < got.size(); ++i) {
        EXPECT_EQ(got[i].source, brute[i].source);
        EXPECT_EQ(got[i].sentence_index, brute[i].sentence_index);
        if (i) EXPECT_LE(got[i].score, got[i - 1].score);
      }
      auto shuffled = cands;
      shuffle(shuffled, rng);
      EXPECT_EQ(rank_top_k(q, shuffled, k), got);
    }
  }
}

TEST(Retrieval, RetrieveEvidenceOverArticles) {
  EncoderConfig cfg;
  cfg.dim = 3;
  BagOfWordsEncoder enc(cfg, {1, 0, 0, 0, 1, 0, 0, 0, 1}, {{"tax", 0}, {"rain", 1}, {"bus", 2}});
  auto a = corpus::make_article(corpus::ArticleRef::from_uri("x"), "Rain fell. The tax rose. Bus and tax.");
  auto e = retrieve_evidence(enc, enc, "c1", "tax", {a}, 2);
  EXPECT_EQ(e.claim_id, "c1");
  ASSERT_EQ(e.items.size(), 2u);
  EXPECT_EQ(e.items[0].text, "The tax rose.");
  EXPECT_EQ(e.items[1].text, "Bus and tax.");
  EXPECT_TRUE(e.warnings.empty());

  auto empty = retrieve_evidence(enc, enc, "c2", "tax", {}, 50);
  EXPECT_TRUE(empty.items.empty());
  EXPECT_EQ(empty.warnings.size(), 1u);

  auto back = evidence_from_json(to_json(e));
  EXPECT_EQ(back.items, e.items);
  EXPECT_EQ(back.k, e.k);
}

}  // namespace
}  // namespace refute::retriever

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "refute/veracity.hpp"
#include "support.hpp"

namespace refute::veracity {
namespace {

constexpr auto F = VeracityLabel::False;
constexpr auto PF = VeracityLabel::PartlyFalse;
constexpr auto U = VeracityLabel::Unproven;
constexpr auto T = VeracityLabel::True;

// Independent oracle: per-label precision and recall, F1 = 2PR/(P+R), mean
// over labels that occur in gold or predictions.
double oracle_macro_f1(const std::vector<VeracityLabel>& gold, const std::vector<VeracityLabel>& pred) {
  double sum = 0;
  int count = 0;
  for (auto l : corpus::kAllLabels) {
    double tp = 0, g = 0, p = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
      g += gold[i] == l;
      p += pred[i] == l;
      tp += gold[i] == l && pred[i] == l;
    }
    if (g == 0 && p == 0) continue;
    ++count;
    double prec = p > 0 ? tp / p : 0, rec = g > 0 ? tp / g : 0;
    sum += prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0;
  }
  return sum / count;
}

TEST(Scoring, HandConfusionMatrix) {
  std::vector<VeracityLabel> gold, pred;
  for (int i = 0; i < 10; ++i) {
    gold.push_back(F);
    pred.push_back(i < 8 ? F : T);
  }
  for (int i = 0; i < 10; ++i) {
    gold.push_back(T);
    pred.push_back(i < 5 ? T : F);
  }
  auto r = score_predictions(gold, pred);
  EXPECT_EQ(r.n, 20u);
  EXPECT_EQ(r.confusion[0][0], 8u);
  EXPECT_EQ(r.confusion[0][3], 2u);
  EXPECT_EQ(r.confusion[3][0], 5u);
  EXPECT_DOUBLE_EQ(*r.accuracy[0], 0.8);
  EXPECT_DOUBLE_EQ(*r.accuracy[3], 0.5);
  EXPECT_FALSE(r.accuracy[1]);
  EXPECT_FALSE(r.f1[2]);
  EXPECT_NEAR(*r.f1[0], 16.0 / 23.0, 1e-12);
  EXPECT_NEAR(*r.f1[3], 10.0 / 17.0, 1e-12);
  EXPECT_NEAR(r.macro_f1, (16.0 / 23.0 + 10.0 / 17.0) / 2.0, 1e-12);
}

TEST(Scoring, PerfectAndDegenerate) {
  auto perfect = score_predictions({F, PF, U, T}, {F, PF, U, T});
  EXPECT_DOUBLE_EQ(perfect.macro_f1, 1.0);
  // A label only ever predicted counts with F1 0.
  auto r = score_predictions({F, F}, {F, U});
  EXPECT_DOUBLE_EQ(*r.f1[2], 0.0);
  EXPECT_NEAR(r.macro_f1, (2.0 / 3.0 + 0.0) / 2.0, 1e-12);
  EXPECT_THROW(score_predictions({}, {}), Error);
  EXPECT_THROW(score_predictions({F}, {F, T}), Error);
}

TEST(Scoring, MatchesOracleAndIsPermutationInvariant) {
  Rng rng(17);
  for (int t = 0; t < 100; ++t) {
    std::size_t n = 1 + uniform_index(rng, 60);
    std::vector<VeracityLabel> gold, pred;
    for (std::size_t i = 0; i < n; ++i) {
      gold.push_back(corpus::kAllLabels[uniform_index(rng, 4)]);
      pred.push_back(uniform_index(rng, 3) ? gold.back() : corpus::kAllLabels[uniform_index(rng, 4)]);
    }
    auto r = score_predictions(gold, pred);
    EXPECT_NEAR(r.macro_f1, oracle_macro_f1(gold, pred), 1e-12);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    for (int s = 0; s < 5; ++s) {
      shuffle(idx, rng);
      std::vector<VeracityLabel> g2, p2;
      for (auto i : idx) {
        g2.push_back(gold[i]);
        p2.push_back(pred[i]);
      }
      auto r2 = score_predictions(g2, p2);
      EXPECT_NEAR(r2.macro_f1, r.macro_f1, 1e-12);
      EXPECT_EQ(r2.confusion, r.confusion);
    }
  }
}

TEST(Classifier, ArgmaxTiesFollowLabelOrder) {
  EXPECT_EQ(argmax_in_label_order({0.25, 0.25, 0.25, 0.25}), 0u);
  EXPECT_EQ(argmax_in_label_order({0.1, 0.4, 0.1, 0.4}), 1u);
  EXPECT_EQ(argmax_in_label_order({0.1, 0.2, 0.3, 0.4}), 3u);
}

TEST(Classifier, KeywordCorpusIsLearned) {
  auto train = testing::keyword_corpus(400, 1);
  auto test = testing::keyword_corpus(200, 2);
  ClassifierConfig cfg;
  cfg.buckets = 1 << 12;
  auto tc = train_classifier(train.texts, train.labels, cfg);
  EXPECT_LT(tc.loss_curve.back(), tc.loss_curve.front());
  EXPECT_EQ(tc.warnings.size(), 2u);  // PartlyFalse and Unproven absent
  std::vector<std::pair<std::string, VeracityLabel>> pairs;
  for (std::size_t i = 0; i < test.texts.size(); ++i) pairs.emplace_back(test.texts[i], test.labels[i]);
  auto r = evaluate_classifier(tc.classifier, pairs);
  std::size_t correct = r.confusion[0][0] + r.confusion[3][3];
  EXPECT_GE(static_cast<double>(correct) / r.n, 0.95);
  for (const auto& text : test.texts) {
    auto p = tc.classifier.probabilities(text);
    EXPECT_NEAR(std::accumulate(p.begin(), p.end(), 0.0), 1.0, 1e-12);
    for (double x : p) EXPECT_GE(x, 0.0);
  }
}

TEST(Classifier, SingleClassFixture) {
  std::vector<std::string> texts = {"bogus story", "made up quote", "fake photo"};
  auto tc = train_classifier(texts, {F, F, F}, ClassifierConfig{});
  EXPECT_EQ(tc.warnings.size(), 3u);
  EXPECT_EQ(tc.classifier.classify("another fake quote").label, F);
  EXPECT_EQ(tc.classifier.classify("unseen words entirely").label, F);
}

TEST(Classifier, InputErrors) {
  ClassifierConfig cfg;
  EXPECT_THROW(train_classifier({}, {}, cfg), Error);
  EXPECT_THROW(train_classifier({"a"}, {F, T}, cfg), Error);
  EXPECT_THROW(train_classifier({"a", " "}, {F, T}, cfg), Error);
  auto tc = train_classifier({"a b", "c d"}, {F, T}, cfg);
  EXPECT_THROW(tc.classifier.probabilities(""), Error);
  EXPECT_THROW(tc.classifier.probabilities("  \n"), Error);
}

TEST(Classifier, FeaturesAreNormalizedAndTruncated) {
  VeracityClassifier c(64, 3, std::vector<double>(64 * kNumLabels, 0.0), {});
  auto f = c.features("alpha beta alpha gamma delta epsilon");
  double norm = 0;
  for (auto& [b, v] : f) {
    EXPECT_LT(b, 64u);
    norm += v * v;
  }
  EXPECT_NEAR(norm, 1.0, 1e-12);
  EXPECT_EQ(c.features("alpha beta alpha"), c.features("alpha beta alpha gamma delta"));
  auto p = c.probabilities("x");
  for (double x : p) EXPECT_DOUBLE_EQ(x, 0.25);
}

TEST(Classifier, ClassWeightingHelpsMinorityRecall) {
  std::vector<std::string> texts;
  std::vector<VeracityLabel> labels;
  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    bool minority = i % 10 == 0;
    texts.push_back(std::string(minority ? "rare signal" : "common signal") + " filler" +
                    std::to_string(uniform_index(rng, 20)));
    labels.push_back(minority ? U : F);
  }
  ClassifierConfig cfg;
  cfg.buckets = 1 << 10;
  cfg.class_weighting = true;
  auto tc = train_classifier(texts, labels, cfg);
  EXPECT_EQ(tc.classifier.classify("rare signal filler3").label, U);
}

TEST(Classifier, SaveLoadRoundTrip) {
  testing::TempDir dir;
  auto data = testing::keyword_corpus(50, 4);
  ClassifierConfig cfg;
  cfg.buckets = 256;
  cfg.epochs = 3;
  auto tc = train_classifier(data.texts, data.labels, cfg);
  save_classifier(tc.classifier, dir / "cls");
  auto back = load_classifier(dir / "cls");
  EXPECT_EQ(back.weights(), tc.classifier.weights());
  EXPECT_EQ(back.bias(), tc.classifier.bias());
  EXPECT_EQ(back.probabilities("verified figures"), tc.classifier.probabilities("verified figures"));
  auto m = json::parse(read_file(dir / "cls/manifest.json"));
  EXPECT_EQ(m.at("label_order"), json::array({"False", "PartlyFalse", "Unproven", "True"}));
  EXPECT_EQ(m.at("backend_id"), std::string(VeracityClassifier::kBackendId));
  EXPECT_THROW(load_classifier(dir / "nothing"), Error);
}

TEST(Table, FormatsRowsWithBlanksForAbsentLabels) {
  std::vector<VeracityRow> rows = {{"golden review", score_predictions({F, T}, {F, T})},
                                   {"RefuteClaim-7F", score_predictions({F, T}, {F, F})}};
  auto text = format_veracity_table(rows);
  EXPECT_NE(text.find("golden review"), std::string::npos);
  EXPECT_NE(text.find("RefuteClaim-7F"), std::string::npos);
  auto j = veracity_table_json(rows);
  ASSERT_EQ(j.size(), 2u);
  EXPECT_TRUE(to_json(rows[0].report).at("accuracy").at("Unproven").is_null());
}

}  // namespace
}  // namespace refute::veracity

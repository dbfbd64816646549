#pragma once
// Four-way veracity classifier over review or justification text, plus the
// per-label accuracy / macro F1 evaluation used to compare justification
// sources.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "refute/common.hpp"
#include "refute/corpus.hpp"

namespace refute::veracity {

using corpus::kNumLabels;
using corpus::VeracityLabel;
using Probabilities = std::array<double, kNumLabels>;

// Index of the largest entry; ties go to the earlier label in the fixed
// order False, PartlyFalse, Unproven, True.
std::size_t argmax_in_label_order(const Probabilities& p);

struct Prediction {
  VeracityLabel label = VeracityLabel::False;
  Probabilities probs{};
};

// Linear softmax over hashed unigram and bigram features (sublinear term
// frequency, L2-normalized). Immutable after training, so one instance can
// serve concurrent callers.
class VeracityClassifier {
 public:
  static constexpr std::string_view kBackendId = "hashed-ngram-softmax-v1";

  VeracityClassifier(std::size_t buckets, std::size_t max_length, std::vector<double> weights,
                     Probabilities bias);

  // Throws Error on blank text. Text beyond max_length tokens is ignored.
  Probabilities probabilities(std::string_view text) const;
  Prediction classify(std::string_view text) const;

  std::size_t buckets() const { return buckets_; }
  std::size_t max_length() const { return max_length_; }
  const std::vector<double>& weights() const { return weights_; }
  const Probabilities& bias() const { return bias_; }

  // Sparse feature vector (bucket, value) for text; exposed for training.
  std::vector<std::pair<std::size_t, double>> features(std::string_view text) const;
  Probabilities logits(const std::vector<std::pair<std::size_t, double>>& feats) const;

 private:
  std::size_t buckets_;
  std::size_t max_length_;
  std::vector<double> weights_;  // buckets x kNumLabels, row per feature
  Probabilities bias_;
};

struct ClassifierConfig {
  std::size_t epochs = 20;
  double lr = 0.5;
  std::uint64_t seed = 13;
  std::size_t buckets = 1 << 16;
  std::size_t max_length = 512;
  bool class_weighting = false;  // inverse-frequency loss weights
};

struct TrainedClassifier {
  VeracityClassifier classifier;
  std::vector<double> loss_curve;  // entry 0 before training, then per epoch
  std::vector<std::string> warnings;
};

// Cross-entropy SGD over shuffled examples. Throws Error on empty or
// mismatched input, blank texts, or a non-finite loss.
TrainedClassifier train_classifier(const std::vector<std::string>& texts, const std::vector<VeracityLabel>& labels,
                                   const ClassifierConfig& cfg);

// Directory with manifest.json {label_order, max_length, backend_id, buckets}
// and weights.bin.
void save_classifier(const VeracityClassifier& c, const std::filesystem::path& dir);
VeracityClassifier load_classifier(const std::filesystem::path& dir);

// --- evaluation -----------------------------------------------------------------------

using ConfusionMatrix = std::array<std::array<std::size_t, kNumLabels>, kNumLabels>;  // [gold][pred]

struct ClassificationReport {
  std::size_t n = 0;
  ConfusionMatrix confusion{};
  // Recall per gold label; absent when the label has no gold items.
  std::array<std::optional<double>, kNumLabels> accuracy{};
  // F1 per label; absent when the label has neither gold items nor
  // predictions, in which case it is left out of the macro average.
  std::array<std::optional<double>, kNumLabels> f1{};
  double macro_f1 = 0.0;
};

ClassificationReport score_predictions(const std::vector<VeracityLabel>& gold,
                                       const std::vector<VeracityLabel>& predicted);

ClassificationReport evaluate_classifier(const VeracityClassifier& c,
                                         const std::vector<std::pair<std::string, VeracityLabel>>& pairs);

json to_json(const ClassificationReport& r);

// One row per justification source, columns per-label accuracy + macro F1.
struct VeracityRow {
  std::string source;
  ClassificationReport report;
};

std::string format_veracity_table(const std::vector<VeracityRow>& rows);
json veracity_table_json(const std::vector<VeracityRow>& rows);

}  // namespace refute::veracity

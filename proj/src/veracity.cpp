#include "refute/veracity.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace refute::veracity {

using corpus::kAllLabels;
using corpus::label_index;

std::size_t argmax_in_label_order(const Probabilities& p) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[best]) best = i;
  return best;
}

VeracityClassifier::VeracityClassifier(std::size_t buckets, std::size_t max_length, std::vector<double> weights,
                                       Probabilities bias)
    : buckets_(buckets), max_length_(max_length), weights_(std::move(weights)), bias_(bias) {
  if (buckets_ == 0 || max_length_ == 0) throw Error("classifier buckets and max_length must be positive");
  if (weights_.size() != buckets_ * kNumLabels)
    throw Error("classifier weights have " + std::to_string(weights_.size()) + " entries, expected " +
                std::to_string(buckets_ * kNumLabels));
}

std::vector<std::pair<std::size_t, double>> VeracityClassifier::features(std::string_view text) const {
  auto toks = word_tokens(text);
  if (toks.size() > max_length_) toks.resize(max_length_);
  std::unordered_map<std::size_t, double> counts;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    counts[fnv1a64(toks[i]) % buckets_] += 1.0;
    if (i + 1 < toks.size()) counts[fnv1a64(toks[i] + ' ' + toks[i + 1], 0x84222325cbf29ce4ULL) % buckets_] += 1.0;
  }
  std::vector<std::pair<std::size_t, double>> out(counts.begin(), counts.end());
  std::sort(out.begin(), out.end());
  double norm = 0.0;
  for (auto& [b, v] : out) {
    v = 1.0 + std::log(v);
    norm += v * v;
  }
  if (norm > 0.0) {
    norm = std::sqrt(norm);
    for (auto& [b, v] : out) v /= norm;
  }
  return out;
}

Probabilities VeracityClassifier::logits(const std::vector<std::pair<std::size_t, double>>& feats) const {
  Probabilities z = bias_;
  for (auto [b, v] : feats)
    for (std::size_t c = 0; c < kNumLabels; ++c) z[c] += weights_[b * kNumLabels + c] * v;
  return z;
}

namespace {

Probabilities softmax(Probabilities z) {
  double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - m);
    sum += v;
  }
  for (auto& v : z) v /= sum;
  return z;
}

}  // namespace

Probabilities VeracityClassifier::probabilities(std::string_view text) const {
  if (trim(text).empty()) throw Error("cannot classify empty text");
  return softmax(logits(features(text)));
}

Prediction VeracityClassifier::classify(std::string_view text) const {
  Prediction p;
  p.probs = probabilities(text);
  p.label = kAllLabels[argmax_in_label_order(p.probs)];
  return p;
}

// --- training --------------------------------------------------------------------------------

TrainedClassifier train_classifier(const std::vector<std::string>& texts, const std::vector<VeracityLabel>& labels,
                                   const ClassifierConfig& cfg) {
  if (texts.empty()) throw Error("train_classifier: empty dataset");
  if (texts.size() != labels.size())
    throw Error("train_classifier: " + std::to_string(texts.size()) + " texts but " +
                std::to_string(labels.size()) + " labels");
  for (std::size_t i = 0; i < texts.size(); ++i)
    if (trim(texts[i]).empty()) throw Error("train_classifier: text " + std::to_string(i) + " is empty");

  std::vector<std::string> warnings;
  std::array<std::size_t, kNumLabels> counts{};
  for (auto l : labels) ++counts[label_index(l)];
  std::size_t present = 0;
  for (auto l : kAllLabels) {
    if (counts[label_index(l)] == 0)
      warnings.push_back("label " + std::string(corpus::label_name(l)) + " has no training examples");
    else
      ++present;
  }
  std::array<double, kNumLabels> class_w;
  class_w.fill(1.0);
  if (cfg.class_weighting)
    for (std::size_t c = 0; c < kNumLabels; ++c)
      if (counts[c] > 0)
        class_w[c] = static_cast<double>(labels.size()) / (static_cast<double>(present * counts[c]));

  VeracityClassifier model(cfg.buckets, cfg.max_length, std::vector<double>(cfg.buckets * kNumLabels, 0.0),
                           Probabilities{});
  std::vector<std::vector<std::pair<std::size_t, double>>> feats;
  feats.reserve(texts.size());
  for (const auto& t : texts) feats.push_back(model.features(t));

  std::vector<double> w(cfg.buckets * kNumLabels, 0.0);
  Probabilities bias{};

  auto mean_loss = [&]() {
    VeracityClassifier snapshot(cfg.buckets, cfg.max_length, w, bias);
    double s = 0.0, wsum = 0.0;
    for (std::size_t i = 0; i < feats.size(); ++i) {
      auto p = softmax(snapshot.logits(feats[i]));
      std::size_t y = label_index(labels[i]);
      s += -class_w[y] * std::log(std::max(p[y], 1e-300));
      wsum += class_w[y];
    }
    return s / wsum;
  };

  TrainedClassifier out{model, {}, std::move(warnings)};
  out.loss_curve.push_back(mean_loss());

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(texts.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, rng);
    for (auto i : order) {
      Probabilities z = bias;
      for (auto [b, v] : feats[i])
        for (std::size_t c = 0; c < kNumLabels; ++c) z[c] += w[b * kNumLabels + c] * v;
      auto p = softmax(z);
      std::size_t y = label_index(labels[i]);
      for (std::size_t c = 0; c < kNumLabels; ++c) {
        double g = class_w[y] * (p[c] - (c == y ? 1.0 : 0.0));
        bias[c] -= cfg.lr * g;
        for (auto [b, v] : feats[i]) w[b * kNumLabels + c] -= cfg.lr * g * v;
      }
    }
    double loss = mean_loss();
    if (!std::isfinite(loss)) throw Error("train_classifier: non-finite loss after epoch " + std::to_string(epoch + 1));
    out.loss_curve.push_back(loss);
  }
  out.classifier = VeracityClassifier(cfg.buckets, cfg.max_length, std::move(w), bias);
  return out;
}

// --- checkpoints ------------------------------------------------------------------------------

void save_classifier(const VeracityClassifier& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json order = json::array();
  for (auto l : kAllLabels) order.push_back(corpus::label_name(l));
  json m = {{"label_order", order},
            {"max_length", c.max_length()},
            {"backend_id", VeracityClassifier::kBackendId},
            {"buckets", c.buckets()},
            {"bias", c.bias()},
            {"format", "float64-le-rowmajor"}};
  const auto& w = c.weights();
  write_file_atomic(dir / "weights.bin",
                    std::string_view(reinterpret_cast<const char*>(w.data()), w.size() * sizeof(double)));
  write_file_atomic(dir / "manifest.json", m.dump(2));
}

VeracityClassifier load_classifier(const std::filesystem::path& dir) {
  json m = json::parse(read_file(dir / "manifest.json"));
  if (m.at("backend_id").get<std::string>() != VeracityClassifier::kBackendId)
    throw Error("unsupported classifier backend '" + m.at("backend_id").get<std::string>() + "'");
  auto order = m.at("label_order").get<std::vector<std::string>>();
  if (order.size() != kNumLabels) throw Error("classifier label order must list four labels");
  for (std::size_t i = 0; i < kNumLabels; ++i)
    if (corpus::parse_label(order[i]) != kAllLabels[i])
      throw Error("classifier label order does not match False, PartlyFalse, Unproven, True");
  std::size_t buckets = m.at("buckets");
  std::string buf = read_file(dir / "weights.bin");
  if (buf.size() != buckets * kNumLabels * sizeof(double)) throw Error("classifier weight file has the wrong size");
  std::vector<double> w(buckets * kNumLabels);
  std::memcpy(w.data(), buf.data(), buf.size());
  return VeracityClassifier(buckets, m.at("max_length").get<std::size_t>(), std::move(w),
                            m.at("bias").get<Probabilities>());
}

// --- evaluation -----------------------------------------------------------------------------------

ClassificationReport score_predictions(const std::vector<VeracityLabel>& gold,
                                       const std::vector<VeracityLabel>& predicted) {
  if (gold.size() != predicted.size()) throw Error("score_predictions: gold and prediction counts differ");
  if (gold.empty()) throw Error("score_predictions: no items");
  ClassificationReport r;
  r.n = gold.size();
  for (std::size_t i = 0; i < gold.size(); ++i) ++r.confusion[label_index(gold[i])][label_index(predicted[i])];

  double f1_sum = 0.0;
  std::size_t f1_n = 0;
  for (std::size_t c = 0; c < kNumLabels; ++c) {
    std::size_t tp = r.confusion[c][c], golds = 0, preds = 0;
    for (std::size_t k = 0; k < kNumLabels; ++k) {
      golds += r.confusion[c][k];
      preds += r.confusion[k][c];
    }
    if (golds > 0) r.accuracy[c] = static_cast<double>(tp) / static_cast<double>(golds);
    if (golds + preds > 0) {
      r.f1[c] = 2.0 * static_cast<double>(tp) / static_cast<double>(golds + preds);
      f1_sum += *r.f1[c];
      ++f1_n;
    }
  }
  r.macro_f1 = f1_sum / static_cast<double>(f1_n);
  return r;
}

ClassificationReport evaluate_classifier(const VeracityClassifier& c,
                                         const std::vector<std::pair<std::string, VeracityLabel>>& pairs) {
  std::vector<VeracityLabel> gold, pred;
  gold.reserve(pairs.size());
  pred.reserve(pairs.size());
  for (const auto& [text, label] : pairs) {
    gold.push_back(label);
    pred.push_back(c.classify(text).label);
  }
  return score_predictions(gold, pred);
}

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::string cell(const std::optional<double>& v) {
  if (!v) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(4) << *v;
  return os.str();
}

}  // namespace

json to_json(const ClassificationReport& r) {
  json acc, f1, conf = json::object();
  for (auto l : kAllLabels) {
    std::string name(corpus::label_name(l));
    acc[name] = optional_json(r.accuracy[label_index(l)]);
    f1[name] = optional_json(r.f1[label_index(l)]);
    json row;
    for (auto p : kAllLabels) row[std::string(corpus::label_name(p))] = r.confusion[label_index(l)][label_index(p)];
    conf[name] = row;
  }
  return {{"n", r.n}, {"accuracy", acc}, {"f1", f1}, {"macro_f1", r.macro_f1}, {"confusion", conf}};
}

std::string format_veracity_table(const std::vector<VeracityRow>& rows) {
  std::size_t w0 = 6;
  for (const auto& r : rows) w0 = std::max(w0, r.source.size());
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(w0)) << "source";
  for (auto l : kAllLabels) os << std::right << std::setw(14) << corpus::label_display(l);
  os << std::right << std::setw(10) << "macro F1" << "\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(static_cast<int>(w0)) << r.source;
    for (auto l : kAllLabels) os << std::right << std::setw(14) << cell(r.report.accuracy[label_index(l)]);
    os << std::right << std::setw(10) << cell(r.report.macro_f1) << "\n";
  }
  return os.str();
}

json veracity_table_json(const std::vector<VeracityRow>& rows) {
  json out = json::array();
  for (const auto& r : rows) {
    json j = to_json(r.report);
    j["source"] = r.source;
    out.push_back(std::move(j));
  }
  return out;
}

}  // namespace refute::veracity

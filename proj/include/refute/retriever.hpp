#pragma once
// Dense dual-encoder evidence retrieval: softmax negative log-likelihood over
// positive and negative sentences, encoder training, training-triple
// construction and exact top-k search over premise sentences.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "refute/common.hpp"
#include "refute/corpus.hpp"

namespace refute::retriever {

using Vector = std::vector<double>;

// Exact dot product. Throws Error on length mismatch.
double similarity(std::span<const double> v, std::span<const double> u);

// L = -log( exp(s_t) / (sum_q exp(s_q+) + sum_r exp(s_r-)) ) with s = c . x,
// evaluated with max-subtraction. Throws Error if positives is empty or
// target is out of range.
double nll_loss(const Vector& claim, const std::vector<Vector>& positives,
                const std::vector<Vector>& negatives, std::size_t target);

struct LossGrad {
  double loss = 0.0;
  Vector claim;
  std::vector<Vector> positives;
  std::vector<Vector> negatives;
};

LossGrad nll_loss_grad(const Vector& claim, const std::vector<Vector>& positives,
                       const std::vector<Vector>& negatives, std::size_t target);

// --- encoders -----------------------------------------------------------------------

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::size_t dim() const = 0;
  virtual Vector encode(std::string_view text) const = 0;
};

struct EncoderConfig {
  std::size_t dim = 64;
  std::size_t buckets = 1 << 15;  // hashed vocabulary size
  std::size_t max_len = 256;      // tokens kept per text
  std::string tokenizer = "word-lower-v1";
};

// Mean of per-token embedding rows. Tokens come from word_tokens(); they map
// to rows either through an explicit vocabulary (unknown tokens ignored) or
// by hashing into `buckets` rows. Text with no usable token encodes to zero.
class BagOfWordsEncoder : public TextEncoder {
 public:
  BagOfWordsEncoder(EncoderConfig cfg, std::vector<double> weights,
                    std::unordered_map<std::string, std::size_t> vocab = {});

  static BagOfWordsEncoder random(const EncoderConfig& cfg, std::uint64_t seed, double scale = 0.1);

  std::size_t dim() const override { return cfg_.dim; }
  Vector encode(std::string_view text) const override;

  std::vector<std::size_t> token_rows(std::string_view text) const;
  std::size_t rows() const { return weights_.size() / cfg_.dim; }
  std::span<double> row(std::size_t r) { return {weights_.data() + r * cfg_.dim, cfg_.dim}; }
  std::span<const double> row(std::size_t r) const { return {weights_.data() + r * cfg_.dim, cfg_.dim}; }
  const EncoderConfig& config() const { return cfg_; }
  const std::vector<double>& weights() const { return weights_; }
  const std::unordered_map<std::string, std::size_t>& vocabulary() const { return vocab_; }

 private:
  EncoderConfig cfg_;
  std::vector<double> weights_;  // rows() x dim, row-major
  std::unordered_map<std::string, std::size_t> vocab_;
};

struct EncoderPair {
  std::shared_ptr<BagOfWordsEncoder> claim;
  std::shared_ptr<BagOfWordsEncoder> sentence;  // same object when shared

  bool shared() const { return claim == sentence; }
  static EncoderPair create(const EncoderConfig& cfg, std::uint64_t seed, bool shared_weights);
};

// Checkpoint directory: manifest.json {d_emb, max_len, tokenizer, buckets,
// shared_weights} plus claim.bin / sentence.bin weight files.
void save_encoders(const EncoderPair& pair, const std::filesystem::path& dir);
EncoderPair load_encoders(const std::filesystem::path& dir);

// --- training -------------------------------------------------------------------------

struct TrainingTriple {
  std::string claim;
  std::vector<std::string> positives;
  std::vector<std::string> negatives;
  friend bool operator==(const TrainingTriple&, const TrainingTriple&) = default;
};

struct ReviewedClaim {
  std::string id;
  std::string claim;
  std::vector<std::string> review_sentences;
};

struct TripleBuild {
  std::vector<TrainingTriple> triples;
  std::vector<std::string> warnings;
};

// Positives: the alpha review sentences with the largest word overlap with the
// claim (ties to the earlier sentence). Negatives: beta sentences drawn with
// the seeded generator from other claims' reviews.
TripleBuild build_training_triples(const std::vector<ReviewedClaim>& items, std::size_t alpha,
                                   std::size_t beta, std::uint64_t seed);

enum class NegativeMode {
  InBatch,   // other triples' positives in the batch plus explicit negatives
  Explicit,  // only the triple's own negatives
};

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch = 16;
  double lr = 1e-2;
  NegativeMode mode = NegativeMode::InBatch;
  std::uint64_t seed = 13;
};

struct TrainResult {
  // Mean loss over all triples evaluated with fixed batches: entry 0 before
  // training, entry e after epoch e.
  std::vector<double> loss_curve;
  std::vector<double> epoch_train_loss;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

TrainResult train_retriever(const std::vector<TrainingTriple>& triples, EncoderPair& encoders,
                            const TrainConfig& cfg);

// Mean loss over `triples` batched in order; no parameter updates.
double evaluate_loss(const std::vector<TrainingTriple>& triples, const EncoderPair& encoders,
                     const TrainConfig& cfg);

// --- retrieval ----------------------------------------------------------------------------

inline constexpr std::size_t kDefaultEvidenceK = 50;

struct EvidenceItem {
  std::string text;
  corpus::ArticleRef source;
  std::size_t sentence_index = 0;
  double score = 0.0;
  friend bool operator==(const EvidenceItem&, const EvidenceItem&) = default;
};

struct EvidenceSet {
  std::string claim_id;
  std::size_t k = kDefaultEvidenceK;
  std::vector<EvidenceItem> items;
  std::vector<std::string> warnings;
};

struct Candidate {
  corpus::ArticleRef source;
  std::size_t sentence_index = 0;
  std::string text;
  Vector vec;
};

// Exact top-k by dot product: score descending, ties by ascending
// (source, sentence_index).
std::vector<EvidenceItem> rank_top_k(const Vector& claim_vec, const std::vector<Candidate>& candidates,
                                     std::size_t k);

EvidenceSet retrieve_evidence(const TextEncoder& claim_encoder, const TextEncoder& sentence_encoder,
                              const std::string& claim_id, std::string_view claim,
                              const std::vector<corpus::Article>& premise_articles,
                              std::size_t k = kDefaultEvidenceK);

json to_json(const EvidenceSet& e);
EvidenceSet evidence_from_json(const json& j);

}  // namespace refute::retriever

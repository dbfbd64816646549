#pragma once
// Justification quality metrics: ROUGE-1/2/L, BERTScore over a pluggable
// token embedder, an LLM judge for correctness/completeness, and per-label
// aggregation.

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "refute/common.hpp"
#include "refute/corpus.hpp"
#include "refute/oracle.hpp"

namespace refute::metrics {

// Lowercased runs of letters and digits; punctuation (ASCII and common
// Unicode quotes/dashes) separates tokens and is dropped.
std::vector<std::string> tokenize_for_rouge(std::string_view text);

// Exact counts; the ratios are derived from them.
struct RougeScore {
  std::size_t overlap = 0;
  std::size_t candidate_total = 0;
  std::size_t reference_total = 0;

  double precision() const;
  double recall() const;
  // 2PR/(P+R), computed as 2*overlap/(cand+ref); 0 when P+R = 0.
  double f1() const;
  friend bool operator==(const RougeScore&, const RougeScore&) = default;
};

// Clipped n-gram overlap. Throws Error when n == 0.
RougeScore rouge_n(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
                   std::size_t n);
RougeScore rouge_n(std::string_view candidate, std::string_view reference, std::size_t n);

// Longest common subsequence over the whole token sequence.
std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);
RougeScore rouge_l(const std::vector<std::string>& candidate, const std::vector<std::string>& reference);
RougeScore rouge_l(std::string_view candidate, std::string_view reference);

// --- BERTScore ------------------------------------------------------------------------

using Vector = std::vector<double>;

class Embedder {
 public:
  virtual ~Embedder() = default;
  // One vector per token, all of the same dimension.
  virtual std::vector<Vector> embed(const std::vector<std::string>& tokens) const = 0;
  virtual std::string id() const = 0;
};

// Pseudo-random unit-norm vector per token, derived from the token hash.
class HashedEmbedder : public Embedder {
 public:
  explicit HashedEmbedder(std::size_t dim = 64, std::uint64_t seed = 13) : dim_(dim), seed_(seed) {}
  std::vector<Vector> embed(const std::vector<std::string>& tokens) const override;
  std::string id() const override;

 private:
  std::size_t dim_;
  std::uint64_t seed_;
};

// Fixed token table (for example GloVe vectors). Unknown tokens map to the
// zero vector, which only matches an identical zero vector.
class LookupEmbedder : public Embedder {
 public:
  LookupEmbedder(std::unordered_map<std::string, Vector> table, std::string id);
  // Whitespace-separated "token v1 v2 ..." lines.
  static LookupEmbedder load_text(const std::filesystem::path& path);

  std::vector<Vector> embed(const std::vector<std::string>& tokens) const override;
  std::string id() const override { return id_; }
  std::size_t dim() const { return dim_; }

 private:
  std::unordered_map<std::string, Vector> table_;
  std::string id_;
  std::size_t dim_ = 0;
};

struct BertScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<std::string> warnings;
};

// Greedy cosine matching without baseline rescaling. Empty candidate or
// reference scores 0 with a warning; embedder failures throw Error.
BertScore bertscore(std::string_view candidate, std::string_view reference, const Embedder& embedder);

// --- LLM judge -------------------------------------------------------------------------

struct JudgeTemplate {
  std::string id;
  std::string body;  // {{justification}} {{reference}}

  static JudgeTemplate parse(std::string_view text);  // "# id: ..." header then body
  static JudgeTemplate load(const std::filesystem::path& path);
  std::string to_file_text() const;
  std::string render(std::string_view justification, std::string_view reference) const;
};

struct JudgeTemplates {
  JudgeTemplate correctness;
  JudgeTemplate completeness;
  static JudgeTemplates builtin();
};

struct JudgeScore {
  std::optional<double> correctness;
  std::optional<double> completeness;
  std::vector<std::string> raw_responses;
  std::vector<std::string> warnings;
  bool judged() const { return correctness.has_value() && completeness.has_value(); }
};

// First decimal number in the response, if any.
std::optional<double> parse_score(std::string_view response);

// Two calls, one per dimension. Out-of-range scores are clamped with a
// warning; a response without a number is retried once with a reminder, and
// a second failure leaves that dimension unset (the record is unjudged).
JudgeScore judge_justification(std::string_view justification, std::string_view reference, Oracle& judge,
                               const JudgeTemplates& templates = JudgeTemplates::builtin(),
                               int transport_retries = 2);

json to_json(const JudgeScore& s);

// --- per-label aggregation ---------------------------------------------------------------

struct ScoredItem {
  corpus::VeracityLabel gold = corpus::VeracityLabel::False;
  std::map<std::string, double> scores;  // metric name -> value; missing = not scored
};

struct PerLabelReport {
  std::vector<std::string> metrics;
  // metric -> per-label mean; unset when no item of that label has the metric.
  std::map<std::string, std::array<std::optional<double>, corpus::kNumLabels>> cells;
  std::map<std::string, std::array<std::size_t, corpus::kNumLabels>> counts;
};

// Arithmetic mean per (metric, label). Values are summed in sorted order, so
// the result does not depend on input order. When `metrics` is empty every
// metric seen in the items is reported.
PerLabelReport per_label_report(const std::vector<ScoredItem>& items, std::vector<std::string> metrics = {});

json to_json(const PerLabelReport& r);

// Rows are (source, metric), columns the four labels; absent cells print "-".
std::string format_per_label_table(const std::vector<std::pair<std::string, PerLabelReport>>& rows);
json per_label_table_json(const std::vector<std::pair<std::string, PerLabelReport>>& rows);

}  // namespace refute::metrics

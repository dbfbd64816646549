#pragma once
// Command layer: configuration, stage wiring per scope, resumable per-claim
// outputs, run manifests and evaluation reports.

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "refute/common.hpp"
#include "refute/corpus.hpp"
#include "refute/generation.hpp"
#include "refute/metrics.hpp"
#include "refute/oracle.hpp"
#include "refute/retriever.hpp"
#include "refute/taxonomy.hpp"
#include "refute/veracity.hpp"

namespace refute::pipeline {

// Baseline: claim and evidence only. BaselineAspects: aspects feed the
// justifier, no flaw checking. Flaws: the full chain at the given scope.
struct RunScope {
  enum class Kind { Baseline, BaselineAspects, Flaws } kind = Kind::Flaws;
  FlawScope flaws = FlawScope::Seven;

  std::string name() const;  // "baseline", "baseline-aspects", "3f", "5f", "7f"
  bool uses_aspects() const { return kind != Kind::Baseline; }
  bool uses_flaws() const { return kind == Kind::Flaws; }
  friend bool operator==(const RunScope&, const RunScope&) = default;
};
std::optional<RunScope> parse_run_scope(std::string_view s);

struct OracleSpec {
  std::string kind = "rule-mock";  // rule-mock | fixture | http
  std::string dir;                 // fixture
  HttpOracleConfig http;
  std::string api_key_env;         // read at construction when http.api_key is empty
  int min_interval_ms = 0;
};

struct RetrieverSettings {
  std::string checkpoint;
  retriever::EncoderConfig encoder;
  bool shared_weights = true;
  std::size_t alpha = 2;  // positives per claim
  std::size_t beta = 4;   // explicit negatives per claim
  retriever::TrainConfig train;
};

struct GenerationSettings {
  std::string backend = "rule-mock";  // rule-mock | tiny-lora
  std::string base_checkpoint;
  std::map<std::string, std::string> adapters;  // stage name -> directory
  std::string templates_dir;                    // empty: built-in templates
  generation::TinyLMConfig tiny;
  generation::FineTuneConfig finetune;
  std::size_t target_char_budget = 1500;  // justification targets are cut at a sentence
};

struct ClassifierSettings {
  std::string checkpoint;
  veracity::ClassifierConfig train;
};

struct EmbedderSpec {
  std::string kind = "hashed";  // hashed | lookup
  std::size_t dim = 64;
  std::string path;             // lookup
};

// Every default lives here: k = 50, adapter rank 8, greedy decoding, seed 13.
struct PipelineConfig {
  std::string dataset;
  std::string articles;
  std::string silver;      // default <out>/silver.jsonl
  std::string out = "run";
  RunScope scope;
  std::uint64_t seed = 13;
  std::size_t k = retriever::kDefaultEvidenceK;
  std::size_t workers = 1;
  std::string train_split = "train";
  std::string eval_split = "test";
  bool resume = false;
  OracleSpec oracle;                // distillation
  std::optional<OracleSpec> judge;  // evaluation; absent: no judge report
  RetrieverSettings retriever;
  GenerationSettings generation;
  ClassifierSettings classifier;
  EmbedderSpec embedder;

  // Missing keys keep their defaults; unknown keys are rejected.
  static PipelineConfig from_json(const json& j);
  static PipelineConfig load(const std::filesystem::path& path);
  json to_json() const;

  std::filesystem::path silver_path() const;
  std::filesystem::path outputs_path() const;
  std::filesystem::path evidence_path() const;
};

std::unique_ptr<Oracle> make_oracle(const OracleSpec& spec);
std::unique_ptr<metrics::Embedder> make_embedder(const EmbedderSpec& spec);

// Deterministic offline stand-in for the distillation oracle and the judge.
// Distillation prompts get aspects built from the claim's words and a
// hash-decided flaw verdict per listed flaw; judge prompts get the unigram
// overlap between justification and reference as the score.
class RuleMockOracle : public Oracle {
 public:
  OracleResponse send(const OracleRequest& request) override;
  std::string id() const override { return "rule-mock-oracle-v1"; }
};

// --- evidence cache ---------------------------------------------------------------------

// Per-claim evidence sets persisted as JSON lines; computed on first use.
// Safe for concurrent get() calls.
class EvidenceCache {
 public:
  EvidenceCache(std::filesystem::path path, std::shared_ptr<const retriever::EncoderPair> encoders,
                const corpus::ArticleStore& articles, std::size_t k);
  retriever::EvidenceSet get(const corpus::ClaimRecord& rec);
  std::size_t computed() const { return computed_; }
  std::size_t cached() const;

 private:
  std::filesystem::path path_;
  std::shared_ptr<const retriever::EncoderPair> encoders_;
  const corpus::ArticleStore& articles_;
  std::size_t k_;
  std::map<std::string, retriever::EvidenceSet> sets_;
  std::unique_ptr<JsonlAppender> writer_;
  std::size_t computed_ = 0;
  mutable std::mutex mu_;
};

// --- commands ---------------------------------------------------------------------------

struct Failure {
  std::string claim_id;
  std::string stage;
  std::string reason;
};

struct CommandResult {
  std::size_t processed = 0;
  std::size_t skipped = 0;  // already complete from an earlier run
  std::vector<Failure> failures;
  std::vector<std::string> warnings;
  json manifest;  // also written to disk
};

CommandResult cmd_distill(const PipelineConfig& cfg);
CommandResult cmd_train_retriever(const PipelineConfig& cfg);
CommandResult cmd_finetune(generation::Stage stage, const PipelineConfig& cfg);
CommandResult cmd_train_classifier(const PipelineConfig& cfg);
CommandResult cmd_run_pipeline(const PipelineConfig& cfg);

struct EvaluationReport {
  // Rows keyed by justification source ("RefuteClaim-7F", ...).
  std::vector<std::pair<std::string, metrics::PerLabelReport>> quality;  // rouge1/rouge2/rougeL/bertscore
  std::vector<std::pair<std::string, metrics::PerLabelReport>> judge;    // correctness/completeness
  std::vector<veracity::VeracityRow> veracity;                          // includes "golden review"
  std::size_t excluded_missing_gold = 0;
  std::size_t unjudged = 0;
  json to_json() const;
  std::string to_text() const;
};

// Scores every run directory in `runs` (default: cfg.out). Writes
// reports/{quality,judge,veracity}.{json,txt} under cfg.out.
EvaluationReport cmd_evaluate(const PipelineConfig& cfg, const std::vector<std::string>& runs = {});

// Builds the displayed system name for a scope ("RefuteClaim-7F", "Baseline").
std::string system_name(const RunScope& scope);

}  // namespace refute::pipeline

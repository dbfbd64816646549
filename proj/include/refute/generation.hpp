#pragma once
// The three generation stages (aspect generator, flaw checker, justification
// generator), their prompt templates, and adapter fine-tuning over a frozen
// base model.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "refute/common.hpp"
#include "refute/retriever.hpp"
#include "refute/taxonomy.hpp"

namespace refute::generation {

// --- templates ----------------------------------------------------------------------

enum class Slot { Claim, Evidence, Aspects, Flaws, FlawList };

enum class TemplateKind { Aspects, Flaws, Justify, JustifyBaseline, JustifyWithAspects };

struct PromptTemplate {
  std::string id;
  std::string body;  // {{claim}} {{evidence}} {{aspects}} {{flaws}} {{flaw_list}}
  std::size_t max_evidence_sentences = 50;
  std::size_t max_evidence_chars = 6000;

  std::set<Slot> slots() const;

  // "# key: value" header lines (id, max_evidence_sentences,
  // max_evidence_chars) followed by the body.
  static PromptTemplate parse(std::string_view text);
  static PromptTemplate load(const std::filesystem::path& path);
  static PromptTemplate builtin(TemplateKind kind);
  std::string to_file_text() const;
};

class PromptError : public Error {
 public:
  using Error::Error;
};

struct PromptInputs {
  std::string_view claim;
  const AspectSet* aspects = nullptr;
  const FlawReport* flaws = nullptr;
  std::optional<FlawScope> scope;  // required by {{flaw_list}}
  const std::vector<retriever::EvidenceItem>* evidence = nullptr;
};

struct RenderLimits {
  std::size_t context_tokens = 0;  // 0: unlimited
  std::function<std::size_t(std::string_view)> count_tokens;  // default: word count
};

// Fills every slot. An input the template has no slot for is an error (the
// justification template takes flaw findings, never aspects). Evidence is
// placed in descending score order, whole sentences only, until the
// template's sentence or character budget is reached.
std::string render_prompt(const PromptTemplate& tmpl, const PromptInputs& in, const RenderLimits& limits = {});

// Evidence items chosen by the budget, in prompt order.
std::vector<retriever::EvidenceItem> select_evidence(const PromptTemplate& tmpl,
                                                     const std::vector<retriever::EvidenceItem>& evidence);

// --- backends --------------------------------------------------------------------------

class GenBackend {
 public:
  virtual ~GenBackend() = default;
  // Greedy decoding.
  virtual std::string generate(const std::string& prompt) = 0;
  virtual std::string id() const = 0;
  virtual std::size_t context_length() const { return 0; }
  virtual std::size_t count_tokens(std::string_view text) const;
};

// Deterministic backend driven by a function; counts calls.
class FunctionBackend : public GenBackend {
 public:
  using Fn = std::function<std::string(const std::string&)>;
  explicit FunctionBackend(Fn fn, std::string id = "function") : fn_(std::move(fn)), id_(std::move(id)) {}
  std::string generate(const std::string& prompt) override;
  std::string id() const override { return id_; }
  std::size_t calls() const { return calls_.load(); }

 private:
  Fn fn_;
  std::string id_;
  std::atomic<std::size_t> calls_{0};
};

// Deterministic stand-in that reads the built-in templates' task header and
// answers each stage in the labeled-line format. Flaw presence is a hash of
// (claim, flaw), so outputs are reproducible across runs.
class RuleMockBackend : public GenBackend {
 public:
  std::string generate(const std::string& prompt) override;
  std::string id() const override { return "rule-mock-v1"; }
  std::size_t calls() const { return calls_.load(); }

 private:
  std::atomic<std::size_t> calls_{0};
};

// --- stages -----------------------------------------------------------------------------

struct StageLog {
  std::string template_id;
  std::string prompt;
  std::vector<std::string> raw_outputs;
  std::vector<std::string> warnings;
};

class GenerationError : public Error {
 public:
  GenerationError(std::string msg, StageLog log) : Error(std::move(msg)), log_(std::move(log)) {}
  const StageLog& log() const { return log_; }

 private:
  StageLog log_;
};

struct AspectOutput {
  AspectSet aspects;
  StageLog log;
};

struct FlawOutput {
  FlawReport report;
  StageLog log;
};

struct Justification {
  std::string claim_id;
  std::string text;
  std::string scope;  // "3F"/"5F"/"7F"/"baseline"/"baseline-aspects"
  std::vector<std::string> evidence_ids;  // "<article id>#<sentence index>"
  StageLog log;
};

AspectOutput generate_aspects(GenBackend& backend, std::string_view claim,
                              const std::vector<retriever::EvidenceItem>& evidence,
                              const PromptTemplate& tmpl = PromptTemplate::builtin(TemplateKind::Aspects));

FlawOutput check_flaws(GenBackend& backend, std::string_view claim, const AspectSet& aspects,
                       const std::vector<retriever::EvidenceItem>& evidence, FlawScope scope,
                       const PromptTemplate& tmpl = PromptTemplate::builtin(TemplateKind::Flaws));

Justification generate_justification(GenBackend& backend, std::string_view claim_id, std::string_view claim,
                                     const FlawReport& flaws,
                                     const std::vector<retriever::EvidenceItem>& evidence,
                                     const PromptTemplate& tmpl = PromptTemplate::builtin(TemplateKind::Justify));

// Baselines: claim and evidence only, or with aspects when `aspects` is set.
Justification generate_baseline_justification(GenBackend& backend, std::string_view claim_id,
                                              std::string_view claim, const AspectSet* aspects,
                                              const std::vector<retriever::EvidenceItem>& evidence,
                                              const PromptTemplate& tmpl);

// --- tiny trainable generator -----------------------------------------------------------

// Reversible tokenizer: each token is a run of non-space bytes with its
// leading whitespace, so decode(encode(s)) == s minus trailing whitespace.
std::vector<std::string> reversible_tokens(std::string_view text);

class Vocabulary {
 public:
  static constexpr std::size_t kBos = 0, kEos = 1, kUnk = 2;

  static Vocabulary build(const std::vector<std::string>& texts);
  static Vocabulary from_tokens(std::vector<std::string> tokens);

  std::vector<std::size_t> encode(std::string_view text) const;
  std::string decode(const std::vector<std::size_t>& ids) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct TinyLMConfig {
  std::size_t embed_dim = 32;
  std::size_t hidden = 128;
  std::size_t input_buckets = 4096;
  std::size_t max_positions = 512;
  std::size_t max_new_tokens = 256;
  std::size_t context_length = 4096;  // prompt word tokens
};

// Frozen base parameters. Immutable once built; shared by every adapter.
struct BaseWeights {
  TinyLMConfig config;
  Vocabulary vocab;
  std::vector<double> input_emb;   // input_buckets x d
  std::vector<double> token_emb;   // V x d
  std::vector<double> pos_emb;     // max_positions x d
  std::vector<double> w_hidden;    // H x 4d
  std::vector<double> b_hidden;    // H
  std::vector<double> w_out;       // V x H
  std::vector<double> b_out;       // V

  static BaseWeights create(const TinyLMConfig& cfg, Vocabulary vocab, std::uint64_t seed);
  std::size_t parameter_count() const;
  // FNV-1a over every parameter byte and the vocabulary.
  std::uint64_t checksum() const;
  std::string model_id() const { return "tiny-lm-" + hex64(checksum()); }
};

// Low-rank increments on the hidden and output projections:
// W + (alpha / rank) * B * A, with B zero-initialized.
struct LoraAdapter {
  std::size_t rank = 8;
  double alpha = 16.0;
  std::string base_model_id;
  std::string template_id;
  std::vector<double> a_hidden;  // r x 4d
  std::vector<double> b_hidden;  // H x r
  std::vector<double> a_out;     // r x H
  std::vector<double> b_out;     // V x r

  static LoraAdapter create(const BaseWeights& base, std::size_t rank, double alpha, std::uint64_t seed);
  std::size_t parameter_count() const;
  double scale() const { return alpha / static_cast<double>(rank); }
};

class TinyLoraLM : public GenBackend {
 public:
  TinyLoraLM(std::shared_ptr<const BaseWeights> base, LoraAdapter adapter);

  std::string generate(const std::string& prompt) override;
  std::string id() const override;
  std::size_t context_length() const override { return base_->config.context_length; }

  std::string greedy_decode(std::string_view prompt) const;
  // Mean per-token negative log-likelihood of target given prompt.
  double sequence_nll(std::string_view prompt, std::string_view target) const;

  const BaseWeights& base() const { return *base_; }
  std::shared_ptr<const BaseWeights> base_ptr() const { return base_; }
  const LoraAdapter& adapter() const { return adapter_; }
  LoraAdapter& adapter() { return adapter_; }

 private:
  std::shared_ptr<const BaseWeights> base_;
  LoraAdapter adapter_;
};

void save_base(const BaseWeights& base, const std::filesystem::path& dir);
std::shared_ptr<const BaseWeights> load_base(const std::filesystem::path& dir);
// Directory with manifest {rank, alpha, base_model_id, template_id,
// target_layers} and adapter weights. Loading checks the base model id.
void save_adapter(const LoraAdapter& adapter, const std::filesystem::path& dir);
LoraAdapter load_adapter(const std::filesystem::path& dir, const BaseWeights& base);

// --- fine-tuning -------------------------------------------------------------------------

enum class Stage { Aspects, Flaws, Justify };
std::string_view stage_name(Stage s);
std::optional<Stage> parse_stage(std::string_view s);

struct FineTuneExample {
  std::string input;   // rendered prompt
  std::string target;  // serialized stage output
};

// Non-empty input and target; aspect and flaw targets must parse.
void validate_example(Stage stage, const FineTuneExample& ex, std::optional<FlawScope> scope = {});

struct FineTuneConfig {
  std::size_t rank = 8;
  double alpha = 16.0;
  std::size_t epochs = 100;
  double lr = 1e-2;
  std::uint64_t seed = 13;
  std::string template_id;
};

struct FineTuneResult {
  std::unique_ptr<TinyLoraLM> model;
  std::vector<double> loss_curve;  // entry 0 before training, then per epoch
};

// Gradient of sequence_nll with respect to the adapter parameters, returned
// in an adapter-shaped container. Exposed for gradient checking.
LoraAdapter lora_gradient(const TinyLoraLM& model, std::string_view prompt, std::string_view target,
                          double* loss = nullptr);

// Maximizes the token log-likelihood of each target given its prompt by
// training a fresh adapter only. The base weights are never written.
FineTuneResult finetune_adapter(std::shared_ptr<const BaseWeights> base,
                                const std::vector<FineTuneExample>& examples, const FineTuneConfig& cfg);

}  // namespace refute::generation

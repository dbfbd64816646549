#include "refute/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "refute/distiller.hpp"
#include "refute/worker_pool.hpp"

namespace refute::pipeline {

namespace fs = std::filesystem;
using corpus::ClaimRecord;
using generation::Stage;
using generation::TemplateKind;

// --- scope ------------------------------------------------------------------------------

std::string RunScope::name() const {
  switch (kind) {
    case Kind::Baseline: return "baseline";
    case Kind::BaselineAspects: return "baseline-aspects";
    case Kind::Flaws: return to_lower(scope_name(flaws));
  }
  return "?";
}

std::optional<RunScope> parse_run_scope(std::string_view s) {
  std::string k = to_lower(trim(s));
  if (k == "baseline") return RunScope{RunScope::Kind::Baseline, FlawScope::Seven};
  if (k == "baseline-aspects" || k == "baseline_aspects")
    return RunScope{RunScope::Kind::BaselineAspects, FlawScope::Seven};
  if (auto f = parse_scope(k)) return RunScope{RunScope::Kind::Flaws, *f};
  return std::nullopt;
}

std::string system_name(const RunScope& scope) {
  switch (scope.kind) {
    case RunScope::Kind::Baseline: return "Baseline";
    case RunScope::Kind::BaselineAspects: return "Baseline+Aspects";
    case RunScope::Kind::Flaws: return "RefuteClaim-" + std::string(scope_name(scope.flaws));
  }
  return "?";
}

// --- config -------------------------------------------------------------------------------

namespace {

void check_keys(const json& j, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw Error(std::string(where) + ": expected an object");
  for (const auto& [key, v] : j.items())
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw Error(std::string(where) + ": unknown key '" + key + "'");
}

template <typename T>
void take(const json& j, const char* key, T& dst) {
  if (j.contains(key) && !j.at(key).is_null()) dst = j.at(key).get<T>();
}

OracleSpec oracle_from_json(const json& j, std::string_view where) {
  check_keys(j, where,
             {"kind", "dir", "base_url", "path", "model", "api_key_env", "timeout_seconds", "min_interval_ms"});
  OracleSpec o;
  take(j, "kind", o.kind);
  take(j, "dir", o.dir);
  take(j, "base_url", o.http.base_url);
  take(j, "path", o.http.path);
  take(j, "model", o.http.model);
  take(j, "api_key_env", o.api_key_env);
  take(j, "timeout_seconds", o.http.timeout_seconds);
  take(j, "min_interval_ms", o.min_interval_ms);
  if (o.kind != "rule-mock" && o.kind != "fixture" && o.kind != "http")
    throw Error(std::string(where) + ": unknown oracle kind '" + o.kind + "'");
  return o;
}

json oracle_to_json(const OracleSpec& o) {
  // The API key itself is never written out, only the variable it comes from.
  return {{"kind", o.kind},           {"dir", o.dir},
          {"base_url", o.http.base_url}, {"path", o.http.path},
          {"model", o.http.model},       {"api_key_env", o.api_key_env},
          {"timeout_seconds", o.http.timeout_seconds}, {"min_interval_ms", o.min_interval_ms}};
}

}  // namespace

PipelineConfig PipelineConfig::from_json(const json& j) {
  check_keys(j, "config", {"dataset", "articles", "silver", "out", "scope", "seed", "k", "workers", "train_split",
                           "eval_split", "resume", "oracle", "judge", "retriever", "generation", "classifier",
                           "embedder"});
  PipelineConfig c;
  take(j, "dataset", c.dataset);
  take(j, "articles", c.articles);
  take(j, "silver", c.silver);
  take(j, "out", c.out);
  if (j.contains("scope")) {
    auto s = parse_run_scope(j.at("scope").get<std::string>());
    if (!s) throw Error("config: unknown scope '" + j.at("scope").get<std::string>() + "'");
    c.scope = *s;
  }
  take(j, "seed", c.seed);
  take(j, "k", c.k);
  take(j, "workers", c.workers);
  take(j, "train_split", c.train_split);
  take(j, "eval_split", c.eval_split);
  take(j, "resume", c.resume);
  if (j.contains("oracle")) c.oracle = oracle_from_json(j.at("oracle"), "config.oracle");
  if (j.contains("judge") && !j.at("judge").is_null()) c.judge = oracle_from_json(j.at("judge"), "config.judge");

  if (j.contains("retriever")) {
    const auto& r = j.at("retriever");
    check_keys(r, "config.retriever",
               {"checkpoint", "dim", "buckets", "max_len", "shared_weights", "alpha", "beta", "epochs", "batch", "lr",
                "negatives"});
    take(r, "checkpoint", c.retriever.checkpoint);
    take(r, "dim", c.retriever.encoder.dim);
    take(r, "buckets", c.retriever.encoder.buckets);
    take(r, "max_len", c.retriever.encoder.max_len);
    take(r, "shared_weights", c.retriever.shared_weights);
    take(r, "alpha", c.retriever.alpha);
    take(r, "beta", c.retriever.beta);
    take(r, "epochs", c.retriever.train.epochs);
    take(r, "batch", c.retriever.train.batch);
    take(r, "lr", c.retriever.train.lr);
    if (r.contains("negatives")) {
      auto m = r.at("negatives").get<std::string>();
      if (m == "in-batch")
        c.retriever.train.mode = retriever::NegativeMode::InBatch;
      else if (m == "explicit")
        c.retriever.train.mode = retriever::NegativeMode::Explicit;
      else
        throw Error("config.retriever.negatives must be 'in-batch' or 'explicit'");
    }
  }
  if (j.contains("generation")) {
    const auto& g = j.at("generation");
    check_keys(g, "config.generation",
               {"backend", "base_checkpoint", "adapters", "templates_dir", "embed_dim", "hidden", "input_buckets",
                "max_positions", "max_new_tokens", "context_length", "rank", "lora_alpha", "epochs", "lr",
                "target_char_budget"});
    auto& s = c.generation;
    take(g, "backend", s.backend);
    take(g, "base_checkpoint", s.base_checkpoint);
    take(g, "adapters", s.adapters);
    take(g, "templates_dir", s.templates_dir);
    take(g, "embed_dim", s.tiny.embed_dim);
    take(g, "hidden", s.tiny.hidden);
    take(g, "input_buckets", s.tiny.input_buckets);
    take(g, "max_positions", s.tiny.max_positions);
    take(g, "max_new_tokens", s.tiny.max_new_tokens);
    take(g, "context_length", s.tiny.context_length);
    take(g, "rank", s.finetune.rank);
    take(g, "lora_alpha", s.finetune.alpha);
    take(g, "epochs", s.finetune.epochs);
    take(g, "lr", s.finetune.lr);
    take(g, "target_char_budget", s.target_char_budget);
    if (s.backend != "rule-mock" && s.backend != "tiny-lora")
      throw Error("config.generation.backend must be 'rule-mock' or 'tiny-lora'");
    for (const auto& [stage, dir] : s.adapters)
      if (!generation::parse_stage(stage)) throw Error("config.generation.adapters: unknown stage '" + stage + "'");
  }
  if (j.contains("classifier")) {
    const auto& k = j.at("classifier");
    check_keys(k, "config.classifier", {"checkpoint", "epochs", "lr", "buckets", "max_length", "class_weighting"});
    take(k, "checkpoint", c.classifier.checkpoint);
    take(k, "epochs", c.classifier.train.epochs);
    take(k, "lr", c.classifier.train.lr);
    take(k, "buckets", c.classifier.train.buckets);
    take(k, "max_length", c.classifier.train.max_length);
    take(k, "class_weighting", c.classifier.train.class_weighting);
  }
  if (j.contains("embedder")) {
    const auto& e = j.at("embedder");
    check_keys(e, "config.embedder", {"kind", "dim", "path"});
    take(e, "kind", c.embedder.kind);
    take(e, "dim", c.embedder.dim);
    take(e, "path", c.embedder.path);
  }
  if (c.k == 0) throw Error("config: k must be at least 1");
  if (c.workers == 0) throw Error("config: workers must be at least 1");
  return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::exception& e) {
    throw Error("config " + path.string() + ": " + e.what());
  }
  auto c = from_json(j);
  // Relative paths are taken relative to the config file.
  const fs::path base = path.parent_path();
  auto fix = [&](std::string& p) {
    if (!p.empty() && fs::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  for (auto* p : {&c.dataset, &c.articles, &c.silver, &c.out, &c.retriever.checkpoint,
                  &c.generation.base_checkpoint, &c.generation.templates_dir, &c.classifier.checkpoint,
                  &c.embedder.path, &c.oracle.dir})
    fix(*p);
  if (c.judge) fix(c.judge->dir);
  for (auto& [stage, dir] : c.generation.adapters) fix(dir);
  return c;
}

json PipelineConfig::to_json() const {
  const auto& g = generation;
  return {
      {"dataset", dataset},
      {"articles", articles},
      {"silver", silver},
      {"out", out},
      {"scope", scope.name()},
      {"seed", seed},
      {"k", k},
      {"workers", workers},
      {"train_split", train_split},
      {"eval_split", eval_split},
      {"resume", resume},
      {"oracle", oracle_to_json(oracle)},
      {"judge", judge ? oracle_to_json(*judge) : json(nullptr)},
      {"retriever",
       {{"checkpoint", retriever.checkpoint},
        {"dim", retriever.encoder.dim},
        {"buckets", retriever.encoder.buckets},
        {"max_len", retriever.encoder.max_len},
        {"shared_weights", retriever.shared_weights},
        {"alpha", retriever.alpha},
        {"beta", retriever.beta},
        {"epochs", retriever.train.epochs},
        {"batch", retriever.train.batch},
        {"lr", retriever.train.lr},
        {"negatives", retriever.train.mode == retriever::NegativeMode::InBatch ? "in-batch" : "explicit"}}},
      {"generation",
       {{"backend", g.backend},
        {"base_checkpoint", g.base_checkpoint},
        {"adapters", g.adapters},
        {"templates_dir", g.templates_dir},
        {"embed_dim", g.tiny.embed_dim},
        {"hidden", g.tiny.hidden},
        {"input_buckets", g.tiny.input_buckets},
        {"max_positions", g.tiny.max_positions},
        {"max_new_tokens", g.tiny.max_new_tokens},
        {"context_length", g.tiny.context_length},
        {"rank", g.finetune.rank},
        {"lora_alpha", g.finetune.alpha},
        {"epochs", g.finetune.epochs},
        {"lr", g.finetune.lr},
        {"target_char_budget", g.target_char_budget}}},
      {"classifier",
       {{"checkpoint", classifier.checkpoint},
        {"epochs", classifier.train.epochs},
        {"lr", classifier.train.lr},
        {"buckets", classifier.train.buckets},
        {"max_length", classifier.train.max_length},
        {"class_weighting", classifier.train.class_weighting}}},
      {"embedder", {{"kind", embedder.kind}, {"dim", embedder.dim}, {"path", embedder.path}}},
  };
}

fs::path PipelineConfig::silver_path() const { return silver.empty() ? fs::path(out) / "silver.jsonl" : fs::path(silver); }
fs::path PipelineConfig::outputs_path() const { return fs::path(out) / "outputs.jsonl"; }
fs::path PipelineConfig::evidence_path() const { return fs::path(out) / "evidence.jsonl"; }

namespace {

fs::path retriever_dir(const PipelineConfig& c) {
  return c.retriever.checkpoint.empty() ? fs::path(c.out) / "checkpoints" / "retriever" : fs::path(c.retriever.checkpoint);
}

fs::path base_dir(const PipelineConfig& c) {
  return c.generation.base_checkpoint.empty() ? fs::path(c.out) / "checkpoints" / "base"
                                              : fs::path(c.generation.base_checkpoint);
}

fs::path adapter_dir(const PipelineConfig& c, Stage s) {
  auto it = c.generation.adapters.find(std::string(generation::stage_name(s)));
  if (it != c.generation.adapters.end()) return it->second;
  return fs::path(c.out) / "checkpoints" / ("adapter-" + std::string(generation::stage_name(s)));
}

fs::path classifier_dir(const PipelineConfig& c) {
  return c.classifier.checkpoint.empty() ? fs::path(c.out) / "checkpoints" / "classifier"
                                         : fs::path(c.classifier.checkpoint);
}

bool has_checkpoint(const fs::path& dir) { return fs::exists(dir / "manifest.json"); }

// Content digest of every regular file in a checkpoint directory.
std::string checkpoint_digest(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& f : files) {
    h = fnv1a64(f.filename().string(), h);
    h = fnv1a64(read_file(f), h);
  }
  return hex64(h);
}

std::vector<ClaimRecord> load_split(const PipelineConfig& c, std::string_view split_name, CommandResult& res) {
  if (c.dataset.empty()) throw Error("config: dataset path is not set");
  auto split = corpus::parse_split(split_name);
  if (!split) throw Error("config: unknown split '" + std::string(split_name) + "'");
  auto loaded = corpus::load_dataset(c.dataset);
  for (const auto& e : loaded.errors)
    res.warnings.push_back(c.dataset + ":" + std::to_string(e.line) + ": " + e.message);
  std::vector<ClaimRecord> out;
  for (auto& r : loaded.records)
    if (r.split == *split) out.push_back(std::move(r));
  return out;
}

corpus::ArticleStore article_store(const PipelineConfig& c) {
  if (c.articles.empty()) throw Error("config: articles directory is not set");
  if (!fs::is_directory(c.articles)) throw Error("articles directory not found: " + c.articles);
  return corpus::ArticleStore(c.articles);
}

generation::PromptTemplate load_template(const PipelineConfig& c, TemplateKind kind) {
  auto builtin = generation::PromptTemplate::builtin(kind);
  if (c.generation.templates_dir.empty()) return builtin;
  fs::path p = fs::path(c.generation.templates_dir) / (builtin.id + ".txt");
  if (!fs::exists(p)) throw Error("template file not found: " + p.string());
  return generation::PromptTemplate::load(p);
}

// Judge prompts are read from the templates directory when present there.
metrics::JudgeTemplates load_judge_templates(const PipelineConfig& c) {
  auto t = metrics::JudgeTemplates::builtin();
  if (c.generation.templates_dir.empty()) return t;
  for (auto* j : {&t.correctness, &t.completeness}) {
    fs::path p = fs::path(c.generation.templates_dir) / (j->id + ".txt");
    if (fs::exists(p)) *j = metrics::JudgeTemplate::load(p);
  }
  return t;
}

TemplateKind justify_kind(const RunScope& s) {
  switch (s.kind) {
    case RunScope::Kind::Baseline: return TemplateKind::JustifyBaseline;
    case RunScope::Kind::BaselineAspects: return TemplateKind::JustifyWithAspects;
    case RunScope::Kind::Flaws: return TemplateKind::Justify;
  }
  return TemplateKind::Justify;
}

FlawReport restrict_to(const FlawReport& r, FlawScope scope) {
  FlawReport out;
  out.scope = scope;
  for (const auto& f : r.findings)
    if (in_scope(f.flaw, scope)) out.findings.push_back(f);
  return out;
}

void require_fresh_or_resume(const fs::path& p, bool resume, std::string_view what) {
  if (resume) return;
  bool exists = fs::is_directory(p) ? has_checkpoint(p) : (fs::exists(p) && fs::file_size(p) > 0);
  if (exists)
    throw Error(std::string(what) + " already exists at " + p.string() + "; pass --resume to continue from it");
}

std::set<std::string> completed_ids(const fs::path& outputs) {
  std::set<std::string> ids;
  if (!fs::exists(outputs)) return ids;
  for_each_jsonl(
      outputs, [&](std::size_t, const json& j) { ids.insert(j.at("claim_id").get<std::string>()); },
      [](std::size_t, const std::string&) {});
  return ids;
}

void write_manifest(const fs::path& path, const json& manifest) {
  fs::create_directories(path.parent_path());
  write_file_atomic(path, manifest.dump(2) + "\n");
}

json failures_json(const std::vector<Failure>& fs_) {
  json a = json::array();
  for (const auto& f : fs_) a.push_back({{"claim_id", f.claim_id}, {"stage", f.stage}, {"reason", f.reason}});
  return a;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

// --- oracles and embedders ------------------------------------------------------------------

std::unique_ptr<Oracle> make_oracle(const OracleSpec& spec) {
  std::unique_ptr<Oracle> o;
  if (spec.kind == "rule-mock") {
    o = std::make_unique<RuleMockOracle>();
  } else if (spec.kind == "fixture") {
    if (spec.dir.empty()) throw Error("fixture oracle needs a directory");
    o = std::make_unique<FixtureOracle>(spec.dir);
  } else if (spec.kind == "http") {
    HttpOracleConfig h = spec.http;
    if (h.api_key.empty() && !spec.api_key_env.empty()) {
      const char* v = std::getenv(spec.api_key_env.c_str());
      if (!v) throw Error("environment variable " + spec.api_key_env + " is not set");
      h.api_key = v;
    }
    o = std::make_unique<HttpOracle>(std::move(h));
  } else {
    throw Error("unknown oracle kind '" + spec.kind + "'");
  }
  if (spec.min_interval_ms > 0)
    return std::make_unique<ThrottledOracle>(std::shared_ptr<Oracle>(std::move(o)),
                                             std::chrono::milliseconds(spec.min_interval_ms));
  return o;
}

std::unique_ptr<metrics::Embedder> make_embedder(const EmbedderSpec& spec) {
  if (spec.kind == "hashed") return std::make_unique<metrics::HashedEmbedder>(spec.dim);
  if (spec.kind == "lookup") return std::make_unique<metrics::LookupEmbedder>(metrics::LookupEmbedder::load_text(spec.path));
  throw Error("unknown embedder kind '" + spec.kind + "'");
}

namespace {

std::string line_value(const std::string& text, std::string_view key) {
  auto p = text.find(key);
  if (p == std::string::npos) return "";
  p += key.size();
  auto e = text.find('\n', p);
  return trim(text.substr(p, e == std::string::npos ? std::string::npos : e - p));
}

std::string between(const std::string& text, std::string_view open, std::string_view close) {
  auto p = text.find(open);
  if (p == std::string::npos) return "";
  p += open.size();
  auto e = text.find(close, p);
  return text.substr(p, e == std::string::npos ? std::string::npos : e - p);
}

}  // namespace

OracleResponse RuleMockOracle::send(const OracleRequest& request) {
  const std::string& p = request.prompt;
  std::ostringstream out;
  if (p.find("Generated justification:") != std::string::npos) {
    std::string ref = between(p, "Reference review:\n", "\n\nGenerated justification:");
    std::string just = between(p, "Generated justification:\n", "\n\nAnswer with");
    auto r = metrics::rouge_n(just, ref, 1);
    double v = p.find("Score completeness") != std::string::npos ? r.recall() : r.precision();
    out << std::fixed << std::setprecision(4) << v;
    return {out.str(), "stop"};
  }
  const std::string claim = line_value(p, "Claim: ");
  auto words = word_tokens(claim);
  std::string review_first;
  for (const auto& l : split_lines(between(p, "Review:\n", "\n\n\n"))) {
    if (!trim(l).empty()) {
      review_first = trim(l);
      break;
    }
  }
  if (p.find("ASPECT 1:") != std::string::npos) {
    std::string a = words.empty() ? "claim" : words.front();
    std::string b = words.size() > 1 ? words.back() : "context";
    if (a == b) b += " context";
    out << "ASPECT 1: Origin of " << a << " -- Where the statement about " << a << " comes from.\n"
        << "ASPECT 2: Record on " << b << " -- What the documented record says about " << b << ".\n";
    return {out.str(), "stop"};
  }
  if (p.find("FLAW <type>") != std::string::npos) {
    for (const auto& line : split_lines(p)) {
      if (!line.starts_with("- ")) continue;
      auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      auto flaw = parse_flaw_type(line.substr(2, colon - 2));
      if (!flaw) continue;
      bool present = fnv1a64(claim + "|" + std::string(flaw_name(*flaw))) % 3 == 0;
      out << "FLAW " << flaw_name(*flaw) << ": ";
      if (present)
        out << "PRESENT -- The review shows otherwise: "
            << (review_first.empty() ? std::string("the record does not support it") : review_first);
      else
        out << "ABSENT";
      out << "\n";
    }
    return {out.str(), "stop"};
  }
  return {"", "stop"};
}

// --- evidence cache -----------------------------------------------------------------------------

EvidenceCache::EvidenceCache(fs::path path, std::shared_ptr<const retriever::EncoderPair> encoders,
                             const corpus::ArticleStore& articles, std::size_t k)
    : path_(std::move(path)), encoders_(std::move(encoders)), articles_(articles), k_(k) {
  if (fs::exists(path_)) {
    for_each_jsonl(
        path_,
        [&](std::size_t, const json& j) {
          auto e = retriever::evidence_from_json(j);
          if (e.k == k_) sets_[e.claim_id] = std::move(e);
        },
        [](std::size_t, const std::string&) {});
  }
  fs::create_directories(path_.parent_path().empty() ? fs::path(".") : path_.parent_path());
  writer_ = std::make_unique<JsonlAppender>(path_);
}

std::size_t EvidenceCache::cached() const {
  std::lock_guard lock(mu_);
  return sets_.size();
}

retriever::EvidenceSet EvidenceCache::get(const ClaimRecord& rec) {
  {
    std::lock_guard lock(mu_);
    auto it = sets_.find(rec.id);
    if (it != sets_.end()) return it->second;
  }
  std::vector<corpus::Article> premises;
  std::vector<std::string> warnings;
  for (const auto& ref : rec.premise_articles) {
    try {
      premises.push_back(articles_.load(ref));
    } catch (const Error& e) {
      warnings.push_back(std::string("premise skipped: ") + e.what());
    }
  }
  auto set = retriever::retrieve_evidence(*encoders_->claim, *encoders_->sentence, rec.id, rec.text, premises, k_);
  set.warnings.insert(set.warnings.begin(), warnings.begin(), warnings.end());
  std::lock_guard lock(mu_);
  auto [it, inserted] = sets_.emplace(rec.id, set);
  if (inserted) {
    writer_->append(retriever::to_json(set));
    ++computed_;
  }
  return it->second;
}

// --- distill -------------------------------------------------------------------------------------

CommandResult cmd_distill(const PipelineConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  CommandResult res;
  auto records = load_split(cfg, cfg.train_split, res);
  auto store = article_store(cfg);
  const fs::path out = cfg.silver_path();
  require_fresh_or_resume(out, cfg.resume, "silver dataset");
  fs::create_directories(out.parent_path().empty() ? fs::path(".") : out.parent_path());
  auto oracle = make_oracle(cfg.oracle);

  distiller::DistillRunOptions opts;
  opts.workers = cfg.workers;
  // Always distill all seven flaws; narrower scopes select from them.
  auto summary = distiller::distill_corpus(records, store, *oracle, FlawScope::Seven, out, opts);
  res.processed = summary.written;
  res.skipped = summary.skipped;
  for (auto& f : summary.failures) res.failures.push_back({f.claim_id, "distill", f.reason});

  res.manifest = {{"command", "distill"},
                  {"config", cfg.to_json()},
                  {"oracle", oracle->id()},
                  {"output", out.string()},
                  {"written", res.processed},
                  {"skipped", res.skipped},
                  {"seconds", seconds_since(t0)},
                  {"failures", failures_json(res.failures)}};
  write_manifest(fs::path(cfg.out) / "manifests" / "distill.json", res.manifest);
  return res;
}

// --- retriever ------------------------------------------------------------------------------------

CommandResult cmd_train_retriever(const PipelineConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  CommandResult res;
  const fs::path dir = retriever_dir(cfg);
  if (has_checkpoint(dir)) {
    if (!cfg.resume)
      throw Error("retriever checkpoint already exists at " + dir.string() + "; pass --resume to keep it");
    res.skipped = 1;
    res.manifest = {{"command", "train-retriever"}, {"checkpoint", dir.string()}, {"skipped", true}};
    return res;
  }
  auto records = load_split(cfg, cfg.train_split, res);
  auto store = article_store(cfg);
  std::vector<retriever::ReviewedClaim> items;
  for (const auto& r : records) {
    if (!r.review_article) continue;
    try {
      auto a = store.load(*r.review_article);
      retriever::ReviewedClaim rc{r.id, r.text, {}};
      for (const auto& s : a.sentences) rc.review_sentences.push_back(s.text);
      items.push_back(std::move(rc));
    } catch (const Error& e) {
      res.failures.push_back({r.id, "train-retriever", e.what()});
    }
  }
  auto triples = retriever::build_training_triples(items, cfg.retriever.alpha, cfg.retriever.beta, cfg.seed);
  for (auto& w : triples.warnings) res.warnings.push_back(std::move(w));
  if (triples.triples.empty()) throw Error("train-retriever: no usable training triples");

  auto pair = retriever::EncoderPair::create(cfg.retriever.encoder, cfg.seed, cfg.retriever.shared_weights);
  auto tc = cfg.retriever.train;
  tc.seed = cfg.seed;
  auto result = retriever::train_retriever(triples.triples, pair, tc);
  retriever::save_encoders(pair, dir);
  res.processed = triples.triples.size();
  res.manifest = {{"command", "train-retriever"},
                  {"config", cfg.to_json()},
                  {"checkpoint", dir.string()},
                  {"checkpoint_id", checkpoint_digest(dir)},
                  {"triples", triples.triples.size()},
                  {"loss_curve", result.loss_curve},
                  {"epoch_train_loss", result.epoch_train_loss},
                  {"seconds", seconds_since(t0)},
                  {"failures", failures_json(res.failures)}};
  write_manifest(dir / "train_log.json", res.manifest);
  return res;
}

// --- fine-tuning -----------------------------------------------------------------------------------

namespace {

std::shared_ptr<const retriever::EncoderPair> load_retriever(const PipelineConfig& cfg) {
  fs::path dir = retriever_dir(cfg);
  if (!has_checkpoint(dir)) throw Error("retriever checkpoint missing at " + dir.string() + "; run train-retriever");
  return std::make_shared<const retriever::EncoderPair>(retriever::load_encoders(dir));
}

struct StageData {
  const ClaimRecord* rec;
  const distiller::SilverRecord* silver;  // may be null
  std::string review;                     // truncated justification target
};

std::string render_for(Stage stage, const PipelineConfig& cfg, const generation::PromptTemplate& tmpl,
                       const ClaimRecord& rec, const distiller::SilverRecord* silver,
                       const std::vector<retriever::EvidenceItem>& evidence) {
  generation::PromptInputs in;
  in.claim = rec.text;
  in.evidence = &evidence;
  FlawReport flaws;
  generation::RenderLimits limits;
  limits.context_tokens = cfg.generation.tiny.context_length;
  switch (stage) {
    case Stage::Aspects: break;
    case Stage::Flaws:
      in.aspects = &silver->aspects;
      in.scope = cfg.scope.flaws;
      break;
    case Stage::Justify:
      if (cfg.scope.uses_flaws()) {
        flaws = restrict_to(silver->report, cfg.scope.flaws);
        in.flaws = &flaws;
      } else if (cfg.scope.uses_aspects()) {
        in.aspects = &silver->aspects;
      }
      break;
  }
  return generation::render_prompt(tmpl, in, limits);
}

std::string target_for(Stage stage, const PipelineConfig& cfg, const StageData& d) {
  switch (stage) {
    case Stage::Aspects: return serialize(d.silver->aspects);
    case Stage::Flaws: return serialize(restrict_to(d.silver->report, cfg.scope.flaws));
    case Stage::Justify: return d.review;
  }
  return "";
}

}  // namespace

CommandResult cmd_finetune(Stage stage, const PipelineConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  CommandResult res;
  if (stage == Stage::Flaws && !cfg.scope.uses_flaws())
    throw Error("scope " + cfg.scope.name() + " has no flaw-checking stage");
  if (stage == Stage::Aspects && !cfg.scope.uses_aspects())
    throw Error("scope " + cfg.scope.name() + " has no aspect stage");
  const fs::path out_dir = adapter_dir(cfg, stage);
  if (has_checkpoint(out_dir)) {
    if (!cfg.resume) throw Error("adapter already exists at " + out_dir.string() + "; pass --resume to keep it");
    res.skipped = 1;
    res.manifest = {{"command", "finetune"}, {"stage", generation::stage_name(stage)}, {"skipped", true}};
    return res;
  }

  auto records = load_split(cfg, cfg.train_split, res);
  auto store = article_store(cfg);
  const bool needs_silver = stage != Stage::Justify || cfg.scope.uses_aspects();
  std::unordered_map<std::string, distiller::SilverRecord> silver;
  if (needs_silver || !has_checkpoint(base_dir(cfg))) {
    if (!fs::exists(cfg.silver_path())) {
      if (needs_silver) throw Error("silver dataset missing at " + cfg.silver_path().string() + "; run distill");
    } else {
      for (auto& s : distiller::load_silver(cfg.silver_path())) silver.emplace(s.claim_id, std::move(s));
    }
  }

  std::vector<StageData> data;
  for (const auto& r : records) {
    StageData d{&r, nullptr, {}};
    auto it = silver.find(r.id);
    if (it != silver.end()) d.silver = &it->second;
    if (needs_silver && !d.silver) {
      res.failures.push_back({r.id, "finetune", "no silver record"});
      continue;
    }
    if (!r.review_article) {
      res.failures.push_back({r.id, "finetune", "no review article"});
      continue;
    }
    try {
      d.review = distiller::truncate_at_sentence(store.load(*r.review_article).clean_text,
                                                 cfg.generation.target_char_budget);
    } catch (const Error& e) {
      res.failures.push_back({r.id, "finetune", e.what()});
      continue;
    }
    data.push_back(std::move(d));
  }
  if (data.empty()) throw Error("finetune: no usable training examples");

  // The base is shared by every stage, so its vocabulary covers all targets.
  std::shared_ptr<const generation::BaseWeights> base;
  const fs::path bdir = base_dir(cfg);
  if (has_checkpoint(bdir)) {
    base = generation::load_base(bdir);
  } else {
    std::vector<std::string> texts;
    for (const auto& d : data) {
      texts.push_back(d.review);
      if (d.silver) {
        texts.push_back(serialize(d.silver->aspects));
        texts.push_back(serialize(d.silver->report));
      }
    }
    base = std::make_shared<const generation::BaseWeights>(
        generation::BaseWeights::create(cfg.generation.tiny, generation::Vocabulary::build(texts), cfg.seed));
    generation::save_base(*base, bdir);
  }

  auto encoders = load_retriever(cfg);
  EvidenceCache cache(cfg.evidence_path(), encoders, store, cfg.k);
  TemplateKind kind = stage == Stage::Aspects ? TemplateKind::Aspects
                      : stage == Stage::Flaws ? TemplateKind::Flaws
                                              : justify_kind(cfg.scope);
  auto tmpl = load_template(cfg, kind);

  std::vector<generation::FineTuneExample> examples;
  for (const auto& d : data) {
    try {
      auto ev = cache.get(*d.rec);
      generation::FineTuneExample ex{render_for(stage, cfg, tmpl, *d.rec, d.silver, ev.items),
                                     target_for(stage, cfg, d)};
      generation::validate_example(stage, ex, cfg.scope.flaws);
      examples.push_back(std::move(ex));
    } catch (const Error& e) {
      res.failures.push_back({d.rec->id, "finetune", e.what()});
    }
  }
  if (examples.empty()) throw Error("finetune: no usable training examples");

  auto fc = cfg.generation.finetune;
  fc.seed = cfg.seed;
  fc.template_id = tmpl.id;
  auto before = base->checksum();
  auto result = generation::finetune_adapter(base, examples, fc);
  if (base->checksum() != before) throw Error("finetune modified the base weights");
  generation::save_adapter(result.model->adapter(), out_dir);

  res.processed = examples.size();
  res.manifest = {{"command", "finetune"},
                  {"stage", generation::stage_name(stage)},
                  {"scope", cfg.scope.name()},
                  {"config", cfg.to_json()},
                  {"template_id", tmpl.id},
                  {"base_model_id", base->model_id()},
                  {"adapter", out_dir.string()},
                  {"examples", examples.size()},
                  {"loss_curve", result.loss_curve},
                  {"seconds", seconds_since(t0)},
                  {"failures", failures_json(res.failures)}};
  write_manifest(out_dir / "train_log.json", res.manifest);
  return res;
}

// --- classifier --------------------------------------------------------------------------------------

CommandResult cmd_train_classifier(const PipelineConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  CommandResult res;
  const fs::path dir = classifier_dir(cfg);
  if (has_checkpoint(dir)) {
    if (!cfg.resume) throw Error("classifier already exists at " + dir.string() + "; pass --resume to keep it");
    res.skipped = 1;
    res.manifest = {{"command", "train-classifier"}, {"skipped", true}};
    return res;
  }
  auto records = load_split(cfg, cfg.train_split, res);
  auto store = article_store(cfg);
  std::vector<std::string> texts;
  std::vector<corpus::VeracityLabel> labels;
  for (const auto& r : records) {
    if (!r.review_article) continue;
    try {
      texts.push_back(store.load(*r.review_article).clean_text);
      labels.push_back(r.label);
    } catch (const Error& e) {
      res.failures.push_back({r.id, "train-classifier", e.what()});
    }
  }
  auto tc = cfg.classifier.train;
  tc.seed = cfg.seed;
  auto trained = veracity::train_classifier(texts, labels, tc);
  veracity::save_classifier(trained.classifier, dir);
  res.processed = texts.size();
  res.warnings.insert(res.warnings.end(), trained.warnings.begin(), trained.warnings.end());
  res.manifest = {{"command", "train-classifier"},
                  {"config", cfg.to_json()},
                  {"checkpoint", dir.string()},
                  {"checkpoint_id", checkpoint_digest(dir)},
                  {"examples", texts.size()},
                  {"loss_curve", trained.loss_curve},
                  {"warnings", trained.warnings},
                  {"seconds", seconds_since(t0)},
                  {"failures", failures_json(res.failures)}};
  write_manifest(dir / "train_log.json", res.manifest);
  return res;
}

// --- run ------------------------------------------------------------------------------------------------

namespace {

struct StageBackends {
  std::unique_ptr<generation::GenBackend> aspects, flaws, justify;
};

class BackendFactory {
 public:
  explicit BackendFactory(const PipelineConfig& cfg) : cfg_(cfg) {
    if (cfg.generation.backend == "tiny-lora") {
      fs::path bdir = base_dir(cfg);
      if (!has_checkpoint(bdir)) throw Error("base model checkpoint missing at " + bdir.string() + "; run finetune");
      base_ = generation::load_base(bdir);
      auto load = [&](Stage s) {
        fs::path d = adapter_dir(cfg, s);
        if (!has_checkpoint(d))
          throw Error("adapter for stage " + std::string(generation::stage_name(s)) + " missing at " + d.string());
        adapters_.emplace(s, generation::load_adapter(d, *base_));
        adapter_ids_[std::string(generation::stage_name(s))] = checkpoint_digest(d);
      };
      if (cfg.scope.uses_aspects()) load(Stage::Aspects);
      if (cfg.scope.uses_flaws()) load(Stage::Flaws);
      load(Stage::Justify);
    }
  }

  StageBackends make() const {
    StageBackends b;
    auto one = [&](Stage s) -> std::unique_ptr<generation::GenBackend> {
      if (!base_) return std::make_unique<generation::RuleMockBackend>();
      return std::make_unique<generation::TinyLoraLM>(base_, adapters_.at(s));
    };
    if (cfg_.scope.uses_aspects()) b.aspects = one(Stage::Aspects);
    if (cfg_.scope.uses_flaws()) b.flaws = one(Stage::Flaws);
    b.justify = one(Stage::Justify);
    return b;
  }

  json ids() const {
    json j = {{"backend", cfg_.generation.backend}};
    if (base_) {
      j["base_model_id"] = base_->model_id();
      j["adapters"] = adapter_ids_;
    }
    return j;
  }

 private:
  const PipelineConfig& cfg_;
  std::shared_ptr<const generation::BaseWeights> base_;
  std::map<Stage, generation::LoraAdapter> adapters_;
  std::map<std::string, std::string> adapter_ids_;
};

struct Timings {
  double retrieve = 0, aspects = 0, flaws = 0, justify = 0, classify = 0;
  json to_json() const {
    return {{"retrieve", retrieve}, {"aspects", aspects}, {"flaws", flaws}, {"justify", justify}, {"classify", classify}};
  }
};

json stage_log_json(const generation::StageLog& log) {
  return {{"template_id", log.template_id}, {"raw_outputs", log.raw_outputs}, {"warnings", log.warnings}};
}

std::optional<veracity::VeracityClassifier> maybe_classifier(const PipelineConfig& cfg) {
  fs::path dir = classifier_dir(cfg);
  if (has_checkpoint(dir)) return veracity::load_classifier(dir);
  if (!cfg.classifier.checkpoint.empty()) throw Error("classifier checkpoint missing at " + dir.string());
  return std::nullopt;
}

}  // namespace

CommandResult cmd_run_pipeline(const PipelineConfig& cfg) {
  auto t0 = std::chrono::steady_clock::now();
  CommandResult res;

  // Everything that can be misconfigured is checked before the first claim.
  auto records = load_split(cfg, cfg.eval_split, res);
  auto store = article_store(cfg);
  auto encoders = load_retriever(cfg);
  BackendFactory factory(cfg);
  auto classifier = maybe_classifier(cfg);
  std::optional<generation::PromptTemplate> t_aspects, t_flaws;
  if (cfg.scope.uses_aspects()) t_aspects = load_template(cfg, TemplateKind::Aspects);
  if (cfg.scope.uses_flaws()) t_flaws = load_template(cfg, TemplateKind::Flaws);
  const auto t_justify = load_template(cfg, justify_kind(cfg.scope));

  fs::create_directories(cfg.out);
  const fs::path outputs = cfg.outputs_path();
  require_fresh_or_resume(outputs, cfg.resume, "run output");
  auto done = completed_ids(outputs);
  std::vector<const ClaimRecord*> todo;
  for (const auto& r : records) {
    if (done.count(r.id))
      ++res.skipped;
    else
      todo.push_back(&r);
  }

  EvidenceCache cache(cfg.evidence_path(), encoders, store, cfg.k);
  JsonlAppender writer(outputs);
  std::mutex mu;
  Timings timings;

  std::vector<StageBackends> backends;
  const std::size_t workers = std::max<std::size_t>(1, std::min(cfg.workers, todo.size()));
  for (std::size_t w = 0; w < workers; ++w) backends.push_back(factory.make());

  parallel_for(todo.size(), workers, [&](std::size_t w, std::size_t i) {
    const ClaimRecord& rec = *todo[i];
    auto& b = backends[w];
    Timings local;
    std::string stage = "retrieve";
    try {
      auto ts = std::chrono::steady_clock::now();
      auto ev = cache.get(rec);
      local.retrieve = seconds_since(ts);

      json out = {{"claim_id", rec.id}, {"claim", rec.text}, {"scope", cfg.scope.name()},
                  {"gold_label", corpus::label_name(rec.label)}};
      json logs = json::object();
      std::optional<generation::AspectOutput> aspects;
      if (cfg.scope.uses_aspects()) {
        stage = "aspects";
        ts = std::chrono::steady_clock::now();
        aspects = generation::generate_aspects(*b.aspects, rec.text, ev.items, *t_aspects);
        local.aspects = seconds_since(ts);
        out["aspects"] = to_json(aspects->aspects);
        logs["aspects"] = stage_log_json(aspects->log);
      }
      generation::Justification just;
      if (cfg.scope.uses_flaws()) {
        stage = "flaws";
        ts = std::chrono::steady_clock::now();
        auto flaws = generation::check_flaws(*b.flaws, rec.text, aspects->aspects, ev.items, cfg.scope.flaws, *t_flaws);
        local.flaws = seconds_since(ts);
        out["flaw_report"] = to_json(flaws.report);
        logs["flaws"] = stage_log_json(flaws.log);
        stage = "justify";
        ts = std::chrono::steady_clock::now();
        just = generation::generate_justification(*b.justify, rec.id, rec.text, flaws.report, ev.items, t_justify);
      } else {
        stage = "justify";
        ts = std::chrono::steady_clock::now();
        just = generation::generate_baseline_justification(*b.justify, rec.id, rec.text,
                                                           aspects ? &aspects->aspects : nullptr, ev.items,
                                                           t_justify);
      }
      local.justify = seconds_since(ts);
      out["justification"] = just.text;
      out["evidence_ids"] = just.evidence_ids;
      logs["justify"] = stage_log_json(just.log);
      if (classifier) {
        stage = "classify";
        ts = std::chrono::steady_clock::now();
        auto pred = classifier->classify(just.text);
        local.classify = seconds_since(ts);
        out["predicted_label"] = corpus::label_name(pred.label);
        out["probabilities"] = pred.probs;
      }
      out["evidence_warnings"] = ev.warnings;
      out["stages"] = logs;

      std::lock_guard lock(mu);
      writer.append(out);
      ++res.processed;
      timings.retrieve += local.retrieve;
      timings.aspects += local.aspects;
      timings.flaws += local.flaws;
      timings.justify += local.justify;
      timings.classify += local.classify;
    } catch (const Error& e) {
      std::lock_guard lock(mu);
      res.failures.push_back({rec.id, stage, e.what()});
    }
  });
  std::sort(res.failures.begin(), res.failures.end(),
            [](const Failure& a, const Failure& b) { return a.claim_id < b.claim_id; });

  json templates = {{"justify", t_justify.id}};
  if (t_aspects) templates["aspects"] = t_aspects->id;
  if (t_flaws) templates["flaws"] = t_flaws->id;
  json checkpoints = {{"retriever", checkpoint_digest(retriever_dir(cfg))}, {"generation", factory.ids()}};
  if (classifier) checkpoints["classifier"] = checkpoint_digest(classifier_dir(cfg));

  res.manifest = {{"command", "run"},
                  {"config", cfg.to_json()},
                  {"scope", cfg.scope.name()},
                  {"system", system_name(cfg.scope)},
                  {"templates", templates},
                  {"checkpoints", checkpoints},
                  {"timings", timings.to_json()},
                  {"seconds", seconds_since(t0)},
                  {"processed", res.processed},
                  {"skipped", res.skipped},
                  {"evidence_computed", cache.computed()},
                  {"failures", failures_json(res.failures)}};
  write_manifest(fs::path(cfg.out) / "manifest.json", res.manifest);
  return res;
}

// --- evaluate ----------------------------------------------------------------------------------------------

json EvaluationReport::to_json() const {
  return {{"quality", metrics::per_label_table_json(quality)},
          {"judge", metrics::per_label_table_json(judge)},
          {"veracity", veracity::veracity_table_json(veracity)},
          {"excluded_missing_gold", excluded_missing_gold},
          {"unjudged", unjudged}};
}

std::string EvaluationReport::to_text() const {
  std::ostringstream os;
  os << "Justification quality\n" << metrics::format_per_label_table(quality) << "\n";
  if (!judge.empty()) os << "Judge scores\n" << metrics::format_per_label_table(judge) << "\n";
  if (!veracity.empty()) os << "Veracity classification (per-label accuracy)\n" << veracity::format_veracity_table(veracity) << "\n";
  os << "excluded (missing gold): " << excluded_missing_gold << "\n";
  if (!judge.empty()) os << "unjudged: " << unjudged << "\n";
  return os.str();
}

EvaluationReport cmd_evaluate(const PipelineConfig& cfg, const std::vector<std::string>& runs_in) {
  std::vector<std::string> runs = runs_in.empty() ? std::vector<std::string>{cfg.out} : runs_in;
  if (cfg.dataset.empty()) throw Error("config: dataset path is not set");
  auto loaded = corpus::load_dataset(cfg.dataset);
  std::unordered_map<std::string, const ClaimRecord*> by_id;
  for (const auto& r : loaded.records) by_id.emplace(r.id, &r);
  auto store = article_store(cfg);
  auto embedder = make_embedder(cfg.embedder);
  std::unique_ptr<Oracle> judge = cfg.judge ? make_oracle(*cfg.judge) : nullptr;
  const auto judge_templates = load_judge_templates(cfg);
  auto classifier = maybe_classifier(cfg);

  std::map<std::string, std::string> gold_reviews;  // claim id -> review text
  auto gold_review = [&](const ClaimRecord& r) -> std::optional<std::string> {
    auto it = gold_reviews.find(r.id);
    if (it != gold_reviews.end()) return it->second;
    if (!r.review_article) return std::nullopt;
    try {
      auto text = store.load(*r.review_article).clean_text;
      gold_reviews.emplace(r.id, text);
      return text;
    } catch (const Error&) {
      return std::nullopt;
    }
  };

  EvaluationReport report;
  std::set<std::string> evaluated_ids;
  for (const auto& run : runs) {
    fs::path outputs = fs::path(run) / "outputs.jsonl";
    if (!fs::exists(outputs)) throw Error("no pipeline outputs in " + run);
    std::string source = fs::path(run).filename().string();
    if (fs::exists(fs::path(run) / "manifest.json")) {
      auto m = json::parse(read_file(fs::path(run) / "manifest.json"));
      source = m.value("system", source);
    }
    struct Row {
      const ClaimRecord* rec;
      std::string justification;
      std::string reference;
      std::optional<corpus::VeracityLabel> stored_prediction;
    };
    std::vector<Row> rows;
    std::size_t lines = 0;
    for_each_jsonl(
        outputs,
        [&](std::size_t, const json& j) {
          ++lines;
          auto it = by_id.find(j.at("claim_id").get<std::string>());
          std::optional<std::string> ref;
          if (it != by_id.end()) ref = gold_review(*it->second);
          if (!ref) {
            ++report.excluded_missing_gold;
            return;
          }
          Row row{it->second, j.at("justification").get<std::string>(), *ref, std::nullopt};
          if (j.contains("predicted_label")) row.stored_prediction = corpus::parse_label(j.at("predicted_label").get<std::string>());
          rows.push_back(std::move(row));
        },
        [](std::size_t, const std::string&) {});
    if (lines == 0) throw Error("no pipeline outputs in " + run);

    std::vector<metrics::ScoredItem> quality(rows.size()), judged(rows.size());
    std::vector<std::uint8_t> unjudged(rows.size(), 0);
    parallel_for(rows.size(), cfg.workers, [&](std::size_t, std::size_t i) {
      const auto& r = rows[i];
      auto& q = quality[i];
      q.gold = r.rec->label;
      q.scores["rouge1"] = metrics::rouge_n(r.justification, r.reference, 1).f1();
      q.scores["rouge2"] = metrics::rouge_n(r.justification, r.reference, 2).f1();
      q.scores["rougeL"] = metrics::rouge_l(r.justification, r.reference).f1();
      q.scores["bertscore"] = metrics::bertscore(r.justification, r.reference, *embedder).f1;
      if (judge) {
        auto s = metrics::judge_justification(r.justification, r.reference, *judge, judge_templates);
        judged[i].gold = r.rec->label;
        if (s.correctness) judged[i].scores["correctness"] = *s.correctness;
        if (s.completeness) judged[i].scores["completeness"] = *s.completeness;
        unjudged[i] = s.judged() ? 0 : 1;
      }
    });
    report.quality.emplace_back(source, metrics::per_label_report(quality, {"rouge1", "rouge2", "rougeL", "bertscore"}));
    if (judge) {
      report.judge.emplace_back(source, metrics::per_label_report(judged, {"correctness", "completeness"}));
      for (auto u : unjudged) report.unjudged += u;
    }

    std::vector<corpus::VeracityLabel> gold, pred;
    for (const auto& r : rows) {
      std::optional<corpus::VeracityLabel> p;
      if (classifier)
        p = classifier->classify(r.justification).label;
      else
        p = r.stored_prediction;
      if (!p) continue;
      gold.push_back(r.rec->label);
      pred.push_back(*p);
      evaluated_ids.insert(r.rec->id);
    }
    if (!gold.empty()) report.veracity.push_back({source, veracity::score_predictions(gold, pred)});
  }

  if (classifier && !evaluated_ids.empty()) {
    std::vector<corpus::VeracityLabel> gold, pred;
    for (const auto& id : evaluated_ids) {
      const auto& rec = *by_id.at(id);
      gold.push_back(rec.label);
      pred.push_back(classifier->classify(gold_reviews.at(id)).label);
    }
    report.veracity.insert(report.veracity.begin(), {"golden review", veracity::score_predictions(gold, pred)});
  }

  fs::path dir = fs::path(cfg.out) / "reports";
  fs::create_directories(dir);
  write_file_atomic(dir / "quality.json", metrics::per_label_table_json(report.quality).dump(2) + "\n");
  write_file_atomic(dir / "quality.txt", metrics::format_per_label_table(report.quality));
  if (judge) {
    write_file_atomic(dir / "judge.json", metrics::per_label_table_json(report.judge).dump(2) + "\n");
    write_file_atomic(dir / "judge.txt", metrics::format_per_label_table(report.judge));
  }
  if (!report.veracity.empty()) {
    write_file_atomic(dir / "veracity.json", veracity::veracity_table_json(report.veracity).dump(2) + "\n");
    write_file_atomic(dir / "veracity.txt", veracity::format_veracity_table(report.veracity));
  }
  write_file_atomic(dir / "summary.json", report.to_json().dump(2) + "\n");
  write_file_atomic(dir / "summary.txt", report.to_text());
  return report;
}

}  // namespace refute::pipeline

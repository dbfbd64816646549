// Command-line front end for the claim-refutation pipeline.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "refute/pipeline.hpp"

namespace {

using refute::pipeline::PipelineConfig;

struct CommonFlags {
  std::string config;
  std::string scope;
  std::string out;
  std::string dataset;
  std::string articles;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  bool resume = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "JSON configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--scope", f.scope, "baseline, baseline-aspects, 3f, 5f or 7f");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--dataset", f.dataset, "claims JSON-lines file");
  cmd->add_option("--articles", f.articles, "article store directory");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--workers", f.workers, "worker threads");
  cmd->add_flag("--resume", f.resume, "continue from existing outputs and checkpoints");
}

PipelineConfig resolve(const CommonFlags& f) {
  PipelineConfig c = f.config.empty() ? PipelineConfig{} : PipelineConfig::load(f.config);
  if (!f.scope.empty()) {
    auto s = refute::pipeline::parse_run_scope(f.scope);
    if (!s) throw refute::Error("unknown scope '" + f.scope + "'");
    c.scope = *s;
  }
  if (!f.out.empty()) c.out = f.out;
  if (!f.dataset.empty()) c.dataset = f.dataset;
  if (!f.articles.empty()) c.articles = f.articles;
  if (f.seed) c.seed = *f.seed;
  if (f.workers) c.workers = *f.workers;
  if (f.resume) c.resume = true;
  return c;
}

int report(const std::string& name, const refute::pipeline::CommandResult& r) {
  std::cout << name << ": processed " << r.processed << ", skipped " << r.skipped << ", failed "
            << r.failures.size() << "\n";
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  for (const auto& f : r.failures) std::cerr << "failed " << f.claim_id << " [" << f.stage << "]: " << f.reason << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Claim refutation pipeline: distill, train, run and evaluate"};
  app.require_subcommand(1);

  CommonFlags distill_f, retr_f, ft_f, cls_f, run_f, eval_f;
  auto* distill = app.add_subcommand("distill", "distill silver aspects and flaw findings from reviews");
  add_common(distill, distill_f);
  auto* train_retriever = app.add_subcommand("train-retriever", "train the evidence retriever");
  add_common(train_retriever, retr_f);
  auto* finetune = app.add_subcommand("finetune", "fine-tune a stage adapter");
  add_common(finetune, ft_f);
  std::string stage_name;
  finetune->add_option("--stage", stage_name, "aspects, flaws or justify")->required();
  auto* train_classifier = app.add_subcommand("train-classifier", "train the veracity classifier on reviews");
  add_common(train_classifier, cls_f);
  auto* run = app.add_subcommand("run", "generate justifications for the evaluation split");
  add_common(run, run_f);
  auto* evaluate = app.add_subcommand("evaluate", "score pipeline outputs against gold reviews and labels");
  add_common(evaluate, eval_f);
  std::vector<std::string> run_dirs;
  evaluate->add_option("--run", run_dirs, "run directory to score (repeatable; default: --out)");

  CLI11_PARSE(app, argc, argv);

  try {
    using namespace refute::pipeline;
    if (*distill) return report("distill", cmd_distill(resolve(distill_f)));
    if (*train_retriever) return report("train-retriever", cmd_train_retriever(resolve(retr_f)));
    if (*finetune) {
      auto stage = refute::generation::parse_stage(stage_name);
      if (!stage) throw refute::Error("unknown stage '" + stage_name + "'");
      return report("finetune", cmd_finetune(*stage, resolve(ft_f)));
    }
    if (*train_classifier) return report("train-classifier", cmd_train_classifier(resolve(cls_f)));
    if (*run) return report("run", cmd_run_pipeline(resolve(run_f)));
    if (*evaluate) {
      auto r = cmd_evaluate(resolve(eval_f), run_dirs);
      std::cout << r.to_text();
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

#include <gtest/gtest.h>

#include <cmath>

#include "refute/generation.hpp"
#include "support.hpp"

namespace refute::generation {
namespace {

TinyLMConfig small_config() {
  TinyLMConfig c;
  c.embed_dim = 4;
  c.hidden = 8;
  c.input_buckets = 64;
  c.max_positions = 32;
  c.max_new_tokens = 16;
  return c;
}

std::shared_ptr<const BaseWeights> small_base(std::uint64_t seed = 3) {
  auto vocab = Vocabulary::build({"alpha beta gamma", "delta epsilon.", "beta beta zeta"});
  return std::make_shared<const BaseWeights>(BaseWeights::create(small_config(), vocab, seed));
}

void randomize(std::vector<double>& v, Rng& rng, double scale) {
  for (auto& x : v) x = normal(rng, 0.0, scale);
}

TEST(Tokens, ReversibleTokenizer) {
  EXPECT_EQ(reversible_tokens("a  b\nc"), (std::vector<std::string>{"a", "  b", "\nc"}));
  auto v = Vocabulary::build({"FLAW Exaggeration: ABSENT", "ASPECT 1: Money -- m"});
  EXPECT_EQ(v.tokens()[Vocabulary::kBos], "<bos>");
  EXPECT_EQ(v.tokens()[Vocabulary::kEos], "<eos>");
  EXPECT_EQ(v.tokens()[Vocabulary::kUnk], "<unk>");
  for (std::string s : {"FLAW Exaggeration: ABSENT", "ASPECT 1: Money -- m", "FLAW Money -- m ABSENT"})
    EXPECT_EQ(v.decode(v.encode(s)), s);
  auto ids = v.encode(" zebra");
  ASSERT_EQ(ids.size(), 1u);
  EXPECT_EQ(ids[0], Vocabulary::kUnk);
  EXPECT_THROW(Vocabulary::from_tokens({"a", "b"}), Error);
}

TEST(Adapter, ParameterBudgetAndZeroInitIncrement) {
  auto base = std::make_shared<const BaseWeights>(
      BaseWeights::create(TinyLMConfig{}, Vocabulary::build({"one two three"}), 1));
  auto a = LoraAdapter::create(*base, 8, 16.0, 2);
  EXPECT_LT(a.parameter_count() * 10, base->parameter_count());
  for (double x : a.b_hidden) EXPECT_EQ(x, 0.0);
  for (double x : a.b_out) EXPECT_EQ(x, 0.0);
  EXPECT_THROW(LoraAdapter::create(*base, 0, 16.0, 2), Error);
  EXPECT_DOUBLE_EQ(a.scale(), 2.0);
}

TEST(Adapter, GradientMatchesFiniteDifferences) {
  auto base = small_base();
  Rng rng(8);
  auto adapter = LoraAdapter::create(*base, 2, 4.0, 5);
  randomize(adapter.b_hidden, rng, 0.3);
  randomize(adapter.b_out, rng, 0.3);
  TinyLoraLM model(base, adapter);
  const std::string prompt = "### Task: x\nClaim: alpha", target = "beta gamma delta.";
  double loss = 0;
  auto g = lora_gradient(model, prompt, target, &loss);
  EXPECT_NEAR(loss, model.sequence_nll(prompt, target), 1e-12);

  const double h = 1e-5;
  std::size_t checked = 0;
  auto check = [&](std::vector<double>& param, const std::vector<double>& grad) {
    ASSERT_EQ(param.size(), grad.size());
    for (std::size_t i = 0; i < param.size(); ++i) {
      double keep = param[i];
      param[i] = keep + h;
      double up = model.sequence_nll(prompt, target);
      param[i] = keep - h;
      double down = model.sequence_nll(prompt, target);
      param[i] = keep;
      double numeric = (up - down) / (2 * h);
      double err = std::abs(numeric - grad[i]) / std::max(1e-6, std::abs(numeric) + std::abs(grad[i]));
      EXPECT_LT(err, 1e-4) << "index " << i << ": " << numeric << " vs " << grad[i];
      ++checked;
    }
  };
  check(model.adapter().a_hidden, g.a_hidden);
  check(model.adapter().b_hidden, g.b_hidden);
  check(model.adapter().a_out, g.a_out);
  check(model.adapter().b_out, g.b_out);
  EXPECT_GT(checked, 60u);
}

TEST(FineTune, ZeroEpochsLeavesOutputsUnchanged) {
  auto examples = testing::memorization_examples();
  examples.resize(4);
  std::vector<std::string> targets;
  for (const auto& e : examples) targets.push_back(e.target);
  auto base = std::make_shared<const BaseWeights>(BaseWeights::create(small_config(), Vocabulary::build(targets), 2));
  FineTuneConfig fc;
  fc.epochs = 0;
  auto r = finetune_adapter(base, examples, fc);
  ASSERT_EQ(r.loss_curve.size(), 1u);
  TinyLoraLM untouched(base, LoraAdapter::create(*base, fc.rank, fc.alpha, 99));
  for (const auto& e : examples) EXPECT_EQ(r.model->greedy_decode(e.input), untouched.greedy_decode(e.input));
}

TEST(FineTune, MemorizesTwentyExamplesWithoutTouchingBase) {
  auto examples = testing::memorization_examples();
  std::vector<std::string> targets;
  for (const auto& e : examples) targets.push_back(e.target);
  auto base = std::make_shared<const BaseWeights>(BaseWeights::create(TinyLMConfig{}, Vocabulary::build(targets), 7));
  const auto checksum = base->checksum();
  const auto w_hidden = base->w_hidden;
  FineTuneConfig fc;
  fc.template_id = "justify-v1";
  auto r = finetune_adapter(base, examples, fc);
  EXPECT_EQ(r.loss_curve.size(), fc.epochs + 1);
  EXPECT_LT(r.loss_curve.back(), r.loss_curve.front());
  std::size_t exact = 0;
  for (const auto& e : examples) exact += r.model->greedy_decode(e.input) == e.target;
  EXPECT_GE(exact, 16u);
  EXPECT_EQ(base->checksum(), checksum);
  EXPECT_EQ(base->w_hidden, w_hidden);
  EXPECT_EQ(r.model->adapter().base_model_id, base->model_id());
  EXPECT_EQ(r.model->adapter().template_id, "justify-v1");
}

TEST(FineTune, MemorizesAtFiftyEpochs) {
  auto examples = testing::memorization_examples();
  std::vector<std::string> targets;
  for (const auto& e : examples) targets.push_back(e.target);
  auto base = std::make_shared<const BaseWeights>(BaseWeights::create(TinyLMConfig{}, Vocabulary::build(targets), 7));
  FineTuneConfig fc;
  fc.epochs = 50;
  auto r = finetune_adapter(base, examples, fc);
  EXPECT_LT(r.loss_curve.back(), r.loss_curve.front());
  std::size_t exact = 0;
  for (const auto& e : examples) exact += r.model->greedy_decode(e.input) == e.target;
  EXPECT_GE(exact, 16u);
}

TEST(FineTune, RejectsBadInputs) {
  auto base = small_base();
  FineTuneConfig fc;
  EXPECT_THROW(finetune_adapter(base, {}, fc), Error);
  EXPECT_THROW(finetune_adapter(base, {{"in", ""}}, fc), Error);
  fc.rank = 0;
  EXPECT_THROW(finetune_adapter(base, {{"in", "alpha"}}, fc), Error);
}

TEST(FineTune, DivergenceIsReported) {
  auto base = small_base();
  FineTuneConfig fc;
  fc.epochs = 3;
  fc.lr = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(finetune_adapter(base, {{"alpha", "beta gamma"}}, fc), Error);
}

TEST(Checkpoints, SaveLoadBaseAndAdapter) {
  testing::TempDir dir;
  auto base = small_base();
  Rng rng(1);
  auto adapter = LoraAdapter::create(*base, 3, 6.0, 4);
  randomize(adapter.b_out, rng, 0.5);
  adapter.template_id = "aspects-v1";
  save_base(*base, dir / "base");
  save_adapter(adapter, dir / "adapter");

  auto base2 = load_base(dir / "base");
  EXPECT_EQ(base2->checksum(), base->checksum());
  EXPECT_EQ(base2->vocab.tokens(), base->vocab.tokens());
  auto adapter2 = load_adapter(dir / "adapter", *base2);
  EXPECT_EQ(adapter2.rank, 3u);
  EXPECT_EQ(adapter2.b_out, adapter.b_out);
  EXPECT_EQ(adapter2.template_id, "aspects-v1");
  TinyLoraLM m1(base, adapter), m2(base2, adapter2);
  EXPECT_EQ(m1.greedy_decode("alpha"), m2.greedy_decode("alpha"));
  EXPECT_DOUBLE_EQ(m1.sequence_nll("alpha", "beta"), m2.sequence_nll("alpha", "beta"));

  auto manifest = json::parse(read_file(dir / "adapter/manifest.json"));
  EXPECT_EQ(manifest.at("target_layers"), json::array({"hidden", "output"}));
}

TEST(Checkpoints, AdapterOnWrongBaseAndTamperedWeightsFail) {
  testing::TempDir dir;
  auto base = small_base(3);
  auto other = small_base(4);
  ASSERT_NE(base->model_id(), other->model_id());
  save_adapter(LoraAdapter::create(*base, 2, 4.0, 1), dir / "adapter");
  EXPECT_THROW(load_adapter(dir / "adapter", *other), Error);
  EXPECT_THROW(TinyLoraLM(other, LoraAdapter::create(*base, 2, 4.0, 1)), Error);

  save_base(*base, dir / "base");
  std::string w = read_file(dir / "base/weights.bin");
  w[w.size() / 2] ^= 0x40;
  write_file_atomic(dir / "base/weights.bin", w);
  EXPECT_THROW(load_base(dir / "base"), Error);
  EXPECT_THROW(load_base(dir / "adapter"), Error);
}

}  // namespace
}  // namespace refute::generation

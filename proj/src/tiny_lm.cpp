// Small prompt-conditioned next-token model used to exercise adapter
// fine-tuning end to end.
//
//   u_t    = [pool(prompt); E_tok[y_{t-1}]; E_tok[y_{t-2}]; P[t]]
//   h_t    = tanh((W_h + s B_h A_h) u_t + b_h)
//   logits = (W_o + s B_o A_o) h_t + b_o,     s = alpha / rank
//
// Only the A/B matrices are trained.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstring>
#include <numeric>

#include "refute/generation.hpp"

namespace refute::generation {

// --- tokens ------------------------------------------------------------------------------

std::vector<std::string> reversible_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t start = i;
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i == text.size()) break;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

Vocabulary Vocabulary::from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < 3 || tokens[kBos] != "<bos>" || tokens[kEos] != "<eos>" || tokens[kUnk] != "<unk>")
    throw Error("vocabulary must start with <bos>, <eos>, <unk>");
  Vocabulary v;
  v.tokens_ = std::move(tokens);
  for (std::size_t i = 0; i < v.tokens_.size(); ++i) v.index_.emplace(v.tokens_[i], i);
  return v;
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts) {
  std::vector<std::string> toks = {"<bos>", "<eos>", "<unk>"};
  std::unordered_map<std::string, std::size_t> seen;
  for (const auto& t : texts)
    for (auto& tok : reversible_tokens(t))
      if (seen.emplace(tok, toks.size()).second) toks.push_back(tok);
  return from_tokens(std::move(toks));
}

std::vector<std::size_t> Vocabulary::encode(std::string_view text) const {
  std::vector<std::size_t> ids;
  for (const auto& tok : reversible_tokens(text)) {
    auto it = index_.find(tok);
    ids.push_back(it == index_.end() || it->second < 3 ? kUnk : it->second);
  }
  return ids;
}

std::string Vocabulary::decode(const std::vector<std::size_t>& ids) const {
  std::string out;
  for (auto id : ids)
    if (id >= 3 && id < tokens_.size()) out += tokens_[id];
  return out;
}

// --- parameters ---------------------------------------------------------------------------

namespace {

void fill_normal(std::vector<double>& v, std::size_t n, Rng& rng, double sd) {
  v.resize(n);
  for (auto& x : v) x = normal(rng, 0.0, sd);
}

std::uint64_t hash_doubles(const std::vector<double>& v, std::uint64_t h) {
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double)), h);
}

std::size_t in_dim(const TinyLMConfig& c) { return 4 * c.embed_dim; }

}  // namespace

BaseWeights BaseWeights::create(const TinyLMConfig& cfg, Vocabulary vocab, std::uint64_t seed) {
  if (cfg.embed_dim == 0 || cfg.hidden == 0 || cfg.input_buckets == 0 || cfg.max_positions == 0)
    throw Error("tiny LM dimensions must be positive");
  BaseWeights b;
  b.config = cfg;
  b.vocab = std::move(vocab);
  Rng rng(seed);
  const std::size_t d = cfg.embed_dim, H = cfg.hidden, V = b.vocab.size();
  fill_normal(b.input_emb, cfg.input_buckets * d, rng, 1.0);
  fill_normal(b.token_emb, V * d, rng, 1.0);
  fill_normal(b.pos_emb, cfg.max_positions * d, rng, 1.0);
  fill_normal(b.w_hidden, H * in_dim(cfg), rng, 1.0 / std::sqrt(static_cast<double>(in_dim(cfg))));
  b.b_hidden.assign(H, 0.0);
  fill_normal(b.w_out, V * H, rng, 1.0 / std::sqrt(static_cast<double>(H)));
  b.b_out.assign(V, 0.0);
  return b;
}

std::size_t BaseWeights::parameter_count() const {
  return input_emb.size() + token_emb.size() + pos_emb.size() + w_hidden.size() + b_hidden.size() +
         w_out.size() + b_out.size();
}

std::uint64_t BaseWeights::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto* v : {&input_emb, &token_emb, &pos_emb, &w_hidden, &b_hidden, &w_out, &b_out})
    h = hash_doubles(*v, h);
  for (const auto& t : vocab.tokens()) h = fnv1a64(t + '\0', h);
  return h;
}

LoraAdapter LoraAdapter::create(const BaseWeights& base, std::size_t rank, double alpha, std::uint64_t seed) {
  if (rank < 1) throw Error("adapter rank must be at least 1");
  LoraAdapter a;
  a.rank = rank;
  a.alpha = alpha;
  a.base_model_id = base.model_id();
  Rng rng(seed);
  const std::size_t D = in_dim(base.config), H = base.config.hidden, V = base.vocab.size();
  fill_normal(a.a_hidden, rank * D, rng, 1.0 / std::sqrt(static_cast<double>(D)));
  a.b_hidden.assign(H * rank, 0.0);
  fill_normal(a.a_out, rank * H, rng, 1.0 / std::sqrt(static_cast<double>(H)));
  a.b_out.assign(V * rank, 0.0);
  return a;
}

std::size_t LoraAdapter::parameter_count() const {
  return a_hidden.size() + b_hidden.size() + a_out.size() + b_out.size();
}

// --- forward / backward ----------------------------------------------------------------------

namespace {

struct Dims {
  std::size_t d, D, H, V, r;
};

Dims dims_of(const BaseWeights& b, const LoraAdapter& a) {
  return {b.config.embed_dim, in_dim(b.config), b.config.hidden, b.vocab.size(), a.rank};
}

// y[m] = sum_n M[m*cols + n] x[n]
void matvec(const std::vector<double>& M, std::size_t rows, std::size_t cols, const double* x, double* y,
            double scale = 1.0, bool accumulate = false) {
  for (std::size_t m = 0; m < rows; ++m) {
    const double* row = M.data() + m * cols;
    double s = 0.0;
    for (std::size_t n = 0; n < cols; ++n) s += row[n] * x[n];
    y[m] = (accumulate ? y[m] : 0.0) + scale * s;
  }
}

// y[n] += scale * sum_m M[m*cols + n] x[m]
void matvec_t(const std::vector<double>& M, std::size_t rows, std::size_t cols, const double* x, double* y,
              double scale = 1.0) {
  for (std::size_t m = 0; m < rows; ++m) {
    const double* row = M.data() + m * cols;
    double xm = scale * x[m];
    if (xm == 0.0) continue;
    for (std::size_t n = 0; n < cols; ++n) y[n] += row[n] * xm;
  }
}

// G[m*cols + n] += scale * a[m] b[n]
void outer_add(std::vector<double>& G, std::size_t rows, std::size_t cols, const double* a, const double* b,
               double scale) {
  for (std::size_t m = 0; m < rows; ++m) {
    double am = scale * a[m];
    if (am == 0.0) continue;
    double* row = G.data() + m * cols;
    for (std::size_t n = 0; n < cols; ++n) row[n] += am * b[n];
  }
}

std::vector<double> pool_prompt(const BaseWeights& b, std::string_view prompt) {
  const std::size_t d = b.config.embed_dim;
  std::vector<double> x(d, 0.0);
  std::size_t n = 0;
  for (const auto& tok : word_tokens(prompt)) {
    if (n >= b.config.context_length) break;
    const double* row = b.input_emb.data() + (fnv1a64(tok) % b.config.input_buckets) * d;
    for (std::size_t k = 0; k < d; ++k) x[k] += row[k];
    ++n;
  }
  if (n > 0) {
    double inv = 1.0 / std::sqrt(static_cast<double>(n));
    for (auto& v : x) v *= inv;
  }
  return x;
}

struct StepState {
  std::vector<double> u, a_h, h, a_o, logits;
};

void forward_step(const BaseWeights& b, const LoraAdapter& a, const Dims& dm, const std::vector<double>& x,
                  std::size_t prev1, std::size_t prev2, std::size_t t, StepState& st) {
  const double s = a.scale();
  st.u.resize(dm.D);
  std::copy(x.begin(), x.end(), st.u.begin());
  std::copy_n(b.token_emb.data() + prev1 * dm.d, dm.d, st.u.begin() + dm.d);
  std::copy_n(b.token_emb.data() + prev2 * dm.d, dm.d, st.u.begin() + 2 * dm.d);
  std::size_t pos = std::min(t, b.config.max_positions - 1);
  std::copy_n(b.pos_emb.data() + pos * dm.d, dm.d, st.u.begin() + 3 * dm.d);

  st.a_h.resize(dm.r);
  matvec(a.a_hidden, dm.r, dm.D, st.u.data(), st.a_h.data());
  st.h.resize(dm.H);
  matvec(b.w_hidden, dm.H, dm.D, st.u.data(), st.h.data());
  matvec(a.b_hidden, dm.H, dm.r, st.a_h.data(), st.h.data(), s, true);
  for (std::size_t k = 0; k < dm.H; ++k) st.h[k] = std::tanh(st.h[k] + b.b_hidden[k]);

  st.a_o.resize(dm.r);
  matvec(a.a_out, dm.r, dm.H, st.h.data(), st.a_o.data());
  st.logits.resize(dm.V);
  matvec(b.w_out, dm.V, dm.H, st.h.data(), st.logits.data());
  matvec(a.b_out, dm.V, dm.r, st.a_o.data(), st.logits.data(), s, true);
  for (std::size_t k = 0; k < dm.V; ++k) st.logits[k] += b.b_out[k];
}

// Softmax in place; returns log-sum-exp.
double softmax(std::vector<double>& z) {
  double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - m);
    sum += v;
  }
  for (auto& v : z) v /= sum;
  return m + std::log(sum);
}

LoraAdapter zero_like(const LoraAdapter& a) {
  LoraAdapter g = a;
  for (auto* v : {&g.a_hidden, &g.b_hidden, &g.a_out, &g.b_out}) std::fill(v->begin(), v->end(), 0.0);
  return g;
}

// Mean token NLL; accumulates d(mean NLL)/d(adapter) * weight into grad if given.
double sequence_pass(const BaseWeights& b, const LoraAdapter& a, std::string_view prompt,
                     std::string_view target, LoraAdapter* grad, double weight = 1.0) {
  const Dims dm = dims_of(b, a);
  const double s = a.scale();
  auto x = pool_prompt(b, prompt);
  auto ids = b.vocab.encode(target);
  ids.push_back(Vocabulary::kEos);

  StepState st;
  std::vector<double> dlog(dm.V), da_o(dm.r), dh(dm.H), da_h(dm.r);
  double total = 0.0;
  const double inv_n = 1.0 / static_cast<double>(ids.size());
  for (std::size_t t = 0; t < ids.size(); ++t) {
    std::size_t p1 = t >= 1 ? ids[t - 1] : Vocabulary::kBos;
    std::size_t p2 = t >= 2 ? ids[t - 2] : Vocabulary::kBos;
    forward_step(b, a, dm, x, p1, p2, t, st);
    std::vector<double>& p = st.logits;
    // log p[y] = logit[y] - lse, taken before softmax() overwrites the logits.
    double logit_y = p[ids[t]];
    total += softmax(p) - logit_y;
    if (!grad) continue;

    const double w = weight * inv_n;
    for (std::size_t k = 0; k < dm.V; ++k) dlog[k] = w * (p[k] - (k == ids[t] ? 1.0 : 0.0));

    outer_add(grad->b_out, dm.V, dm.r, dlog.data(), st.a_o.data(), s);
    std::fill(da_o.begin(), da_o.end(), 0.0);
    matvec_t(a.b_out, dm.V, dm.r, dlog.data(), da_o.data(), s);
    outer_add(grad->a_out, dm.r, dm.H, da_o.data(), st.h.data(), 1.0);

    std::fill(dh.begin(), dh.end(), 0.0);
    matvec_t(b.w_out, dm.V, dm.H, dlog.data(), dh.data());
    matvec_t(a.a_out, dm.r, dm.H, da_o.data(), dh.data());
    for (std::size_t k = 0; k < dm.H; ++k) dh[k] *= 1.0 - st.h[k] * st.h[k];

    outer_add(grad->b_hidden, dm.H, dm.r, dh.data(), st.a_h.data(), s);
    std::fill(da_h.begin(), da_h.end(), 0.0);
    matvec_t(a.b_hidden, dm.H, dm.r, dh.data(), da_h.data(), s);
    outer_add(grad->a_hidden, dm.r, dm.D, da_h.data(), st.u.data(), 1.0);
  }
  return total * inv_n;
}

}  // namespace

TinyLoraLM::TinyLoraLM(std::shared_ptr<const BaseWeights> base, LoraAdapter adapter)
    : base_(std::move(base)), adapter_(std::move(adapter)) {
  if (!base_) throw Error("tiny LM requires base weights");
  if (adapter_.base_model_id != base_->model_id())
    throw Error("adapter was trained for " + adapter_.base_model_id + ", not " + base_->model_id());
}

std::string TinyLoraLM::id() const {
  return base_->model_id() + "+" + (adapter_.template_id.empty() ? "adapter" : adapter_.template_id);
}

std::string TinyLoraLM::greedy_decode(std::string_view prompt) const {
  const Dims dm = dims_of(*base_, adapter_);
  auto x = pool_prompt(*base_, prompt);
  std::vector<std::size_t> out;
  StepState st;
  for (std::size_t t = 0; t < base_->config.max_new_tokens; ++t) {
    std::size_t p1 = t >= 1 ? out[t - 1] : Vocabulary::kBos;
    std::size_t p2 = t >= 2 ? out[t - 2] : Vocabulary::kBos;
    forward_step(*base_, adapter_, dm, x, p1, p2, t, st);
    std::size_t best = Vocabulary::kEos;
    for (std::size_t k = 0; k < dm.V; ++k) {
      if (k == Vocabulary::kBos || k == Vocabulary::kUnk) continue;
      if (st.logits[k] > st.logits[best]) best = k;
    }
    if (best == Vocabulary::kEos) break;
    out.push_back(best);
  }
  return base_->vocab.decode(out);
}

std::string TinyLoraLM::generate(const std::string& prompt) { return greedy_decode(prompt); }

double TinyLoraLM::sequence_nll(std::string_view prompt, std::string_view target) const {
  return sequence_pass(*base_, adapter_, prompt, target, nullptr);
}

LoraAdapter lora_gradient(const TinyLoraLM& model, std::string_view prompt, std::string_view target,
                          double* loss) {
  LoraAdapter g = zero_like(model.adapter());
  double l = sequence_pass(model.base(), model.adapter(), prompt, target, &g);
  if (loss) *loss = l;
  return g;
}

// --- checkpoints --------------------------------------------------------------------------------

namespace {

void append_doubles(std::string& buf, const std::vector<double>& v) {
  buf.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
}

void take_doubles(const std::string& buf, std::size_t& off, std::vector<double>& v, std::size_t n) {
  if (off + n * sizeof(double) > buf.size()) throw Error("weight file is truncated");
  v.resize(n);
  std::memcpy(v.data(), buf.data() + off, n * sizeof(double));
  off += n * sizeof(double);
}

json config_json(const TinyLMConfig& c) {
  return {{"embed_dim", c.embed_dim},         {"hidden", c.hidden},
          {"input_buckets", c.input_buckets}, {"max_positions", c.max_positions},
          {"max_new_tokens", c.max_new_tokens}, {"context_length", c.context_length}};
}

TinyLMConfig config_from_json(const json& j) {
  TinyLMConfig c;
  c.embed_dim = j.at("embed_dim");
  c.hidden = j.at("hidden");
  c.input_buckets = j.at("input_buckets");
  c.max_positions = j.at("max_positions");
  c.max_new_tokens = j.at("max_new_tokens");
  c.context_length = j.at("context_length");
  return c;
}

}  // namespace

void save_base(const BaseWeights& base, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json m = {{"kind", "tiny-lm"},
            {"model_id", base.model_id()},
            {"config", config_json(base.config)},
            {"vocab", base.vocab.tokens()},
            {"format", "float64-le"}};
  std::string buf;
  for (const auto* v : {&base.input_emb, &base.token_emb, &base.pos_emb, &base.w_hidden, &base.b_hidden,
                        &base.w_out, &base.b_out})
    append_doubles(buf, *v);
  write_file_atomic(dir / "weights.bin", buf);
  write_file_atomic(dir / "manifest.json", m.dump(2));
}

std::shared_ptr<const BaseWeights> load_base(const std::filesystem::path& dir) {
  json m = json::parse(read_file(dir / "manifest.json"));
  if (m.value("kind", "") != "tiny-lm") throw Error("not a tiny-lm base checkpoint: " + dir.string());
  auto b = std::make_shared<BaseWeights>();
  b->config = config_from_json(m.at("config"));
  b->vocab = Vocabulary::from_tokens(m.at("vocab").get<std::vector<std::string>>());
  std::string buf = read_file(dir / "weights.bin");
  const auto& c = b->config;
  const std::size_t d = c.embed_dim, V = b->vocab.size();
  std::size_t off = 0;
  take_doubles(buf, off, b->input_emb, c.input_buckets * d);
  take_doubles(buf, off, b->token_emb, V * d);
  take_doubles(buf, off, b->pos_emb, c.max_positions * d);
  take_doubles(buf, off, b->w_hidden, c.hidden * in_dim(c));
  take_doubles(buf, off, b->b_hidden, c.hidden);
  take_doubles(buf, off, b->w_out, V * c.hidden);
  take_doubles(buf, off, b->b_out, V);
  if (off != buf.size()) throw Error("weight file has trailing bytes");
  if (b->model_id() != m.at("model_id").get<std::string>()) throw Error("base checkpoint checksum mismatch");
  return b;
}

void save_adapter(const LoraAdapter& a, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json m = {{"kind", "lora-adapter"},
            {"rank", a.rank},
            {"alpha", a.alpha},
            {"base_model_id", a.base_model_id},
            {"template_id", a.template_id},
            {"target_layers", {"hidden", "output"}},
            {"format", "float64-le"}};
  std::string buf;
  for (const auto* v : {&a.a_hidden, &a.b_hidden, &a.a_out, &a.b_out}) append_doubles(buf, *v);
  write_file_atomic(dir / "adapter.bin", buf);
  write_file_atomic(dir / "manifest.json", m.dump(2));
}

LoraAdapter load_adapter(const std::filesystem::path& dir, const BaseWeights& base) {
  json m = json::parse(read_file(dir / "manifest.json"));
  if (m.value("kind", "") != "lora-adapter") throw Error("not an adapter checkpoint: " + dir.string());
  LoraAdapter a;
  a.rank = m.at("rank");
  a.alpha = m.at("alpha");
  a.base_model_id = m.at("base_model_id");
  a.template_id = m.value("template_id", "");
  if (a.base_model_id != base.model_id())
    throw Error("adapter " + dir.string() + " belongs to base " + a.base_model_id);
  const std::size_t D = in_dim(base.config), H = base.config.hidden, V = base.vocab.size();
  std::string buf = read_file(dir / "adapter.bin");
  std::size_t off = 0;
  take_doubles(buf, off, a.a_hidden, a.rank * D);
  take_doubles(buf, off, a.b_hidden, H * a.rank);
  take_doubles(buf, off, a.a_out, a.rank * H);
  take_doubles(buf, off, a.b_out, V * a.rank);
  if (off != buf.size()) throw Error("adapter file has trailing bytes");
  return a;
}

// --- fine-tuning ------------------------------------------------------------------------------------

namespace {

struct AdamState {
  std::vector<double> m, v;
};

void adam_update(std::vector<double>& w, const std::vector<double>& g, AdamState& st, double lr, std::size_t t) {
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  if (st.m.empty()) {
    st.m.assign(w.size(), 0.0);
    st.v.assign(w.size(), 0.0);
  }
  double c1 = 1.0 - std::pow(b1, static_cast<double>(t));
  double c2 = 1.0 - std::pow(b2, static_cast<double>(t));
  for (std::size_t i = 0; i < w.size(); ++i) {
    st.m[i] = b1 * st.m[i] + (1 - b1) * g[i];
    st.v[i] = b2 * st.v[i] + (1 - b2) * g[i] * g[i];
    w[i] -= lr * (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + eps);
  }
}

double mean_loss(const TinyLoraLM& m, const std::vector<FineTuneExample>& ex) {
  double s = 0.0;
  for (const auto& e : ex) s += m.sequence_nll(e.input, e.target);
  return s / static_cast<double>(ex.size());
}

}  // namespace

FineTuneResult finetune_adapter(std::shared_ptr<const BaseWeights> base,
                                const std::vector<FineTuneExample>& examples, const FineTuneConfig& cfg) {
  if (!base) throw Error("finetune_adapter: no base model");
  if (examples.empty()) throw Error("finetune_adapter: no training examples");
  if (cfg.rank < 1) throw Error("finetune_adapter: rank must be at least 1");
  for (const auto& e : examples)
    if (trim(e.input).empty() || trim(e.target).empty()) throw Error("finetune_adapter: empty example");

  LoraAdapter adapter = LoraAdapter::create(*base, cfg.rank, cfg.alpha, cfg.seed);
  adapter.template_id = cfg.template_id;
  FineTuneResult result;
  result.model = std::make_unique<TinyLoraLM>(base, std::move(adapter));
  TinyLoraLM& model = *result.model;
  result.loss_curve.push_back(mean_loss(model, examples));

  Rng rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::array<AdamState, 4> states;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, rng);
    for (auto i : order) {
      double loss = 0.0;
      LoraAdapter g = lora_gradient(model, examples[i].input, examples[i].target, &loss);
      if (!std::isfinite(loss))
        throw Error("finetune_adapter: non-finite loss at epoch " + std::to_string(epoch) + ", example " +
                    std::to_string(i));
      ++step;
      auto& a = model.adapter();
      adam_update(a.a_hidden, g.a_hidden, states[0], cfg.lr, step);
      adam_update(a.b_hidden, g.b_hidden, states[1], cfg.lr, step);
      adam_update(a.a_out, g.a_out, states[2], cfg.lr, step);
      adam_update(a.b_out, g.b_out, states[3], cfg.lr, step);
    }
    result.loss_curve.push_back(mean_loss(model, examples));
  }
  return result;
}

}  // namespace refute::generation

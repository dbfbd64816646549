#include "refute/retriever.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_set>

namespace refute::retriever {

double similarity(std::span<const double> v, std::span<const double> u) {
  if (v.size() != u.size())
    throw Error("similarity: length mismatch (" + std::to_string(v.size()) + " vs " +
                std::to_string(u.size()) + ")");
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += v[i] * u[i];
  return s;
}

namespace {

void check_loss_args(const std::vector<Vector>& positives, std::size_t target) {
  if (positives.empty()) throw Error("nll_loss: at least one positive is required");
  if (target >= positives.size()) throw Error("nll_loss: target index out of range");
}

}  // namespace

double nll_loss(const Vector& claim, const std::vector<Vector>& positives,
                const std::vector<Vector>& negatives, std::size_t target) {
  check_loss_args(positives, target);
  std::vector<double> s;
  s.reserve(positives.size() + negatives.size());
  for (const auto& p : positives) s.push_back(similarity(claim, p));
  for (const auto& n : negatives) s.push_back(similarity(claim, n));
  double m = *std::max_element(s.begin(), s.end());
  double z = 0.0;
  for (double x : s) z += std::exp(x - m);
  return -(s[target] - m) + std::log(z);
}

LossGrad nll_loss_grad(const Vector& claim, const std::vector<Vector>& positives,
                       const std::vector<Vector>& negatives, std::size_t target) {
  check_loss_args(positives, target);
  const std::size_t n_pos = positives.size();
  auto cand = [&](std::size_t j) -> const Vector& { return j < n_pos ? positives[j] : negatives[j - n_pos]; };
  const std::size_t n = n_pos + negatives.size();

  std::vector<double> s(n);
  for (std::size_t j = 0; j < n; ++j) s[j] = similarity(claim, cand(j));
  double m = *std::max_element(s.begin(), s.end());
  double z = 0.0;
  for (double x : s) z += std::exp(x - m);

  LossGrad g;
  g.loss = -(s[target] - m) + std::log(z);
  g.claim.assign(claim.size(), 0.0);
  g.positives.assign(n_pos, Vector(claim.size(), 0.0));
  g.negatives.assign(negatives.size(), Vector(claim.size(), 0.0));
  // dL/ds_j = softmax_j - [j == target]
  for (std::size_t j = 0; j < n; ++j) {
    double ds = std::exp(s[j] - m) / z - (j == target ? 1.0 : 0.0);
    const Vector& u = cand(j);
    Vector& gu = j < n_pos ? g.positives[j] : g.negatives[j - n_pos];
    for (std::size_t d = 0; d < claim.size(); ++d) {
      g.claim[d] += ds * u[d];
      gu[d] = ds * claim[d];
    }
  }
  return g;
}

// --- encoders -------------------------------------------------------------------------

BagOfWordsEncoder::BagOfWordsEncoder(EncoderConfig cfg, std::vector<double> weights,
                                     std::unordered_map<std::string, std::size_t> vocab)
    : cfg_(std::move(cfg)), weights_(std::move(weights)), vocab_(std::move(vocab)) {
  if (cfg_.dim == 0) throw Error("encoder dimension must be positive");
  if (weights_.size() % cfg_.dim != 0) throw Error("encoder weights not a multiple of dim");
  std::size_t n_rows = weights_.size() / cfg_.dim;
  if (vocab_.empty()) {
    if (n_rows != cfg_.buckets) throw Error("encoder weights do not match bucket count");
  } else {
    for (const auto& [tok, r] : vocab_)
      if (r >= n_rows) throw Error("vocabulary row out of range for token '" + tok + "'");
  }
}

BagOfWordsEncoder BagOfWordsEncoder::random(const EncoderConfig& cfg, std::uint64_t seed, double scale) {
  Rng rng(seed);
  std::vector<double> w(cfg.buckets * cfg.dim);
  for (auto& x : w) x = normal(rng, 0.0, scale);
  return BagOfWordsEncoder(cfg, std::move(w));
}

std::vector<std::size_t> BagOfWordsEncoder::token_rows(std::string_view text) const {
  std::vector<std::size_t> rows_out;
  for (const auto& tok : word_tokens(text)) {
    if (rows_out.size() >= cfg_.max_len) break;
    if (vocab_.empty()) {
      rows_out.push_back(fnv1a64(tok) % cfg_.buckets);
    } else if (auto it = vocab_.find(tok); it != vocab_.end()) {
      rows_out.push_back(it->second);
    }
  }
  return rows_out;
}

Vector BagOfWordsEncoder::encode(std::string_view text) const {
  Vector v(cfg_.dim, 0.0);
  auto ids = token_rows(text);
  if (ids.empty()) return v;
  for (auto r : ids) {
    auto w = row(r);
    for (std::size_t d = 0; d < cfg_.dim; ++d) v[d] += w[d];
  }
  double inv = 1.0 / static_cast<double>(ids.size());
  for (auto& x : v) x *= inv;
  return v;
}

EncoderPair EncoderPair::create(const EncoderConfig& cfg, std::uint64_t seed, bool shared_weights) {
  EncoderPair p;
  p.claim = std::make_shared<BagOfWordsEncoder>(BagOfWordsEncoder::random(cfg, seed));
  p.sentence = shared_weights ? p.claim
                              : std::make_shared<BagOfWordsEncoder>(BagOfWordsEncoder::random(cfg, seed + 1));
  return p;
}

namespace {

void write_weights(const std::filesystem::path& path, const std::vector<double>& w) {
  std::string buf(reinterpret_cast<const char*>(w.data()), w.size() * sizeof(double));
  write_file_atomic(path, buf);
}

std::vector<double> read_weights(const std::filesystem::path& path, std::size_t expected) {
  std::string buf = read_file(path);
  if (buf.size() != expected * sizeof(double))
    throw Error("weight file " + path.string() + " has unexpected size");
  std::vector<double> w(expected);
  std::memcpy(w.data(), buf.data(), buf.size());
  return w;
}

}  // namespace

void save_encoders(const EncoderPair& pair, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto& cfg = pair.claim->config();
  json manifest = {{"d_emb", cfg.dim},
                   {"max_len", cfg.max_len},
                   {"tokenizer", cfg.tokenizer},
                   {"buckets", cfg.buckets},
                   {"shared_weights", pair.shared()},
                   {"format", "float64-le-rowmajor"}};
  write_file_atomic(dir / "manifest.json", manifest.dump(2));
  write_weights(dir / "claim.bin", pair.claim->weights());
  if (!pair.shared()) write_weights(dir / "sentence.bin", pair.sentence->weights());
}

EncoderPair load_encoders(const std::filesystem::path& dir) {
  json m = json::parse(read_file(dir / "manifest.json"));
  EncoderConfig cfg;
  cfg.dim = m.at("d_emb").get<std::size_t>();
  cfg.max_len = m.at("max_len").get<std::size_t>();
  cfg.tokenizer = m.at("tokenizer").get<std::string>();
  cfg.buckets = m.at("buckets").get<std::size_t>();
  if (cfg.tokenizer != "word-lower-v1") throw Error("unsupported tokenizer '" + cfg.tokenizer + "'");
  bool shared = m.at("shared_weights").get<bool>();
  EncoderPair p;
  p.claim = std::make_shared<BagOfWordsEncoder>(cfg, read_weights(dir / "claim.bin", cfg.buckets * cfg.dim));
  p.sentence = shared ? p.claim
                      : std::make_shared<BagOfWordsEncoder>(
                            cfg, read_weights(dir / "sentence.bin", cfg.buckets * cfg.dim));
  return p;
}

// --- triples --------------------------------------------------------------------------------

TripleBuild build_training_triples(const std::vector<ReviewedClaim>& items, std::size_t alpha,
                                   std::size_t beta, std::uint64_t seed) {
  if (alpha == 0) throw Error("alpha must be at least 1");
  TripleBuild out;
  Rng rng(seed);

  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (items[i].review_sentences.size() < alpha) {
      out.warnings.push_back("claim " + items[i].id + ": review has " +
                             std::to_string(items[i].review_sentences.size()) +
                             " sentences, fewer than alpha=" + std::to_string(alpha) + "; skipped");
    } else {
      usable.push_back(i);
    }
  }

  for (std::size_t i : usable) {
    const auto& item = items[i];
    TrainingTriple t;
    t.claim = item.claim;

    auto claim_words = word_tokens(item.claim);
    std::unordered_set<std::string> cw(claim_words.begin(), claim_words.end());
    std::vector<std::pair<std::size_t, std::size_t>> scored;  // (overlap, index)
    for (std::size_t s = 0; s < item.review_sentences.size(); ++s) {
      std::unordered_set<std::string> sw;
      for (auto& w : word_tokens(item.review_sentences[s]))
        if (cw.count(w)) sw.insert(w);
      scored.emplace_back(sw.size(), s);
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t q = 0; q < alpha; ++q) t.positives.push_back(item.review_sentences[scored[q].second]);

    std::vector<std::size_t> others;
    for (std::size_t j = 0; j < items.size(); ++j)
      if (j != i && !items[j].review_sentences.empty()) others.push_back(j);
    if (!others.empty()) {
      for (std::size_t r = 0; r < beta; ++r) {
        const auto& other = items[others[uniform_index(rng, others.size())]];
        t.negatives.push_back(other.review_sentences[uniform_index(rng, other.review_sentences.size())]);
      }
    } else if (beta > 0) {
      out.warnings.push_back("claim " + item.id + ": no other reviews to draw negatives from");
    }
    out.triples.push_back(std::move(t));
  }
  return out;
}

// --- training ------------------------------------------------------------------------------

namespace {

struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<double> m, v;
  std::size_t t = 0;

  explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}

  // Lazy update: only rows that received gradient move.
  void step(BagOfWordsEncoder& enc, const std::unordered_map<std::size_t, Vector>& grads, double lr) {
    ++t;
    double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    const std::size_t dim = enc.dim();
    for (const auto& [r, g] : grads) {
      auto w = enc.row(r);
      for (std::size_t d = 0; d < dim; ++d) {
        std::size_t k = r * dim + d;
        m[k] = beta1 * m[k] + (1 - beta1) * g[d];
        v[k] = beta2 * v[k] + (1 - beta2) * g[d] * g[d];
        w[d] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps);
      }
    }
  }
};

struct BatchOutcome {
  double loss_sum = 0.0;
  std::size_t terms = 0;
};

// Forward (and optionally backward) over one batch. Gradients are of the mean
// loss over the batch's (claim, positive) terms.
BatchOutcome run_batch(const std::vector<TrainingTriple>& triples, std::span<const std::size_t> batch,
                       const EncoderPair& enc, NegativeMode mode,
                       std::unordered_map<std::size_t, Vector>* claim_grads,
                       std::unordered_map<std::size_t, Vector>* sent_grads) {
  const std::size_t dim = enc.claim->dim();
  std::vector<Vector> cvec;
  std::vector<std::vector<Vector>> pvec, nvec;
  for (auto i : batch) {
    const auto& t = triples[i];
    cvec.push_back(enc.claim->encode(t.claim));
    pvec.emplace_back();
    for (const auto& p : t.positives) pvec.back().push_back(enc.sentence->encode(p));
    nvec.emplace_back();
    for (const auto& n : t.negatives) nvec.back().push_back(enc.sentence->encode(n));
  }

  BatchOutcome out;
  for (std::size_t b = 0; b < batch.size(); ++b) out.terms += pvec[b].size();

  const bool backward = claim_grads != nullptr;
  std::vector<Vector> gc(batch.size(), Vector(dim, 0.0));
  std::vector<std::vector<Vector>> gp(batch.size()), gn(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    gp[b].assign(pvec[b].size(), Vector(dim, 0.0));
    gn[b].assign(nvec[b].size(), Vector(dim, 0.0));
  }

  for (std::size_t b = 0; b < batch.size(); ++b) {
    // Negatives for this claim: (owner, kind, index) so gradients route back.
    struct Ref {
      std::size_t owner;
      bool positive;
      std::size_t idx;
    };
    std::vector<Vector> negs;
    std::vector<Ref> refs;
    if (mode == NegativeMode::InBatch) {
      for (std::size_t o = 0; o < batch.size(); ++o) {
        if (o == b) continue;
        for (std::size_t q = 0; q < pvec[o].size(); ++q) {
          negs.push_back(pvec[o][q]);
          refs.push_back({o, true, q});
        }
      }
    }
    for (std::size_t r = 0; r < nvec[b].size(); ++r) {
      negs.push_back(nvec[b][r]);
      refs.push_back({b, false, r});
    }

    for (std::size_t q = 0; q < pvec[b].size(); ++q) {
      if (!backward) {
        out.loss_sum += nll_loss(cvec[b], pvec[b], negs, q);
        continue;
      }
      LossGrad g = nll_loss_grad(cvec[b], pvec[b], negs, q);
      out.loss_sum += g.loss;
      const double w = 1.0 / static_cast<double>(out.terms);
      for (std::size_t d = 0; d < dim; ++d) gc[b][d] += w * g.claim[d];
      for (std::size_t p = 0; p < pvec[b].size(); ++p)
        for (std::size_t d = 0; d < dim; ++d) gp[b][p][d] += w * g.positives[p][d];
      for (std::size_t r = 0; r < refs.size(); ++r) {
        auto& dst = refs[r].positive ? gp[refs[r].owner][refs[r].idx] : gn[refs[r].owner][refs[r].idx];
        for (std::size_t d = 0; d < dim; ++d) dst[d] += w * g.negatives[r][d];
      }
    }
  }

  if (!backward) return out;

  auto scatter = [dim](const BagOfWordsEncoder& e, std::string_view text, const Vector& gv,
                       std::unordered_map<std::size_t, Vector>& grads) {
    auto ids = e.token_rows(text);
    if (ids.empty()) return;
    double inv = 1.0 / static_cast<double>(ids.size());
    for (auto r : ids) {
      auto& acc = grads[r];
      if (acc.empty()) acc.assign(dim, 0.0);
      for (std::size_t d = 0; d < dim; ++d) acc[d] += inv * gv[d];
    }
  };
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& t = triples[batch[b]];
    scatter(*enc.claim, t.claim, gc[b], *claim_grads);
    for (std::size_t p = 0; p < t.positives.size(); ++p) scatter(*enc.sentence, t.positives[p], gp[b][p], *sent_grads);
    for (std::size_t r = 0; r < t.negatives.size(); ++r) scatter(*enc.sentence, t.negatives[r], gn[b][r], *sent_grads);
  }
  return out;
}

double grad_norm(const std::unordered_map<std::size_t, Vector>& g) {
  double s = 0.0;
  for (const auto& [r, v] : g)
    for (double x : v) s += x * x;
  return std::sqrt(s);
}

void validate_triples(const std::vector<TrainingTriple>& triples, const EncoderPair& enc) {
  if (triples.empty()) throw Error("train_retriever: no training triples");
  if (!enc.claim || !enc.sentence) throw Error("train_retriever: encoders not initialized");
  if (enc.claim->dim() != enc.sentence->dim()) throw Error("train_retriever: encoder dimensions differ");
  for (const auto& t : triples)
    if (t.positives.empty()) throw Error("train_retriever: triple without positives");
}

}  // namespace

double evaluate_loss(const std::vector<TrainingTriple>& triples, const EncoderPair& encoders,
                     const TrainConfig& cfg) {
  validate_triples(triples, encoders);
  std::vector<std::size_t> order(triples.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t bs = std::max<std::size_t>(cfg.batch, 1);
  double sum = 0.0;
  std::size_t terms = 0;
  for (std::size_t s = 0; s < order.size(); s += bs) {
    std::span<const std::size_t> batch(order.data() + s, std::min(bs, order.size() - s));
    auto o = run_batch(triples, batch, encoders, cfg.mode, nullptr, nullptr);
    sum += o.loss_sum;
    terms += o.terms;
  }
  return sum / static_cast<double>(terms);
}

TrainResult train_retriever(const std::vector<TrainingTriple>& triples, EncoderPair& encoders,
                            const TrainConfig& cfg) {
  validate_triples(triples, encoders);
  if (cfg.batch == 0) throw Error("train_retriever: batch size must be positive");
  if (!(cfg.lr >= 0.0) || !std::isfinite(cfg.lr)) throw Error("train_retriever: invalid learning rate");

  Rng rng(cfg.seed);
  Adam claim_opt(encoders.claim->weights().size());
  Adam sent_opt(encoders.shared() ? 0 : encoders.sentence->weights().size());

  TrainResult result;
  result.loss_curve.push_back(evaluate_loss(triples, encoders, cfg));

  std::vector<std::size_t> order(triples.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, rng);
    double sum = 0.0;
    std::size_t terms = 0, batch_id = 0;
    for (std::size_t s = 0; s < order.size(); s += cfg.batch, ++batch_id) {
      std::span<const std::size_t> batch(order.data() + s, std::min(cfg.batch, order.size() - s));
      std::unordered_map<std::size_t, Vector> gclaim, gsent;
      auto& sent_target = encoders.shared() ? gclaim : gsent;
      auto o = run_batch(triples, batch, encoders, cfg.mode, &gclaim, &sent_target);
      if (!std::isfinite(o.loss_sum)) {
        std::ostringstream os;
        os << "non-finite retriever loss at epoch " << epoch << " batch " << batch_id
           << " (claim grad norm " << grad_norm(gclaim) << ", sentence grad norm "
           << grad_norm(sent_target) << ")";
        throw TrainingDiverged(os.str());
      }
      sum += o.loss_sum;
      terms += o.terms;
      if (cfg.lr > 0.0) {
        claim_opt.step(*encoders.claim, gclaim, cfg.lr);
        if (!encoders.shared()) sent_opt.step(*encoders.sentence, gsent, cfg.lr);
      }
    }
    result.epoch_train_loss.push_back(sum / static_cast<double>(terms));
    result.loss_curve.push_back(evaluate_loss(triples, encoders, cfg));
  }
  return result;
}

// --- retrieval -------------------------------------------------------------------------------

std::vector<EvidenceItem> rank_top_k(const Vector& claim_vec, const std::vector<Candidate>& candidates,
                                     std::size_t k) {
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i)
    scored.emplace_back(similarity(claim_vec, candidates[i].vec), i);

  auto before = [&](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    const auto& ca = candidates[a.second];
    const auto& cb = candidates[b.second];
    if (ca.source != cb.source) return ca.source < cb.source;
    return ca.sentence_index < cb.sentence_index;
  };
  std::size_t take = std::min(k, scored.size());
  std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(), before);

  std::vector<EvidenceItem> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    const auto& c = candidates[scored[i].second];
    out.push_back({c.text, c.source, c.sentence_index, scored[i].first});
  }
  return out;
}

EvidenceSet retrieve_evidence(const TextEncoder& claim_encoder, const TextEncoder& sentence_encoder,
                              const std::string& claim_id, std::string_view claim,
                              const std::vector<corpus::Article>& premise_articles, std::size_t k) {
  EvidenceSet out;
  out.claim_id = claim_id;
  out.k = k;
  std::vector<Candidate> cands;
  for (const auto& a : premise_articles)
    for (const auto& s : a.sentences) cands.push_back({a.ref, s.index, s.text, sentence_encoder.encode(s.text)});
  if (cands.empty()) {
    out.warnings.push_back("claim " + claim_id + ": no premise sentences to retrieve from");
    return out;
  }
  out.items = rank_top_k(claim_encoder.encode(claim), cands, k);
  return out;
}

json to_json(const EvidenceSet& e) {
  json items = json::array();
  for (const auto& it : e.items)
    items.push_back({{"text", it.text},
                     {"uri", it.source.uri},
                     {"sentence_index", it.sentence_index},
                     {"score", it.score}});
  return {{"claim_id", e.claim_id}, {"k", e.k}, {"items", std::move(items)}, {"warnings", e.warnings}};
}

EvidenceSet evidence_from_json(const json& j) {
  EvidenceSet e;
  e.claim_id = j.at("claim_id").get<std::string>();
  e.k = j.value("k", kDefaultEvidenceK);
  for (const auto& it : j.at("items"))
    e.items.push_back({it.at("text").get<std::string>(), corpus::ArticleRef::from_uri(it.at("uri").get<std::string>()),
                       it.at("sentence_index").get<std::size_t>(), it.at("score").get<double>()});
  e.warnings = j.value("warnings", std::vector<std::string>{});
  return e;
}

}  // namespace refute::retriever

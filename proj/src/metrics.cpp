#include "refute/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <regex>
#include <set>
#include <sstream>

namespace refute::metrics {

using corpus::kAllLabels;
using corpus::kNumLabels;
using corpus::label_index;

std::vector<std::string> tokenize_for_rouge(std::string_view text) {
  std::string s;
  s.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    auto c = static_cast<unsigned char>(text[i]);
    // U+2000..U+206F (dashes, curly quotes, ellipsis) and U+00AB/U+00BB.
    if (c == 0xE2 && i + 2 < text.size() &&
        (static_cast<unsigned char>(text[i + 1]) == 0x80 || static_cast<unsigned char>(text[i + 1]) == 0x81)) {
      s.push_back(' ');
      i += 2;
    } else if (c == 0xC2 && i + 1 < text.size() &&
               (static_cast<unsigned char>(text[i + 1]) == 0xAB || static_cast<unsigned char>(text[i + 1]) == 0xBB)) {
      s.push_back(' ');
      i += 1;
    } else {
      s.push_back(static_cast<char>(c));
    }
  }
  return word_tokens(s);
}

double RougeScore::precision() const {
  return candidate_total == 0 ? 0.0 : static_cast<double>(overlap) / static_cast<double>(candidate_total);
}

double RougeScore::recall() const {
  return reference_total == 0 ? 0.0 : static_cast<double>(overlap) / static_cast<double>(reference_total);
}

double RougeScore::f1() const {
  if (overlap == 0) return 0.0;
  return 2.0 * static_cast<double>(overlap) / static_cast<double>(candidate_total + reference_total);
}

namespace {

std::map<std::vector<std::string>, std::size_t> ngram_counts(const std::vector<std::string>& toks, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> out;
  if (toks.size() < n) return out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) ++out[std::vector<std::string>(toks.begin() + i, toks.begin() + i + n)];
  return out;
}

}  // namespace

RougeScore rouge_n(const std::vector<std::string>& candidate, const std::vector<std::string>& reference,
                   std::size_t n) {
  if (n == 0) throw Error("rouge_n: n must be at least 1");
  RougeScore r;
  r.candidate_total = candidate.size() >= n ? candidate.size() - n + 1 : 0;
  r.reference_total = reference.size() >= n ? reference.size() - n + 1 : 0;
  auto cand = ngram_counts(candidate, n);
  auto ref = ngram_counts(reference, n);
  for (const auto& [g, c] : cand) {
    auto it = ref.find(g);
    if (it != ref.end()) r.overlap += std::min(c, it->second);
  }
  return r;
}

RougeScore rouge_n(std::string_view candidate, std::string_view reference, std::size_t n) {
  return rouge_n(tokenize_for_rouge(candidate), tokenize_for_rouge(reference), n);
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RougeScore rouge_l(const std::vector<std::string>& candidate, const std::vector<std::string>& reference) {
  return {lcs_length(candidate, reference), candidate.size(), reference.size()};
}

RougeScore rouge_l(std::string_view candidate, std::string_view reference) {
  return rouge_l(tokenize_for_rouge(candidate), tokenize_for_rouge(reference));
}

// --- BERTScore ----------------------------------------------------------------------------

std::vector<Vector> HashedEmbedder::embed(const std::vector<std::string>& tokens) const {
  std::vector<Vector> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    Rng rng(fnv1a64(t) ^ seed_);
    Vector v(dim_);
    double norm = 0.0;
    for (auto& x : v) {
      x = normal(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : v) x /= norm;
    out.push_back(std::move(v));
  }
  return out;
}

std::string HashedEmbedder::id() const { return "hashed-" + std::to_string(dim_) + "-" + std::to_string(seed_); }

LookupEmbedder::LookupEmbedder(std::unordered_map<std::string, Vector> table, std::string id)
    : table_(std::move(table)), id_(std::move(id)) {
  for (const auto& [tok, v] : table_) {
    if (dim_ == 0) dim_ = v.size();
    if (v.size() != dim_ || dim_ == 0) throw Error("embedding table has inconsistent dimensions at '" + tok + "'");
  }
}

LookupEmbedder LookupEmbedder::load_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open embedding file: " + path.string());
  std::unordered_map<std::string, Vector> table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tok;
    if (!(ls >> tok)) continue;
    Vector v;
    double x;
    while (ls >> x) v.push_back(x);
    if (v.empty()) throw Error(path.string() + ":" + std::to_string(lineno) + ": no vector values");
    table.emplace(to_lower(tok), std::move(v));
  }
  return LookupEmbedder(std::move(table), "lookup:" + path.filename().string());
}

std::vector<Vector> LookupEmbedder::embed(const std::vector<std::string>& tokens) const {
  std::vector<Vector> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) {
    auto it = table_.find(t);
    out.push_back(it == table_.end() ? Vector(dim_, 0.0) : it->second);
  }
  return out;
}

namespace {

double cosine(const Vector& u, const Vector& v) {
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) return u == v ? 1.0 : 0.0;
  if (u == v) return 1.0;
  return dot / (std::sqrt(nu) * std::sqrt(nv));
}

std::vector<Vector> checked_embed(const Embedder& e, const std::vector<std::string>& toks) {
  auto vecs = e.embed(toks);
  if (vecs.size() != toks.size())
    throw Error("embedder " + e.id() + " returned " + std::to_string(vecs.size()) + " vectors for " +
                std::to_string(toks.size()) + " tokens");
  for (const auto& v : vecs)
    if (v.size() != vecs.front().size() || v.empty()) throw Error("embedder " + e.id() + " returned ragged vectors");
  return vecs;
}

}  // namespace

BertScore bertscore(std::string_view candidate, std::string_view reference, const Embedder& embedder) {
  BertScore s;
  auto ct = tokenize_for_rouge(candidate);
  auto rt = tokenize_for_rouge(reference);
  if (ct.empty() || rt.empty()) {
    s.warnings.push_back(ct.empty() ? "empty candidate; BERTScore set to 0" : "empty reference; BERTScore set to 0");
    return s;
  }
  auto cv = checked_embed(embedder, ct);
  auto rv = checked_embed(embedder, rt);
  if (cv.front().size() != rv.front().size()) throw Error("embedder " + embedder.id() + " changed dimension");

  std::vector<std::vector<double>> sim(cv.size(), std::vector<double>(rv.size()));
  for (std::size_t i = 0; i < cv.size(); ++i)
    for (std::size_t j = 0; j < rv.size(); ++j) sim[i][j] = cosine(cv[i], rv[j]);

  double p = 0.0, r = 0.0;
  for (std::size_t i = 0; i < cv.size(); ++i) p += *std::max_element(sim[i].begin(), sim[i].end());
  for (std::size_t j = 0; j < rv.size(); ++j) {
    double best = sim[0][j];
    for (std::size_t i = 1; i < cv.size(); ++i) best = std::max(best, sim[i][j]);
    r += best;
  }
  s.precision = p / static_cast<double>(cv.size());
  s.recall = r / static_cast<double>(rv.size());
  s.f1 = s.precision + s.recall > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

// --- judge -----------------------------------------------------------------------------------------

JudgeTemplate JudgeTemplate::parse(std::string_view text) {
  JudgeTemplate t;
  std::string body;
  bool header = true;
  for (const auto& line : split_lines(text)) {
    if (header && starts_with_ci(line, "# id:")) {
      t.id = trim(std::string_view(line).substr(5));
      continue;
    }
    header = false;
    body += line;
    body += '\n';
  }
  if (t.id.empty()) throw Error("judge template has no '# id:' header");
  if (body.find("{{justification}}") == std::string::npos || body.find("{{reference}}") == std::string::npos)
    throw Error("judge template " + t.id + " must contain {{justification}} and {{reference}}");
  t.body = std::move(body);
  return t;
}

JudgeTemplate JudgeTemplate::load(const std::filesystem::path& path) { return parse(read_file(path)); }

std::string JudgeTemplate::to_file_text() const { return "# id: " + id + "\n" + body; }

std::string JudgeTemplate::render(std::string_view justification, std::string_view reference) const {
  std::string out;
  std::size_t i = 0;
  while (i < body.size()) {
    if (body.compare(i, 17, "{{justification}}") == 0) {
      out += justification;
      i += 17;
    } else if (body.compare(i, 13, "{{reference}}") == 0) {
      out += reference;
      i += 13;
    } else {
      out += body[i++];
    }
  }
  return out;
}

JudgeTemplates JudgeTemplates::builtin() {
  JudgeTemplates t;
  t.correctness = JudgeTemplate::parse(
      "# id: judge-correctness-v1\n"
      "You grade fact-checking justifications.\n"
      "Compare the generated justification with the reference review written by a professional fact-checker.\n"
      "Score correctness: how far every statement in the generated justification agrees with the reference. "
      "Statements that contradict the reference lower the score.\n"
      "\n"
      "Reference review:\n{{reference}}\n"
      "\n"
      "Generated justification:\n{{justification}}\n"
      "\n"
      "Answer with a single decimal number between 0 and 1 and nothing else.\n");
  t.completeness = JudgeTemplate::parse(
      "# id: judge-completeness-v1\n"
      "You grade fact-checking justifications.\n"
      "Compare the generated justification with the reference review written by a professional fact-checker.\n"
      "Score completeness: how many of the key points the reference uses to reach its verdict are also covered "
      "by the generated justification.\n"
      "\n"
      "Reference review:\n{{reference}}\n"
      "\n"
      "Generated justification:\n{{justification}}\n"
      "\n"
      "Answer with a single decimal number between 0 and 1 and nothing else.\n");
  return t;
}

std::optional<double> parse_score(std::string_view response) {
  static const std::regex number(R"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)");
  std::string s(response);
  std::smatch m;
  if (!std::regex_search(s, m, number)) return std::nullopt;
  try {
    double v = std::stod(m.str());
    if (!std::isfinite(v)) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

namespace {

constexpr std::string_view kScoreReminder =
    "\n\nReply with only a decimal number between 0 and 1, for example 0.6.\n";

std::optional<double> judge_one(const std::string& prompt, std::string_view dimension, Oracle& judge,
                                int transport_retries, JudgeScore& out) {
  for (int attempt = 0; attempt < 2; ++attempt) {
    OracleRequest req{attempt == 0 ? prompt : prompt + std::string(kScoreReminder), {}};
    std::string text;
    try {
      text = send_with_retry(judge, req, transport_retries).text;
    } catch (const TransportError& e) {
      out.warnings.push_back(std::string(dimension) + ": judge unreachable: " + e.what());
      return std::nullopt;
    }
    out.raw_responses.push_back(text);
    auto v = parse_score(text);
    if (!v) {
      out.warnings.push_back(std::string(dimension) + ": no score in judge response (attempt " +
                             std::to_string(attempt + 1) + ")");
      continue;
    }
    if (*v < 0.0 || *v > 1.0) {
      double c = std::clamp(*v, 0.0, 1.0);
      std::ostringstream os;
      os << dimension << ": score " << *v << " outside [0,1], clamped to " << c;
      out.warnings.push_back(os.str());
      return c;
    }
    return v;
  }
  return std::nullopt;
}

}  // namespace

JudgeScore judge_justification(std::string_view justification, std::string_view reference, Oracle& judge,
                               const JudgeTemplates& templates, int transport_retries) {
  JudgeScore s;
  s.correctness = judge_one(templates.correctness.render(justification, reference), "correctness", judge,
                            transport_retries, s);
  s.completeness = judge_one(templates.completeness.render(justification, reference), "completeness", judge,
                             transport_retries, s);
  return s;
}

json to_json(const JudgeScore& s) {
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"correctness", opt(s.correctness)},
          {"completeness", opt(s.completeness)},
          {"judged", s.judged()},
          {"raw_responses", s.raw_responses},
          {"warnings", s.warnings}};
}

// --- per-label -------------------------------------------------------------------------------------

PerLabelReport per_label_report(const std::vector<ScoredItem>& items, std::vector<std::string> metrics) {
  if (metrics.empty()) {
    std::set<std::string> seen;
    for (const auto& it : items)
      for (const auto& [name, v] : it.scores) seen.insert(name);
    metrics.assign(seen.begin(), seen.end());
  }
  PerLabelReport r;
  r.metrics = metrics;
  for (const auto& m : metrics) {
    std::array<std::vector<double>, kNumLabels> values;
    for (const auto& it : items) {
      auto f = it.scores.find(m);
      if (f != it.scores.end()) values[label_index(it.gold)].push_back(f->second);
    }
    auto& cells = r.cells[m];
    auto& counts = r.counts[m];
    for (std::size_t l = 0; l < kNumLabels; ++l) {
      auto& v = values[l];
      counts[l] = v.size();
      if (v.empty()) continue;
      std::sort(v.begin(), v.end());
      double sum = 0.0;
      for (double x : v) sum += x;
      cells[l] = sum / static_cast<double>(v.size());
    }
  }
  return r;
}

json to_json(const PerLabelReport& r) {
  json j = json::object();
  for (const auto& m : r.metrics) {
    json row = json::object();
    for (auto l : kAllLabels) {
      const auto& c = r.cells.at(m)[label_index(l)];
      row[std::string(corpus::label_name(l))] = {{"mean", c ? json(*c) : json(nullptr)},
                                                 {"n", r.counts.at(m)[label_index(l)]}};
    }
    j[m] = row;
  }
  return j;
}

std::string format_per_label_table(const std::vector<std::pair<std::string, PerLabelReport>>& rows) {
  std::size_t w0 = 6, w1 = 6;
  for (const auto& [src, rep] : rows) {
    w0 = std::max(w0, src.size());
    for (const auto& m : rep.metrics) w1 = std::max(w1, m.size());
  }
  std::ostringstream os;
  os << std::left << std::setw(static_cast<int>(w0 + 2)) << "source" << std::setw(static_cast<int>(w1 + 2))
     << "metric";
  for (auto l : kAllLabels) os << std::right << std::setw(14) << corpus::label_display(l);
  os << "\n";
  for (const auto& [src, rep] : rows) {
    for (const auto& m : rep.metrics) {
      os << std::left << std::setw(static_cast<int>(w0 + 2)) << src << std::setw(static_cast<int>(w1 + 2)) << m;
      for (auto l : kAllLabels) {
        const auto& c = rep.cells.at(m)[label_index(l)];
        std::ostringstream cell;
        if (c)
          cell << std::fixed << std::setprecision(4) << *c;
        else
          cell << "-";
        os << std::right << std::setw(14) << cell.str();
      }
      os << "\n";
    }
  }
  return os.str();
}

json per_label_table_json(const std::vector<std::pair<std::string, PerLabelReport>>& rows) {
  json out = json::array();
  for (const auto& [src, rep] : rows) out.push_back({{"source", src}, {"metrics", to_json(rep)}});
  return out;
}

}  // namespace refute::metrics

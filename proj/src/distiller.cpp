#include "refute/distiller.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <unordered_set>

#include "refute/worker_pool.hpp"

namespace refute::distiller {

namespace {

constexpr std::string_view kFormatReminder =
    "\n\nYour previous answer could not be read. Reply again using exactly the line format "
    "shown above and nothing else.";

void require_text(std::string_view what, std::string_view s) {
  if (trim(s).empty()) throw Error(std::string(what) + " must not be empty");
}

}  // namespace

std::string truncate_at_sentence(std::string_view review, std::size_t budget) {
  if (review.size() <= budget) return std::string(review);
  auto sentences = corpus::split_sentences(review);
  std::size_t cursor = 0, cut = 0;
  for (const auto& s : sentences) {
    std::size_t at = review.find(s.text, cursor);
    if (at == std::string_view::npos) break;
    std::size_t end = at + s.text.size();
    if (end > budget) break;
    cut = end;
    cursor = end;
  }
  if (cut == 0) {
    cut = budget;
    while (cut > 0 && !std::isspace(static_cast<unsigned char>(review[cut]))) --cut;
    if (cut == 0) {
      cut = budget;
      while (cut > 0 && (static_cast<unsigned char>(review[cut]) & 0xC0) == 0x80) --cut;
    }
  }
  return trim(review.substr(0, cut));
}

std::string build_aspect_distill_prompt(std::string_view claim, std::string_view review,
                                        const DistillConfig& cfg) {
  require_text("claim", claim);
  require_text("review", review);
  std::string p;
  p += "You are assisting professional fact-checkers. Read the claim and the expert review "
       "written about it.\n";
  p += "Identify up to 4 distinct aspects the review uses to evaluate the claim. An aspect is a "
       "short title naming a dimension of the claim that must be checked, followed by one to "
       "three sentences saying what the review examines along that dimension.\n";
  p += "Answer with one line per aspect and nothing else, in this format:\n";
  p += "ASPECT 1: <title> -- <description>\n";
  p += "ASPECT 2: <title> -- <description>\n\n";
  p += "Claim: " + collapse_whitespace(claim) + "\n\n";
  p += "Review:\n" + truncate_at_sentence(review, cfg.review_char_budget) + "\n";
  return p;
}

std::string build_flaw_distill_prompt(std::string_view claim, std::string_view review,
                                      FlawScope scope, const DistillConfig& cfg) {
  require_text("claim", claim);
  require_text("review", review);
  std::string p;
  p += "You are assisting professional fact-checkers. Read the claim and the expert review "
       "written about it.\n";
  p += "For each flaw type listed below, decide from the review's argument whether the claim "
       "has that flaw. When it does, explain in one to three sentences how the review shows it.\n\n";
  p += "Flaw types:\n";
  for (auto f : flaws_in_scope(scope))
    p += "- " + std::string(flaw_name(f)) + ": " + std::string(flaw_definition(f)) + "\n";
  p += "\nAnswer with exactly one line per flaw type and nothing else, in this format:\n";
  p += "FLAW <type>: PRESENT -- <explanation>\n";
  p += "FLAW <type>: ABSENT\n\n";
  p += "Claim: " + collapse_whitespace(claim) + "\n\n";
  p += "Review:\n" + truncate_at_sentence(review, cfg.review_char_budget) + "\n";
  return p;
}

AspectExtraction extract_aspects(std::string_view claim, std::string_view review, Oracle& oracle,
                                 const DistillConfig& cfg) {
  std::string prompt = build_aspect_distill_prompt(claim, review, cfg);
  AspectExtraction out;
  for (int attempt = 0; attempt < 2; ++attempt) {
    OracleRequest req{attempt == 0 ? prompt : prompt + std::string(kFormatReminder), cfg.decoding};
    auto resp = send_with_retry(oracle, req, cfg.transport_retries);
    out.raw_responses.push_back(resp.text);
    try {
      std::size_t n = count_aspect_lines(resp.text);
      out.aspects = parse_aspects(resp.text);
      if (n > out.aspects.size())
        out.warnings.push_back("oracle returned " + std::to_string(n) + " aspects; kept " +
                               std::to_string(out.aspects.size()));
      return out;
    } catch (const ParseError&) {
    }
  }
  throw DistillFailure("aspect response unparseable after retry", out.raw_responses);
}

FlawExtraction extract_flaws(std::string_view claim, std::string_view review, Oracle& oracle,
                             FlawScope scope, const DistillConfig& cfg) {
  std::string prompt = build_flaw_distill_prompt(claim, review, scope, cfg);
  FlawExtraction out;
  for (int attempt = 0; attempt < 2; ++attempt) {
    OracleRequest req{attempt == 0 ? prompt : prompt + std::string(kFormatReminder), cfg.decoding};
    auto resp = send_with_retry(oracle, req, cfg.transport_retries);
    out.raw_responses.push_back(resp.text);
    try {
      auto parsed = parse_flaw_report(resp.text, scope);
      out.report = std::move(parsed.report);
      out.warnings = std::move(parsed.warnings);
      return out;
    } catch (const ParseError&) {
    }
  }
  throw DistillFailure("flaw response unparseable after retry", out.raw_responses);
}

json to_json(const SilverRecord& r) {
  json findings = to_json(r.report);
  return {{"claim_id", r.claim_id},
          {"aspects", to_json(r.aspects)},
          {"scope", findings["scope"]},
          {"findings", findings["findings"]},
          {"raw_responses", r.raw_responses}};
}

SilverRecord silver_from_json(const json& j) {
  SilverRecord r;
  r.claim_id = j.at("claim_id").get<std::string>();
  r.aspects = aspects_from_json(j.at("aspects"));
  r.report = flaw_report_from_json({{"scope", j.value("scope", "7F")}, {"findings", j.at("findings")}});
  r.raw_responses = j.value("raw_responses", std::vector<std::string>{});
  return r;
}

std::vector<SilverRecord> load_silver(const std::filesystem::path& path) {
  std::vector<SilverRecord> out;
  if (!std::filesystem::exists(path)) return out;
  for_each_jsonl(
      path, [&](std::size_t, const json& j) { out.push_back(silver_from_json(j)); },
      [](std::size_t, const std::string&) {});
  return out;
}

DistillSummary distill_corpus(const std::vector<corpus::ClaimRecord>& records,
                              const corpus::ArticleStore& articles, Oracle& oracle, FlawScope scope,
                              const std::filesystem::path& out_path, const DistillRunOptions& opts) {
  std::unordered_set<std::string> done;
  if (std::filesystem::exists(out_path)) {
    for_each_jsonl(
        out_path,
        [&](std::size_t, const json& j) {
          if (j.contains("claim_id")) done.insert(j["claim_id"].get<std::string>());
        },
        [](std::size_t, const std::string&) {});
  }

  DistillSummary summary;
  std::vector<const corpus::ClaimRecord*> todo;
  for (const auto& r : records) {
    if (done.count(r.id)) {
      ++summary.skipped;
    } else {
      todo.push_back(&r);
    }
  }

  JsonlAppender writer(out_path);
  std::mutex mu;
  parallel_for(todo.size(), opts.workers, [&](std::size_t, std::size_t i) {
    const auto& rec = *todo[i];
    try {
      if (!rec.review_article) throw Error("record has no review article");
      auto review = articles.load(*rec.review_article);
      auto aspects = extract_aspects(rec.text, review.clean_text, oracle, opts.config);
      auto flaws = extract_flaws(rec.text, review.clean_text, oracle, scope, opts.config);
      SilverRecord s{rec.id, std::move(aspects.aspects), std::move(flaws.report), {}};
      s.raw_responses = std::move(aspects.raw_responses);
      s.raw_responses.insert(s.raw_responses.end(), flaws.raw_responses.begin(), flaws.raw_responses.end());
      json line = to_json(s);
      std::lock_guard lock(mu);
      writer.append(line);
      ++summary.written;
    } catch (const Error& e) {
      std::lock_guard lock(mu);
      summary.failures.push_back({rec.id, e.what()});
    }
  });
  std::sort(summary.failures.begin(), summary.failures.end(),
            [](const auto& a, const auto& b) { return a.claim_id < b.claim_id; });
  return summary;
}

}  // namespace refute::distiller

#pragma once
// Shared fixtures: scratch directories and a small synthetic corpus with
// premise and review articles on disk.

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

#include "refute/common.hpp"
#include "refute/corpus.hpp"
#include "refute/generation.hpp"

namespace refute::testing {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("refute-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

struct SyntheticCorpus {
  std::filesystem::path dataset;
  std::filesystem::path articles;
  std::vector<corpus::ClaimRecord> records;
};

inline const std::vector<std::string>& synthetic_topics() {
  static const std::vector<std::string> topics = {
      "school budget", "water supply", "bridge repairs", "vaccine trial", "tax refund",   "bus fares",
      "police hiring", "solar subsidy", "rent control", "flood defences", "park closures", "hospital beds"};
  return topics;
}

// `train` + `test` claims. Each has two premise articles (one on topic, one
// unrelated) and a review whose wording depends on the label, so a bag of
// words classifier can separate labels.
inline SyntheticCorpus make_synthetic_corpus(const std::filesystem::path& root, std::size_t train, std::size_t test) {
  SyntheticCorpus c;
  c.dataset = root / "claims.jsonl";
  c.articles = root / "articles";
  std::filesystem::create_directories(c.articles);
  corpus::ArticleStore store(c.articles);
  const auto& topics = synthetic_topics();
  static const char* verdict[] = {
      "The statement is fabricated and contradicted by official records.",
      "The statement mixes accurate figures with misleading exaggeration.",
      "No reliable record could confirm or refute the statement.",
      "The statement is accurate and matches the published figures."};
  static const char* rating[] = {"False", "Half True", "Unproven", "True"};
  static const char* site[] = {"politifact", "snopes", "truthorfiction", "snopes"};

  for (std::size_t i = 0; i < train + test; ++i) {
    corpus::ClaimRecord r;
    const std::string& topic = topics[i % topics.size()];
    const std::string town = "Town" + std::to_string(i);
    r.id = "c" + std::to_string(1000 + i);
    r.text = "The mayor of " + town + " tripled spending on the " + topic + " last year.";
    r.label = corpus::kAllLabels[i % 4];
    r.source_site = site[i % 4];
    r.original_rating = rating[i % 4];
    r.split = i < train ? corpus::Split::Train : corpus::Split::Test;

    auto p1 = corpus::ArticleRef::from_uri("https://news.example/" + r.id + "/budget");
    auto p2 = corpus::ArticleRef::from_uri("https://news.example/" + r.id + "/weather");
    auto rv = corpus::ArticleRef::from_uri("https://factcheck.example/" + r.id);
    store.put(p1, "<html><body><p>Council minutes for " + town + " list the " + topic +
                      " line item for the year.</p><p>Spending on the " + topic + " in " + town +
                      " rose by four percent according to the auditor.</p><p>The mayor said the " + topic +
                      " was a priority.</p><p>Officials declined further comment.</p></body></html>");
    store.put(p2, "Rain is expected in " + town + " this weekend. Temperatures will stay mild. "
                  "Residents should check the forecast before travelling.");
    store.put(rv, "We checked the claim about the " + topic + " in " + town + ". " + verdict[i % 4] +
                      " Spending on the " + topic + " rose by four percent, according to the auditor. "
                      "The mayor's office did not respond to our request.");
    r.premise_articles = {p1, p2};
    r.review_article = rv;
    c.records.push_back(std::move(r));
  }
  corpus::save_dataset(c.dataset, c.records);
  return c;
}

// Twenty prompt/target pairs for adapter memorization checks.
inline std::vector<generation::FineTuneExample> memorization_examples() {
  static const char* subjects[] = {"vaccines", "the moon",    "tax cuts", "wind farms",   "coffee",
                                   "5G towers", "the senate", "rice",     "bees",         "wildfires",
                                   "crime rates", "masks",     "tariffs",  "solar panels", "the census",
                                   "vitamin C", "glaciers",    "the minimum wage", "fluoride", "chess"};
  std::vector<generation::FineTuneExample> out;
  for (int i = 0; i < 20; ++i) {
    std::string s = subjects[i];
    out.push_back({"### Task: justification\nClaim: " + s + " cause problem number " + std::to_string(i) +
                       "\nEvidence:\n[1] a report about " + s,
                   "FLAW ContradictingFacts: PRESENT -- records on " + s + " show no link to problem " +
                       std::to_string(i) + "."});
  }
  return out;
}

// Two-class texts: filler words plus one label keyword per text.
struct KeywordCorpus {
  std::vector<std::string> texts;
  std::vector<corpus::VeracityLabel> labels;
};

inline KeywordCorpus keyword_corpus(std::size_t n, std::uint64_t seed) {
  static const std::vector<std::string> filler = {"the", "report", "said", "officials", "city", "budget", "year",
                                                  "claim", "posted", "online", "video", "figures", "council",
                                                  "according", "statement", "shared", "week", "data"};
  static const std::vector<std::string> false_words = {"fabricated", "debunked", "hoax", "invented"};
  static const std::vector<std::string> true_words = {"accurate", "confirmed", "verified", "correct"};
  Rng rng(seed);
  KeywordCorpus c;
  for (std::size_t i = 0; i < n; ++i) {
    bool is_true = uniform_index(rng, 2) == 1;
    const auto& keys = is_true ? true_words : false_words;
    std::string text;
    std::size_t len = 6 + uniform_index(rng, 10), at = uniform_index(rng, len);
    for (std::size_t w = 0; w < len; ++w) {
      if (!text.empty()) text += ' ';
      text += w == at ? keys[uniform_index(rng, keys.size())] : filler[uniform_index(rng, filler.size())];
    }
    c.texts.push_back(text);
    c.labels.push_back(is_true ? corpus::VeracityLabel::True : corpus::VeracityLabel::False);
  }
  return c;
}

}  // namespace refute::testing

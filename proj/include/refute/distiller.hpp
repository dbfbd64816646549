#pragma once
// Silver-label construction: aspects and flaw elucidations distilled from
// (claim, review article) pairs by an external text oracle.

#include <filesystem>
#include <string>
#include <vector>

#include "refute/corpus.hpp"
#include "refute/oracle.hpp"
#include "refute/taxonomy.hpp"

namespace refute::distiller {

struct DistillConfig {
  std::size_t review_char_budget = 12000;
  DecodingParams decoding{};  // temperature 0 by default
  int transport_retries = 2;
};

// Review text truncated from the tail to at most `budget` bytes, cut at the
// end of the last sentence that fits. A first sentence longer than the budget
// is hard-cut at a word boundary.
std::string truncate_at_sentence(std::string_view review, std::size_t budget);

std::string build_aspect_distill_prompt(std::string_view claim, std::string_view review,
                                        const DistillConfig& cfg = {});
std::string build_flaw_distill_prompt(std::string_view claim, std::string_view review,
                                      FlawScope scope, const DistillConfig& cfg = {});

// Raised when the oracle's reply cannot be parsed even after one retry. The
// record is then considered undistilled.
class DistillFailure : public Error {
 public:
  DistillFailure(std::string msg, std::vector<std::string> raw)
      : Error(std::move(msg)), raw_(std::move(raw)) {}
  const std::vector<std::string>& raw_responses() const { return raw_; }

 private:
  std::vector<std::string> raw_;
};

struct AspectExtraction {
  AspectSet aspects;
  std::vector<std::string> raw_responses;
  std::vector<std::string> warnings;
};

struct FlawExtraction {
  FlawReport report;
  std::vector<std::string> raw_responses;
  std::vector<std::string> warnings;
};

AspectExtraction extract_aspects(std::string_view claim, std::string_view review, Oracle& oracle,
                                 const DistillConfig& cfg = {});
FlawExtraction extract_flaws(std::string_view claim, std::string_view review, Oracle& oracle,
                             FlawScope scope, const DistillConfig& cfg = {});

struct SilverRecord {
  std::string claim_id;
  AspectSet aspects;
  FlawReport report;
  std::vector<std::string> raw_responses;
};

json to_json(const SilverRecord& r);
SilverRecord silver_from_json(const json& j);
// Reads a silver file; a truncated trailing line from an interrupted run is
// ignored.
std::vector<SilverRecord> load_silver(const std::filesystem::path& path);

struct DistillFailureEntry {
  std::string claim_id;
  std::string reason;
};

struct DistillSummary {
  std::size_t written = 0;
  std::size_t skipped = 0;  // already present in the output file
  std::vector<DistillFailureEntry> failures;
};

struct DistillRunOptions {
  DistillConfig config{};
  std::size_t workers = 1;
};

// Distills every record into `out_path` (JSON lines, one record per line).
// Ids already present in the file are skipped, so reruns resume. Per-record
// failures are collected, never fatal.
DistillSummary distill_corpus(const std::vector<corpus::ClaimRecord>& records,
                              const corpus::ArticleStore& articles, Oracle& oracle, FlawScope scope,
                              const std::filesystem::path& out_path, const DistillRunOptions& opts = {});

}  // namespace refute::distiller

#pragma once
// Aspects, the seven-flaw taxonomy and flaw reports, with the labeled-line
// text format used in prompts and training targets:
//
//   ASPECT 1: Legal investigations -- Whether any inquiry was opened.
//   FLAW ContradictingFacts: PRESENT -- The record shows the opposite.
//   FLAW Exaggeration: ABSENT
//
// Parsers are forgiving about numbering, bullets, markdown emphasis, case and
// flaw-name spelling; serializers always emit the canonical form above.

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "refute/common.hpp"

namespace refute {

class ParseError : public Error {
 public:
  using Error::Error;
};

// --- aspects ---------------------------------------------------------------------

inline constexpr std::size_t kMaxAspects = 4;

struct Aspect {
  std::string title;
  std::string description;
  friend bool operator==(const Aspect&, const Aspect&) = default;
};

struct AspectSet {
  std::vector<Aspect> aspects;

  std::size_t size() const { return aspects.size(); }
  friend bool operator==(const AspectSet&, const AspectSet&) = default;
};

// Throws Error unless 1 <= n <= 4 and titles are distinct after case folding.
void validate(const AspectSet& set);

std::string serialize(const AspectSet& set);
// Keeps the first occurrence of each title, truncates to four. Throws
// ParseError if no aspect line is found.
AspectSet parse_aspects(std::string_view text);
// Number of aspect lines before dedup/truncation; lets callers log overflow.
std::size_t count_aspect_lines(std::string_view text);

json to_json(const AspectSet& set);
AspectSet aspects_from_json(const json& j);

// --- flaws -----------------------------------------------------------------------

enum class FlawType {
  ContradictingFacts,
  Exaggeration,
  Understatement,
  OccasionalFaltering,
  InsufficientSupport,
  ProblematicAssumptions,
  AlternativeExplanations,
};

inline constexpr std::array<FlawType, 7> kAllFlaws = {
    FlawType::ContradictingFacts,     FlawType::Exaggeration,
    FlawType::Understatement,         FlawType::OccasionalFaltering,
    FlawType::InsufficientSupport,    FlawType::ProblematicAssumptions,
    FlawType::AlternativeExplanations};

// 1: checkable against evidence directly. 2: needs reasoning about when the
// claim stops holding. 3: needs wider context and background knowledge.
int flaw_category(FlawType f);
std::string_view flaw_name(FlawType f);     // "ContradictingFacts"
std::string_view flaw_display(FlawType f);  // "Contradicting facts"
std::string_view flaw_definition(FlawType f);
std::optional<FlawType> parse_flaw_type(std::string_view s);

enum class FlawScope { Three, Five, Seven };

std::string_view scope_name(FlawScope s);  // "3F" / "5F" / "7F"
std::optional<FlawScope> parse_scope(std::string_view s);
std::vector<FlawType> flaws_in_scope(FlawScope s);
bool in_scope(FlawType f, FlawScope s);

struct FlawFinding {
  FlawType flaw = FlawType::ContradictingFacts;
  bool present = false;
  std::string explanation;  // required when present
  friend bool operator==(const FlawFinding&, const FlawFinding&) = default;
};

struct FlawReport {
  FlawScope scope = FlawScope::Seven;
  std::vector<FlawFinding> findings;  // scope order, one per in-scope flaw

  std::size_t present_count() const;
  const FlawFinding* find(FlawType f) const;
  friend bool operator==(const FlawReport&, const FlawReport&) = default;
};

// Throws Error if findings do not cover exactly the scope's flaws once each,
// or a present finding has no explanation.
void validate(const FlawReport& report);

std::string serialize(const FlawReport& report);

struct ParsedFlaws {
  FlawReport report;
  std::vector<std::string> warnings;  // out-of-scope or duplicate findings dropped
  std::size_t matched_lines = 0;
};

// Builds a complete report for `scope`: flaws not mentioned default to
// absent. Throws ParseError if no flaw line is found or a flaw marked present
// has no explanation.
ParsedFlaws parse_flaw_report(std::string_view text, FlawScope scope);

json to_json(const FlawReport& report);
FlawReport flaw_report_from_json(const json& j);

}  // namespace refute

#include "refute/taxonomy.hpp"

#include <algorithm>
#include <cctype>
#include <set>

namespace refute {

namespace {

std::string squash(std::string_view s) {
  std::string out;
  for (unsigned char c : s)
    if (std::isalnum(c)) out.push_back(static_cast<char>(std::tolower(c)));
  return out;
}

// Strips list numbering, bullets and markdown emphasis from the line start.
std::string_view strip_decoration(std::string_view line) {
  auto skip = [&](auto pred) {
    while (!line.empty() && pred(static_cast<unsigned char>(line.front()))) line.remove_prefix(1);
  };
  skip([](unsigned char c) { return std::isspace(c) != 0; });
  skip([](unsigned char c) { return c == '-' || c == '*' || c == '#' || c == '>' || c == '+'; });
  skip([](unsigned char c) { return std::isspace(c) != 0; });
  std::size_t digits = 0;
  while (digits < line.size() && std::isdigit(static_cast<unsigned char>(line[digits]))) ++digits;
  if (digits > 0 && digits < line.size() && (line[digits] == '.' || line[digits] == ')')) {
    line.remove_prefix(digits + 1);
  }
  skip([](unsigned char c) { return std::isspace(c) != 0 || c == '*' || c == '_'; });
  return line;
}

std::string clean_field(std::string_view s) {
  std::string out = collapse_whitespace(s);
  // Trailing/leading markdown emphasis.
  while (!out.empty() && (out.back() == '*' || out.back() == '_')) out.pop_back();
  while (!out.empty() && (out.front() == '*' || out.front() == '_')) out.erase(0, 1);
  return trim(out);
}

// Splits "head -- tail" at the first explanation separator.
std::pair<std::string, std::string> split_separator(std::string_view s) {
  static const std::array<std::string_view, 4> seps = {" -- ", " \xe2\x80\x94 ", " \xe2\x80\x93 ",
                                                         " - "};
  std::size_t best = std::string_view::npos, len = 0;
  for (auto sep : seps) {
    std::size_t p = s.find(sep);
    if (p != std::string_view::npos && p < best) {
      best = p;
      len = sep.size();
    }
  }
  if (best == std::string_view::npos) {
    // "--" or an em dash glued to the text.
    for (std::string_view sep : {"--", "\xe2\x80\x94"}) {
      std::size_t p = s.find(sep);
      if (p != std::string_view::npos && p < best) {
        best = p;
        len = sep.size();
      }
    }
  }
  if (best == std::string_view::npos) return {clean_field(s), ""};
  return {clean_field(s.substr(0, best)), clean_field(s.substr(best + len))};
}

struct KeyedLine {
  std::string key;   // text between keyword and ':'
  std::string rest;  // after ':'
};

// Recognizes "<KEYWORD> <key>: <rest>" after decoration stripping.
std::optional<KeyedLine> match_keyed(std::string_view raw, std::string_view keyword) {
  std::string_view line = strip_decoration(raw);
  if (!starts_with_ci(line, keyword)) return std::nullopt;
  line.remove_prefix(keyword.size());
  if (!line.empty() && std::isalpha(static_cast<unsigned char>(line.front()))) {
    // "ASPECTS" or "FLAWS" header lines are not entries; plural s is tolerated
    // only when followed by a number ("Aspects 1:" is unusual but harmless).
    if (line.size() >= 2 && (line[0] == 's' || line[0] == 'S') &&
        std::isspace(static_cast<unsigned char>(line[1]))) {
      line.remove_prefix(1);
    } else {
      return std::nullopt;
    }
  }
  std::size_t colon = line.find(':');
  if (colon == std::string_view::npos) return std::nullopt;
  KeyedLine k;
  k.key = clean_field(line.substr(0, colon));
  k.rest = std::string(line.substr(colon + 1));
  // "**ASPECT 1:**" leaves emphasis after the colon.
  while (!k.rest.empty() && (k.rest.front() == '*' || k.rest.front() == '_')) k.rest.erase(0, 1);
  return k;
}

bool is_any_keyed(std::string_view line) {
  return match_keyed(line, "aspect").has_value() || match_keyed(line, "flaw").has_value();
}

}  // namespace

// --- aspects -----------------------------------------------------------------------

void validate(const AspectSet& set) {
  if (set.aspects.empty() || set.aspects.size() > kMaxAspects)
    throw Error("aspect set must hold between 1 and 4 aspects, got " + std::to_string(set.size()));
  std::set<std::string> seen;
  for (const auto& a : set.aspects) {
    if (trim(a.title).empty()) throw Error("aspect title is empty");
    if (!seen.insert(to_lower(a.title)).second) throw Error("duplicate aspect title '" + a.title + "'");
  }
}

std::string serialize(const AspectSet& set) {
  std::string out;
  for (std::size_t i = 0; i < set.aspects.size(); ++i) {
    const auto& a = set.aspects[i];
    out += "ASPECT " + std::to_string(i + 1) + ": " + a.title;
    if (!a.description.empty()) out += " -- " + a.description;
    out += "\n";
  }
  return out;
}

namespace {

std::vector<Aspect> raw_aspects(std::string_view text) {
  std::vector<Aspect> out;
  bool open = false;
  for (const auto& line : split_lines(text)) {
    if (auto k = match_keyed(line, "aspect")) {
      auto [title, desc] = split_separator(k->rest);
      if (title.empty()) {
        open = false;
        continue;
      }
      out.push_back({title, desc});
      open = true;
      continue;
    }
    std::string t = trim(line);
    if (t.empty() || is_any_keyed(line)) {
      open = false;
      continue;
    }
    if (open) {
      auto& d = out.back().description;
      d = clean_field(d.empty() ? t : d + " " + t);
    }
  }
  return out;
}

}  // namespace

std::size_t count_aspect_lines(std::string_view text) { return raw_aspects(text).size(); }

AspectSet parse_aspects(std::string_view text) {
  AspectSet set;
  std::set<std::string> seen;
  for (auto& a : raw_aspects(text)) {
    if (!seen.insert(to_lower(a.title)).second) continue;
    set.aspects.push_back(std::move(a));
    if (set.aspects.size() == kMaxAspects) break;
  }
  if (set.aspects.empty()) throw ParseError("no aspect lines found");
  return set;
}

json to_json(const AspectSet& set) {
  json arr = json::array();
  for (const auto& a : set.aspects) arr.push_back({{"title", a.title}, {"description", a.description}});
  return arr;
}

AspectSet aspects_from_json(const json& j) {
  AspectSet set;
  for (const auto& a : j) set.aspects.push_back({a.at("title").get<std::string>(), a.value("description", "")});
  validate(set);
  return set;
}

// --- flaws ---------------------------------------------------------------------------

int flaw_category(FlawType f) {
  switch (f) {
    case FlawType::ContradictingFacts:
    case FlawType::Exaggeration:
    case FlawType::Understatement: return 1;
    case FlawType::OccasionalFaltering:
    case FlawType::InsufficientSupport: return 2;
    case FlawType::ProblematicAssumptions:
    case FlawType::AlternativeExplanations: return 3;
  }
  return 0;
}

std::string_view flaw_name(FlawType f) {
  switch (f) {
    case FlawType::ContradictingFacts: return "ContradictingFacts";
    case FlawType::Exaggeration: return "Exaggeration";
    case FlawType::Understatement: return "Understatement";
    case FlawType::OccasionalFaltering: return "OccasionalFaltering";
    case FlawType::InsufficientSupport: return "InsufficientSupport";
    case FlawType::ProblematicAssumptions: return "ProblematicAssumptions";
    case FlawType::AlternativeExplanations: return "AlternativeExplanations";
  }
  return "?";
}

std::string_view flaw_display(FlawType f) {
  switch (f) {
    case FlawType::ContradictingFacts: return "Contradicting facts";
    case FlawType::Exaggeration: return "Exaggeration";
    case FlawType::Understatement: return "Understatement";
    case FlawType::OccasionalFaltering: return "Occasional faltering";
    case FlawType::InsufficientSupport: return "Insufficient support";
    case FlawType::ProblematicAssumptions: return "Problematic assumptions";
    case FlawType::AlternativeExplanations: return "Existence of alternative explanations";
  }
  return "?";
}

std::string_view flaw_definition(FlawType f) {
  switch (f) {
    case FlawType::ContradictingFacts:
      return "The claim is at odds with information that has been established and verified.";
    case FlawType::Exaggeration:
      return "The claim inflates the size, reach or severity of something beyond what the record supports.";
    case FlawType::Understatement:
      return "The claim shrinks or plays down something that matters, leaving a false impression.";
    case FlawType::OccasionalFaltering:
      return "The claim is stated as holding generally, yet there are conditions under which it breaks down.";
    case FlawType::InsufficientSupport:
      return "The claim asserts more than the available substantiation can carry.";
    case FlawType::ProblematicAssumptions:
      return "The claim rests on premises that are unverified or doubtful.";
    case FlawType::AlternativeExplanations:
      return "The claim ignores other plausible accounts of the same facts.";
  }
  return "";
}

std::optional<FlawType> parse_flaw_type(std::string_view s) {
  std::string k = squash(s);
  for (auto f : kAllFlaws) {
    if (k == squash(flaw_name(f)) || k == squash(flaw_display(f))) return f;
  }
  if (k == "contradictingfact" || k == "contradiction" || k == "factualcontradiction")
    return FlawType::ContradictingFacts;
  if (k == "exaggerated" || k == "overstatement") return FlawType::Exaggeration;
  if (k == "understated") return FlawType::Understatement;
  if (k == "faltering" || k == "occasionalfalter") return FlawType::OccasionalFaltering;
  if (k == "insufficientevidence" || k == "lackofsupport" || k == "unsupported")
    return FlawType::InsufficientSupport;
  if (k == "problematicassumption" || k == "questionableassumptions")
    return FlawType::ProblematicAssumptions;
  if (k == "alternativeexplanation" || k == "existenceofalternativeexplanation" ||
      k == "existenceofalternativeexplanations")
    return FlawType::AlternativeExplanations;
  return std::nullopt;
}

std::string_view scope_name(FlawScope s) {
  switch (s) {
    case FlawScope::Three: return "3F";
    case FlawScope::Five: return "5F";
    case FlawScope::Seven: return "7F";
  }
  return "?";
}

std::optional<FlawScope> parse_scope(std::string_view s) {
  std::string k = squash(s);
  if (k == "3f" || k == "3") return FlawScope::Three;
  if (k == "5f" || k == "5") return FlawScope::Five;
  if (k == "7f" || k == "7") return FlawScope::Seven;
  return std::nullopt;
}

bool in_scope(FlawType f, FlawScope s) {
  int max_cat = s == FlawScope::Three ? 1 : s == FlawScope::Five ? 2 : 3;
  return flaw_category(f) <= max_cat;
}

std::vector<FlawType> flaws_in_scope(FlawScope s) {
  std::vector<FlawType> out;
  for (auto f : kAllFlaws)
    if (in_scope(f, s)) out.push_back(f);
  return out;
}

std::size_t FlawReport::present_count() const {
  return static_cast<std::size_t>(
      std::count_if(findings.begin(), findings.end(), [](const auto& f) { return f.present; }));
}

const FlawFinding* FlawReport::find(FlawType f) const {
  for (const auto& x : findings)
    if (x.flaw == f) return &x;
  return nullptr;
}

void validate(const FlawReport& report) {
  auto expected = flaws_in_scope(report.scope);
  if (report.findings.size() != expected.size())
    throw Error("flaw report for scope " + std::string(scope_name(report.scope)) + " must have " +
                std::to_string(expected.size()) + " findings, got " +
                std::to_string(report.findings.size()));
  std::set<FlawType> seen;
  for (const auto& f : report.findings) {
    if (!in_scope(f.flaw, report.scope))
      throw Error("finding " + std::string(flaw_name(f.flaw)) + " is outside scope");
    if (!seen.insert(f.flaw).second) throw Error("duplicate finding " + std::string(flaw_name(f.flaw)));
    if (f.present && trim(f.explanation).empty())
      throw Error("present finding " + std::string(flaw_name(f.flaw)) + " has no explanation");
  }
}

std::string serialize(const FlawReport& report) {
  std::string out;
  for (const auto& f : report.findings) {
    out += "FLAW " + std::string(flaw_name(f.flaw)) + ": " + (f.present ? "PRESENT" : "ABSENT");
    if (!f.explanation.empty()) out += " -- " + f.explanation;
    out += "\n";
  }
  return out;
}

namespace {

std::optional<bool> parse_presence(std::string_view status) {
  std::string k = squash(status);
  if (k == "present" || k == "yes" || k == "true" || k == "detected" || k == "found") return true;
  if (k == "absent" || k == "no" || k == "false" || k == "notpresent" || k == "none" ||
      k == "notdetected" || k == "notfound")
    return false;
  return std::nullopt;
}

}  // namespace

ParsedFlaws parse_flaw_report(std::string_view text, FlawScope scope) {
  struct Raw {
    FlawType flaw;
    bool present;
    std::string explanation;
  };
  std::vector<Raw> raws;
  ParsedFlaws out;
  bool open = false;

  for (const auto& line : split_lines(text)) {
    if (auto k = match_keyed(line, "flaw")) {
      open = false;
      auto flaw = parse_flaw_type(k->key);
      if (!flaw) {
        out.warnings.push_back("unknown flaw name '" + k->key + "'");
        continue;
      }
      auto [status, expl] = split_separator(k->rest);
      // "PRESENT. The claim ..." without a dash separator.
      std::optional<bool> present = parse_presence(status);
      if (!present) {
        std::string st = trim(status);
        std::size_t cut = st.find_first_of(".,;:");
        if (cut != std::string::npos) {
          present = parse_presence(st.substr(0, cut));
          if (present) {
            std::string tail = clean_field(st.substr(cut + 1));
            expl = expl.empty() ? tail : tail + " " + expl;
          }
        }
      }
      if (!present) {
        out.warnings.push_back("unreadable status for flaw " + std::string(flaw_name(*flaw)));
        continue;
      }
      raws.push_back({*flaw, *present, expl});
      open = true;
      continue;
    }
    std::string t = trim(line);
    if (t.empty() || is_any_keyed(line)) {
      open = false;
      continue;
    }
    if (open) {
      auto& e = raws.back().explanation;
      e = clean_field(e.empty() ? t : e + " " + t);
    }
  }

  out.matched_lines = raws.size();
  if (raws.empty()) throw ParseError("no flaw lines found");

  out.report.scope = scope;
  for (auto f : flaws_in_scope(scope)) out.report.findings.push_back({f, false, ""});
  std::set<FlawType> filled;
  for (auto& r : raws) {
    if (!in_scope(r.flaw, scope)) {
      out.warnings.push_back("dropped out-of-scope finding " + std::string(flaw_name(r.flaw)));
      continue;
    }
    if (!filled.insert(r.flaw).second) {
      out.warnings.push_back("dropped duplicate finding " + std::string(flaw_name(r.flaw)));
      continue;
    }
    if (r.present && r.explanation.empty())
      throw ParseError("flaw " + std::string(flaw_name(r.flaw)) + " marked present without explanation");
    for (auto& f : out.report.findings) {
      if (f.flaw == r.flaw) {
        f.present = r.present;
        f.explanation = std::move(r.explanation);
      }
    }
  }
  return out;
}

json to_json(const FlawReport& report) {
  json arr = json::array();
  for (const auto& f : report.findings)
    arr.push_back({{"flaw", std::string(flaw_name(f.flaw))}, {"present", f.present}, {"explanation", f.explanation}});
  return {{"scope", std::string(scope_name(report.scope))}, {"findings", std::move(arr)}};
}

FlawReport flaw_report_from_json(const json& j) {
  FlawReport r;
  auto scope = parse_scope(j.at("scope").get<std::string>());
  if (!scope) throw Error("unknown flaw scope");
  r.scope = *scope;
  for (const auto& f : j.at("findings")) {
    auto t = parse_flaw_type(f.at("flaw").get<std::string>());
    if (!t) throw Error("unknown flaw " + f.at("flaw").get<std::string>());
    r.findings.push_back({*t, f.at("present").get<bool>(), f.value("explanation", "")});
  }
  validate(r);
  return r;
}

}  // namespace refute

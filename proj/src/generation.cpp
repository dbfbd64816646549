#include "refute/generation.hpp"

#include <algorithm>
#include <sstream>

namespace refute::generation {

namespace {

constexpr std::string_view kAspectsBody =
    "### Task: aspect generation\n"
    "Read the claim and the evidence sentences retrieved for it. List up to 4 distinct aspects a "
    "fact-checker should examine to judge the claim. Write one line per aspect:\n"
    "ASPECT <n>: <title> -- <what to examine>\n"
    "\n"
    "Claim: {{claim}}\n"
    "\n"
    "Evidence:\n"
    "{{evidence}}\n"
    "Aspects:\n";

constexpr std::string_view kFlawsBody =
    "### Task: flaw checking\n"
    "Read the claim, the aspects to focus on and the evidence. For each flaw type below, decide "
    "whether the claim has it and, when it does, explain why using the evidence.\n"
    "{{flaw_list}}"
    "Write exactly one line per flaw type:\n"
    "FLAW <type>: PRESENT -- <explanation>\n"
    "FLAW <type>: ABSENT\n"
    "\n"
    "Claim: {{claim}}\n"
    "\n"
    "Aspects:\n"
    "{{aspects}}\n"
    "Evidence:\n"
    "{{evidence}}\n"
    "Findings:\n";

constexpr std::string_view kJustifyBody =
    "### Task: justification\n"
    "Write a fact-checking review of the claim. Build the argument on the flaw findings and "
    "support it with the evidence.\n"
    "\n"
    "Claim: {{claim}}\n"
    "\n"
    "Flaw findings:\n"
    "{{flaws}}\n"
    "Evidence:\n"
    "{{evidence}}\n"
    "Review:\n";

constexpr std::string_view kJustifyBaselineBody =
    "### Task: justification\n"
    "Write a fact-checking review of the claim, supported by the evidence.\n"
    "\n"
    "Claim: {{claim}}\n"
    "\n"
    "Evidence:\n"
    "{{evidence}}\n"
    "Review:\n";

constexpr std::string_view kJustifyAspectsBody =
    "### Task: justification\n"
    "Write a fact-checking review of the claim. Organize the argument around the aspects and "
    "support it with the evidence.\n"
    "\n"
    "Claim: {{claim}}\n"
    "\n"
    "Aspects:\n"
    "{{aspects}}\n"
    "Evidence:\n"
    "{{evidence}}\n"
    "Review:\n";

constexpr std::string_view kRetryReminder =
    "\n(Your previous answer was not in the required format. Answer again using exactly the line "
    "format described above.)\n";

std::string_view slot_token(Slot s) {
  switch (s) {
    case Slot::Claim: return "{{claim}}";
    case Slot::Evidence: return "{{evidence}}";
    case Slot::Aspects: return "{{aspects}}";
    case Slot::Flaws: return "{{flaws}}";
    case Slot::FlawList: return "{{flaw_list}}";
  }
  return "";
}

constexpr std::array<Slot, 5> kAllSlots = {Slot::Claim, Slot::Evidence, Slot::Aspects, Slot::Flaws,
                                           Slot::FlawList};

bool evidence_before(const retriever::EvidenceItem& a, const retriever::EvidenceItem& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.source != b.source) return a.source < b.source;
  return a.sentence_index < b.sentence_index;
}

}  // namespace

std::set<Slot> PromptTemplate::slots() const {
  std::set<Slot> out;
  for (auto s : kAllSlots)
    if (body.find(slot_token(s)) != std::string::npos) out.insert(s);
  return out;
}

PromptTemplate PromptTemplate::parse(std::string_view text) {
  PromptTemplate t;
  std::size_t pos = 0;
  while (pos < text.size() && text.substr(pos).starts_with("# ")) {
    std::size_t nl = text.find('\n', pos);
    std::string line(text.substr(pos + 2, nl == std::string_view::npos ? std::string_view::npos : nl - pos - 2));
    std::size_t colon = line.find(':');
    if (colon == std::string::npos) break;
    std::string key = trim(line.substr(0, colon));
    std::string value = trim(line.substr(colon + 1));
    if (key == "id") {
      t.id = value;
    } else if (key == "max_evidence_sentences") {
      t.max_evidence_sentences = std::stoul(value);
    } else if (key == "max_evidence_chars") {
      t.max_evidence_chars = std::stoul(value);
    } else {
      throw PromptError("unknown template header '" + key + "'");
    }
    pos = nl == std::string_view::npos ? text.size() : nl + 1;
  }
  t.body = std::string(text.substr(pos));
  if (t.id.empty()) throw PromptError("template has no '# id:' header");
  if (!t.slots().count(Slot::Claim)) throw PromptError("template " + t.id + " has no {{claim}} slot");
  return t;
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) { return parse(read_file(path)); }

PromptTemplate PromptTemplate::builtin(TemplateKind kind) {
  PromptTemplate t;
  switch (kind) {
    case TemplateKind::Aspects: t.id = "aspects-v1"; t.body = kAspectsBody; break;
    case TemplateKind::Flaws: t.id = "flaws-v1"; t.body = kFlawsBody; break;
    case TemplateKind::Justify: t.id = "justify-v1"; t.body = kJustifyBody; break;
    case TemplateKind::JustifyBaseline: t.id = "justify-baseline-v1"; t.body = kJustifyBaselineBody; break;
    case TemplateKind::JustifyWithAspects: t.id = "justify-aspects-v1"; t.body = kJustifyAspectsBody; break;
  }
  return t;
}

std::string PromptTemplate::to_file_text() const {
  std::ostringstream os;
  os << "# id: " << id << "\n"
     << "# max_evidence_sentences: " << max_evidence_sentences << "\n"
     << "# max_evidence_chars: " << max_evidence_chars << "\n"
     << body;
  return os.str();
}

std::vector<retriever::EvidenceItem> select_evidence(const PromptTemplate& tmpl,
                                                     const std::vector<retriever::EvidenceItem>& evidence) {
  std::vector<retriever::EvidenceItem> sorted = evidence;
  std::stable_sort(sorted.begin(), sorted.end(), evidence_before);
  std::vector<retriever::EvidenceItem> out;
  std::size_t chars = 0;
  for (auto& e : sorted) {
    if (out.size() >= tmpl.max_evidence_sentences) break;
    std::size_t len = collapse_whitespace(e.text).size();
    if (chars + len > tmpl.max_evidence_chars) break;
    chars += len;
    out.push_back(std::move(e));
  }
  return out;
}

std::string render_prompt(const PromptTemplate& tmpl, const PromptInputs& in, const RenderLimits& limits) {
  const auto slots = tmpl.slots();
  auto need = [&](Slot s, bool provided, std::string_view what) {
    bool has = slots.count(s) > 0;
    if (has && !provided) throw PromptError("template " + tmpl.id + " requires " + std::string(what));
    if (!has && provided)
      throw PromptError("template " + tmpl.id + " does not take " + std::string(what));
  };
  if (trim(in.claim).empty()) throw PromptError("claim must not be empty");
  need(Slot::Evidence, in.evidence != nullptr, "evidence");
  need(Slot::Aspects, in.aspects != nullptr, "aspects");
  need(Slot::Flaws, in.flaws != nullptr, "flaw findings");
  if (slots.count(Slot::FlawList) && !in.scope)
    throw PromptError("template " + tmpl.id + " requires a flaw scope");

  // One left-to-right pass, so slot-like text inside a value stays literal.
  std::vector<std::pair<std::string_view, std::string>> values;
  values.emplace_back(slot_token(Slot::Claim), collapse_whitespace(in.claim));
  if (in.evidence) {
    std::string ev;
    auto chosen = select_evidence(tmpl, *in.evidence);
    for (std::size_t i = 0; i < chosen.size(); ++i)
      ev += "[" + std::to_string(i + 1) + "] " + collapse_whitespace(chosen[i].text) + "\n";
    if (chosen.empty()) ev = "(none)\n";
    values.emplace_back(slot_token(Slot::Evidence), ev);
  }
  if (in.aspects) values.emplace_back(slot_token(Slot::Aspects), serialize(*in.aspects));
  if (in.flaws) values.emplace_back(slot_token(Slot::Flaws), serialize(*in.flaws));
  if (in.scope && slots.count(Slot::FlawList)) {
    std::string list;
    for (auto f : flaws_in_scope(*in.scope))
      list += "- " + std::string(flaw_name(f)) + ": " + std::string(flaw_definition(f)) + "\n";
    values.emplace_back(slot_token(Slot::FlawList), list);
  }

  const std::string& out = tmpl.body;
  std::string rendered;
  std::size_t pos = 0;
  while (pos < out.size()) {
    std::size_t best = std::string::npos;
    const std::pair<std::string_view, std::string>* which = nullptr;
    for (const auto& v : values) {
      std::size_t p = out.find(v.first, pos);
      if (p < best) {
        best = p;
        which = &v;
      }
    }
    if (!which) {
      rendered.append(out, pos, std::string::npos);
      break;
    }
    rendered.append(out, pos, best - pos);
    rendered += which->second;
    pos = best + which->first.size();
  }

  if (limits.context_tokens > 0) {
    std::size_t n = limits.count_tokens ? limits.count_tokens(rendered) : word_tokens(rendered).size();
    if (n > limits.context_tokens)
      throw PromptError("rendered prompt for " + tmpl.id + " has " + std::to_string(n) +
                        " tokens, exceeding the context of " + std::to_string(limits.context_tokens));
  }
  return rendered;
}

// --- backends ----------------------------------------------------------------------------

std::size_t GenBackend::count_tokens(std::string_view text) const { return word_tokens(text).size(); }

std::string FunctionBackend::generate(const std::string& prompt) {
  ++calls_;
  return fn_(prompt);
}

namespace {

std::string line_after(const std::string& prompt, std::string_view key) {
  std::size_t p = prompt.find(key);
  if (p == std::string::npos) return "";
  p += key.size();
  std::size_t nl = prompt.find('\n', p);
  return trim(std::string_view(prompt).substr(p, nl == std::string::npos ? std::string::npos : nl - p));
}

std::vector<std::string> section_lines(const std::string& prompt, std::string_view header) {
  std::vector<std::string> out;
  std::size_t p = prompt.find(std::string("\n") + std::string(header) + "\n");
  if (p == std::string::npos) return out;
  p += header.size() + 2;
  for (const auto& line : split_lines(std::string_view(prompt).substr(p))) {
    if (trim(line).empty()) break;
    out.push_back(line);
  }
  return out;
}

}  // namespace

std::string RuleMockBackend::generate(const std::string& prompt) {
  ++calls_;
  const std::string claim = line_after(prompt, "Claim: ");
  auto words = word_tokens(claim);
  auto evidence = section_lines(prompt, "Evidence:");
  std::string first_evidence = evidence.empty() ? "" : evidence.front();
  if (first_evidence.starts_with("[")) first_evidence = trim(first_evidence.substr(first_evidence.find(']') + 1));

  if (prompt.starts_with("### Task: aspect generation")) {
    std::string a = words.empty() ? "claim" : words.front();
    std::string b = words.size() > 1 ? words.back() : "context";
    if (b == a) b += " context";
    return "ASPECT 1: Source of " + a + " -- Check where the statement about " + a + " comes from.\n" +
           "ASPECT 2: Evidence on " + b + " -- Compare the claim with what the record shows about " + b + ".\n";
  }
  if (prompt.starts_with("### Task: flaw checking")) {
    std::string out;
    for (const auto& line : split_lines(prompt)) {
      if (!line.starts_with("- ")) continue;
      auto colon = line.find(':');
      if (colon == std::string::npos) continue;
      auto flaw = parse_flaw_type(line.substr(2, colon - 2));
      if (!flaw) continue;
      bool present = fnv1a64(claim + "|" + std::string(flaw_name(*flaw))) % 3 == 0;
      out += "FLAW " + std::string(flaw_name(*flaw)) + ": ";
      if (present) {
        out += "PRESENT -- The evidence undercuts the claim: " +
               (first_evidence.empty() ? std::string("no supporting record was found") : first_evidence);
      } else {
        out += "ABSENT";
      }
      out += "\n";
    }
    return out;
  }
  if (prompt.starts_with("### Task: justification")) {
    std::string out = "The claim that " + claim + " was examined against the available record.";
    for (const auto& line : section_lines(prompt, "Flaw findings:")) {
      try {
        auto parsed = parse_flaw_report(line, FlawScope::Seven);
        for (const auto& f : parsed.report.findings)
          if (f.present) out += " " + std::string(flaw_display(f.flaw)) + ": " + f.explanation;
      } catch (const ParseError&) {
      }
    }
    for (const auto& line : section_lines(prompt, "Aspects:")) {
      try {
        auto a = parse_aspects(line);
        out += " On " + to_lower(a.aspects.front().title) + ", the record was reviewed.";
      } catch (const ParseError&) {
      }
    }
    if (!first_evidence.empty()) out += " The strongest evidence states: " + first_evidence;
    return out;
  }
  return "";
}

// --- stages -------------------------------------------------------------------------------

namespace {

RenderLimits limits_for(const GenBackend& backend) {
  RenderLimits l;
  l.context_tokens = backend.context_length();
  l.count_tokens = [&backend](std::string_view s) { return backend.count_tokens(s); };
  return l;
}

std::vector<std::string> evidence_ids(const PromptTemplate& tmpl,
                                      const std::vector<retriever::EvidenceItem>& evidence) {
  std::vector<std::string> ids;
  for (const auto& e : select_evidence(tmpl, evidence))
    ids.push_back(e.source.id + "#" + std::to_string(e.sentence_index));
  return ids;
}

template <typename Parse>
auto run_with_retry(GenBackend& backend, StageLog& log, Parse&& parse) -> decltype(parse(std::string())) {
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::string out = backend.generate(attempt == 0 ? log.prompt : log.prompt + std::string(kRetryReminder));
    log.raw_outputs.push_back(out);
    try {
      return parse(out);
    } catch (const ParseError& e) {
      log.warnings.push_back(std::string("attempt ") + std::to_string(attempt + 1) + ": " + e.what());
    }
  }
  throw GenerationError("stage " + log.template_id + ": output unparseable after retry", log);
}

Justification justify_with(GenBackend& backend, std::string_view claim_id, const PromptTemplate& tmpl,
                           const PromptInputs& in, const std::vector<retriever::EvidenceItem>& evidence,
                           std::string scope) {
  Justification j;
  j.claim_id = std::string(claim_id);
  j.scope = std::move(scope);
  j.log.template_id = tmpl.id;
  j.log.prompt = render_prompt(tmpl, in, limits_for(backend));
  j.evidence_ids = evidence_ids(tmpl, evidence);
  j.text = run_with_retry(backend, j.log, [](const std::string& out) {
    std::string t = trim(out);
    if (t.empty()) throw ParseError("empty justification");
    return t;
  });
  return j;
}

}  // namespace

AspectOutput generate_aspects(GenBackend& backend, std::string_view claim,
                              const std::vector<retriever::EvidenceItem>& evidence, const PromptTemplate& tmpl) {
  AspectOutput out;
  out.log.template_id = tmpl.id;
  PromptInputs in;
  in.claim = claim;
  in.evidence = &evidence;
  out.log.prompt = render_prompt(tmpl, in, limits_for(backend));
  out.aspects = run_with_retry(backend, out.log, [&](const std::string& text) {
    std::size_t n = count_aspect_lines(text);
    AspectSet a = parse_aspects(text);
    if (n > a.size()) out.log.warnings.push_back("truncated " + std::to_string(n) + " aspects to " + std::to_string(a.size()));
    return a;
  });
  return out;
}

FlawOutput check_flaws(GenBackend& backend, std::string_view claim, const AspectSet& aspects,
                       const std::vector<retriever::EvidenceItem>& evidence, FlawScope scope,
                       const PromptTemplate& tmpl) {
  validate(aspects);
  FlawOutput out;
  out.log.template_id = tmpl.id;
  PromptInputs in;
  in.claim = claim;
  in.aspects = &aspects;
  in.evidence = &evidence;
  in.scope = scope;
  out.log.prompt = render_prompt(tmpl, in, limits_for(backend));
  out.report = run_with_retry(backend, out.log, [&](const std::string& text) {
    auto parsed = parse_flaw_report(text, scope);
    for (auto& w : parsed.warnings) out.log.warnings.push_back(std::move(w));
    return parsed.report;
  });
  return out;
}

Justification generate_justification(GenBackend& backend, std::string_view claim_id, std::string_view claim,
                                     const FlawReport& flaws,
                                     const std::vector<retriever::EvidenceItem>& evidence,
                                     const PromptTemplate& tmpl) {
  validate(flaws);
  PromptInputs in;
  in.claim = claim;
  in.flaws = &flaws;
  in.evidence = &evidence;
  return justify_with(backend, claim_id, tmpl, in, evidence, std::string(scope_name(flaws.scope)));
}

Justification generate_baseline_justification(GenBackend& backend, std::string_view claim_id,
                                              std::string_view claim, const AspectSet* aspects,
                                              const std::vector<retriever::EvidenceItem>& evidence,
                                              const PromptTemplate& tmpl) {
  PromptInputs in;
  in.claim = claim;
  in.aspects = aspects;
  in.evidence = &evidence;
  return justify_with(backend, claim_id, tmpl, in, evidence, aspects ? "baseline-aspects" : "baseline");
}

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::Aspects: return "aspects";
    case Stage::Flaws: return "flaws";
    case Stage::Justify: return "justify";
  }
  return "?";
}

std::optional<Stage> parse_stage(std::string_view s) {
  std::string k = to_lower(trim(s));
  if (k == "aspects" || k == "aspect") return Stage::Aspects;
  if (k == "flaws" || k == "flaw") return Stage::Flaws;
  if (k == "justify" || k == "justification") return Stage::Justify;
  return std::nullopt;
}

void validate_example(Stage stage, const FineTuneExample& ex, std::optional<FlawScope> scope) {
  if (trim(ex.input).empty()) throw Error("fine-tune example has an empty input");
  if (trim(ex.target).empty()) throw Error("fine-tune example has an empty target");
  if (stage == Stage::Aspects) validate(parse_aspects(ex.target));
  if (stage == Stage::Flaws) validate(parse_flaw_report(ex.target, scope.value_or(FlawScope::Seven)).report);
}

}  // namespace refute::generation

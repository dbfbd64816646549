#include "refute/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace refute::corpus {

namespace {

std::string squash_key(std::string_view s) {
  std::string out;
  for (unsigned char c : s)
    if (std::isalnum(c)) out.push_back(static_cast<char>(std::tolower(c)));
  return out;
}

}  // namespace

std::string_view label_name(VeracityLabel l) {
  switch (l) {
    case VeracityLabel::False: return "False";
    case VeracityLabel::PartlyFalse: return "PartlyFalse";
    case VeracityLabel::Unproven: return "Unproven";
    case VeracityLabel::True: return "True";
  }
  return "?";
}

std::string_view label_display(VeracityLabel l) {
  switch (l) {
    case VeracityLabel::False: return "False";
    case VeracityLabel::PartlyFalse: return "Partly false";
    case VeracityLabel::Unproven: return "Unproven";
    case VeracityLabel::True: return "True";
  }
  return "?";
}

std::optional<VeracityLabel> parse_label(std::string_view s) {
  // Only whitespace and case are forgiven here; "Mostly True" must not slip
  // through as a near-match.
  std::string k = to_lower(trim(s));
  k.erase(std::remove(k.begin(), k.end(), ' '), k.end());
  if (k == "false" || k == "incorrect") return VeracityLabel::False;
  if (k == "partlyfalse") return VeracityLabel::PartlyFalse;
  if (k == "unproven") return VeracityLabel::Unproven;
  if (k == "true" || k == "correct") return VeracityLabel::True;
  return std::nullopt;
}

std::string_view split_name(Split s) { return s == Split::Train ? "train" : "test"; }

std::optional<Split> parse_split(std::string_view s) {
  std::string k = to_lower(trim(s));
  if (k == "train") return Split::Train;
  if (k == "test") return Split::Test;
  return std::nullopt;
}

bool is_known_site(std::string_view site) {
  return std::find(kSourceSites.begin(), kSourceSites.end(), site) != kSourceSites.end();
}

ArticleRef ArticleRef::from_uri(std::string uri) {
  ArticleRef ref;
  ref.id = hex64(fnv1a64(uri));
  ref.uri = std::move(uri);
  return ref;
}

// --- dataset file ---------------------------------------------------------------

json record_to_json(const ClaimRecord& r) {
  json j;
  j["id"] = r.id;
  j["claim"] = r.text;
  j["source_site"] = r.source_site;
  j["original_rating"] = r.original_rating;
  j["label"] = std::string(label_name(r.label));
  json premises = json::array();
  for (const auto& p : r.premise_articles) premises.push_back(p.uri);
  j["premise_uris"] = std::move(premises);
  j["review_uri"] = r.review_article ? json(r.review_article->uri) : json(nullptr);
  j["split"] = std::string(split_name(r.split));
  return j;
}

ClaimRecord record_from_json(const json& j) {
  if (!j.is_object()) throw Error("record is not a JSON object");
  auto str_field = [&](const char* key) -> std::string {
    auto it = j.find(key);
    if (it == j.end()) throw Error(std::string("missing field '") + key + "'");
    if (!it->is_string()) throw Error(std::string("field '") + key + "' must be a string");
    return it->get<std::string>();
  };

  ClaimRecord r;
  r.id = trim(str_field("id"));
  if (r.id.empty()) throw Error("field 'id' is empty");
  r.text = collapse_whitespace(str_field("claim"));
  if (r.text.empty()) throw Error("field 'claim' is empty");
  r.source_site = str_field("source_site");
  if (!is_known_site(r.source_site)) throw Error("unknown source_site '" + r.source_site + "'");
  r.original_rating = str_field("original_rating");
  std::string label = str_field("label");
  auto parsed = parse_label(label);
  if (!parsed) throw Error("unknown label '" + label + "'");
  r.label = *parsed;

  auto pit = j.find("premise_uris");
  if (pit == j.end()) throw Error("missing field 'premise_uris'");
  if (!pit->is_array()) throw Error("field 'premise_uris' must be an array");
  for (const auto& u : *pit) {
    if (!u.is_string() || u.get<std::string>().empty())
      throw Error("premise_uris entries must be non-empty strings");
    r.premise_articles.push_back(ArticleRef::from_uri(u.get<std::string>()));
  }

  auto rit = j.find("review_uri");
  if (rit == j.end()) throw Error("missing field 'review_uri'");
  if (rit->is_string()) {
    if (!rit->get<std::string>().empty())
      r.review_article = ArticleRef::from_uri(rit->get<std::string>());
  } else if (!rit->is_null()) {
    throw Error("field 'review_uri' must be a string or null");
  }

  std::string split = str_field("split");
  auto s = parse_split(split);
  if (!s) throw Error("unknown split '" + split + "'");
  r.split = *s;
  return r;
}

LoadResult load_dataset(const std::filesystem::path& path, const LoadOptions& opts) {
  if (!std::filesystem::exists(path)) throw Error("dataset file not found: " + path.string());
  LoadResult result;
  std::unordered_set<std::string> seen;
  for_each_jsonl(
      path,
      [&](std::size_t lineno, const json& j) {
        ++result.lines;
        try {
          ClaimRecord r = record_from_json(j);
          if (!seen.insert(r.id).second) throw Error("duplicate id '" + r.id + "'");
          result.records.push_back(std::move(r));
        } catch (const Error& e) {
          result.errors.push_back({lineno, e.what()});
        }
      },
      [&](std::size_t lineno, const std::string& msg) {
        ++result.lines;
        result.errors.push_back({lineno, msg});
      });

  if (result.lines > 0 &&
      static_cast<double>(result.errors.size()) >
          opts.max_invalid_fraction * static_cast<double>(result.lines)) {
    std::ostringstream os;
    os << path.string() << ": " << result.errors.size() << " of " << result.lines
       << " lines invalid";
    if (!result.errors.empty())
      os << " (first: line " << result.errors.front().line << ": " << result.errors.front().message
         << ")";
    throw DatasetError(os.str(), std::move(result.errors));
  }
  return result;
}

void save_dataset(const std::filesystem::path& path, const std::vector<ClaimRecord>& records) {
  std::string out;
  for (const auto& r : records) out += record_to_json(r).dump() + "\n";
  write_file_atomic(path, out);
}

// --- cleaning -----------------------------------------------------------------------

namespace {

// Removes <script>/<style> blocks, then any remaining tags.
std::string strip_markup(std::string_view raw) {
  std::string lower = to_lower(raw);
  std::string out;
  out.reserve(raw.size());
  std::size_t i = 0;
  while (i < raw.size()) {
    if (raw[i] == '<') {
      bool skipped_block = false;
      for (std::string_view tag : {"script", "style", "noscript"}) {
        if (lower.compare(i + 1, tag.size(), tag) == 0) {
          std::string close = "</" + std::string(tag);
          std::size_t end = lower.find(close, i);
          std::size_t gt = end == std::string::npos ? std::string::npos : lower.find('>', end);
          i = gt == std::string::npos ? raw.size() : gt + 1;
          skipped_block = true;
          break;
        }
      }
      if (skipped_block) continue;
      std::size_t gt = raw.find('>', i);
      std::size_t nl = raw.find('\n', i);
      if (gt != std::string_view::npos && (nl == std::string_view::npos || gt < nl) &&
          gt > i + 1 && (std::isalpha(static_cast<unsigned char>(raw[i + 1])) || raw[i + 1] == '/' ||
                         raw[i + 1] == '!')) {
        // Block-level tags become line breaks so paragraphs stay apart.
        std::string_view name = lower;
        name = name.substr(i + 1, gt - i - 1);
        if (name.starts_with("/")) name.remove_prefix(1);
        if (name.starts_with("p") || name.starts_with("br") || name.starts_with("div") ||
            name.starts_with("h") || name.starts_with("li"))
          out.push_back('\n');
        i = gt + 1;
        continue;
      }
    }
    out.push_back(raw[i]);
    ++i;
  }
  return out;
}

bool looks_like_code(std::string_view line) {
  static const std::array<std::string_view, 7> markers = {
      "function(", "function (", "var ", "=>", "document.", "window.", "});"};
  std::size_t symbols = 0;
  for (char c : line)
    if (c == '{' || c == '}' || c == ';' || c == '(' || c == ')' || c == '=') ++symbols;
  bool marker = std::any_of(markers.begin(), markers.end(),
                            [&](std::string_view m) { return line.find(m) != std::string_view::npos; });
  return marker && symbols * 10 >= line.size() / 2;
}

bool looks_like_navigation(std::string_view line) {
  static const std::unordered_set<std::string> boilerplate = {
      "menu", "home", "search", "share", "tweet", "subscribe", "sign in", "log in", "login",
      "skip to content", "skip to main content", "advertisement", "read more", "related articles",
      "share this article", "share on facebook", "share on twitter", "accept cookies",
      "back to top", "print", "email"};
  std::string key = to_lower(collapse_whitespace(line));
  while (!key.empty() && std::ispunct(static_cast<unsigned char>(key.back()))) key.pop_back();
  if (boilerplate.count(key)) return true;

  // Menu rows: three or more short segments split by separators.
  std::size_t segments = 1, longest = 0;
  std::size_t words_in_seg = 0;
  bool in_word = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(line[i]);
    bool sep = c == '|' || line.compare(i, 2, "\xc2\xbb") == 0 || line.compare(i, 2, "\xc2\xb7") == 0;
    if (sep) {
      ++segments;
      longest = std::max(longest, words_in_seg);
      words_in_seg = 0;
      in_word = false;
      continue;
    }
    if (std::isspace(c)) {
      in_word = false;
    } else if (!in_word && (c & 0xC0) != 0x80) {
      in_word = true;
      ++words_in_seg;
    }
  }
  longest = std::max(longest, words_in_seg);
  return segments >= 3 && longest <= 3;
}

}  // namespace

std::string clean_article(std::string_view raw) {
  std::string text = strip_markup(raw);
  std::vector<std::string> lines = split_lines(text);
  for (auto& l : lines) {
    // Trailing whitespace and tabs are noise; interior spacing is left alone.
    while (!l.empty() && std::isspace(static_cast<unsigned char>(l.back()))) l.pop_back();
    std::size_t b = 0;
    while (b < l.size() && std::isspace(static_cast<unsigned char>(l[b]))) ++b;
    l.erase(0, b);
  }

  std::unordered_map<std::string, std::size_t> freq;
  for (const auto& l : lines)
    if (!l.empty()) ++freq[l];

  std::vector<std::string> kept;
  for (const auto& l : lines) {
    if (l.empty()) {
      kept.emplace_back();
      continue;
    }
    if (freq[l] >= 3) continue;  // repeated header/footer
    if (looks_like_code(l) || looks_like_navigation(l)) continue;
    kept.push_back(l);
  }

  std::string out;
  bool pending_break = false;
  for (const auto& l : kept) {
    if (l.empty()) {
      pending_break = !out.empty();
      continue;
    }
    if (!out.empty()) out += pending_break ? "\n\n" : "\n";
    pending_break = false;
    out += l;
  }
  if (trim(out).empty()) throw UnusableArticle("article has no usable text after cleaning");
  return out;
}

// --- sentences ------------------------------------------------------------------------

namespace {

const std::unordered_set<std::string>& abbreviations() {
  static const std::unordered_set<std::string> abbr = {
      "mr.",   "mrs.",  "ms.",   "dr.",   "prof.", "sr.",   "jr.",   "st.",  "mt.",  "vs.",
      "etc.",  "e.g.",  "i.e.",  "u.s.",  "u.k.",  "u.n.",  "inc.",  "ltd.", "co.",  "corp.",
      "no.",   "gov.",  "sen.",  "rep.",  "gen.",  "col.",  "lt.",   "sgt.", "capt.", "rev.",
      "jan.",  "feb.",  "mar.",  "apr.",  "jun.",  "jul.",  "aug.",  "sep.", "sept.", "oct.",
      "nov.",  "dec.",  "approx.", "dept.", "est.", "fig.", "vol.", "p.m.", "a.m.", "d.c."};
  return abbr;
}

bool is_closer(char c) { return c == '"' || c == '\'' || c == ')' || c == ']'; }

}  // namespace

std::vector<Sentence> split_sentences(std::string_view text) {
  std::vector<Sentence> out;
  auto emit = [&](std::size_t b, std::size_t e) {
    std::string s = trim(text.substr(b, e - b));
    if (!s.empty()) out.push_back({out.size(), std::move(s)});
  };

  std::size_t start = 0;
  std::size_t i = 0;
  while (i < text.size()) {
    char c = text[i];
    if (c == '\n') {
      // Blank line = paragraph break.
      std::size_t j = i + 1;
      while (j < text.size() && (text[j] == ' ' || text[j] == '\t' || text[j] == '\r')) ++j;
      if (j < text.size() && text[j] == '\n') {
        emit(start, i);
        start = j + 1;
        i = j + 1;
        continue;
      }
    }
    if (c == '.' || c == '?' || c == '!') {
      std::size_t end = i + 1;
      while (end < text.size() && (text[end] == '.' || text[end] == '?' || text[end] == '!')) ++end;
      while (true) {
        if (end < text.size() && is_closer(text[end])) {
          ++end;
          continue;
        }
        // UTF-8 closing quotes (U+201D, U+2019).
        std::string_view rest = text.substr(end);
        if (rest.starts_with("\xe2\x80\x9d") || rest.starts_with("\xe2\x80\x99")) {
          end += 3;
          continue;
        }
        break;
      }
      bool boundary = end >= text.size() || std::isspace(static_cast<unsigned char>(text[end]));
      if (boundary && c == '.') {
        std::size_t w = i;
        while (w > start && !std::isspace(static_cast<unsigned char>(text[w - 1]))) --w;
        std::string word = to_lower(text.substr(w, i + 1 - w));
        while (!word.empty() && (word.front() == '(' || word.front() == '"')) word.erase(0, 1);
        if (abbreviations().count(word)) boundary = false;
      }
      if (boundary) {
        emit(start, end);
        start = end;
      }
      i = end;
      continue;
    }
    ++i;
  }
  emit(start, text.size());
  return out;
}

Article make_article(ArticleRef ref, std::string raw) {
  Article a;
  a.ref = std::move(ref);
  a.raw = std::move(raw);
  a.clean_text = clean_article(a.raw);
  a.sentences = split_sentences(a.clean_text);
  return a;
}

std::filesystem::path ArticleStore::path_for(const ArticleRef& ref) const {
  return dir_ / (ref.id + ".txt");
}

bool ArticleStore::contains(const ArticleRef& ref) const {
  return std::filesystem::exists(path_for(ref));
}

Article ArticleStore::load(const ArticleRef& ref) const {
  auto p = path_for(ref);
  if (!std::filesystem::exists(p)) throw Error("article not found for " + ref.uri + " (" + p.string() + ")");
  return make_article(ref, read_file(p));
}

void ArticleStore::put(const ArticleRef& ref, std::string_view raw) const {
  write_file_atomic(path_for(ref), raw);
}

// --- labels ----------------------------------------------------------------------------

UnmappedRating::UnmappedRating(std::string site, std::string rating)
    : Error("unmapped rating '" + rating + "' for site '" + site + "'"),
      site_(std::move(site)),
      rating_(std::move(rating)) {}

std::string LabelMap::normalize_rating(std::string_view rating) { return squash_key(rating); }

LabelMap LabelMap::parse(std::string_view text) {
  LabelMap m;
  std::size_t lineno = 0;
  for (const auto& raw : split_lines(text)) {
    ++lineno;
    std::string line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    std::vector<std::string> cols;
    std::size_t start = 0;
    while (true) {
      std::size_t tab = line.find('\t', start);
      cols.push_back(trim(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start)));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (cols.size() != 3)
      throw Error("label map line " + std::to_string(lineno) + ": expected 3 tab-separated columns");
    auto label = parse_label(cols[2]);
    if (!label) throw Error("label map line " + std::to_string(lineno) + ": unknown label '" + cols[2] + "'");
    if (!is_known_site(cols[0]))
      throw Error("label map line " + std::to_string(lineno) + ": unknown site '" + cols[0] + "'");
    auto key = std::make_pair(cols[0], normalize_rating(cols[1]));
    auto [it, inserted] = m.table_.emplace(key, *label);
    if (!inserted && it->second != *label)
      throw Error("label map line " + std::to_string(lineno) + ": conflicting entry for '" + cols[1] + "'");
    m.entries_.push_back({cols[0], cols[1], *label});
  }
  return m;
}

LabelMap LabelMap::load(const std::filesystem::path& path) { return parse(read_file(path)); }

VeracityLabel LabelMap::remap(std::string_view site, std::string_view rating) const {
  auto it = table_.find({std::string(site), normalize_rating(rating)});
  if (it == table_.end()) throw UnmappedRating(std::string(site), std::string(rating));
  return it->second;
}

// --- statistics ---------------------------------------------------------------------------

std::size_t DatasetStats::total() const {
  std::size_t n = 0;
  for (auto c : train) n += c;
  for (auto c : test) n += c;
  return n;
}

DatasetStats dataset_stats(const std::vector<ClaimRecord>& records) {
  DatasetStats s;
  for (const auto& r : records) {
    auto& counts = r.split == Split::Train ? s.train : s.test;
    ++counts[label_index(r.label)];
  }
  return s;
}

std::string format_stats_table(const DatasetStats& stats) {
  std::ostringstream os;
  os << std::left << std::setw(8) << "split";
  for (auto l : kAllLabels) os << std::right << std::setw(14) << label_display(l);
  os << std::right << std::setw(10) << "total" << "\n";
  auto row = [&](std::string_view name, const LabelCounts& c) {
    std::size_t total = 0;
    os << std::left << std::setw(8) << name;
    for (auto v : c) {
      os << std::right << std::setw(14) << v;
      total += v;
    }
    os << std::right << std::setw(10) << total << "\n";
  };
  row("train", stats.train);
  row("test", stats.test);
  return os.str();
}

json stats_to_json(const DatasetStats& stats) {
  json j;
  for (auto [name, counts] : {std::pair{"train", &stats.train}, std::pair{"test", &stats.test}}) {
    json row;
    for (auto l : kAllLabels) row[std::string(label_name(l))] = (*counts)[label_index(l)];
    j[name] = row;
  }
  return j;
}

}  // namespace refute::corpus

#pragma once
// Claims, articles and labels: ingestion, cleaning, label normalization and
// sentence segmentation.

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "refute/common.hpp"

namespace refute::corpus {

// Fixed order; every per-label table in the project uses it.
enum class VeracityLabel { False = 0, PartlyFalse = 1, Unproven = 2, True = 3 };

inline constexpr std::size_t kNumLabels = 4;
inline constexpr std::array<VeracityLabel, kNumLabels> kAllLabels = {
    VeracityLabel::False, VeracityLabel::PartlyFalse, VeracityLabel::Unproven, VeracityLabel::True};

inline std::size_t label_index(VeracityLabel l) { return static_cast<std::size_t>(l); }

// Canonical identifier ("PartlyFalse").
std::string_view label_name(VeracityLabel l);
// Table column heading ("Partly false").
std::string_view label_display(VeracityLabel l);
// Accepts canonical names, table headings, and the aliases Incorrect/Correct.
// Case-insensitive. Anything else (e.g. "Mostly True") yields nullopt.
std::optional<VeracityLabel> parse_label(std::string_view s);

enum class Split { Train, Test };
std::string_view split_name(Split s);
std::optional<Split> parse_split(std::string_view s);

// Identifiers of the eight fact-checking sites the corpus draws from.
inline constexpr std::array<std::string_view, 8> kSourceSites = {
    "politifact", "snopes", "afp", "fullfact", "factcheck_org", "leadstories", "healthfeedback",
    "truthorfiction"};
bool is_known_site(std::string_view site);

struct ArticleRef {
  std::string uri;
  std::string id;  // content hash of uri; names the file in the article store

  static ArticleRef from_uri(std::string uri);
  friend auto operator<=>(const ArticleRef&, const ArticleRef&) = default;
};

struct Sentence {
  std::size_t index = 0;
  std::string text;
  friend bool operator==(const Sentence&, const Sentence&) = default;
};

struct Article {
  ArticleRef ref;
  std::string raw;
  std::string clean_text;
  std::vector<Sentence> sentences;
};

struct ClaimRecord {
  std::string id;
  std::string text;
  std::string source_site;
  std::string original_rating;
  VeracityLabel label = VeracityLabel::False;
  std::vector<ArticleRef> premise_articles;
  std::optional<ArticleRef> review_article;
  Split split = Split::Train;

  friend bool operator==(const ClaimRecord&, const ClaimRecord&) = default;
};

// --- dataset file -------------------------------------------------------------

struct LineError {
  std::size_t line = 0;
  std::string message;
};

struct LoadResult {
  std::vector<ClaimRecord> records;
  std::vector<LineError> errors;
  std::size_t lines = 0;
};

// Thrown when more than the tolerated fraction of lines is invalid.
class DatasetError : public Error {
 public:
  DatasetError(std::string msg, std::vector<LineError> errors)
      : Error(std::move(msg)), errors_(std::move(errors)) {}
  const std::vector<LineError>& errors() const { return errors_; }

 private:
  std::vector<LineError> errors_;
};

struct LoadOptions {
  double max_invalid_fraction = 0.10;
};

LoadResult load_dataset(const std::filesystem::path& path, const LoadOptions& opts = {});
void save_dataset(const std::filesystem::path& path, const std::vector<ClaimRecord>& records);

json record_to_json(const ClaimRecord& r);
// Throws Error describing the first schema violation.
ClaimRecord record_from_json(const json& j);

// --- articles -----------------------------------------------------------------

class UnusableArticle : public Error {
 public:
  using Error::Error;
};

// Strips markup remnants, navigation rows and repeated header/footer lines.
// Paragraph breaks survive as single blank lines. Throws UnusableArticle when
// nothing is left.
std::string clean_article(std::string_view raw);

// Rule-based segmentation on terminal punctuation with an abbreviation guard.
// Blank lines also end a sentence.
std::vector<Sentence> split_sentences(std::string_view clean_text);

Article make_article(ArticleRef ref, std::string raw);

// Articles live in a directory as <ref.id>.txt holding the fetched text.
class ArticleStore {
 public:
  explicit ArticleStore(std::filesystem::path dir) : dir_(std::move(dir)) {}
  std::filesystem::path path_for(const ArticleRef& ref) const;
  bool contains(const ArticleRef& ref) const;
  // Reads, cleans and segments. Throws Error if missing, UnusableArticle if
  // cleaning leaves nothing.
  Article load(const ArticleRef& ref) const;
  void put(const ArticleRef& ref, std::string_view raw) const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

// --- labels -------------------------------------------------------------------

class UnmappedRating : public Error {
 public:
  UnmappedRating(std::string site, std::string rating);
  const std::string& site() const { return site_; }
  const std::string& rating() const { return rating_; }

 private:
  std::string site_;
  std::string rating_;
};

// (site, rating) -> label table. Ratings compare case- and
// punctuation-insensitively.
class LabelMap {
 public:
  struct Entry {
    std::string site;
    std::string rating;
    VeracityLabel label;
  };

  // Text format: one "site<TAB>rating<TAB>label" triple per line; '#' starts a
  // comment line.
  static LabelMap parse(std::string_view text);
  static LabelMap load(const std::filesystem::path& path);

  VeracityLabel remap(std::string_view site, std::string_view rating) const;
  const std::vector<Entry>& entries() const { return entries_; }

  static std::string normalize_rating(std::string_view rating);

 private:
  std::vector<Entry> entries_;
  std::map<std::pair<std::string, std::string>, VeracityLabel> table_;
};

// --- statistics -------------------------------------------------------------------

using LabelCounts = std::array<std::size_t, kNumLabels>;

struct DatasetStats {
  LabelCounts train{};
  LabelCounts test{};
  std::size_t total() const;
  friend bool operator==(const DatasetStats&, const DatasetStats&) = default;
};

DatasetStats dataset_stats(const std::vector<ClaimRecord>& records);
std::string format_stats_table(const DatasetStats& stats);
json stats_to_json(const DatasetStats& stats);

}  // namespace refute::corpus

#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <set>

#include "refute/corpus.hpp"
#include "support.hpp"

namespace refute::corpus {
namespace {

std::filesystem::path default_label_map() {
  return std::filesystem::path(REFUTE_SOURCE_DIR) / "data/label_maps/default.tsv";
}

json sample_line(const std::string& id, const std::string& label, const std::string& split = "train") {
  return {{"id", id},
          {"claim", "Some claim " + id},
          {"source_site", "politifact"},
          {"original_rating", label},
          {"label", label},
          {"premise_uris", {"https://a.example/" + id}},
          {"review_uri", "https://r.example/" + id},
          {"split", split}};
}

void write_lines(const std::filesystem::path& p, const std::vector<std::string>& lines) {
  std::ofstream f(p);
  for (const auto& l : lines) f << l << "\n";
}

TEST(Labels, ParseCanonicalDisplayAndAliases) {
  EXPECT_EQ(parse_label("False"), VeracityLabel::False);
  EXPECT_EQ(parse_label("PartlyFalse"), VeracityLabel::PartlyFalse);
  EXPECT_EQ(parse_label("Partly false"), VeracityLabel::PartlyFalse);
  EXPECT_EQ(parse_label("unproven"), VeracityLabel::Unproven);
  EXPECT_EQ(parse_label("TRUE"), VeracityLabel::True);
  EXPECT_EQ(parse_label("Incorrect"), VeracityLabel::False);
  EXPECT_EQ(parse_label("Correct"), VeracityLabel::True);
  EXPECT_FALSE(parse_label("Mostly True"));
  EXPECT_FALSE(parse_label(""));
  for (auto l : kAllLabels) {
    EXPECT_EQ(parse_label(label_name(l)), l);
    EXPECT_EQ(parse_label(label_display(l)), l);
  }
}

TEST(Labels, EightSourceSites) {
  EXPECT_EQ(kSourceSites.size(), 8u);
  EXPECT_TRUE(is_known_site("politifact"));
  EXPECT_FALSE(is_known_site("example"));
}

TEST(LabelMap, ShippedTableExamples) {
  auto m = LabelMap::load(default_label_map());
  EXPECT_EQ(m.remap("politifact", "True"), VeracityLabel::True);
  EXPECT_EQ(m.remap("politifact", "Pants on Fire"), VeracityLabel::False);
  EXPECT_EQ(m.remap("politifact", "pants-on-fire!"), VeracityLabel::False);
  try {
    m.remap("politifact", "Half-True-ish");
    FAIL() << "expected UnmappedRating";
  } catch (const UnmappedRating& e) {
    EXPECT_EQ(e.site(), "politifact");
    EXPECT_EQ(e.rating(), "Half-True-ish");
  }
  EXPECT_THROW(m.remap("nosuchsite", "True"), UnmappedRating);
}

// Every row of the shipped table maps back to its own label.
TEST(LabelMap, EveryShippedEntryRoundTrips) {
  auto m = LabelMap::load(default_label_map());
  ASSERT_GT(m.entries().size(), 20u);
  std::set<std::string> sites;
  for (const auto& e : m.entries()) {
    SCOPED_TRACE(e.site + " / " + e.rating);
    EXPECT_EQ(m.remap(e.site, e.rating), e.label);
    EXPECT_EQ(m.remap(e.site, to_lower(e.rating)), e.label);
    sites.insert(e.site);
  }
  EXPECT_EQ(sites.size(), kSourceSites.size());
}

TEST(LabelMap, RejectsMalformedTables) {
  EXPECT_THROW(LabelMap::parse("politifact\tTrue"), Error);
  EXPECT_THROW(LabelMap::parse("politifact\tTrue\tMostly"), Error);
  EXPECT_THROW(LabelMap::parse("nowhere\tTrue\tTrue"), Error);
  EXPECT_THROW(LabelMap::parse("politifact\tTrue\tTrue\npolitifact\ttrue\tFalse"), Error);
  auto m = LabelMap::parse("# comment\n\npolitifact\tTrue\tCorrect\n");
  EXPECT_EQ(m.remap("politifact", "true"), VeracityLabel::True);
}

TEST(Clean, PlainBodyUnchanged) {
  std::string body = "The council met on Monday.\n\nIt approved the budget.";
  EXPECT_EQ(clean_article(body), body);
}

TEST(Clean, RepeatedFooterRemoved) {
  std::string raw;
  const std::string footer = "Copyright Example News Group all rights reserved";
  for (int i = 0; i < 5; ++i) {
    raw += "Paragraph " + std::to_string(i) + " reports what the mayor said about the bridge.\n";
    raw += footer + "\n\n";
  }
  std::string out = clean_article(raw);
  EXPECT_EQ(out.find(footer), std::string::npos);
  for (int i = 0; i < 5; ++i)
    EXPECT_NE(out.find("Paragraph " + std::to_string(i) + " reports"), std::string::npos);
}

TEST(Clean, MarkupScriptsAndNavigationStripped) {
  std::string raw =
      "<html><head><script>var x = function() { return 1; };</script><style>p{}</style></head>"
      "<body><nav>Home | News | Sports | Weather</nav><p>Skip to content</p>"
      "<p>The dam was finished in 1998.</p><p>Share</p></body></html>";
  std::string out = clean_article(raw);
  EXPECT_NE(out.find("The dam was finished in 1998."), std::string::npos);
  EXPECT_EQ(out.find("function"), std::string::npos);
  EXPECT_EQ(out.find("Sports"), std::string::npos);
  EXPECT_EQ(out.find("Skip to content"), std::string::npos);
  EXPECT_EQ(out.find('<'), std::string::npos);
  EXPECT_EQ(clean_article(raw), out);
}

TEST(Clean, WhitespaceOnlyIsUnusable) {
  EXPECT_THROW(clean_article("  \n\t\n "), UnusableArticle);
  EXPECT_THROW(clean_article("<script>var a = 1;</script>"), UnusableArticle);
}

std::vector<std::string> texts(const std::vector<Sentence>& s) {
  std::vector<std::string> out;
  for (const auto& x : s) out.push_back(x.text);
  return out;
}

TEST(Sentences, HandSegmentation) {
  EXPECT_EQ(texts(split_sentences("A. B? C!")), (std::vector<std::string>{"A.", "B?", "C!"}));
  EXPECT_EQ(texts(split_sentences("Dr. Smith left.")), (std::vector<std::string>{"Dr. Smith left."}));
  EXPECT_EQ(texts(split_sentences("hello")), (std::vector<std::string>{"hello"}));
  EXPECT_EQ(texts(split_sentences("He said \"stop.\" Then he left.")),
            (std::vector<std::string>{"He said \"stop.\"", "Then he left."}));
  EXPECT_EQ(texts(split_sentences("First para\n\nSecond para")),
            (std::vector<std::string>{"First para", "Second para"}));
  EXPECT_EQ(texts(split_sentences("It cost 3.5 million. Really.")),
            (std::vector<std::string>{"It cost 3.5 million.", "Really."}));
}

std::string non_space(std::string_view s) {
  std::string out;
  for (char c : s)
    if (!std::isspace(static_cast<unsigned char>(c))) out += c;
  return out;
}

TEST(Sentences, RejoinPreservesCharactersAndIndicesAreContiguous) {
  Rng rng(5);
  const std::vector<std::string> pieces = {"Mr.", "Smith", "said", "no.", "Why?", "U.S.", "exports", "fell!",
                                           "\n\n", "3.5", "percent", "(approx.)", "\"Yes.\"", "end"};
  for (int trial = 0; trial < 200; ++trial) {
    std::string text;
    std::size_t n = 1 + uniform_index(rng, 25);
    for (std::size_t i = 0; i < n; ++i) text += pieces[uniform_index(rng, pieces.size())] + " ";
    if (trim(text).empty()) continue;
    auto sents = split_sentences(text);
    std::string joined;
    for (std::size_t i = 0; i < sents.size(); ++i) {
      EXPECT_EQ(sents[i].index, i);
      EXPECT_FALSE(trim(sents[i].text).empty());
      joined += sents[i].text;
    }
    EXPECT_EQ(non_space(joined), non_space(text)) << text;
  }
}

TEST(Dataset, LoadsWellFormedFile) {
  testing::TempDir dir;
  write_lines(dir / "d.jsonl", {sample_line("a", "False").dump(), sample_line("b", "True").dump(),
                                sample_line("c", "Incorrect", "test").dump()});
  auto r = load_dataset(dir / "d.jsonl");
  EXPECT_EQ(r.records.size(), 3u);
  EXPECT_TRUE(r.errors.empty());
  EXPECT_EQ(r.records[2].label, VeracityLabel::False);
  EXPECT_EQ(r.records[2].split, Split::Test);
  EXPECT_EQ(record_to_json(r.records[2]).at("label"), "False");
}

TEST(Dataset, SchemaViolationsReportedPerLine) {
  testing::TempDir dir;
  std::vector<std::string> lines;
  for (int i = 0; i < 20; ++i) lines.push_back(sample_line("id" + std::to_string(i), "True").dump());
  lines[4] = sample_line("bad", "Mostly True").dump();
  auto missing = sample_line("nm", "True");
  missing.erase("claim");
  lines[9] = missing.dump();
  write_lines(dir / "d.jsonl", lines);
  auto r = load_dataset(dir / "d.jsonl");
  EXPECT_EQ(r.records.size(), 18u);
  ASSERT_EQ(r.errors.size(), 2u);
  EXPECT_EQ(r.errors[0].line, 5u);
  EXPECT_NE(r.errors[0].message.find("Mostly True"), std::string::npos);
  EXPECT_EQ(r.errors[1].line, 10u);
  EXPECT_NE(r.errors[1].message.find("claim"), std::string::npos);
}

TEST(Dataset, AbortsWhenTooManyLinesInvalid) {
  testing::TempDir dir;
  std::vector<std::string> lines;
  for (int i = 0; i < 8; ++i) lines.push_back(sample_line("id" + std::to_string(i), "True").dump());
  lines.push_back("{broken");
  lines.push_back(sample_line("x", "Mostly True").dump());
  write_lines(dir / "d.jsonl", lines);
  try {
    load_dataset(dir / "d.jsonl");
    FAIL() << "expected DatasetError";
  } catch (const DatasetError& e) {
    EXPECT_EQ(e.errors().size(), 2u);
  }
  EXPECT_NO_THROW(load_dataset(dir / "d.jsonl", LoadOptions{0.5}));
  EXPECT_THROW(load_dataset(dir / "missing.jsonl"), Error);
}

TEST(Dataset, RejectsEmptyClaimAndDuplicateIds) {
  auto j = sample_line("a", "True");
  j["claim"] = "   ";
  EXPECT_THROW(record_from_json(j), Error);
  testing::TempDir dir;
  std::vector<std::string> lines;
  for (int i = 0; i < 10; ++i) lines.push_back(sample_line("id" + std::to_string(i), "True").dump());
  lines.push_back(sample_line("id0", "True").dump());
  write_lines(dir / "d.jsonl", lines);
  auto r = load_dataset(dir / "d.jsonl");
  EXPECT_EQ(r.records.size(), 10u);
  EXPECT_EQ(r.errors.size(), 1u);
}

TEST(Dataset, SaveLoadIsIdentity) {
  testing::TempDir dir;
  auto c = testing::make_synthetic_corpus(dir.path(), 6, 3);
  auto r = load_dataset(c.dataset);
  EXPECT_EQ(r.records, c.records);
  save_dataset(dir / "again.jsonl", r.records);
  EXPECT_EQ(read_file(dir / "again.jsonl"), read_file(c.dataset));
}

TEST(Articles, StoreLoadsCleansAndSegments) {
  testing::TempDir dir;
  ArticleStore store(dir.path());
  auto ref = ArticleRef::from_uri("https://x.example/a");
  EXPECT_EQ(ref.id, ArticleRef::from_uri("https://x.example/a").id);
  EXPECT_NE(ref.id, ArticleRef::from_uri("https://x.example/b").id);
  EXPECT_THROW(store.load(ref), Error);
  store.put(ref, "<p>One sentence. Two sentences.</p>");
  auto a = store.load(ref);
  ASSERT_EQ(a.sentences.size(), 2u);
  EXPECT_EQ(a.sentences[1].text, "Two sentences.");
  store.put(ref, "   ");
  EXPECT_THROW(store.load(ref), UnusableArticle);
}

ClaimRecord rec(VeracityLabel l, Split s) {
  ClaimRecord r;
  r.label = l;
  r.split = s;
  return r;
}

TEST(Stats, Counting) {
  EXPECT_EQ(dataset_stats({}).total(), 0u);
  auto st = dataset_stats({rec(VeracityLabel::False, Split::Train), rec(VeracityLabel::False, Split::Train),
                           rec(VeracityLabel::True, Split::Train)});
  EXPECT_EQ(st.train, (LabelCounts{2, 0, 0, 1}));
  EXPECT_EQ(st.test, (LabelCounts{0, 0, 0, 0}));
  EXPECT_EQ(st.total(), 3u);
}

TEST(Stats, PermutationInvariantAndSumsToTotal) {
  Rng rng(11);
  std::vector<ClaimRecord> rs;
  for (int i = 0; i < 300; ++i)
    rs.push_back(rec(kAllLabels[uniform_index(rng, 4)], uniform_index(rng, 2) ? Split::Train : Split::Test));
  auto base = dataset_stats(rs);
  EXPECT_EQ(base.total(), rs.size());
  for (int t = 0; t < 10; ++t) {
    shuffle(rs, rng);
    EXPECT_EQ(dataset_stats(rs), base);
  }
  auto j = stats_to_json(base);
  EXPECT_EQ(j.at("train").at("False").get<std::size_t>(), base.train[0]);
  EXPECT_NE(format_stats_table(base).find("Partly false"), std::string::npos);
}

}  // namespace
}  // namespace refute::corpus

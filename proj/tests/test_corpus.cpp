// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "dap/corpus.hpp"
#include "dap/error.hpp"
#include "dap/fixture.hpp"

using namespace dap;

namespace {

RawDocument doc_of(const std::string& text) {
  RawDocument doc;
  doc.id = "d";
  doc.text = text;
  return doc;
}

const CleanRule kPageNumberRule{"page_number_lines", R"(^\s*\d+\s*$)",
                                CleanRule::Action::delete_line};
const CleanRule kEmailRule{"emails", R"([A-Za-z0-9._%+\-]+@[A-Za-z0-9.\-]+\.[A-Za-z]{2,})",
                           CleanRule::Action::delete_match};

}  // namespace

TEST_CASE("clean_text applies the page-number line rule") {
  CHECK(clean_text("Intro\n\n\n\n42\nBody", {kPageNumberRule}) == "Intro\n\nBody");
}

TEST_CASE("clean_text with no rules is whitespace normalization only") {
  CHECK(clean_text("text", {}) == "text");
}

TEST_CASE("clean_text removes email matches and renormalizes spaces") {
  CHECK(clean_text("contact a@b.com now", {kEmailRule}) == "contact now");
}

TEST_CASE("clean_text rejects non-compiling and duplicate rules") {
  const CleanRule bad{"broken", "([", CleanRule::Action::delete_match};
  CHECK_THROWS_WITH_AS(clean_text("x", {bad}), doctest::Contains("broken"), Error);
  try {
    clean_text("x", {kEmailRule, kEmailRule});
    FAIL("expected InvalidRule");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidRule);
  }
}

TEST_CASE("default rule set is idempotent") {
  const auto rules = default_clean_rules();
  const std::vector<std::string> nasty = {
      "Intro\n\n\n\n42\nBody text\ncontact a@b.com or +1 555 123 4567 now",
      "Heading [12] with citation\n12 [3]\nReferences\n[1] something\nTail",
      "a  b\tc\n\n\n\n\n\nd",
      "",
      "only [4] citations [5] here",
  };
  for (const auto& text : nasty) {
    const std::string once = clean_text(text, rules);
    CHECK(clean_text(once, rules) == once);
  }
}

TEST_CASE("segment_paragraphs splits on blank lines") {
  CHECK(segment_paragraphs("A\n\nB") == std::vector<std::string>{"A", "B"});
  CHECK(segment_paragraphs("A") == std::vector<std::string>{"A"});
  CHECK(segment_paragraphs("\n\n").empty());
  CHECK(segment_paragraphs("").empty());
  // single newlines stay inside the paragraph
  CHECK(segment_paragraphs("A\nB\n\nC") == std::vector<std::string>{"A\nB", "C"});
}

TEST_CASE("relevance_filter scores weighted occurrences per word") {
  RawDocument doc = doc_of("malware found here and malware found there ok");  // 9 words
  doc.text += " x";                                                           // 10 words
  CHECK(relevance_filter(doc, {{"malware", 1.0}}, 0.1));       // score 0.2
  CHECK(relevance_filter(doc, {}, 0.0));                       // 0 >= 0
  CHECK_FALSE(relevance_filter(doc_of("benign words only"), {{"malware", 1.0}}, 0.01));
  CHECK_THROWS_AS(relevance_filter(doc_of("   "), {}, 0.0), Error);
}

TEST_CASE("relevance_filter is case-insensitive") {
  CHECK(relevance_filter(doc_of("Malware MALWARE malware x"), {{"malware", 1.0}}, 0.5));
}

TEST_CASE("to_records assigns sequence numbers") {
  const auto records = to_records("d1", {"A", "B"});
  REQUIRE(records.size() == 2);
  CHECK(records[0].doc_id == "d1");
  CHECK(records[0].seq == 0);
  CHECK(records[0].text == "A");
  CHECK(records[1].seq == 1);
  CHECK(to_records("d1", {}).empty());
  CHECK(to_records("d1", {"X"}).size() == 1);
}

namespace {

std::vector<CorpusRecord> numbered_records(size_t n) {
  std::vector<CorpusRecord> records;
  for (size_t i = 0; i < n; ++i) {
    records.push_back({"text " + std::to_string(i), "doc" + std::to_string(i / 4),
                       static_cast<uint32_t>(i % 4)});
  }
  return records;
}

size_t unit_tokens(const CorpusRecord&) { return 5; }

}  // namespace

TEST_CASE("split_and_variant: 90-10 sizes and determinism") {
  const auto records = numbered_records(10);
  const SplitManifest manifest = split_and_variant(records, 0.9, 123, {}, unit_tokens);
  CHECK(manifest.train_ids.size() == 9);
  CHECK(manifest.test_ids.size() == 1);

  const SplitManifest again = split_and_variant(records, 0.9, 123, {}, unit_tokens);
  CHECK(manifest_to_json(manifest) == manifest_to_json(again));
}

TEST_CASE("split_and_variant: union covers all records exactly once") {
  const auto records = numbered_records(37);
  const SplitManifest manifest = split_and_variant(records, 0.9, 9, {}, unit_tokens);
  std::set<RecordId> all;
  for (const auto& id : manifest.train_ids) all.insert(id);
  for (const auto& id : manifest.test_ids) all.insert(id);
  CHECK(all.size() == 37);
  CHECK(manifest.train_ids.size() + manifest.test_ids.size() == 37);
}

TEST_CASE("split_and_variant: minimal prefix meets each budget") {
  // Token counts are 5 per record; budget 8 needs the first 2 shuffled records.
  const auto records = numbered_records(10);
  const SplitManifest manifest = split_and_variant(records, 0.9, 7, {{"v", 8}}, unit_tokens);
  REQUIRE(manifest.variants.size() == 1);
  CHECK(manifest.variants[0].records.size() == 2);
  CHECK(std::equal(manifest.variants[0].records.begin(), manifest.variants[0].records.end(),
                   manifest.train_ids.begin()));
}

TEST_CASE("split_and_variant: variants nest by budget") {
  const auto records = numbered_records(40);
  const SplitManifest manifest =
      split_and_variant(records, 0.9, 99, {{"small", 20}, {"big", 100}}, unit_tokens);
  REQUIRE(manifest.variants.size() == 2);
  const auto& small = manifest.variants[0].records;
  const auto& big = manifest.variants[1].records;
  CHECK(small.size() < big.size());
  CHECK(std::equal(small.begin(), small.end(), big.begin()));
}

TEST_CASE("split_and_variant rejects duplicate record ids") {
  auto records = numbered_records(6);
  records.push_back(records[2]);
  try {
    split_and_variant(records, 0.9, 1, {}, unit_tokens);
    FAIL("expected InvalidInput");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::InvalidInput);
  }
}

TEST_CASE("split_and_variant: budget over the train total errors") {
  const auto records = numbered_records(4);
  try {
    split_and_variant(records, 0.9, 1, {{"huge", 1000000}}, unit_tokens);
    FAIL("expected BudgetExceedsCorpus");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BudgetExceedsCorpus);
  }
}

TEST_CASE("records round-trip through JSONL") {
  const auto records = numbered_records(7);
  const auto parsed = records_from_jsonl(records_to_jsonl(records));
  REQUIRE(parsed.size() == records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(parsed[i].text == records[i].text);
    CHECK(parsed[i].doc_id == records[i].doc_id);
    CHECK(parsed[i].seq == records[i].seq);
  }
}

TEST_CASE("split manifest round-trips through JSON") {
  const auto records = numbered_records(12);
  SplitManifest manifest = split_and_variant(records, 0.75, 5, {{"v", 10}}, unit_tokens);
  manifest.corpus_hash = 0xabcdef;
  const SplitManifest parsed = manifest_from_json(manifest_to_json(manifest));
  CHECK(parsed.seed == manifest.seed);
  CHECK(parsed.corpus_hash == manifest.corpus_hash);
  CHECK(parsed.train_ids == manifest.train_ids);
  CHECK(parsed.test_ids == manifest.test_ids);
  REQUIRE(parsed.variants.size() == 1);
  CHECK(parsed.variants[0].records == manifest.variants[0].records);
}

TEST_CASE("fixture documents survive the full prep path deterministically") {
  const auto docs_a = fixture_documents(3, 4, 120);
  const auto docs_b = fixture_documents(3, 4, 120);
  REQUIRE(docs_a.size() == 4);
  const auto rules = default_clean_rules();
  for (size_t i = 0; i < docs_a.size(); ++i) {
    CHECK(docs_a[i].text == docs_b[i].text);
    const std::string cleaned = clean_text(docs_a[i], rules);
    CHECK(!cleaned.empty());
    CHECK(cleaned.find("@example.com") == std::string::npos);
    CHECK(!segment_paragraphs(cleaned).empty());
  }
}

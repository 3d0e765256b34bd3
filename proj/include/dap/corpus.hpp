// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace dap {

enum class Category { standard, paper, book, other };

const char* category_name(Category c);
Category category_from_name(const std::string& name);

struct RawDocument {
  std::string id;
  Category category = Category::other;
  std::string text;
  std::string source;
};

struct CleanRule {
  enum class Action { delete_match, delete_line };
  std::string name;
  std::string pattern;  // ECMAScript regular expression
  Action action = Action::delete_match;
};

/// One paragraph-coherent chunk of a cleaned document.
struct CorpusRecord {
  std::string text;
  std::string doc_id;
  uint32_t seq = 0;
};

using RecordId = std::pair<std::string, uint32_t>;  // (doc_id, seq)

struct SplitVariant {
  std::string name;
  uint64_t token_budget = 0;
  std::vector<RecordId> records;  // prefix of the shuffled train order
};

struct SplitManifest {
  uint64_t seed = 0;
  double ratio = 0.9;
  uint64_t corpus_hash = 0;  // hash of the corpus JSONL this split was derived from
  std::vector<RecordId> train_ids;
  std::vector<RecordId> test_ids;
  std::vector<SplitVariant> variants;
};

/// Rules shipped by default: bracketed numeric citations, email addresses,
/// phone numbers, reference headings, and digit-only (page number) lines.
/// The digit-line rule runs last so text uncovered by earlier deletions is
/// still caught, which keeps the set idempotent.
std::vector<CleanRule> default_clean_rules();

/// Applies rules in list order, then normalizes whitespace: lines trimmed,
/// inner space runs collapsed, runs of 3+ newlines collapsed to 2.
std::string clean_text(const std::string& text, const std::vector<CleanRule>& rules);
std::string clean_text(const RawDocument& doc, const std::vector<CleanRule>& rules);

/// Splits cleaned text on blank-line boundaries; drops empty segments.
std::vector<std::string> segment_paragraphs(const std::string& cleaned);

/// Deterministic keyword-score relevance gate. Score is
/// sum(weight * case-insensitive occurrences) / word_count.
bool relevance_filter(const RawDocument& doc,
                      const std::vector<std::pair<std::string, double>>& keywords,
                      double threshold);

std::vector<CorpusRecord> to_records(const std::string& doc_id,
                                     const std::vector<std::string>& paragraphs);

using TokenCounter = std::function<size_t(const CorpusRecord&)>;

/// Seeded shuffle, ceil(ratio*n) train split, and minimal-prefix token-budget
/// variants over the shuffled train order. Budgets must be ascending.
SplitManifest split_and_variant(const std::vector<CorpusRecord>& records, double ratio,
                                uint64_t seed,
                                const std::vector<std::pair<std::string, uint64_t>>& budgets,
                                const TokenCounter& token_counter);

// JSON-Lines corpus file: one record object per line, "\n"-terminated, no BOM.
std::string records_to_jsonl(const std::vector<CorpusRecord>& records);
std::vector<CorpusRecord> records_from_jsonl(const std::string& jsonl);

std::string manifest_to_json(const SplitManifest& manifest);
SplitManifest manifest_from_json(const std::string& json_text);

}  // namespace dap

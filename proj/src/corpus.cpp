// SPDX-License-Identifier: Apache-2.0

#include "dap/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <regex>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dap/error.hpp"
#include "dap/rng.hpp"

namespace dap {

using json = nlohmann::json;

const char* category_name(Category c) {
  switch (c) {
    case Category::standard: return "standard";
    case Category::paper: return "paper";
    case Category::book: return "book";
    case Category::other: return "other";
  }
  return "other";
}

Category category_from_name(const std::string& name) {
  if (name == "standard") return Category::standard;
  if (name == "paper") return Category::paper;
  if (name == "book") return Category::book;
  if (name == "other") return Category::other;
  raise(ErrorCode::InvalidInput, "unknown category '" + name + "'");
}

std::vector<CleanRule> default_clean_rules() {
  return {
      {"bracket_citations", R"(\[\d+\])", CleanRule::Action::delete_match},
      {"emails", R"([A-Za-z0-9._%+\-]+@[A-Za-z0-9.\-]+\.[A-Za-z]{2,})", CleanRule::Action::delete_match},
      {"phone_numbers", R"(\+?\d{1,3}[-. (]?\d{3}[-. )]?\d{3}[-. ]?\d{2,4})", CleanRule::Action::delete_match},
      {"reference_headings", R"(^\s*References\b)", CleanRule::Action::delete_line},
      {"page_number_lines", R"(^\s*\d+\s*$)", CleanRule::Action::delete_line},
  };
}

namespace {

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  size_t start = 0;
  while (start <= text.size()) {
    const size_t nl = text.find('\n', start);
    if (nl == std::string::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  return lines;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string out;
  for (size_t i = 0; i < lines.size(); ++i) {
    if (i) out.push_back('\n');
    out += lines[i];
  }
  return out;
}

std::regex compile_rule(const CleanRule& rule) {
  try {
    return std::regex(rule.pattern, std::regex::ECMAScript);
  } catch (const std::regex_error& e) {
    raise(ErrorCode::InvalidRule, "rule '" + rule.name + "' does not compile: " + e.what());
  }
}

void validate_rules(const std::vector<CleanRule>& rules) {
  std::set<std::string> names;
  for (const auto& rule : rules) {
    if (!names.insert(rule.name).second) {
      raise(ErrorCode::InvalidRule, "duplicate rule name '" + rule.name + "'");
    }
  }
}

std::string trim_and_collapse_line(const std::string& line) {
  std::string out;
  out.reserve(line.size());
  bool pending_space = false;
  for (char ch : line) {
    if (ch == ' ' || ch == '\t' || ch == '\r') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(ch);
  }
  return out;
}

std::string normalize_whitespace(const std::string& text) {
  auto lines = split_lines(text);
  for (auto& line : lines) line = trim_and_collapse_line(line);
  std::string joined = join_lines(lines);

  // Collapse runs of 3+ newlines to exactly 2 (one blank line).
  std::string out;
  out.reserve(joined.size());
  size_t run = 0;
  for (char ch : joined) {
    if (ch == '\n') {
      ++run;
      if (run <= 2) out.push_back('\n');
    } else {
      run = 0;
      out.push_back(ch);
    }
  }
  // Trim leading/trailing blank space of the whole document.
  size_t begin = out.find_first_not_of("\n");
  size_t end = out.find_last_not_of("\n");
  if (begin == std::string::npos) return "";
  return out.substr(begin, end - begin + 1);
}

}  // namespace

std::string clean_text(const std::string& text, const std::vector<CleanRule>& rules) {
  validate_rules(rules);
  std::string current = text;
  for (const auto& rule : rules) {
    const std::regex re = compile_rule(rule);
    if (rule.action == CleanRule::Action::delete_match) {
      current = std::regex_replace(current, re, "");
    } else {
      auto lines = split_lines(current);
      std::vector<std::string> kept;
      kept.reserve(lines.size());
      for (auto& line : lines) {
        if (!std::regex_search(line, re)) kept.push_back(std::move(line));
      }
      current = join_lines(kept);
    }
  }
  return normalize_whitespace(current);
}

std::string clean_text(const RawDocument& doc, const std::vector<CleanRule>& rules) {
  return clean_text(doc.text, rules);
}

std::vector<std::string> segment_paragraphs(const std::string& cleaned) {
  std::vector<std::string> paragraphs;
  std::string current;
  size_t i = 0;
  const size_t n = cleaned.size();
  while (i <= n) {
    const bool at_break = i == n || (cleaned[i] == '\n' && i + 1 < n && cleaned[i + 1] == '\n');
    if (at_break) {
      if (!current.empty()) paragraphs.push_back(current);
      current.clear();
      if (i == n) break;
      while (i < n && cleaned[i] == '\n') ++i;
      continue;
    }
    current.push_back(cleaned[i]);
    ++i;
  }
  // A single trailing newline is not a paragraph break; strip it from the
  // final segment instead of treating it as content.
  for (auto& p : paragraphs) {
    while (!p.empty() && p.back() == '\n') p.pop_back();
    while (!p.empty() && p.front() == '\n') p.erase(p.begin());
  }
  std::erase_if(paragraphs, [](const std::string& p) { return p.empty(); });
  return paragraphs;
}

namespace {

size_t count_words(const std::string& text) {
  size_t count = 0;
  bool in_word = false;
  for (char ch : text) {
    const bool ws = std::isspace(static_cast<unsigned char>(ch)) != 0;
    if (!ws && !in_word) ++count;
    in_word = !ws;
  }
  return count;
}

std::string to_lower(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

size_t count_occurrences(const std::string& haystack, const std::string& needle) {
  if (needle.empty()) return 0;
  size_t count = 0;
  size_t pos = 0;
  while ((pos = haystack.find(needle, pos)) != std::string::npos) {
    ++count;
    pos += needle.size();
  }
  return count;
}

}  // namespace

bool relevance_filter(const RawDocument& doc,
                      const std::vector<std::pair<std::string, double>>& keywords,
                      double threshold) {
  if (threshold < 0) raise(ErrorCode::InvalidInput, "threshold must be >= 0");
  const size_t words = count_words(doc.text);
  if (words == 0) raise(ErrorCode::EmptyDocument, "document '" + doc.id + "' has no words");
  const std::string lowered = to_lower(doc.text);
  double score = 0.0;
  for (const auto& [term, weight] : keywords) {
    if (weight < 0) raise(ErrorCode::InvalidInput, "keyword weight must be >= 0");
    score += weight * static_cast<double>(count_occurrences(lowered, to_lower(term)));
  }
  score /= static_cast<double>(words);
  return score >= threshold;
}

std::vector<CorpusRecord> to_records(const std::string& doc_id,
                                     const std::vector<std::string>& paragraphs) {
  std::vector<CorpusRecord> records;
  records.reserve(paragraphs.size());
  for (size_t i = 0; i < paragraphs.size(); ++i) {
    records.push_back({paragraphs[i], doc_id, static_cast<uint32_t>(i)});
  }
  return records;
}

namespace {

// ceil(ratio*n) with a snap window so exact decimal products (0.9*10) do not
// creep over the next integer through rounding.
size_t ceil_ratio(double ratio, size_t n) {
  const double product = ratio * static_cast<double>(n);
  const double nearest = std::round(product);
  if (std::abs(product - nearest) < 1e-9) return static_cast<size_t>(nearest);
  return static_cast<size_t>(std::ceil(product));
}

}  // namespace

SplitManifest split_and_variant(const std::vector<CorpusRecord>& records, double ratio,
                                uint64_t seed,
                                const std::vector<std::pair<std::string, uint64_t>>& budgets,
                                const TokenCounter& token_counter) {
  if (!(ratio > 0.0 && ratio < 1.0)) raise(ErrorCode::InvalidInput, "ratio must be in (0,1)");
  for (size_t i = 1; i < budgets.size(); ++i) {
    if (budgets[i].second < budgets[i - 1].second) {
      raise(ErrorCode::InvalidInput, "budgets must be ascending");
    }
  }
  {
    std::set<RecordId> ids;
    for (const auto& record : records) {
      if (!ids.emplace(record.doc_id, record.seq).second) {
        raise(ErrorCode::InvalidInput, "duplicate record id (" + record.doc_id + ", " +
                                           std::to_string(record.seq) + ")");
      }
    }
  }

  const size_t n = records.size();
  std::vector<size_t> order = seeded_permutation(n, seed);

  SplitManifest manifest;
  manifest.seed = seed;
  manifest.ratio = ratio;

  const size_t train_count = std::min(n, ceil_ratio(ratio, n));
  manifest.train_ids.reserve(train_count);
  for (size_t i = 0; i < train_count; ++i) {
    const auto& r = records[order[i]];
    manifest.train_ids.emplace_back(r.doc_id, r.seq);
  }
  for (size_t i = train_count; i < n; ++i) {
    const auto& r = records[order[i]];
    manifest.test_ids.emplace_back(r.doc_id, r.seq);
  }

  std::vector<uint64_t> train_tokens(train_count);
  uint64_t total_train_tokens = 0;
  for (size_t i = 0; i < train_count; ++i) {
    train_tokens[i] = token_counter(records[order[i]]);
    total_train_tokens += train_tokens[i];
  }

  for (const auto& [name, budget] : budgets) {
    if (budget > total_train_tokens) {
      raise(ErrorCode::BudgetExceedsCorpus,
            "variant '" + name + "' budget " + std::to_string(budget) + " exceeds train tokens " +
                std::to_string(total_train_tokens));
    }
    SplitVariant variant;
    variant.name = name;
    variant.token_budget = budget;
    uint64_t cumulative = 0;
    size_t k = 0;
    while (cumulative < budget) {
      cumulative += train_tokens[k];
      ++k;
    }
    variant.records.assign(manifest.train_ids.begin(),
                           manifest.train_ids.begin() + static_cast<std::ptrdiff_t>(k));
    manifest.variants.push_back(std::move(variant));
  }
  return manifest;
}

std::string records_to_jsonl(const std::vector<CorpusRecord>& records) {
  std::string out;
  for (const auto& record : records) {
    json line;
    line["doc_id"] = record.doc_id;
    line["seq"] = record.seq;
    line["text"] = record.text;
    out += line.dump();
    out.push_back('\n');
  }
  return out;
}

std::vector<CorpusRecord> records_from_jsonl(const std::string& jsonl) {
  std::vector<CorpusRecord> records;
  size_t start = 0;
  size_t lineno = 0;
  while (start < jsonl.size()) {
    size_t end = jsonl.find('\n', start);
    if (end == std::string::npos) end = jsonl.size();
    ++lineno;
    const std::string_view line(jsonl.data() + start, end - start);
    start = end + 1;
    if (line.empty()) continue;
    json parsed = json::parse(line, nullptr, false);
    if (parsed.is_discarded() || !parsed.is_object() || !parsed.contains("text")) {
      raise(ErrorCode::InvalidInput, "corpus line " + std::to_string(lineno) + " is not a record");
    }
    CorpusRecord record;
    record.text = parsed.at("text").get<std::string>();
    record.doc_id = parsed.value("doc_id", "line" + std::to_string(lineno));
    record.seq = parsed.value("seq", 0u);
    records.push_back(std::move(record));
  }
  return records;
}

namespace {

json record_ids_to_json(const std::vector<RecordId>& ids) {
  json arr = json::array();
  for (const auto& [doc, seq] : ids) arr.push_back(json::array({doc, seq}));
  return arr;
}

std::vector<RecordId> record_ids_from_json(const json& arr) {
  std::vector<RecordId> ids;
  for (const auto& entry : arr) {
    ids.emplace_back(entry.at(0).get<std::string>(), entry.at(1).get<uint32_t>());
  }
  return ids;
}

}  // namespace

std::string manifest_to_json(const SplitManifest& manifest) {
  json doc;
  doc["seed"] = manifest.seed;
  doc["ratio"] = manifest.ratio;
  doc["corpus_hash"] = manifest.corpus_hash;
  doc["train_ids"] = record_ids_to_json(manifest.train_ids);
  doc["test_ids"] = record_ids_to_json(manifest.test_ids);
  json variants = json::array();
  for (const auto& variant : manifest.variants) {
    json v;
    v["name"] = variant.name;
    v["token_budget"] = variant.token_budget;
    v["records"] = record_ids_to_json(variant.records);
    variants.push_back(std::move(v));
  }
  doc["variants"] = std::move(variants);
  return doc.dump(2) + "\n";
}

SplitManifest manifest_from_json(const std::string& json_text) {
  json doc = json::parse(json_text, nullptr, false);
  if (doc.is_discarded()) raise(ErrorCode::InvalidInput, "split manifest is not valid JSON");
  SplitManifest manifest;
  manifest.seed = doc.at("seed").get<uint64_t>();
  manifest.ratio = doc.at("ratio").get<double>();
  manifest.corpus_hash = doc.value("corpus_hash", 0ull);
  manifest.train_ids = record_ids_from_json(doc.at("train_ids"));
  manifest.test_ids = record_ids_from_json(doc.at("test_ids"));
  for (const auto& v : doc.at("variants")) {
    SplitVariant variant;
    variant.name = v.at("name").get<std::string>();
    variant.token_budget = v.at("token_budget").get<uint64_t>();
    variant.records = record_ids_from_json(v.at("records"));
    manifest.variants.push_back(std::move(variant));
  }
  return manifest;
}

}  // namespace dap

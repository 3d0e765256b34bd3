// SPDX-License-Identifier: Apache-2.0

#include "dap/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dap/error.hpp"
#include "dap/rng.hpp"
#include "dap/serialize.hpp"

namespace dap {

using json = nlohmann::json;

const char* const kDefaultPromptTemplate =
    "{question}\n\n{choices}\n\nAnswer with the letter of the correct choice.";
const char* const kExplanationRequest = " Then justify your answer in 20-30 tokens.";

namespace {

BenchmarkItem item_from_json(const json& parsed, size_t lineno) {
  auto fail = [lineno](const std::string& what) {
    raise(ErrorCode::SchemaError, "line " + std::to_string(lineno) + ": " + what);
  };
  if (!parsed.is_object()) fail("not a JSON object");
  for (const char* key : {"id", "question", "choices", "gold", "format"}) {
    if (!parsed.contains(key)) fail(std::string("missing key '") + key + "'");
  }
  BenchmarkItem item;
  item.id = parsed.at("id").get<std::string>();
  item.question = parsed.at("question").get<std::string>();
  for (const auto& [key, value] : parsed.at("choices").items()) {
    if (key.size() != 1 || key[0] < 'A' || key[0] > 'E') {
      fail("choice letter '" + key + "' outside A..E");
    }
    item.choices[key[0]] = value.get<std::string>();
  }
  if (item.choices.empty()) fail("no choices");
  for (const auto& g : parsed.at("gold")) {
    const std::string letter = g.get<std::string>();
    if (letter.size() != 1 || !item.choices.count(letter[0])) {
      fail("gold letter '" + letter + "' is not a choice");
    }
    item.gold.insert(letter[0]);
  }
  if (item.gold.empty()) fail("gold set is empty");
  const std::string format = parsed.at("format").get<std::string>();
  if (format == "single") {
    item.format = BenchmarkItem::Format::single;
  } else if (format == "multi") {
    item.format = BenchmarkItem::Format::multi;
  } else {
    fail("format must be 'single' or 'multi'");
  }
  if (item.format == BenchmarkItem::Format::single && item.gold.size() != 1) {
    fail("single-format item with " + std::to_string(item.gold.size()) + " gold answers");
  }
  return item;
}

}  // namespace

std::vector<BenchmarkItem> benchmark_from_jsonl(const std::string& jsonl) {
  std::vector<BenchmarkItem> items;
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
    if (parsed.is_discarded()) {
      raise(ErrorCode::SchemaError, "line " + std::to_string(lineno) + ": invalid JSON");
    }
    items.push_back(item_from_json(parsed, lineno));
  }
  return items;
}

std::vector<BenchmarkItem> load_benchmark(const std::string& path) {
  return benchmark_from_jsonl(read_file(path));
}

std::string render_prompt(const BenchmarkItem& item, const std::string& prompt_template) {
  const size_t qpos = prompt_template.find("{question}");
  const size_t cpos = prompt_template.find("{choices}");
  if (qpos == std::string::npos) raise(ErrorCode::TemplateError, "missing {question} placeholder");
  if (cpos == std::string::npos) raise(ErrorCode::TemplateError, "missing {choices} placeholder");

  std::string choices;
  for (const auto& [letter, text] : item.choices) {  // std::map keeps letter order
    if (!choices.empty()) choices.push_back('\n');
    choices.push_back(letter);
    choices += ") ";
    choices += text;
  }

  std::string out = prompt_template;
  out.replace(out.find("{question}"), 10, item.question);
  out.replace(out.find("{choices}"), 9, choices);
  return out;
}

ExtractedAnswers extract_answers(const std::string& response, const std::set<char>& allowed,
                                 BenchmarkItem::Format format) {
  if (allowed.empty()) raise(ErrorCode::InvalidInput, "allowed letter set is empty");
  auto is_word = [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_';
  };
  ExtractedAnswers out;
  for (size_t i = 0; i < response.size(); ++i) {
    const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(response[i])));
    if (!allowed.count(upper)) continue;
    const bool left_ok = i == 0 || !is_word(response[i - 1]);
    const bool right_ok = i + 1 == response.size() || !is_word(response[i + 1]);
    if (!left_ok || !right_ok) continue;
    out.letters.insert(upper);
    if (format == BenchmarkItem::Format::single) break;  // first standalone hit wins
  }
  out.parse_ok = !out.letters.empty();
  return out;
}

double score_item(const std::set<char>& gold, const std::set<char>& predicted,
                  BenchmarkItem::Format format) {
  if (gold.empty()) raise(ErrorCode::EmptyGold, "gold set must not be empty");
  if (format == BenchmarkItem::Format::single) {
    return predicted == gold ? 1.0 : 0.0;
  }
  std::set<char> inter;
  std::set<char> uni = gold;
  for (char c : predicted) {
    if (gold.count(c)) inter.insert(c);
    uni.insert(c);
  }
  return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

// ---------------------------------------------------------------------------
// similarity
// ---------------------------------------------------------------------------

namespace {

std::vector<std::string> tokenize_alnum(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    } else if (!current.empty()) {
      tokens.push_back(current);
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(current);
  return tokens;
}

}  // namespace

std::vector<std::string> joint_vocabulary(const std::string& a, const std::string& b) {
  std::set<std::string> vocab;
  for (const auto& t : tokenize_alnum(a)) vocab.insert(t);
  for (const auto& t : tokenize_alnum(b)) vocab.insert(t);
  return {vocab.begin(), vocab.end()};
}

std::vector<double> embed_text(const std::string& text, const std::vector<std::string>& vocabulary) {
  std::vector<double> vec(vocabulary.size(), 0.0);
  const auto tokens = tokenize_alnum(text);
  for (const auto& token : tokens) {
    const auto it = std::lower_bound(vocabulary.begin(), vocabulary.end(), token);
    if (it != vocabulary.end() && *it == token) {
      vec[static_cast<size_t>(it - vocabulary.begin())] += 1.0;
    }
  }
  double norm_sq = 0.0;
  for (double x : vec) norm_sq += x * x;
  if (norm_sq > 0.0) {
    const double inv = 1.0 / std::sqrt(norm_sq);
    for (double& x : vec) x *= inv;
  }
  return vec;
}

std::pair<std::vector<double>, std::vector<double>> TfEmbedder::embed_pair(
    const std::string& a, const std::string& b) const {
  const auto vocab = joint_vocabulary(a, b);
  return {embed_text(a, vocab), embed_text(b, vocab)};
}

double semantic_similarity(const std::string& explanation, const std::string& gold_text,
                           const Embedder& embedder) {
  const auto [va, vb] = embedder.embed_pair(explanation, gold_text);
  if (va.size() != vb.size()) raise(ErrorCode::LengthMismatch, "embedder dimensions differ");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < va.size(); ++i) {
    dot += va[i] * vb[i];
    na += va[i] * va[i];
    nb += vb[i] * vb[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

ResponseFileSource responses_from_jsonl(const std::string& jsonl) {
  ResponseFileSource source;
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
    if (parsed.is_discarded() || !parsed.is_object() || !parsed.contains("id") ||
        !parsed.contains("response")) {
      raise(ErrorCode::SchemaError, "line " + std::to_string(lineno) + ": invalid response entry");
    }
    ResponseEntry entry;
    entry.response = parsed.at("response").get<std::string>();
    if (parsed.contains("explanation")) {
      entry.explanation = parsed.at("explanation").get<std::string>();
    }
    source.by_id[parsed.at("id").get<std::string>()] = std::move(entry);
  }
  return source;
}

ResponseFileSource load_responses(const std::string& path) {
  return responses_from_jsonl(read_file(path));
}

namespace {

std::vector<BenchmarkItem> apply_sampling(const std::vector<BenchmarkItem>& items,
                                          const EvalOptions& options) {
  if (!options.sample_n || *options.sample_n >= items.size()) return items;
  std::vector<size_t> order = seeded_permutation(items.size(), options.sample_seed);
  std::vector<BenchmarkItem> sampled;
  sampled.reserve(*options.sample_n);
  for (size_t i = 0; i < *options.sample_n; ++i) sampled.push_back(items[order[i]]);
  return sampled;
}

std::string gold_answer_text(const BenchmarkItem& item) {
  std::string text;
  for (char letter : item.gold) {
    if (!text.empty()) text += " ";
    text += item.choices.at(letter);
  }
  return text;
}

std::set<char> allowed_letters(const BenchmarkItem& item, const EvalOptions& options) {
  std::set<char> allowed;
  for (char c : options.letters) {
    if (item.choices.count(c)) allowed.insert(c);
  }
  if (allowed.empty()) {  // letter config does not cover this item; use its own letters
    for (const auto& [letter, text] : item.choices) allowed.insert(letter);
  }
  return allowed;
}

EvalReport assemble(const std::vector<BenchmarkItem>& items,
                    const std::vector<std::pair<std::string, std::optional<std::string>>>& responses,
                    const EvalOptions& options, const Embedder& embedder) {
  EvalReport report;
  double score_sum = 0.0;
  double single_sum = 0.0, multi_sum = 0.0;
  size_t single_count = 0, multi_count = 0;
  std::vector<double> similarities;

  for (size_t i = 0; i < items.size(); ++i) {
    const BenchmarkItem& item = items[i];
    const std::string& response = responses[i].first;
    EvalReport::Item row;
    row.id = item.id;
    row.response = response;
    const ExtractedAnswers extracted =
        extract_answers(response, allowed_letters(item, options), item.format);
    row.predicted = extracted.letters;
    row.parse_ok = extracted.parse_ok;
    row.score = score_item(item.gold, row.predicted, item.format);
    if (!row.parse_ok) ++report.unparsed;

    score_sum += row.score;
    if (item.format == BenchmarkItem::Format::single) {
      single_sum += row.score;
      ++single_count;
    } else {
      multi_sum += row.score;
      ++multi_count;
    }

    if (options.explanations) {
      const std::string explanation = responses[i].second.value_or(response);
      row.similarity = semantic_similarity(explanation, gold_answer_text(item), embedder);
      similarities.push_back(*row.similarity);
    }
    report.items.push_back(std::move(row));
  }

  report.count = items.size();
  report.mean_score = items.empty() ? 0.0 : score_sum / static_cast<double>(items.size());
  if (single_count > 0) report.single_accuracy = single_sum / static_cast<double>(single_count);
  if (multi_count > 0) report.multi_mean_jaccard = multi_sum / static_cast<double>(multi_count);
  if (!similarities.empty()) {
    report.similarity_mean =
        std::accumulate(similarities.begin(), similarities.end(), 0.0) /
        static_cast<double>(similarities.size());
    std::vector<double> sorted = similarities;
    std::sort(sorted.begin(), sorted.end());
    const size_t mid = sorted.size() / 2;
    report.similarity_median =
        sorted.size() % 2 == 1 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
  }
  return report;
}

}  // namespace

EvalReport evaluate(const std::vector<BenchmarkItem>& items, const ResponseFileSource& source,
                    const EvalOptions& options, const Embedder& embedder) {
  const auto sampled = apply_sampling(items, options);
  std::vector<std::pair<std::string, std::optional<std::string>>> responses;
  responses.reserve(sampled.size());
  for (const auto& item : sampled) {
    const auto it = source.by_id.find(item.id);
    if (it == source.by_id.end()) {
      raise(ErrorCode::MissingResponse, "no response for item '" + item.id + "'");
    }
    responses.emplace_back(it->second.response, it->second.explanation);
  }
  return assemble(sampled, responses, options, embedder);
}

EvalReport evaluate(const std::vector<BenchmarkItem>& items, const ModelSource& source,
                    const EvalOptions& options, const Embedder& embedder) {
  if (source.params == nullptr || source.vocab == nullptr) {
    raise(ErrorCode::InvalidInput, "model source needs params and vocab");
  }
  const auto sampled = apply_sampling(items, options);
  const size_t context = source.params->config.max_seq_len;
  std::vector<std::pair<std::string, std::optional<std::string>>> responses;
  responses.reserve(sampled.size());
  for (const auto& item : sampled) {
    std::string prompt = render_prompt(item, options.prompt_template);
    if (options.explanations) prompt += kExplanationRequest;
    std::vector<uint32_t> prompt_ids;
    prompt_ids.push_back(source.vocab->bos_id);
    for (uint32_t id : encode(*source.vocab, prompt)) prompt_ids.push_back(id);
    // Keep the prompt tail so there is room to generate a response.
    const size_t reserve = std::min(options.max_new_tokens, context > 1 ? context - 1 : size_t{1});
    const size_t keep = std::max<size_t>(1, context - reserve);
    if (prompt_ids.size() > keep) {
      prompt_ids.erase(prompt_ids.begin(),
                       prompt_ids.begin() + static_cast<std::ptrdiff_t>(prompt_ids.size() - keep));
    }
    const std::vector<uint32_t> generated =
        generate(*source.params, prompt_ids, options.max_new_tokens, source.vocab->eos_id);
    const std::vector<uint32_t> continuation(generated.begin() + static_cast<std::ptrdiff_t>(prompt_ids.size()),
                                             generated.end());
    responses.emplace_back(decode(*source.vocab, continuation), std::nullopt);
  }
  return assemble(sampled, responses, options, embedder);
}

// ---------------------------------------------------------------------------
// report output
// ---------------------------------------------------------------------------

std::string report_to_json(const EvalReport& report) {
  json doc;
  doc["count"] = report.count;
  doc["unparsed"] = report.unparsed;
  doc["mean_score"] = report.mean_score;
  if (report.single_accuracy) doc["single_accuracy"] = *report.single_accuracy;
  if (report.multi_mean_jaccard) doc["multi_mean_jaccard"] = *report.multi_mean_jaccard;
  if (report.similarity_mean) {
    doc["similarity"] = {{"mean", *report.similarity_mean}, {"median", *report.similarity_median}};
  }
  json items = json::array();
  for (const auto& item : report.items) {
    json row;
    row["id"] = item.id;
    std::string predicted;
    for (char c : item.predicted) predicted.push_back(c);
    row["predicted"] = predicted;
    row["response"] = item.response;
    row["score"] = item.score;
    row["parse_ok"] = item.parse_ok;
    if (item.similarity) row["similarity"] = *item.similarity;
    items.push_back(std::move(row));
  }
  doc["items"] = std::move(items);
  return doc.dump(2) + "\n";
}

std::string report_to_table(const EvalReport& report) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-12s %-10s %-8s %s\n", "item", "predicted", "score", "parse");
  out << line;
  for (const auto& item : report.items) {
    std::string predicted;
    for (char c : item.predicted) predicted.push_back(c);
    std::snprintf(line, sizeof(line), "%-12s %-10s %-8.4f %s\n", item.id.c_str(), predicted.c_str(),
                  item.score, item.parse_ok ? "ok" : "unparsed");
    out << line;
  }
  std::snprintf(line, sizeof(line), "\nitems=%zu unparsed=%zu mean_score=%.6f\n", report.count,
                report.unparsed, report.mean_score);
  out << line;
  if (report.single_accuracy) {
    std::snprintf(line, sizeof(line), "accuracy(single)=%.6f\n", *report.single_accuracy);
    out << line;
  }
  if (report.multi_mean_jaccard) {
    std::snprintf(line, sizeof(line), "mean_jaccard(multi)=%.6f\n", *report.multi_mean_jaccard);
    out << line;
  }
  if (report.similarity_mean) {
    std::snprintf(line, sizeof(line), "similarity mean=%.6f median=%.6f\n", *report.similarity_mean,
                  *report.similarity_median);
    out << line;
  }
  return out.str();
}

}  // namespace dap

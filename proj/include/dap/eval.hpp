// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "dap/model.hpp"
#include "dap/vocab.hpp"

namespace dap {

struct BenchmarkItem {
  enum class Format { single, multi };

  std::string id;
  std::string question;
  std::map<char, std::string> choices;  // letter -> text, A..E
  std::set<char> gold;
  Format format = Format::single;
};

/// JSON-Lines benchmark loader; schema violations report the line number.
std::vector<BenchmarkItem> load_benchmark(const std::string& path);
std::vector<BenchmarkItem> benchmark_from_jsonl(const std::string& jsonl);

extern const char* const kDefaultPromptTemplate;   // {question} / {choices} placeholders
extern const char* const kExplanationRequest;      // appended when explanations are on

/// Deterministic zero-shot prompt: placeholders substituted, choices rendered
/// in letter order.
std::string render_prompt(const BenchmarkItem& item, const std::string& prompt_template);

struct ExtractedAnswers {
  std::set<char> letters;
  bool parse_ok = false;
};

/// Scans for standalone choice letters (word boundary, case-insensitive, so
/// "B", "B)", "(B)", "b." all count). Single format keeps the first hit;
/// multi keeps all distinct hits.
ExtractedAnswers extract_answers(const std::string& response, const std::set<char>& allowed,
                                 BenchmarkItem::Format format);

/// single: exact-match indicator. multi: Jaccard |G∩P| / |G∪P|.
double score_item(const std::set<char>& gold, const std::set<char>& predicted,
                  BenchmarkItem::Format format);

/// L2-normalized term-frequency vector of `text` over a fixed vocabulary
/// (lowercased, split on non-alphanumerics). All-empty text gives the zero
/// vector.
std::vector<double> embed_text(const std::string& text, const std::vector<std::string>& vocabulary);

/// Joint sorted vocabulary of two texts (the default embedder's dimension).
std::vector<std::string> joint_vocabulary(const std::string& a, const std::string& b);

/// Pluggable pair embedder behind the similarity protocol.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::pair<std::vector<double>, std::vector<double>> embed_pair(
      const std::string& a, const std::string& b) const = 0;
};

/// Default deterministic term-frequency embedder.
class TfEmbedder : public Embedder {
 public:
  std::pair<std::vector<double>, std::vector<double>> embed_pair(
      const std::string& a, const std::string& b) const override;
};

/// Cosine of the pair embedding; zero vector on either side gives 0.
double semantic_similarity(const std::string& explanation, const std::string& gold_text,
                           const Embedder& embedder);

struct EvalOptions {
  std::string prompt_template = kDefaultPromptTemplate;
  std::string letters = "ABCDE";
  bool explanations = false;
  size_t max_new_tokens = 30;
  std::optional<size_t> sample_n;  // seeded first-N-after-shuffle when set
  uint64_t sample_seed = 0;
};

struct ResponseEntry {
  std::string response;
  std::optional<std::string> explanation;
};

/// Answer source: either a precomputed response file keyed by item id, or a
/// local model + vocab that generates greedy continuations of the prompt.
struct ResponseFileSource {
  std::map<std::string, ResponseEntry> by_id;
};

struct ModelSource {
  const Parameters* params = nullptr;
  const Vocab* vocab = nullptr;
};

ResponseFileSource load_responses(const std::string& path);
ResponseFileSource responses_from_jsonl(const std::string& jsonl);

struct EvalReport {
  struct Item {
    std::string id;
    std::set<char> predicted;
    std::string response;
    double score = 0.0;
    bool parse_ok = false;
    std::optional<double> similarity;
  };

  std::vector<Item> items;
  size_t count = 0;
  size_t unparsed = 0;
  double mean_score = 0.0;
  std::optional<double> single_accuracy;     // over single-format items
  std::optional<double> multi_mean_jaccard;  // over multi-format items
  std::optional<double> similarity_mean;
  std::optional<double> similarity_median;
};

EvalReport evaluate(const std::vector<BenchmarkItem>& items, const ResponseFileSource& source,
                    const EvalOptions& options, const Embedder& embedder = TfEmbedder{});
EvalReport evaluate(const std::vector<BenchmarkItem>& items, const ModelSource& source,
                    const EvalOptions& options, const Embedder& embedder = TfEmbedder{});

std::string report_to_json(const EvalReport& report);
std::string report_to_table(const EvalReport& report);

}  // namespace dap

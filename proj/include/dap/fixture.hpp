// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dap/corpus.hpp"
#include "dap/vocab.hpp"

namespace dap {

/// Deterministic synthetic workloads: a small Markov-structured text corpus
/// (with injected page-number / citation / email noise so the cleaning stage
/// has real work), a matching vocabulary, and a scripted MCQ benchmark with
/// closed-form expected scores. Used by the demo `fixture` subcommand and by
/// the test suites.

Vocab fixture_vocab();

std::vector<RawDocument> fixture_documents(uint64_t seed, size_t n_docs, size_t words_per_doc);

/// Writes one .txt file per document plus manifest.json into `dir`.
void write_fixture_corpus(const std::string& dir, const std::vector<RawDocument>& docs);

struct FixtureBenchmark {
  std::string items_jsonl;
  std::string responses_jsonl;
  // Closed-form aggregates of the scripted responses.
  double expected_overall = 0.0;
  double expected_single_accuracy = 0.0;
  double expected_multi_mean_jaccard = 0.0;
  size_t single_count = 0;
  size_t multi_count = 0;
};

/// 100-item fixture: 60 single-answer items at accuracy 45/60 and 40
/// multi-answer items whose Jaccard scores average 11/24.
FixtureBenchmark fixture_benchmark();

/// Random packed sequences for trainer tests. Rows are pad-free unless
/// with_padding is set (then every fifth row ends early).
PackedDataset synthetic_dataset(size_t n_sequences, size_t seq_len, size_t vocab_size,
                                uint64_t seed, bool with_padding = false);

}  // namespace dap

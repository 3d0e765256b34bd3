// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dap/dist.hpp"
#include "dap/trainer.hpp"

namespace dap {

/// Shared configuration file for every subcommand. Unknown keys are rejected;
/// the content hash covers the effective (default-merged) values, so it is
/// stable under key reordering and under spelling out a default explicitly.
struct RunConfig {
  struct CorpusSection {
    uint64_t seed = 42;
    double ratio = 0.9;
    std::vector<std::pair<std::string, uint64_t>> budgets;          // (name, tokens), ascending
    std::vector<std::pair<std::string, double>> keywords;           // relevance terms
    double threshold = 0.0;
    bool use_default_rules = true;
    std::vector<CleanRule> extra_rules;
  } corpus;

  struct TokenizerSection {
    std::string vocab_path;
    size_t seq_len = 128;
  } tokenizer;

  struct ModelSection {
    size_t d_model = 32;
    size_t n_heads = 4;
    size_t n_layers = 2;
    size_t d_ff = 128;
    uint64_t init_seed = 7;
  } model;

  TrainConfig trainer;
  WorldSpec world;

  struct EvalSection {
    std::string prompt_template;  // empty = built-in default
    std::string letters = "ABCDE";
    bool explanations = false;
    size_t max_new_tokens = 30;
    std::optional<size_t> sample_n;
    uint64_t sample_seed = 0;
  } eval;

  /// Model config bound to a concrete vocabulary size; max_seq_len is the
  /// packing sequence length.
  ModelConfig model_config(size_t vocab_size) const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

/// FNV-1a over the canonical serialization of the effective config.
uint64_t run_config_hash(const RunConfig& config);

std::string run_config_to_json(const RunConfig& config);

}  // namespace dap

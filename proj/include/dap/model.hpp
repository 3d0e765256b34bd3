// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dap/tensor.hpp"
#include "dap/vocab.hpp"

namespace dap {

struct ModelConfig {
  size_t vocab_size = 0;
  size_t d_model = 32;
  size_t n_heads = 4;
  size_t n_layers = 2;
  size_t d_ff = 128;
  size_t max_seq_len = 64;
  uint64_t init_seed = 0;

  void validate() const;  // throws InvalidConfig
  size_t head_dim() const { return d_model / n_heads; }
};

/// (name, shape) pairs in the canonical order used everywhere a flat
/// parameter vector is needed (sharding, checkpoints, clipping).
std::vector<std::pair<std::string, std::vector<size_t>>> parameter_layout(const ModelConfig& config);

/// All weight tensors of the decoder-only model, keyed by canonical names.
struct Parameters {
  ModelConfig config;
  std::vector<std::string> names;  // canonical order
  std::vector<Tensor> tensors;     // aligned with names
  std::set<std::string> frozen_names;

  size_t index_of(const std::string& name) const;
  Tensor& get(const std::string& name) { return tensors[index_of(name)]; }
  const Tensor& get(const std::string& name) const { return tensors[index_of(name)]; }
  bool is_frozen(size_t index) const { return frozen_names.count(names[index]) > 0; }
  size_t total_elements() const;

 private:
  mutable std::unordered_map<std::string, size_t> index_;
};

/// Seeded init: weights from N(0, 0.02), biases and layer-norm shifts zero,
/// layer-norm scales one. Bit-identical for identical (config, seed).
Parameters init_params(const ModelConfig& config);

struct Batch {
  size_t batch_size = 0;
  size_t length = 0;
  std::vector<uint32_t> inputs;  // batch_size x length
  std::vector<uint8_t> loss_mask;

  uint32_t input(size_t b, size_t t) const { return inputs[b * length + t]; }
  bool masked(size_t b, size_t t) const { return loss_mask[b * length + t] != 0; }
};

/// Builds a next-token batch from packed sequences: position t is scored iff
/// position t+1 is real content (so pads and each row's final position are
/// excluded).
Batch make_batch(const PackedDataset& dataset, const std::vector<size_t>& indices);

struct ActivationCache;  // opaque; defined in model.cpp

struct ForwardResult {
  std::vector<double> logits;  // batch x length x vocab
  std::shared_ptr<ActivationCache> cache;
};

ForwardResult forward(const Parameters& params, const Batch& batch);

/// Mean negative log-likelihood over masked positions (natural log).
double clm_loss(const std::vector<double>& logits, const Batch& batch, size_t vocab_size);

using Gradients = std::vector<Tensor>;  // aligned with Parameters canonical order

struct LossAndGrads {
  double loss = 0.0;
  Gradients grads;
};

/// Analytic gradients of the batch mean loss; frozen tensors get zeros.
LossAndGrads loss_and_grads(const Parameters& params, const Batch& batch);

/// exp(mean NLL) over every scoreable next-token position in the dataset.
double perplexity(const Parameters& params, const PackedDataset& dataset);

/// Greedy argmax decoding; ties break toward the lowest id. Stops at eos_id,
/// max_new_tokens, or the context limit.
std::vector<uint32_t> generate(const Parameters& params, const std::vector<uint32_t>& prompt,
                               size_t max_new_tokens, uint32_t eos_id);

// Flat-vector view in canonical order (used by the sharded trainer).
std::vector<double> flatten_tensors(const std::vector<Tensor>& tensors);
void unflatten_tensors(const std::vector<double>& flat, std::vector<Tensor>& tensors);

// Parameter container file: magic, version, config hash manifest, then
// per-tensor name, dtype tag, shape, row-major little-endian data.
std::string params_to_bytes(const Parameters& params, uint64_t config_hash);
Parameters params_from_bytes(std::string_view bytes, const ModelConfig& config,
                             uint64_t expected_config_hash);
void save_params(const std::string& path, const Parameters& params, uint64_t config_hash);
Parameters load_params(const std::string& path, const ModelConfig& config,
                       uint64_t expected_config_hash);

}  // namespace dap

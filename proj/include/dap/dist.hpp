// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dap/trainer.hpp"

namespace dap {

struct WorldSpec {
  int num_devices = 1;
  int gpus_per_device = 1;

  int world_size() const { return num_devices * gpus_per_device; }
};

/// Contiguous slice of the concatenated, canonical-order parameter vector
/// owned by one rank, with matching optimizer-moment segments.
struct Shard {
  int rank = 0;
  size_t offset = 0;
  std::vector<double> params;
  std::vector<double> m;
  std::vector<double> v;
};

/// Near-equal contiguous split of [0, total): sizes differ by at most one,
/// larger segments first. Returns (offset, length) per rank.
std::vector<std::pair<size_t, size_t>> split_segments(size_t total, int world_size);

/// Flattens tensors in canonical name order and splits into world_size
/// contiguous segments; concatenating the shards reconstructs the flat
/// vector exactly.
std::vector<Shard> shard_params(const Parameters& params, int world_size);

/// Rebuilds named tensors from shards (inverse of shard_params).
Parameters unshard_params(const std::vector<Shard>& shards, const ModelConfig& config);

/// Strided per-rank view of the seeded epoch permutation, padded by wrapping
/// from the permutation head until divisible by world_size. All ranks get
/// equal-length lists whose union covers every index at least once.
std::vector<size_t> partition_batches(const PackedDataset& dataset, int world_size, int rank,
                                      uint64_t seed, int epoch);

/// Element-wise sum of the per-rank vectors in ascending-rank order, divided
/// by world_size, then segmented like shard_params. Deterministic regardless
/// of how the logical ranks are scheduled.
std::vector<std::vector<double>> reduce_scatter_mean(
    const std::vector<std::vector<double>>& per_rank, int world_size);

/// Fully-sharded data-parallel simulation: each step gathers the full
/// parameter vector from all shards, computes per-rank gradients, averages
/// them over world_size x grad_accum_steps micro-batches via reduce-scatter,
/// and applies AdamW per shard. world_size 1 is bit-identical to train().
TrainOutput distributed_train(const PackedDataset& dataset, const ModelConfig& mc,
                              const TrainConfig& tc, const WorldSpec& world,
                              const std::string& checkpoint_dir);

/// Resumes a sharded checkpoint; a different world size reshards the flat
/// state, which preserves the trajectory when the effective batch matches.
TrainOutput distributed_resume(const std::string& checkpoint_dir, const PackedDataset& dataset,
                               const ModelConfig& mc, const TrainConfig& tc,
                               std::optional<WorldSpec> world = std::nullopt);

/// Merges rank segment files into a single-file parameter container.
void consolidate_checkpoint(const std::string& checkpoint_dir, const std::string& output_path);

}  // namespace dap

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dap/model.hpp"

namespace dap {

struct TrainConfig {
  double learning_rate = 1e-6;  // conservative adaptation-scale default; demo configs override
  int epochs = 1;               // 1-3 expected; >3 warns, >10 is an error
  int micro_batch_size = 1;
  int grad_accum_steps = 1;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double warmup_fraction = 0.1;
  uint64_t seed = 0;
  bool freeze_embeddings = true;
  int64_t checkpoint_interval = 0;  // optimizer steps between saves; 0 = only at end
  double clip_norm = 0.0;           // global-norm clip; 0 = off
  int64_t max_steps = 0;            // stop (as if interrupted) after this many steps; 0 = run to completion

  void validate() const;  // throws InvalidConfig; prints a warning for epochs in (3, 10]
};

/// Linear warmup to the configured rate over ceil(warmup_fraction * total)
/// steps, then cosine decay to zero at step == total_steps.
double lr_at(int64_t step, int64_t total_steps, const TrainConfig& config);

struct OptimizerState {
  std::vector<Tensor> m;  // aligned with Parameters canonical order
  std::vector<Tensor> v;
  int64_t step = 0;
};

OptimizerState init_optimizer(const Parameters& params);

/// Elementwise AdamW update. Shared by the named-tensor and the flat-segment
/// optimizers so both execute the identical arithmetic sequence. bc1/bc2 are
/// the bias corrections 1 - beta^step.
inline void adamw_update(double& p, double& m, double& v, double g, double lr,
                         const TrainConfig& c, double bc1, double bc2) {
  m = c.beta1 * m + (1.0 - c.beta1) * g;
  v = c.beta2 * v + (1.0 - c.beta2) * g * g;
  const double mhat = m / bc1;
  const double vhat = v / bc2;
  const double theta = p;
  p = theta - lr * (mhat / (std::sqrt(vhat) + c.epsilon)) - lr * c.weight_decay * theta;
}

/// One AdamW update: bias-corrected moments, decay applied directly to the
/// pre-update weights, frozen tensors untouched.
void adamw_step(Parameters& params, const Gradients& grads, OptimizerState& state, double lr,
                const TrainConfig& config);

struct Checkpoint {
  Parameters params;
  OptimizerState opt;
  int64_t global_step = 0;
  int epoch = 0;            // next epoch to run (== config epochs when finished)
  int64_t batch_index = 0;  // next accumulation window within that epoch
  int world_size = 1;
  int grad_accum_steps = 1;
  uint64_t train_seed = 0;
  uint64_t config_hash = 0;
  uint64_t data_hash = 0;
  int64_t total_steps = 0;
  bool finished = false;
};

struct MetricsRow {
  int64_t step = 0;
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double running_ppl = 0.0;
};

struct TrainOutput {
  Checkpoint checkpoint;
  std::vector<MetricsRow> metrics;
};

/// Hash binding checkpoints to the (model, trainer) configuration. Gradient
/// accumulation is excluded so a sharded checkpoint can resume at a different
/// world size; the effective batch (GAS x world) is verified separately.
uint64_t train_config_hash(const ModelConfig& mc, const TrainConfig& tc);

/// Single-worker training with per-window gradient accumulation and periodic
/// checkpoints. Deterministic: identical (configs, seed, dataset) give a
/// bit-identical final checkpoint.
TrainOutput train(const PackedDataset& dataset, const ModelConfig& mc, const TrainConfig& tc,
                  const std::string& checkpoint_dir);

/// Continues an interrupted run from its checkpoint; the completed run is
/// bit-identical to one that was never interrupted.
TrainOutput resume(const std::string& checkpoint_dir, const PackedDataset& dataset,
                   const ModelConfig& mc, const TrainConfig& tc);

// Checkpoint directory primitives (shared with the distributed trainer).
void save_checkpoint(const std::string& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& dir, const ModelConfig& mc, const TrainConfig& tc);
bool checkpoint_exists(const std::string& dir);

std::string format_metrics_row(const MetricsRow& row);

}  // namespace dap

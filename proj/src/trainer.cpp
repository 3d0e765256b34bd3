// SPDX-License-Identifier: Apache-2.0

#include "dap/trainer.hpp"

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>

#include <nlohmann/json.hpp>

#include "dap/error.hpp"
#include "dap/hash.hpp"
#include "dap/rng.hpp"
#include "dap/serialize.hpp"

namespace dap {

namespace fs = std::filesystem;
using json = nlohmann::json;

void TrainConfig::validate() const {
  if (epochs < 1 || epochs > 10) {
    raise(ErrorCode::InvalidConfig, "epochs must be in [1, 10], got " + std::to_string(epochs));
  }
  if (epochs > 3) {
    std::fprintf(stderr, "warning: %d epochs exceeds the recommended 1-3 range\n", epochs);
  }
  if (micro_batch_size < 1 || grad_accum_steps < 1) {
    raise(ErrorCode::InvalidConfig, "micro_batch_size and grad_accum_steps must be >= 1");
  }
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    raise(ErrorCode::InvalidConfig, "warmup_fraction must be in [0, 1)");
  }
  if (learning_rate <= 0.0) raise(ErrorCode::InvalidConfig, "learning_rate must be positive");
}

double lr_at(int64_t step, int64_t total_steps, const TrainConfig& config) {
  if (total_steps < 1) raise(ErrorCode::InvalidConfig, "total_steps must be >= 1");
  if (step < 0 || step > total_steps) raise(ErrorCode::InvalidConfig, "step out of range");
  const auto warmup = static_cast<int64_t>(
      std::ceil(config.warmup_fraction * static_cast<double>(total_steps)));
  if (step < warmup) {
    return config.learning_rate * static_cast<double>(step) / static_cast<double>(warmup);
  }
  if (total_steps == warmup) return 0.0;
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(total_steps - warmup);
  return config.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

OptimizerState init_optimizer(const Parameters& params) {
  OptimizerState state;
  state.m.reserve(params.tensors.size());
  state.v.reserve(params.tensors.size());
  for (const auto& t : params.tensors) {
    state.m.emplace_back(Tensor{t.shape});
    state.v.emplace_back(Tensor{t.shape});
  }
  return state;
}

void adamw_step(Parameters& params, const Gradients& grads, OptimizerState& state, double lr,
                const TrainConfig& config) {
  if (grads.size() != params.tensors.size()) {
    raise(ErrorCode::ShapeMismatch, "gradient list does not match parameters");
  }
  for (size_t i = 0; i < grads.size(); ++i) {
    if (params.is_frozen(i)) continue;
    for (double g : grads[i].data) {
      if (!std::isfinite(g)) {
        raise(ErrorCode::NonFiniteGradient, "non-finite gradient in '" + params.names[i] + "'");
      }
    }
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.tensors.size(); ++i) {
    if (params.is_frozen(i)) continue;
    double* p = params.tensors[i].data.data();
    double* m = state.m[i].data.data();
    double* v = state.v[i].data.data();
    const double* g = grads[i].data.data();
    const size_t n = params.tensors[i].numel();
    for (size_t e = 0; e < n; ++e) {
      adamw_update(p[e], m[e], v[e], g[e], lr, config, bc1, bc2);
    }
  }
}

uint64_t train_config_hash(const ModelConfig& mc, const TrainConfig& tc) {
  ByteWriter w;
  w.put_u64(mc.vocab_size);
  w.put_u64(mc.d_model);
  w.put_u64(mc.n_heads);
  w.put_u64(mc.n_layers);
  w.put_u64(mc.d_ff);
  w.put_u64(mc.max_seq_len);
  w.put_u64(mc.init_seed);
  w.put_f64(tc.learning_rate);
  w.put_u64(static_cast<uint64_t>(tc.epochs));
  w.put_u64(static_cast<uint64_t>(tc.micro_batch_size));
  // grad_accum_steps deliberately excluded (see header)
  w.put_f64(tc.weight_decay);
  w.put_f64(tc.beta1);
  w.put_f64(tc.beta2);
  w.put_f64(tc.epsilon);
  w.put_f64(tc.warmup_fraction);
  w.put_u64(tc.seed);
  w.put_u8(tc.freeze_embeddings ? 1 : 0);
  w.put_f64(tc.clip_norm);
  return fnv1a64(w.bytes());
}

std::string format_metrics_row(const MetricsRow& row) {
  char buf[192];
  std::snprintf(buf, sizeof(buf), "step=%" PRId64 " epoch=%d lr=%.17g loss=%.17g ppl=%.17g", row.step,
                row.epoch, row.lr, row.loss, row.running_ppl);
  return buf;
}

// ---------------------------------------------------------------------------
// checkpoint files
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kManifestFile = "manifest.json";
constexpr const char* kParamsFile = "params.bin";
constexpr const char* kOptMFile = "opt_m.bin";
constexpr const char* kOptVFile = "opt_v.bin";

std::string join_path(const std::string& dir, const std::string& file) {
  return (fs::path(dir) / file).string();
}

// Moment containers hold trainable tensors only.
std::string moments_to_bytes(const Parameters& params, const std::vector<Tensor>& moments,
                             uint64_t config_hash) {
  Parameters view;
  view.config = params.config;
  for (size_t i = 0; i < params.tensors.size(); ++i) {
    if (params.is_frozen(i)) continue;
    view.names.push_back(params.names[i]);
    view.tensors.push_back(moments[i]);
  }
  ByteWriter w;
  w.put_u64(config_hash);
  w.put_u32(static_cast<uint32_t>(view.tensors.size()));
  for (size_t i = 0; i < view.tensors.size(); ++i) {
    w.put_string(view.names[i]);
    w.put_u8(static_cast<uint8_t>(view.tensors[i].shape.size()));
    for (size_t d : view.tensors[i].shape) w.put_u64(d);
    for (double x : view.tensors[i].data) w.put_f64(x);
  }
  return w.take();
}

void moments_from_bytes(std::string_view bytes, const Parameters& params, uint64_t config_hash,
                        std::vector<Tensor>& moments) {
  ByteReader r(bytes);
  if (r.get_u64() != config_hash) {
    raise(ErrorCode::ConfigMismatch, "optimizer state belongs to a different config");
  }
  const uint32_t count = r.get_u32();
  moments.clear();
  for (const auto& t : params.tensors) moments.emplace_back(Tensor{t.shape});
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = r.get_string();
    const size_t index = params.index_of(name);
    const uint8_t ndim = r.get_u8();
    std::vector<size_t> shape(ndim);
    for (auto& d : shape) d = r.get_u64();
    if (shape != params.tensors[index].shape) {
      raise(ErrorCode::ConfigMismatch, "moment shape mismatch for '" + name + "'");
    }
    for (double& x : moments[index].data) x = r.get_f64();
  }
  if (!r.at_end()) raise(ErrorCode::InvalidInput, "trailing bytes in optimizer state");
}

}  // namespace

bool checkpoint_exists(const std::string& dir) {
  return fs::exists(fs::path(dir) / kManifestFile);
}

void save_checkpoint(const std::string& dir, const Checkpoint& ckpt) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) raise(ErrorCode::CheckpointWriteFailure, "cannot create '" + dir + "': " + ec.message());

  save_params(join_path(dir, kParamsFile), ckpt.params, ckpt.config_hash);
  atomic_write_file(join_path(dir, kOptMFile),
                    moments_to_bytes(ckpt.params, ckpt.opt.m, ckpt.config_hash),
                    ErrorCode::CheckpointWriteFailure);
  atomic_write_file(join_path(dir, kOptVFile),
                    moments_to_bytes(ckpt.params, ckpt.opt.v, ckpt.config_hash),
                    ErrorCode::CheckpointWriteFailure);

  json manifest;
  manifest["format"] = "dap-checkpoint";
  manifest["version"] = 1;
  manifest["config_hash"] = hash_to_hex(ckpt.config_hash);
  manifest["dataset_hash"] = hash_to_hex(ckpt.data_hash);
  manifest["global_step"] = ckpt.global_step;
  manifest["opt_step"] = ckpt.opt.step;
  manifest["epoch"] = ckpt.epoch;
  manifest["batch_index"] = ckpt.batch_index;
  manifest["world_size"] = ckpt.world_size;
  manifest["grad_accum_steps"] = ckpt.grad_accum_steps;
  manifest["total_steps"] = ckpt.total_steps;
  manifest["finished"] = ckpt.finished;
  manifest["prng"] = {{"train_seed", ckpt.train_seed}, {"init_seed", ckpt.params.config.init_seed}};
  // Manifest written last: a readable manifest implies complete tensor files.
  atomic_write_file(join_path(dir, kManifestFile), manifest.dump(2) + "\n",
                    ErrorCode::CheckpointWriteFailure);
}

Checkpoint load_checkpoint(const std::string& dir, const ModelConfig& mc, const TrainConfig& tc) {
  const std::string manifest_text = read_file(join_path(dir, kManifestFile));
  json manifest = json::parse(manifest_text, nullptr, false);
  if (manifest.is_discarded()) raise(ErrorCode::InvalidInput, "corrupt checkpoint manifest");

  Checkpoint ckpt;
  ckpt.config_hash = hex_to_hash(manifest.at("config_hash").get<std::string>());
  const uint64_t expected = train_config_hash(mc, tc);
  if (ckpt.config_hash != expected) {
    raise(ErrorCode::ConfigMismatch, "checkpoint was trained with a different configuration");
  }
  ckpt.data_hash = hex_to_hash(manifest.at("dataset_hash").get<std::string>());
  ckpt.global_step = manifest.at("global_step").get<int64_t>();
  ckpt.epoch = manifest.at("epoch").get<int>();
  ckpt.batch_index = manifest.at("batch_index").get<int64_t>();
  ckpt.world_size = manifest.at("world_size").get<int>();
  ckpt.grad_accum_steps = manifest.value("grad_accum_steps", 1);
  ckpt.total_steps = manifest.at("total_steps").get<int64_t>();
  ckpt.finished = manifest.at("finished").get<bool>();
  ckpt.train_seed = manifest.at("prng").at("train_seed").get<uint64_t>();

  if (ckpt.world_size != 1) {
    raise(ErrorCode::ConfigMismatch,
          "checkpoint is sharded (world_size " + std::to_string(ckpt.world_size) +
              "); use the distributed loader");
  }
  ckpt.params = load_params(join_path(dir, kParamsFile), mc, ckpt.config_hash);
  if (tc.freeze_embeddings) ckpt.params.frozen_names.insert("token_embedding");
  ckpt.opt.step = manifest.at("opt_step").get<int64_t>();
  moments_from_bytes(read_file(join_path(dir, kOptMFile)), ckpt.params, ckpt.config_hash, ckpt.opt.m);
  moments_from_bytes(read_file(join_path(dir, kOptVFile)), ckpt.params, ckpt.config_hash, ckpt.opt.v);
  return ckpt;
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

namespace {

struct EpochShape {
  int64_t micro_batches = 0;
  int64_t windows = 0;  // optimizer steps per epoch
};

EpochShape epoch_shape(size_t n_sequences, const TrainConfig& tc) {
  EpochShape shape;
  shape.micro_batches = static_cast<int64_t>(
      (n_sequences + tc.micro_batch_size - 1) / static_cast<size_t>(tc.micro_batch_size));
  shape.windows = (shape.micro_batches + tc.grad_accum_steps - 1) / tc.grad_accum_steps;
  return shape;
}

void append_metrics(const std::string& dir, const std::vector<MetricsRow>& rows, bool truncate) {
  std::ofstream out(fs::path(dir) / "metrics.log",
                    truncate ? std::ios::trunc : std::ios::app);
  for (const auto& row : rows) out << format_metrics_row(row) << "\n";
}

void clip_gradients(Gradients& grads, double clip_norm) {
  if (clip_norm <= 0.0) return;
  double sum_sq = 0.0;
  for (const auto& g : grads) {
    for (double x : g.data) sum_sq += x * x;
  }
  const double norm = std::sqrt(sum_sq);
  if (norm <= clip_norm) return;
  const double scale = clip_norm / norm;
  for (auto& g : grads) {
    for (double& x : g.data) x *= scale;
  }
}

TrainOutput run_single_worker(const PackedDataset& dataset, const TrainConfig& tc,
                              const std::string& dir, Checkpoint state, bool fresh_run) {
  const size_t n = dataset.sequences.size();
  const EpochShape shape = epoch_shape(n, tc);
  const int64_t total_steps = static_cast<int64_t>(tc.epochs) * shape.windows;
  if (state.total_steps != 0 && state.total_steps != total_steps) {
    raise(ErrorCode::ConfigMismatch, "checkpoint total_steps does not match this run");
  }
  state.total_steps = total_steps;

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) raise(ErrorCode::CheckpointWriteFailure, "cannot create '" + dir + "': " + ec.message());

  TrainOutput output;
  if (fresh_run) append_metrics(dir, {}, /*truncate=*/true);

  int64_t steps_taken_now = 0;
  double epoch_loss_sum = 0.0;
  int64_t epoch_steps = 0;
  bool interrupted = false;

  for (int epoch = state.epoch; epoch < tc.epochs && !interrupted; ++epoch) {
    const std::vector<size_t> perm = epoch_permutation(n, tc.seed, epoch);
    const int64_t first_window = (epoch == state.epoch) ? state.batch_index : 0;
    // On a mid-epoch resume the running-PPL metric restarts at the resume
    // point; parameter state is exact regardless.
    epoch_loss_sum = 0.0;
    epoch_steps = 0;

    for (int64_t window = first_window; window < shape.windows; ++window) {
      Gradients accum;
      accum.reserve(state.params.tensors.size());
      for (const auto& t : state.params.tensors) accum.emplace_back(Tensor{t.shape});

      double loss_sum = 0.0;
      int64_t micro_count = 0;
      const int64_t micro_begin = window * tc.grad_accum_steps;
      const int64_t micro_end = std::min<int64_t>(shape.micro_batches,
                                                  micro_begin + tc.grad_accum_steps);
      for (int64_t mb = micro_begin; mb < micro_end; ++mb) {
        const size_t lo = static_cast<size_t>(mb) * static_cast<size_t>(tc.micro_batch_size);
        const size_t hi = std::min(n, lo + static_cast<size_t>(tc.micro_batch_size));
        std::vector<size_t> indices(perm.begin() + static_cast<std::ptrdiff_t>(lo),
                                    perm.begin() + static_cast<std::ptrdiff_t>(hi));
        LossAndGrads lg = loss_and_grads(state.params, make_batch(dataset, indices));
        for (size_t i = 0; i < accum.size(); ++i) {
          double* a = accum[i].data.data();
          const double* g = lg.grads[i].data.data();
          for (size_t e = 0; e < accum[i].numel(); ++e) a[e] += g[e];
        }
        loss_sum += lg.loss;
        ++micro_count;
      }
      const double divisor = static_cast<double>(micro_count);
      for (auto& g : accum) {
        for (double& x : g.data) x = x / divisor;
      }
      const double step_loss = loss_sum / divisor;

      clip_gradients(accum, tc.clip_norm);
      const double lr = lr_at(state.global_step, total_steps, tc);
      adamw_step(state.params, accum, state.opt, lr, tc);
      state.global_step += 1;
      steps_taken_now += 1;

      epoch_loss_sum += step_loss;
      epoch_steps += 1;
      MetricsRow row{state.global_step, epoch, lr, step_loss,
                     std::exp(epoch_loss_sum / static_cast<double>(epoch_steps))};
      output.metrics.push_back(row);

      // Advance the resume cursor past this window.
      if (window + 1 == shape.windows) {
        state.epoch = epoch + 1;
        state.batch_index = 0;
      } else {
        state.epoch = epoch;
        state.batch_index = window + 1;
      }
      state.finished = (state.epoch == tc.epochs);

      const bool interval_hit =
          tc.checkpoint_interval > 0 && state.global_step % tc.checkpoint_interval == 0;
      if (interval_hit && !state.finished) save_checkpoint(dir, state);

      if (tc.max_steps > 0 && steps_taken_now >= tc.max_steps && !state.finished) {
        interrupted = true;
        break;
      }
    }
  }

  save_checkpoint(dir, state);
  append_metrics(dir, output.metrics, /*truncate=*/false);
  output.checkpoint = std::move(state);
  return output;
}

}  // namespace

TrainOutput train(const PackedDataset& dataset, const ModelConfig& mc, const TrainConfig& tc,
                  const std::string& checkpoint_dir) {
  mc.validate();
  tc.validate();
  if (dataset.sequences.empty()) raise(ErrorCode::EmptyDataset, "training dataset is empty");

  Checkpoint state;
  state.params = init_params(mc);
  if (tc.freeze_embeddings) state.params.frozen_names.insert("token_embedding");
  state.opt = init_optimizer(state.params);
  state.world_size = 1;
  state.grad_accum_steps = tc.grad_accum_steps;
  state.train_seed = tc.seed;
  state.config_hash = train_config_hash(mc, tc);
  state.data_hash = dataset_hash(dataset);
  return run_single_worker(dataset, tc, checkpoint_dir, std::move(state), /*fresh_run=*/true);
}

TrainOutput resume(const std::string& checkpoint_dir, const PackedDataset& dataset,
                   const ModelConfig& mc, const TrainConfig& tc) {
  mc.validate();
  tc.validate();
  if (dataset.sequences.empty()) raise(ErrorCode::EmptyDataset, "training dataset is empty");

  Checkpoint state = load_checkpoint(checkpoint_dir, mc, tc);
  if (state.data_hash != dataset_hash(dataset)) {
    raise(ErrorCode::DatasetHashMismatch, "dataset differs from the one this run started on");
  }
  if (state.grad_accum_steps * state.world_size != tc.grad_accum_steps) {
    raise(ErrorCode::ConfigMismatch, "effective batch (grad_accum_steps x world_size) changed");
  }
  if (state.finished) {
    TrainOutput output;
    output.checkpoint = std::move(state);
    return output;
  }
  state.grad_accum_steps = tc.grad_accum_steps;
  state.world_size = 1;
  return run_single_worker(dataset, tc, checkpoint_dir, std::move(state), /*fresh_run=*/false);
}

}  // namespace dap

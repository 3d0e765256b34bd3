// SPDX-License-Identifier: Apache-2.0

#include "dap/dist.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "dap/error.hpp"
#include "dap/hash.hpp"
#include "dap/rng.hpp"
#include "dap/serialize.hpp"

namespace dap {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::vector<std::pair<size_t, size_t>> split_segments(size_t total, int world_size) {
  if (world_size < 1) raise(ErrorCode::InvalidConfig, "world_size must be >= 1");
  const size_t ws = static_cast<size_t>(world_size);
  const size_t base = total / ws;
  const size_t extra = total % ws;
  std::vector<std::pair<size_t, size_t>> segments;
  segments.reserve(ws);
  size_t offset = 0;
  for (size_t r = 0; r < ws; ++r) {
    const size_t len = base + (r < extra ? 1 : 0);
    segments.emplace_back(offset, len);
    offset += len;
  }
  return segments;
}

std::vector<Shard> shard_params(const Parameters& params, int world_size) {
  const std::vector<double> flat = flatten_tensors(params.tensors);
  const auto segments = split_segments(flat.size(), world_size);
  std::vector<Shard> shards;
  shards.reserve(segments.size());
  for (size_t r = 0; r < segments.size(); ++r) {
    Shard shard;
    shard.rank = static_cast<int>(r);
    shard.offset = segments[r].first;
    shard.params.assign(flat.begin() + static_cast<std::ptrdiff_t>(segments[r].first),
                        flat.begin() + static_cast<std::ptrdiff_t>(segments[r].first + segments[r].second));
    shard.m.assign(shard.params.size(), 0.0);
    shard.v.assign(shard.params.size(), 0.0);
    shards.push_back(std::move(shard));
  }
  return shards;
}

Parameters unshard_params(const std::vector<Shard>& shards, const ModelConfig& config) {
  Parameters params;
  params.config = config;
  for (const auto& [name, shape] : parameter_layout(config)) {
    params.names.push_back(name);
    params.tensors.emplace_back(Tensor{shape});
  }
  std::vector<double> flat;
  flat.reserve(params.total_elements());
  for (const auto& shard : shards) {
    flat.insert(flat.end(), shard.params.begin(), shard.params.end());
  }
  unflatten_tensors(flat, params.tensors);
  return params;
}

std::vector<size_t> partition_batches(const PackedDataset& dataset, int world_size, int rank,
                                      uint64_t seed, int epoch) {
  if (rank < 0 || rank >= world_size) raise(ErrorCode::InvalidConfig, "rank out of range");
  const size_t n = dataset.sequences.size();
  std::vector<size_t> padded = epoch_permutation(n, seed, epoch);
  size_t wrap = 0;
  while (padded.size() % static_cast<size_t>(world_size) != 0) {
    padded.push_back(padded[wrap % n]);
    ++wrap;
  }
  std::vector<size_t> mine;
  mine.reserve(padded.size() / static_cast<size_t>(world_size));
  for (size_t p = static_cast<size_t>(rank); p < padded.size(); p += static_cast<size_t>(world_size)) {
    mine.push_back(padded[p]);
  }
  return mine;
}

std::vector<std::vector<double>> reduce_scatter_mean(
    const std::vector<std::vector<double>>& per_rank, int world_size) {
  if (world_size < 1 || per_rank.size() != static_cast<size_t>(world_size)) {
    raise(ErrorCode::LengthMismatch, "expected one gradient vector per rank");
  }
  const size_t length = per_rank[0].size();
  for (const auto& v : per_rank) {
    if (v.size() != length) raise(ErrorCode::LengthMismatch, "rank gradient lengths differ");
  }
  // Fixed ascending-rank summation order; this is what makes the collective
  // reproducible no matter how the logical ranks were scheduled.
  std::vector<double> acc(length, 0.0);
  for (const auto& v : per_rank) {
    for (size_t e = 0; e < length; ++e) acc[e] += v[e];
  }
  const double ws = static_cast<double>(world_size);
  for (double& x : acc) x = x / ws;

  std::vector<std::vector<double>> out;
  for (const auto& [offset, len] : split_segments(length, world_size)) {
    out.emplace_back(acc.begin() + static_cast<std::ptrdiff_t>(offset),
                     acc.begin() + static_cast<std::ptrdiff_t>(offset + len));
  }
  return out;
}

// ---------------------------------------------------------------------------
// sharded checkpoint files
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kManifestFile = "manifest.json";
constexpr char kSegmentMagic[4] = {'D', 'A', 'P', 'S'};
constexpr uint32_t kSegmentVersion = 1;

struct DistState {
  std::vector<double> params;  // master flat vectors, canonical order
  std::vector<double> m;
  std::vector<double> v;
  int64_t opt_step = 0;
  int64_t global_step = 0;
  int epoch = 0;
  int64_t batch_index = 0;
  bool finished = false;
  int64_t total_steps = 0;
  int world_size = 1;
  int grad_accum_steps = 1;
  uint64_t config_hash = 0;
  uint64_t data_hash = 0;
  uint64_t train_seed = 0;
};

std::string join_path(const std::string& dir, const std::string& file) {
  return (fs::path(dir) / file).string();
}

std::string segment_to_bytes(uint64_t config_hash, int rank, size_t offset,
                             const double* data, size_t len) {
  ByteWriter w;
  w.put_bytes(std::string_view(kSegmentMagic, 4));
  w.put_u32(kSegmentVersion);
  w.put_u64(config_hash);
  w.put_u32(static_cast<uint32_t>(rank));
  w.put_u64(offset);
  w.put_u64(len);
  for (size_t e = 0; e < len; ++e) w.put_f64(data[e]);
  return w.take();
}

void segment_from_bytes(std::string_view bytes, uint64_t config_hash, int rank,
                        std::vector<double>& master) {
  ByteReader r(bytes);
  if (r.get_bytes(4) != std::string_view(kSegmentMagic, 4)) {
    raise(ErrorCode::InvalidInput, "not a shard segment file");
  }
  if (r.get_u32() != kSegmentVersion) raise(ErrorCode::InvalidInput, "unsupported segment version");
  if (r.get_u64() != config_hash) raise(ErrorCode::ConfigMismatch, "segment config hash mismatch");
  if (r.get_u32() != static_cast<uint32_t>(rank)) {
    raise(ErrorCode::InvalidInput, "segment rank does not match file name");
  }
  const uint64_t offset = r.get_u64();
  const uint64_t len = r.get_u64();
  if (offset + len > master.size()) raise(ErrorCode::LengthMismatch, "segment exceeds flat vector");
  for (uint64_t e = 0; e < len; ++e) master[offset + e] = r.get_f64();
}

json model_config_to_json(const ModelConfig& c) {
  return json{{"vocab_size", c.vocab_size}, {"d_model", c.d_model},       {"n_heads", c.n_heads},
              {"n_layers", c.n_layers},     {"d_ff", c.d_ff},             {"max_seq_len", c.max_seq_len},
              {"init_seed", c.init_seed}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<size_t>();
  c.d_model = j.at("d_model").get<size_t>();
  c.n_heads = j.at("n_heads").get<size_t>();
  c.n_layers = j.at("n_layers").get<size_t>();
  c.d_ff = j.at("d_ff").get<size_t>();
  c.max_seq_len = j.at("max_seq_len").get<size_t>();
  c.init_seed = j.at("init_seed").get<uint64_t>();
  return c;
}

void save_sharded(const std::string& dir, const DistState& state, const ModelConfig& mc) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) raise(ErrorCode::CheckpointWriteFailure, "cannot create '" + dir + "': " + ec.message());

  const auto segments = split_segments(state.params.size(), state.world_size);
  json seg_table = json::array();
  for (size_t r = 0; r < segments.size(); ++r) {
    const auto [offset, len] = segments[r];
    const int rank = static_cast<int>(r);
    atomic_write_file(join_path(dir, "params_rank" + std::to_string(r) + ".bin"),
                      segment_to_bytes(state.config_hash, rank, offset, state.params.data() + offset, len),
                      ErrorCode::CheckpointWriteFailure);
    atomic_write_file(join_path(dir, "opt_m_rank" + std::to_string(r) + ".bin"),
                      segment_to_bytes(state.config_hash, rank, offset, state.m.data() + offset, len),
                      ErrorCode::CheckpointWriteFailure);
    atomic_write_file(join_path(dir, "opt_v_rank" + std::to_string(r) + ".bin"),
                      segment_to_bytes(state.config_hash, rank, offset, state.v.data() + offset, len),
                      ErrorCode::CheckpointWriteFailure);
    seg_table.push_back({{"rank", rank}, {"offset", offset}, {"length", len}});
  }

  json manifest;
  manifest["format"] = "dap-checkpoint";
  manifest["version"] = 1;
  manifest["config_hash"] = hash_to_hex(state.config_hash);
  manifest["dataset_hash"] = hash_to_hex(state.data_hash);
  manifest["global_step"] = state.global_step;
  manifest["opt_step"] = state.opt_step;
  manifest["epoch"] = state.epoch;
  manifest["batch_index"] = state.batch_index;
  manifest["world_size"] = state.world_size;
  manifest["grad_accum_steps"] = state.grad_accum_steps;
  manifest["total_steps"] = state.total_steps;
  manifest["finished"] = state.finished;
  manifest["prng"] = {{"train_seed", state.train_seed}, {"init_seed", mc.init_seed}};
  manifest["model"] = model_config_to_json(mc);
  manifest["segments"] = std::move(seg_table);
  atomic_write_file(join_path(dir, kManifestFile), manifest.dump(2) + "\n",
                    ErrorCode::CheckpointWriteFailure);
}

DistState load_sharded(const std::string& dir, const ModelConfig& mc, const TrainConfig& tc,
                       size_t flat_size) {
  json manifest = json::parse(read_file(join_path(dir, kManifestFile)), nullptr, false);
  if (manifest.is_discarded()) raise(ErrorCode::InvalidInput, "corrupt checkpoint manifest");
  if (!manifest.contains("segments")) {
    raise(ErrorCode::ConfigMismatch, "checkpoint is not sharded; use the single-worker loader");
  }

  DistState state;
  state.config_hash = hex_to_hash(manifest.at("config_hash").get<std::string>());
  if (state.config_hash != train_config_hash(mc, tc)) {
    raise(ErrorCode::ConfigMismatch, "checkpoint was trained with a different configuration");
  }
  state.data_hash = hex_to_hash(manifest.at("dataset_hash").get<std::string>());
  state.global_step = manifest.at("global_step").get<int64_t>();
  state.opt_step = manifest.at("opt_step").get<int64_t>();
  state.epoch = manifest.at("epoch").get<int>();
  state.batch_index = manifest.at("batch_index").get<int64_t>();
  state.world_size = manifest.at("world_size").get<int>();
  state.grad_accum_steps = manifest.at("grad_accum_steps").get<int>();
  state.total_steps = manifest.at("total_steps").get<int64_t>();
  state.finished = manifest.at("finished").get<bool>();
  state.train_seed = manifest.at("prng").at("train_seed").get<uint64_t>();

  state.params.assign(flat_size, 0.0);
  state.m.assign(flat_size, 0.0);
  state.v.assign(flat_size, 0.0);
  for (int r = 0; r < state.world_size; ++r) {
    segment_from_bytes(read_file(join_path(dir, "params_rank" + std::to_string(r) + ".bin")),
                       state.config_hash, r, state.params);
    segment_from_bytes(read_file(join_path(dir, "opt_m_rank" + std::to_string(r) + ".bin")),
                       state.config_hash, r, state.m);
    segment_from_bytes(read_file(join_path(dir, "opt_v_rank" + std::to_string(r) + ".bin")),
                       state.config_hash, r, state.v);
  }
  return state;
}

std::vector<uint8_t> frozen_flat_mask(const Parameters& params) {
  std::vector<uint8_t> mask(flatten_tensors(params.tensors).size(), 0);
  size_t offset = 0;
  for (size_t i = 0; i < params.tensors.size(); ++i) {
    const size_t n = params.tensors[i].numel();
    if (params.is_frozen(i)) std::fill(mask.begin() + offset, mask.begin() + offset + n, 1);
    offset += n;
  }
  return mask;
}

void append_metrics(const std::string& dir, const std::vector<MetricsRow>& rows, bool truncate) {
  std::ofstream out(fs::path(dir) / "metrics.log", truncate ? std::ios::trunc : std::ios::app);
  for (const auto& row : rows) out << format_metrics_row(row) << "\n";
}

Checkpoint to_checkpoint(const DistState& state, const ModelConfig& mc, const TrainConfig& tc) {
  Checkpoint ckpt;
  ckpt.params.config = mc;
  for (const auto& [name, shape] : parameter_layout(mc)) {
    ckpt.params.names.push_back(name);
    ckpt.params.tensors.emplace_back(Tensor{shape});
  }
  unflatten_tensors(state.params, ckpt.params.tensors);
  if (tc.freeze_embeddings) ckpt.params.frozen_names.insert("token_embedding");
  ckpt.opt = init_optimizer(ckpt.params);
  unflatten_tensors(state.m, ckpt.opt.m);
  unflatten_tensors(state.v, ckpt.opt.v);
  ckpt.opt.step = state.opt_step;
  ckpt.global_step = state.global_step;
  ckpt.epoch = state.epoch;
  ckpt.batch_index = state.batch_index;
  ckpt.world_size = state.world_size;
  ckpt.grad_accum_steps = state.grad_accum_steps;
  ckpt.train_seed = state.train_seed;
  ckpt.config_hash = state.config_hash;
  ckpt.data_hash = state.data_hash;
  ckpt.total_steps = state.total_steps;
  ckpt.finished = state.finished;
  return ckpt;
}

TrainOutput run_distributed(const PackedDataset& dataset, const ModelConfig& mc,
                            const TrainConfig& tc, const std::string& dir, DistState state,
                            bool fresh_run) {
  const int ws = state.world_size;
  const size_t n = dataset.sequences.size();
  const size_t padded_n = ((n + static_cast<size_t>(ws) - 1) / static_cast<size_t>(ws)) *
                          static_cast<size_t>(ws);
  const size_t per_rank = padded_n / static_cast<size_t>(ws);
  const int64_t micro_per_rank = static_cast<int64_t>(
      (per_rank + static_cast<size_t>(tc.micro_batch_size) - 1) /
      static_cast<size_t>(tc.micro_batch_size));
  const int64_t windows = (micro_per_rank + tc.grad_accum_steps - 1) / tc.grad_accum_steps;
  const int64_t total_steps = static_cast<int64_t>(tc.epochs) * windows;
  if (state.total_steps != 0 && state.total_steps != total_steps) {
    raise(ErrorCode::ConfigMismatch, "checkpoint total_steps does not match this run");
  }
  state.total_steps = total_steps;

  // Working view of the full parameters, refilled from the master flat vector
  // at every gather.
  Parameters view;
  view.config = mc;
  for (const auto& [name, shape] : parameter_layout(mc)) {
    view.names.push_back(name);
    view.tensors.emplace_back(Tensor{shape});
  }
  if (tc.freeze_embeddings) view.frozen_names.insert("token_embedding");
  const std::vector<uint8_t> frozen = frozen_flat_mask(view);
  const size_t flat_size = state.params.size();
  const auto segments = split_segments(flat_size, ws);

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
    std::vector<std::vector<size_t>> rank_indices;
    rank_indices.reserve(static_cast<size_t>(ws));
    for (int r = 0; r < ws; ++r) {
      rank_indices.push_back(partition_batches(dataset, ws, r, tc.seed, epoch));
    }
    const int64_t first_window = (epoch == state.epoch) ? state.batch_index : 0;
    epoch_loss_sum = 0.0;
    epoch_steps = 0;

    for (int64_t window = first_window; window < windows; ++window) {
      // Gather: every logical rank sees the full parameter vector.
      unflatten_tensors(state.params, view.tensors);

      std::vector<std::vector<double>> rank_grads;
      rank_grads.reserve(static_cast<size_t>(ws));
      std::vector<double> rank_losses(static_cast<size_t>(ws), 0.0);
      int64_t micro_count = 0;
      for (int r = 0; r < ws; ++r) {
        std::vector<double> local(flat_size, 0.0);
        double local_loss = 0.0;
        int64_t local_micro = 0;
        const int64_t micro_begin = window * tc.grad_accum_steps;
        const int64_t micro_end = std::min(micro_per_rank, micro_begin + tc.grad_accum_steps);
        for (int64_t mb = micro_begin; mb < micro_end; ++mb) {
          const size_t lo = static_cast<size_t>(mb) * static_cast<size_t>(tc.micro_batch_size);
          const size_t hi =
              std::min(rank_indices[static_cast<size_t>(r)].size(),
                       lo + static_cast<size_t>(tc.micro_batch_size));
          std::vector<size_t> indices(
              rank_indices[static_cast<size_t>(r)].begin() + static_cast<std::ptrdiff_t>(lo),
              rank_indices[static_cast<size_t>(r)].begin() + static_cast<std::ptrdiff_t>(hi));
          LossAndGrads lg = loss_and_grads(view, make_batch(dataset, indices));
          const std::vector<double> flat_grad = flatten_tensors(lg.grads);
          for (size_t e = 0; e < flat_size; ++e) local[e] += flat_grad[e];
          local_loss += lg.loss;
          ++local_micro;
        }
        rank_grads.push_back(std::move(local));
        rank_losses[static_cast<size_t>(r)] = local_loss;
        micro_count = local_micro;  // equal across ranks (padded lists)
      }

      std::vector<std::vector<double>> grad_segments = reduce_scatter_mean(rank_grads, ws);
      const double k = static_cast<double>(micro_count);
      for (auto& seg : grad_segments) {
        for (double& x : seg) x = x / k;
      }

      double loss_total = 0.0;
      for (int r = 0; r < ws; ++r) loss_total += rank_losses[static_cast<size_t>(r)];
      const double step_loss = loss_total / static_cast<double>(ws) / k;

      if (tc.clip_norm > 0.0) {
        double sum_sq = 0.0;
        for (const auto& seg : grad_segments) {
          for (double x : seg) sum_sq += x * x;
        }
        const double norm = std::sqrt(sum_sq);
        if (norm > tc.clip_norm) {
          const double scale = tc.clip_norm / norm;
          for (auto& seg : grad_segments) {
            for (double& x : seg) x *= scale;
          }
        }
      }

      for (int r = 0; r < ws; ++r) {
        for (double g : grad_segments[static_cast<size_t>(r)]) {
          if (!std::isfinite(g)) raise(ErrorCode::NonFiniteGradient, "non-finite gradient");
        }
      }

      const double lr = lr_at(state.global_step, total_steps, tc);
      state.opt_step += 1;
      const double bc1 = 1.0 - std::pow(tc.beta1, static_cast<double>(state.opt_step));
      const double bc2 = 1.0 - std::pow(tc.beta2, static_cast<double>(state.opt_step));
      for (int r = 0; r < ws; ++r) {
        const auto [offset, len] = segments[static_cast<size_t>(r)];
        const std::vector<double>& seg = grad_segments[static_cast<size_t>(r)];
        for (size_t e = 0; e < len; ++e) {
          const size_t abs_index = offset + e;
          if (frozen[abs_index]) continue;
          adamw_update(state.params[abs_index], state.m[abs_index], state.v[abs_index], seg[e], lr,
                       tc, bc1, bc2);
        }
      }
      state.global_step += 1;
      steps_taken_now += 1;

      epoch_loss_sum += step_loss;
      epoch_steps += 1;
      output.metrics.push_back({state.global_step, epoch, lr, step_loss,
                                std::exp(epoch_loss_sum / static_cast<double>(epoch_steps))});

      if (window + 1 == windows) {
        state.epoch = epoch + 1;
        state.batch_index = 0;
      } else {
        state.epoch = epoch;
        state.batch_index = window + 1;
      }
      state.finished = (state.epoch == tc.epochs);

      const bool interval_hit =
          tc.checkpoint_interval > 0 && state.global_step % tc.checkpoint_interval == 0;
      if (interval_hit && !state.finished) save_sharded(dir, state, mc);

      if (tc.max_steps > 0 && steps_taken_now >= tc.max_steps && !state.finished) {
        interrupted = true;
        break;
      }
    }
  }

  save_sharded(dir, state, mc);
  append_metrics(dir, output.metrics, /*truncate=*/false);
  output.checkpoint = to_checkpoint(state, mc, tc);
  return output;
}

}  // namespace

TrainOutput distributed_train(const PackedDataset& dataset, const ModelConfig& mc,
                              const TrainConfig& tc, const WorldSpec& world,
                              const std::string& checkpoint_dir) {
  mc.validate();
  tc.validate();
  if (world.world_size() < 1) raise(ErrorCode::InvalidConfig, "world_size must be >= 1");
  if (dataset.sequences.empty()) raise(ErrorCode::EmptyDataset, "training dataset is empty");

  Parameters params = init_params(mc);
  if (tc.freeze_embeddings) params.frozen_names.insert("token_embedding");

  DistState state;
  state.params = flatten_tensors(params.tensors);
  state.m.assign(state.params.size(), 0.0);
  state.v.assign(state.params.size(), 0.0);
  state.world_size = world.world_size();
  state.grad_accum_steps = tc.grad_accum_steps;
  state.train_seed = tc.seed;
  state.config_hash = train_config_hash(mc, tc);
  state.data_hash = dataset_hash(dataset);
  return run_distributed(dataset, mc, tc, checkpoint_dir, std::move(state), /*fresh_run=*/true);
}

TrainOutput distributed_resume(const std::string& checkpoint_dir, const PackedDataset& dataset,
                               const ModelConfig& mc, const TrainConfig& tc,
                               std::optional<WorldSpec> world) {
  mc.validate();
  tc.validate();
  if (dataset.sequences.empty()) raise(ErrorCode::EmptyDataset, "training dataset is empty");

  size_t flat_size = 0;
  for (const auto& [name, shape] : parameter_layout(mc)) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    flat_size += n;
  }
  DistState state = load_sharded(checkpoint_dir, mc, tc, flat_size);
  if (state.data_hash != dataset_hash(dataset)) {
    raise(ErrorCode::DatasetHashMismatch, "dataset differs from the one this run started on");
  }

  const int new_ws = world ? world->world_size() : state.world_size;
  if (state.grad_accum_steps * state.world_size != tc.grad_accum_steps * new_ws) {
    raise(ErrorCode::ConfigMismatch, "effective batch (grad_accum_steps x world_size) changed");
  }
  if (state.finished) {
    TrainOutput output;
    output.checkpoint = to_checkpoint(state, mc, tc);
    return output;
  }
  // Resharding is just new segment boundaries over the same flat state.
  state.world_size = new_ws;
  state.grad_accum_steps = tc.grad_accum_steps;
  return run_distributed(dataset, mc, tc, checkpoint_dir, std::move(state), /*fresh_run=*/false);
}

void consolidate_checkpoint(const std::string& checkpoint_dir, const std::string& output_path) {
  json manifest = json::parse(read_file(join_path(checkpoint_dir, kManifestFile)), nullptr, false);
  if (manifest.is_discarded()) raise(ErrorCode::InvalidInput, "corrupt checkpoint manifest");

  if (!manifest.contains("segments")) {
    // Single-worker checkpoint: the parameter container already exists.
    atomic_write_file(output_path, read_file(join_path(checkpoint_dir, "params.bin")));
    return;
  }

  const ModelConfig mc = model_config_from_json(manifest.at("model"));
  const uint64_t config_hash = hex_to_hash(manifest.at("config_hash").get<std::string>());
  const int ws = manifest.at("world_size").get<int>();

  Parameters params;
  params.config = mc;
  size_t flat_size = 0;
  for (const auto& [name, shape] : parameter_layout(mc)) {
    params.names.push_back(name);
    params.tensors.emplace_back(Tensor{shape});
    flat_size += params.tensors.back().numel();
  }
  std::vector<double> flat(flat_size, 0.0);
  for (int r = 0; r < ws; ++r) {
    segment_from_bytes(read_file(join_path(checkpoint_dir, "params_rank" + std::to_string(r) + ".bin")),
                       config_hash, r, flat);
  }
  unflatten_tensors(flat, params.tensors);
  save_params(output_path, params, config_hash);
}

}  // namespace dap

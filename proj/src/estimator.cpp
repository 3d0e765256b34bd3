// SPDX-License-Identifier: Apache-2.0

#include "dap/estimator.hpp"

#include <nlohmann/json.hpp>

#include "dap/error.hpp"
#include "dap/serialize.hpp"

namespace dap {

using json = nlohmann::json;

double model_bytes(double params_billions, int bytes_per_param) {
  if (params_billions <= 0) raise(ErrorCode::InvalidInput, "params_billions must be positive");
  if (bytes_per_param != 2 && bytes_per_param != 4) {
    raise(ErrorCode::InvalidInput, "bytes_per_param must be 2 or 4");
  }
  return params_billions * 1e9 * static_cast<double>(bytes_per_param);
}

std::pair<double, double> training_memory_range(double model_size_bytes) {
  if (model_size_bytes <= 0) raise(ErrorCode::InvalidInput, "model size must be positive");
  return {3.0 * model_size_bytes, 5.0 * model_size_bytes};
}

long long effective_batch(int mbs, int gas, int num_devices, int gpus_per_device) {
  if (mbs < 1 || gas < 1 || num_devices < 1 || gpus_per_device < 1) {
    raise(ErrorCode::InvalidInput, "all batch factors must be >= 1");
  }
  return static_cast<long long>(mbs) * gas * num_devices * gpus_per_device;
}

double compute_capacity(int num_gpus, double tflops_per_gpu) {
  if (num_gpus < 1) raise(ErrorCode::InvalidInput, "need at least one GPU");
  if (tflops_per_gpu <= 0) raise(ErrorCode::InvalidInput, "tflops_per_gpu must be positive");
  return static_cast<double>(num_gpus) * tflops_per_gpu;
}

double bytes_to_gib(double bytes) { return bytes / (1024.0 * 1024.0 * 1024.0); }

bool alpha_in_range(double alpha) { return alpha >= 3.0 && alpha <= 5.0; }

std::vector<InstancePreset> load_instance_presets(const std::string& path) {
  json doc = json::parse(read_file(path), nullptr, false);
  if (doc.is_discarded() || !doc.is_array()) {
    raise(ErrorCode::InvalidInput, "instance preset file must be a JSON array");
  }
  std::vector<InstancePreset> presets;
  for (const auto& entry : doc) {
    InstancePreset preset;
    preset.name = entry.at("name").get<std::string>();
    preset.num_gpus = entry.at("num_gpus").get<int>();
    preset.gpu_type = entry.at("gpu_type").get<std::string>();
    preset.mem_per_gpu_gib = entry.at("mem_per_gpu_gib").get<double>();
    preset.tflops_fp16 = entry.at("tflops_fp16").get<double>();
    preset.price_per_hour = entry.at("price_per_hour").get<double>();
    presets.push_back(std::move(preset));
  }
  return presets;
}

}  // namespace dap

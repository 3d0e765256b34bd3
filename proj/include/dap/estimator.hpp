// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <utility>
#include <vector>

namespace dap {

/// Closed-form resource estimates. Everything here is exact arithmetic on
/// the inputs; units are SI bytes (1e9 per "billion").
struct ResourceQuery {
  double params_billions = 8.0;
  int bytes_per_param = 4;  // 2 = half precision
  double alpha = 4.0;       // training-memory multiplier, expected in [3, 5]
  int mbs = 1;
  int gas = 1;
  int num_devices = 1;
  int gpus_per_device = 1;
  double tflops_per_gpu = 0.0;
};

double model_bytes(double params_billions, int bytes_per_param);
std::pair<double, double> training_memory_range(double model_size_bytes);
long long effective_batch(int mbs, int gas, int num_devices, int gpus_per_device);
double compute_capacity(int num_gpus, double tflops_per_gpu);

double bytes_to_gib(double bytes);

/// True when alpha sits inside the expected [3, 5] band (out-of-band values
/// warn, they are not errors).
bool alpha_in_range(double alpha);

struct InstancePreset {
  std::string name;
  int num_gpus = 0;
  std::string gpu_type;
  double mem_per_gpu_gib = 0.0;
  double tflops_fp16 = 0.0;
  double price_per_hour = 0.0;
};

/// Loads instance presets from a JSON data file (array of objects with keys
/// name, num_gpus, gpu_type, mem_per_gpu_gib, tflops_fp16, price_per_hour).
std::vector<InstancePreset> load_instance_presets(const std::string& path);

}  // namespace dap

// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "dap/error.hpp"
#include "dap/fixture.hpp"
#include "dap/model.hpp"
#include "dap/rng.hpp"
#include "dap/serialize.hpp"

using namespace dap;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.vocab_size = 13;
  c.d_model = 12;
  c.n_heads = 3;
  c.n_layers = 2;
  c.d_ff = 20;
  c.max_seq_len = 8;
  c.init_seed = 77;
  return c;
}

Batch random_batch(const ModelConfig& c, size_t batch_size, uint64_t seed) {
  SplitMix64 rng(seed);
  Batch batch;
  batch.batch_size = batch_size;
  batch.length = c.max_seq_len;
  batch.inputs.resize(batch_size * batch.length);
  batch.loss_mask.assign(batch.inputs.size(), 0);
  for (size_t b = 0; b < batch_size; ++b) {
    // Rows alternate between full content and a short (padded) tail.
    const size_t content = (b % 2 == 0) ? batch.length : batch.length - 3;
    for (size_t t = 0; t < batch.length; ++t) {
      batch.inputs[b * batch.length + t] =
          t < content ? static_cast<uint32_t>(rng.next_below(c.vocab_size)) : 0;
      batch.loss_mask[b * batch.length + t] = (t + 1 < content) ? 1 : 0;
    }
  }
  return batch;
}

Parameters zero_params(const ModelConfig& c) {
  Parameters params = init_params(c);
  for (auto& tensor : params.tensors) tensor.fill(0.0);
  return params;
}

// Model whose logits are a constant row: final_ln scale zeroed, shift set to
// e0, lm_head row 0 carrying the wanted logits.
Parameters constant_logit_params(const ModelConfig& c, const std::vector<double>& logits) {
  Parameters params = zero_params(c);
  params.get("final_ln.shift").data[0] = 1.0;
  Tensor& head = params.get("lm_head");
  for (size_t v = 0; v < c.vocab_size; ++v) head(0, v) = logits[v];
  return params;
}

}  // namespace

TEST_CASE("init is deterministic and follows the stated scheme") {
  const ModelConfig c = tiny_config();
  const Parameters a = init_params(c);
  const Parameters b = init_params(c);
  REQUIRE(a.tensors.size() == b.tensors.size());
  for (size_t i = 0; i < a.tensors.size(); ++i) {
    CHECK(a.tensors[i].data == b.tensors[i].data);  // bit-identical
  }
  for (double x : a.get("layers.0.ln1.scale").data) CHECK(x == 1.0);
  for (double x : a.get("final_ln.shift").data) CHECK(x == 0.0);
  for (double x : a.get("layers.1.ff.b1").data) CHECK(x == 0.0);
}

TEST_CASE("config validation") {
  ModelConfig c = tiny_config();
  c.d_model = 65;
  c.n_heads = 4;
  CHECK_THROWS_AS(init_params(c), Error);
  c = tiny_config();
  c.max_seq_len = 1;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("causality: prefix logits are exactly invariant to suffix edits") {
  const ModelConfig c = tiny_config();
  const Parameters params = init_params(c);
  Batch batch = random_batch(c, 2, 5);
  const ForwardResult base = forward(params, batch);

  const size_t t_edit = 5;
  for (size_t b = 0; b < batch.batch_size; ++b) {
    for (size_t t = t_edit; t < batch.length; ++t) {
      batch.inputs[b * batch.length + t] =
          (batch.inputs[b * batch.length + t] + 1 + static_cast<uint32_t>(t)) %
          static_cast<uint32_t>(c.vocab_size);
    }
  }
  const ForwardResult edited = forward(params, batch);
  for (size_t b = 0; b < batch.batch_size; ++b) {
    for (size_t t = 0; t < t_edit; ++t) {
      for (size_t v = 0; v < c.vocab_size; ++v) {
        const size_t at = (b * batch.length + t) * c.vocab_size + v;
        CHECK(base.logits[at] == edited.logits[at]);
      }
    }
  }
}

TEST_CASE("empty batch gives empty logits") {
  const ModelConfig c = tiny_config();
  const Parameters params = init_params(c);
  Batch batch;
  batch.batch_size = 0;
  batch.length = 0;
  CHECK(forward(params, batch).logits.empty());
}

TEST_CASE("softmax rows of the logits are normalized") {
  const ModelConfig c = tiny_config();
  const Parameters params = init_params(c);
  const Batch batch = random_batch(c, 2, 9);
  const ForwardResult fwd = forward(params, batch);
  for (size_t row = 0; row < batch.batch_size * batch.length; ++row) {
    const double* logits = fwd.logits.data() + row * c.vocab_size;
    const double max_logit = *std::max_element(logits, logits + c.vocab_size);
    double z = 0.0;
    for (size_t v = 0; v < c.vocab_size; ++v) z += std::exp(logits[v] - max_logit);
    double sum = 0.0;
    for (size_t v = 0; v < c.vocab_size; ++v) sum += std::exp(logits[v] - max_logit) / z;
    CHECK(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("uniform logits give loss ln V") {
  const ModelConfig c = tiny_config();
  const Parameters params = zero_params(c);  // every logit is exactly 0
  const Batch batch = random_batch(c, 2, 3);
  const ForwardResult fwd = forward(params, batch);
  const double loss = clm_loss(fwd.logits, batch, c.vocab_size);
  CHECK(loss == doctest::Approx(std::log(static_cast<double>(c.vocab_size))).epsilon(1e-12));
}

TEST_CASE("near-one target probability drives loss to zero") {
  const ModelConfig c = tiny_config();
  const uint32_t winner = 5;
  std::vector<double> logits(c.vocab_size, 0.0);
  logits[winner] = 60.0;
  const Parameters params = constant_logit_params(c, logits);

  Batch batch;
  batch.batch_size = 1;
  batch.length = 4;
  batch.inputs.assign(4, winner);
  batch.loss_mask = {1, 1, 1, 0};
  const ForwardResult fwd = forward(params, batch);
  CHECK(clm_loss(fwd.logits, batch, c.vocab_size) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("empty mask is an error") {
  const ModelConfig c = tiny_config();
  const Parameters params = init_params(c);
  Batch batch = random_batch(c, 1, 2);
  std::fill(batch.loss_mask.begin(), batch.loss_mask.end(), 0);
  const ForwardResult fwd = forward(params, batch);
  CHECK_THROWS_AS(clm_loss(fwd.logits, batch, c.vocab_size), Error);
  CHECK_THROWS_AS(loss_and_grads(params, batch), Error);
}

TEST_CASE("all-pad row with zero mask adds nothing to the loss") {
  const ModelConfig c = tiny_config();
  const Parameters params = init_params(c);
  const Batch one = random_batch(c, 1, 13);

  Batch two = one;
  two.batch_size = 2;
  two.inputs.resize(2 * two.length, 0);
  two.loss_mask.resize(2 * two.length, 0);
  CHECK(clm_loss(forward(params, two).logits, two, c.vocab_size) ==
        clm_loss(forward(params, one).logits, one, c.vocab_size));
}

TEST_CASE("frozen tensors receive exactly zero gradient") {
  const ModelConfig c = tiny_config();
  Parameters params = init_params(c);
  params.frozen_names.insert("token_embedding");
  const Batch batch = random_batch(c, 2, 21);
  const LossAndGrads lg = loss_and_grads(params, batch);
  for (double g : lg.grads[params.index_of("token_embedding")].data) CHECK(g == 0.0);
  // A trainable tensor does get gradient signal.
  double head_norm = 0.0;
  for (double g : lg.grads[params.index_of("lm_head")].data) head_norm += g * g;
  CHECK(head_norm > 0.0);
}

TEST_CASE("gradients are bit-identical across repeated calls") {
  const ModelConfig c = tiny_config();
  const Parameters params = init_params(c);
  const Batch batch = random_batch(c, 2, 31);
  const LossAndGrads a = loss_and_grads(params, batch);
  const LossAndGrads b = loss_and_grads(params, batch);
  CHECK(a.loss == b.loss);
  for (size_t i = 0; i < a.grads.size(); ++i) CHECK(a.grads[i].data == b.grads[i].data);
}

TEST_CASE("analytic gradients match central finite differences") {
  // Central differences with eps 1e-4 over every parameter of the tiny model.
  // Relative error uses max(|analytic|, |numeric|, 1e-3) as denominator so
  // near-zero entries are held to a 1e-7 absolute bound.
  const ModelConfig c = tiny_config();
  Parameters params = init_params(c);
  const Batch batch = random_batch(c, 2, 41);
  const LossAndGrads analytic = loss_and_grads(params, batch);

  const double eps = 1e-4;
  double max_rel = 0.0;
  for (size_t i = 0; i < params.tensors.size(); ++i) {
    for (size_t e = 0; e < params.tensors[i].numel(); ++e) {
      const double saved = params.tensors[i].data[e];
      params.tensors[i].data[e] = saved + eps;
      const double up = clm_loss(forward(params, batch).logits, batch, c.vocab_size);
      params.tensors[i].data[e] = saved - eps;
      const double down = clm_loss(forward(params, batch).logits, batch, c.vocab_size);
      params.tensors[i].data[e] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic.grads[i].data[e];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-3});
      max_rel = std::max(max_rel, rel);
    }
  }
  CHECK(max_rel < 1e-4);
}

TEST_CASE("perplexity of the uniform model equals V") {
  const ModelConfig c = tiny_config();
  const Parameters params = zero_params(c);
  const PackedDataset dataset = synthetic_dataset(6, c.max_seq_len, c.vocab_size, 3, true);
  const double ppl = perplexity(params, dataset);
  CHECK(std::abs(ppl - static_cast<double>(c.vocab_size)) /
            static_cast<double>(c.vocab_size) <
        1e-6);
}

TEST_CASE("perplexity of a certain model is 1") {
  const ModelConfig c = tiny_config();
  const uint32_t winner = 4;
  std::vector<double> logits(c.vocab_size, 0.0);
  logits[winner] = 60.0;
  const Parameters params = constant_logit_params(c, logits);

  PackedDataset dataset;
  dataset.seq_len = c.max_seq_len;
  dataset.sequences.push_back(std::vector<uint32_t>(c.max_seq_len, winner));
  dataset.pad_counts.push_back(0);
  dataset.doc_ids.push_back("d");
  CHECK(perplexity(params, dataset) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("perplexity of an empty dataset is an error") {
  const ModelConfig c = tiny_config();
  const Parameters params = init_params(c);
  CHECK_THROWS_AS(perplexity(params, PackedDataset{}), Error);
}

TEST_CASE("generate: limits, eos stop, greedy ties") {
  const ModelConfig c = tiny_config();

  // max_new_tokens 0 returns the prompt unchanged.
  const Parameters params = init_params(c);
  const std::vector<uint32_t> prompt = {1, 4, 5};
  CHECK(generate(params, prompt, 0, 2) == prompt);

  // A model that always prefers eos appends exactly one eos.
  std::vector<double> eos_logits(c.vocab_size, 0.0);
  eos_logits[2] = 50.0;
  const Parameters eos_params = constant_logit_params(c, eos_logits);
  const auto with_eos = generate(eos_params, prompt, 10, 2);
  REQUIRE(with_eos.size() == prompt.size() + 1);
  CHECK(with_eos.back() == 2);

  // All-equal logits: the tie breaks toward the lowest id.
  const Parameters uniform = zero_params(c);
  CHECK(generate(uniform, prompt, 1, 2).back() == 0);

  // Prompt at the context limit is rejected.
  const std::vector<uint32_t> long_prompt(c.max_seq_len, 4);
  CHECK_THROWS_AS(generate(params, long_prompt, 1, 2), Error);

  // Generation stops at the context limit.
  std::vector<double> word_logits(c.vocab_size, 0.0);
  word_logits[5] = 50.0;
  const Parameters word_params = constant_logit_params(c, word_logits);
  CHECK(generate(word_params, prompt, 100, 2).size() == c.max_seq_len);
}

TEST_CASE("flatten and unflatten are exact inverses") {
  const ModelConfig c = tiny_config();
  const Parameters params = init_params(c);
  const std::vector<double> flat = flatten_tensors(params.tensors);
  CHECK(flat.size() == params.total_elements());
  Parameters rebuilt = init_params(c);
  for (auto& t : rebuilt.tensors) t.fill(0.0);
  unflatten_tensors(flat, rebuilt.tensors);
  for (size_t i = 0; i < params.tensors.size(); ++i) {
    CHECK(rebuilt.tensors[i].data == params.tensors[i].data);
  }
}

TEST_CASE("parameter container round-trips and checks its config hash") {
  const ModelConfig c = tiny_config();
  const Parameters params = init_params(c);
  const std::string path = (std::filesystem::temp_directory_path() / "dap_params_rt.bin").string();
  save_params(path, params, 0x1234);
  const Parameters loaded = load_params(path, c, 0x1234);
  for (size_t i = 0; i < params.tensors.size(); ++i) {
    CHECK(loaded.tensors[i].data == params.tensors[i].data);
  }
  CHECK_THROWS_AS(load_params(path, c, 0x9999), Error);
  std::filesystem::remove(path);
}

TEST_CASE("make_batch masks pads and the final position") {
  const PackedDataset dataset = synthetic_dataset(5, 8, 12, 17, true);
  const Batch batch = make_batch(dataset, {0, 4});
  // Row 0 is pad-free: scoreable positions 0..6.
  for (size_t t = 0; t < 8; ++t) CHECK(batch.masked(0, t) == (t < 7));
  // Row 4 has 3 pads: content 5, scoreable positions 0..3.
  for (size_t t = 0; t < 8; ++t) CHECK(batch.masked(1, t) == (t < 4));
}

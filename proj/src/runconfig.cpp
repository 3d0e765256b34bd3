// SPDX-License-Identifier: Apache-2.0

#include "dap/runconfig.hpp"

#include <set>

#include <nlohmann/json.hpp>

#include "dap/error.hpp"
#include "dap/hash.hpp"
#include "dap/serialize.hpp"

namespace dap {

using json = nlohmann::json;

namespace {

void reject_unknown(const json& section, const std::set<std::string>& known,
                    const std::string& where) {
  for (const auto& [key, value] : section.items()) {
    if (!known.count(key)) {
      raise(ErrorCode::InvalidInput, "unknown config key '" + where + "." + key + "'");
    }
  }
}

CleanRule::Action action_from_name(const std::string& name) {
  if (name == "delete_match") return CleanRule::Action::delete_match;
  if (name == "delete_line") return CleanRule::Action::delete_line;
  raise(ErrorCode::InvalidInput, "unknown rule action '" + name + "'");
}

const char* action_name(CleanRule::Action action) {
  return action == CleanRule::Action::delete_match ? "delete_match" : "delete_line";
}

}  // namespace

ModelConfig RunConfig::model_config(size_t vocab_size) const {
  ModelConfig mc;
  mc.vocab_size = vocab_size;
  mc.d_model = model.d_model;
  mc.n_heads = model.n_heads;
  mc.n_layers = model.n_layers;
  mc.d_ff = model.d_ff;
  mc.max_seq_len = tokenizer.seq_len;
  mc.init_seed = model.init_seed;
  return mc;
}

RunConfig parse_run_config(const std::string& json_text) {
  json doc = json::parse(json_text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    raise(ErrorCode::InvalidInput, "config is not a JSON object");
  }
  reject_unknown(doc, {"corpus", "tokenizer", "model", "trainer", "world", "eval"}, "config");

  RunConfig config;
  if (doc.contains("corpus")) {
    const json& section = doc.at("corpus");
    reject_unknown(section,
                   {"seed", "ratio", "budgets", "keywords", "threshold", "use_default_rules",
                    "extra_rules"},
                   "corpus");
    config.corpus.seed = section.value("seed", config.corpus.seed);
    config.corpus.ratio = section.value("ratio", config.corpus.ratio);
    config.corpus.threshold = section.value("threshold", config.corpus.threshold);
    config.corpus.use_default_rules =
        section.value("use_default_rules", config.corpus.use_default_rules);
    if (section.contains("budgets")) {
      for (const auto& entry : section.at("budgets")) {
        config.corpus.budgets.emplace_back(entry.at(0).get<std::string>(),
                                           entry.at(1).get<uint64_t>());
      }
    }
    if (section.contains("keywords")) {
      for (const auto& entry : section.at("keywords")) {
        config.corpus.keywords.emplace_back(entry.at(0).get<std::string>(),
                                            entry.at(1).get<double>());
      }
    }
    if (section.contains("extra_rules")) {
      for (const auto& entry : section.at("extra_rules")) {
        CleanRule rule;
        rule.name = entry.at("name").get<std::string>();
        rule.pattern = entry.at("pattern").get<std::string>();
        rule.action = action_from_name(entry.at("action").get<std::string>());
        config.corpus.extra_rules.push_back(std::move(rule));
      }
    }
  }
  if (doc.contains("tokenizer")) {
    const json& section = doc.at("tokenizer");
    reject_unknown(section, {"vocab", "seq_len"}, "tokenizer");
    config.tokenizer.vocab_path = section.value("vocab", config.tokenizer.vocab_path);
    config.tokenizer.seq_len = section.value("seq_len", config.tokenizer.seq_len);
  }
  if (doc.contains("model")) {
    const json& section = doc.at("model");
    reject_unknown(section, {"d_model", "n_heads", "n_layers", "d_ff", "init_seed"}, "model");
    config.model.d_model = section.value("d_model", config.model.d_model);
    config.model.n_heads = section.value("n_heads", config.model.n_heads);
    config.model.n_layers = section.value("n_layers", config.model.n_layers);
    config.model.d_ff = section.value("d_ff", config.model.d_ff);
    config.model.init_seed = section.value("init_seed", config.model.init_seed);
  }
  if (doc.contains("trainer")) {
    const json& section = doc.at("trainer");
    reject_unknown(section,
                   {"learning_rate", "epochs", "micro_batch_size", "grad_accum_steps",
                    "weight_decay", "beta1", "beta2", "epsilon", "warmup_fraction", "seed",
                    "freeze_embeddings", "checkpoint_interval", "clip_norm", "max_steps"},
                   "trainer");
    TrainConfig& tc = config.trainer;
    tc.learning_rate = section.value("learning_rate", tc.learning_rate);
    tc.epochs = section.value("epochs", tc.epochs);
    tc.micro_batch_size = section.value("micro_batch_size", tc.micro_batch_size);
    tc.grad_accum_steps = section.value("grad_accum_steps", tc.grad_accum_steps);
    tc.weight_decay = section.value("weight_decay", tc.weight_decay);
    tc.beta1 = section.value("beta1", tc.beta1);
    tc.beta2 = section.value("beta2", tc.beta2);
    tc.epsilon = section.value("epsilon", tc.epsilon);
    tc.warmup_fraction = section.value("warmup_fraction", tc.warmup_fraction);
    tc.seed = section.value("seed", tc.seed);
    tc.freeze_embeddings = section.value("freeze_embeddings", tc.freeze_embeddings);
    tc.checkpoint_interval = section.value("checkpoint_interval", tc.checkpoint_interval);
    tc.clip_norm = section.value("clip_norm", tc.clip_norm);
    tc.max_steps = section.value("max_steps", tc.max_steps);
  }
  if (doc.contains("world")) {
    const json& section = doc.at("world");
    reject_unknown(section, {"num_devices", "gpus_per_device"}, "world");
    config.world.num_devices = section.value("num_devices", config.world.num_devices);
    config.world.gpus_per_device = section.value("gpus_per_device", config.world.gpus_per_device);
  }
  if (doc.contains("eval")) {
    const json& section = doc.at("eval");
    reject_unknown(section,
                   {"prompt_template", "letters", "explanations", "max_new_tokens", "sample_n",
                    "sample_seed"},
                   "eval");
    config.eval.prompt_template = section.value("prompt_template", config.eval.prompt_template);
    config.eval.letters = section.value("letters", config.eval.letters);
    config.eval.explanations = section.value("explanations", config.eval.explanations);
    config.eval.max_new_tokens = section.value("max_new_tokens", config.eval.max_new_tokens);
    if (section.contains("sample_n")) config.eval.sample_n = section.at("sample_n").get<size_t>();
    config.eval.sample_seed = section.value("sample_seed", config.eval.sample_seed);
  }
  return config;
}

RunConfig load_run_config(const std::string& path) { return parse_run_config(read_file(path)); }

std::string run_config_to_json(const RunConfig& config) {
  json doc;
  json budgets = json::array();
  for (const auto& [name, tokens] : config.corpus.budgets) {
    budgets.push_back(json::array({name, tokens}));
  }
  json keywords = json::array();
  for (const auto& [term, weight] : config.corpus.keywords) {
    keywords.push_back(json::array({term, weight}));
  }
  json rules = json::array();
  for (const auto& rule : config.corpus.extra_rules) {
    rules.push_back(
        {{"name", rule.name}, {"pattern", rule.pattern}, {"action", action_name(rule.action)}});
  }
  doc["corpus"] = {{"seed", config.corpus.seed},
                   {"ratio", config.corpus.ratio},
                   {"budgets", std::move(budgets)},
                   {"keywords", std::move(keywords)},
                   {"threshold", config.corpus.threshold},
                   {"use_default_rules", config.corpus.use_default_rules},
                   {"extra_rules", std::move(rules)}};
  doc["tokenizer"] = {{"vocab", config.tokenizer.vocab_path}, {"seq_len", config.tokenizer.seq_len}};
  doc["model"] = {{"d_model", config.model.d_model},
                  {"n_heads", config.model.n_heads},
                  {"n_layers", config.model.n_layers},
                  {"d_ff", config.model.d_ff},
                  {"init_seed", config.model.init_seed}};
  doc["trainer"] = {{"learning_rate", config.trainer.learning_rate},
                    {"epochs", config.trainer.epochs},
                    {"micro_batch_size", config.trainer.micro_batch_size},
                    {"grad_accum_steps", config.trainer.grad_accum_steps},
                    {"weight_decay", config.trainer.weight_decay},
                    {"beta1", config.trainer.beta1},
                    {"beta2", config.trainer.beta2},
                    {"epsilon", config.trainer.epsilon},
                    {"warmup_fraction", config.trainer.warmup_fraction},
                    {"seed", config.trainer.seed},
                    {"freeze_embeddings", config.trainer.freeze_embeddings},
                    {"checkpoint_interval", config.trainer.checkpoint_interval},
                    {"clip_norm", config.trainer.clip_norm},
                    {"max_steps", config.trainer.max_steps}};
  doc["world"] = {{"num_devices", config.world.num_devices},
                  {"gpus_per_device", config.world.gpus_per_device}};
  json eval = {{"prompt_template", config.eval.prompt_template},
               {"letters", config.eval.letters},
               {"explanations", config.eval.explanations},
               {"max_new_tokens", config.eval.max_new_tokens},
               {"sample_seed", config.eval.sample_seed}};
  if (config.eval.sample_n) eval["sample_n"] = *config.eval.sample_n;
  doc["eval"] = std::move(eval);
  return doc.dump(2) + "\n";
}

uint64_t run_config_hash(const RunConfig& config) {
  // nlohmann objects serialize with sorted keys, so the dump of the effective
  // config is canonical.
  return fnv1a64(run_config_to_json(config));
}

}  // namespace dap

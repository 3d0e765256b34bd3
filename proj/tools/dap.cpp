// SPDX-License-Identifier: Apache-2.0
//
// Single executable exposing the adaptation pipeline as subcommands:
// prep -> split -> pack -> train/resume -> consolidate -> eval, plus the
// resource estimator and a synthetic fixture generator. Stages communicate
// only through files with recorded content hashes.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dap/corpus.hpp"
#include "dap/dist.hpp"
#include "dap/error.hpp"
#include "dap/estimator.hpp"
#include "dap/eval.hpp"
#include "dap/fixture.hpp"
#include "dap/hash.hpp"
#include "dap/model.hpp"
#include "dap/runconfig.hpp"
#include "dap/serialize.hpp"
#include "dap/trainer.hpp"
#include "dap/vocab.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

struct GlobalOptions {
  std::string config_path;
  std::optional<uint64_t> seed_override;
  std::optional<int> world_override;
};

dap::RunConfig load_config(const GlobalOptions& global) {
  std::string path = global.config_path;
  if (path.empty()) {
    if (const char* env = std::getenv("DAP_CONFIG")) path = env;
  }
  if (path.empty()) {
    dap::raise(dap::ErrorCode::InvalidInput, "no config: pass --config or set DAP_CONFIG");
  }
  dap::RunConfig config = dap::load_run_config(path);
  if (global.seed_override) {
    config.corpus.seed = *global.seed_override;
    config.trainer.seed = *global.seed_override;
  }
  if (global.world_override) {
    config.world.num_devices = *global.world_override;
    config.world.gpus_per_device = 1;
  }
  return config;
}

std::vector<dap::CleanRule> effective_rules(const dap::RunConfig& config) {
  std::vector<dap::CleanRule> rules;
  if (config.corpus.use_default_rules) rules = dap::default_clean_rules();
  for (const auto& rule : config.corpus.extra_rules) rules.push_back(rule);
  return rules;
}

dap::Vocab require_vocab(const dap::RunConfig& config) {
  if (config.tokenizer.vocab_path.empty()) {
    dap::raise(dap::ErrorCode::InvalidInput, "config tokenizer.vocab is required for this command");
  }
  return dap::load_vocab(config.tokenizer.vocab_path);
}

size_t count_words(const std::string& text) {
  size_t count = 0;
  bool in_word = false;
  for (char ch : text) {
    const bool ws = ch == ' ' || ch == '\n' || ch == '\t' || ch == '\r';
    if (!ws && !in_word) ++count;
    in_word = !ws;
  }
  return count;
}

// ---------------------------------------------------------------------------
// prep
// ---------------------------------------------------------------------------

void cmd_prep(const GlobalOptions& global, const std::string& input_dir,
              const std::string& output_path) {
  const dap::RunConfig config = load_config(global);
  const auto rules = effective_rules(config);

  json manifest = json::parse(dap::read_file((fs::path(input_dir) / "manifest.json").string()),
                              nullptr, false);
  if (manifest.is_discarded() || !manifest.contains("docs")) {
    dap::raise(dap::ErrorCode::NoInput, "input manifest.json missing or invalid");
  }
  if (manifest.at("docs").empty()) dap::raise(dap::ErrorCode::NoInput, "manifest lists no documents");

  std::optional<dap::Vocab> vocab;
  if (!config.tokenizer.vocab_path.empty()) vocab = dap::load_vocab(config.tokenizer.vocab_path);

  struct CategoryStats {
    size_t docs = 0;
    size_t words = 0;
    size_t tokens = 0;
  };
  std::map<std::string, CategoryStats> stats;
  std::vector<dap::CorpusRecord> all_records;
  size_t filtered_out = 0;

  for (const auto& entry : manifest.at("docs")) {
    dap::RawDocument doc;
    doc.id = entry.at("id").get<std::string>();
    doc.category = dap::category_from_name(entry.at("category").get<std::string>());
    doc.source = entry.value("source", "");
    doc.text = dap::read_file((fs::path(input_dir) / entry.at("file").get<std::string>()).string());

    if (!config.corpus.keywords.empty() || config.corpus.threshold > 0.0) {
      if (!dap::relevance_filter(doc, config.corpus.keywords, config.corpus.threshold)) {
        ++filtered_out;
        continue;
      }
    }
    const std::string cleaned = dap::clean_text(doc, rules);
    const auto paragraphs = dap::segment_paragraphs(cleaned);
    const auto records = dap::to_records(doc.id, paragraphs);

    CategoryStats& cs = stats[dap::category_name(doc.category)];
    cs.docs += 1;
    cs.words += count_words(cleaned);
    if (vocab) {
      for (const auto& record : records) cs.tokens += dap::encode(*vocab, record.text).size();
    }
    all_records.insert(all_records.end(), records.begin(), records.end());
  }

  dap::atomic_write_file(output_path, dap::records_to_jsonl(all_records));

  std::printf("%-10s %8s %10s %10s\n", "category", "docs", "words", "tokens");
  for (const auto& [category, cs] : stats) {
    if (vocab) {
      std::printf("%-10s %8zu %10zu %10zu\n", category.c_str(), cs.docs, cs.words, cs.tokens);
    } else {
      std::printf("%-10s %8zu %10zu %10s\n", category.c_str(), cs.docs, cs.words, "-");
    }
  }
  std::printf("records=%zu filtered_docs=%zu -> %s\n", all_records.size(), filtered_out,
              output_path.c_str());
}

// ---------------------------------------------------------------------------
// split / pack
// ---------------------------------------------------------------------------

void cmd_split(const GlobalOptions& global, const std::string& corpus_path,
               const std::string& output_path) {
  const dap::RunConfig config = load_config(global);
  const dap::Vocab vocab = require_vocab(config);

  const std::string corpus_bytes = dap::read_file(corpus_path);
  const auto records = dap::records_from_jsonl(corpus_bytes);
  auto counter = [&vocab](const dap::CorpusRecord& record) {
    return dap::encode(vocab, record.text).size();
  };
  dap::SplitManifest manifest = dap::split_and_variant(records, config.corpus.ratio,
                                                       config.corpus.seed, config.corpus.budgets,
                                                       counter);
  manifest.corpus_hash = dap::fnv1a64(corpus_bytes);
  dap::atomic_write_file(output_path, dap::manifest_to_json(manifest));

  std::printf("records=%zu train=%zu test=%zu seed=%llu\n", records.size(),
              manifest.train_ids.size(), manifest.test_ids.size(),
              static_cast<unsigned long long>(manifest.seed));
  for (const auto& variant : manifest.variants) {
    std::printf("variant %-10s budget=%llu records=%zu\n", variant.name.c_str(),
                static_cast<unsigned long long>(variant.token_budget), variant.records.size());
  }
}

void cmd_pack(const GlobalOptions& global, const std::string& corpus_path,
              const std::string& split_path, const std::string& subset,
              const std::string& output_path) {
  const dap::RunConfig config = load_config(global);
  const dap::Vocab vocab = require_vocab(config);

  const std::string corpus_bytes = dap::read_file(corpus_path);
  const dap::SplitManifest manifest = dap::manifest_from_json(dap::read_file(split_path));
  if (manifest.corpus_hash != 0 && manifest.corpus_hash != dap::fnv1a64(corpus_bytes)) {
    dap::raise(dap::ErrorCode::StaleArtifact,
               "corpus file changed since the split manifest was written");
  }

  const std::vector<dap::RecordId>* selected = nullptr;
  if (subset == "train") {
    selected = &manifest.train_ids;
  } else if (subset == "test") {
    selected = &manifest.test_ids;
  } else {
    for (const auto& variant : manifest.variants) {
      if (variant.name == subset) {
        selected = &variant.records;
        break;
      }
    }
  }
  if (selected == nullptr) {
    dap::raise(dap::ErrorCode::InvalidInput,
               "subset must be 'train', 'test', or a variant name; got '" + subset + "'");
  }

  std::set<dap::RecordId> wanted(selected->begin(), selected->end());
  std::vector<dap::CorpusRecord> records;
  for (const auto& record : dap::records_from_jsonl(corpus_bytes)) {
    if (wanted.count({record.doc_id, record.seq})) records.push_back(record);
  }
  if (records.size() != wanted.size()) {
    dap::raise(dap::ErrorCode::StaleArtifact, "split manifest references records missing from corpus");
  }

  const dap::PackedDataset dataset = dap::pack(vocab, records, config.tokenizer.seq_len);
  dap::save_packed(output_path, dataset);

  size_t pad_total = 0;
  for (uint32_t p : dataset.pad_counts) pad_total += p;
  const size_t total_ids = dataset.sequences.size() * dataset.seq_len;
  std::printf("sequences=%zu seq_len=%zu non_pad_tokens=%zu pad_fraction=%.4f hash=%s\n",
              dataset.sequences.size(), dataset.seq_len, total_ids - pad_total,
              total_ids == 0 ? 0.0 : static_cast<double>(pad_total) / static_cast<double>(total_ids),
              dap::hash_to_hex(dap::dataset_hash(dataset)).c_str());
}

// ---------------------------------------------------------------------------
// train / resume / consolidate
// ---------------------------------------------------------------------------

bool checkpoint_is_sharded(const std::string& dir) {
  json manifest = json::parse(dap::read_file((fs::path(dir) / "manifest.json").string()), nullptr,
                              false);
  if (manifest.is_discarded()) dap::raise(dap::ErrorCode::InvalidInput, "corrupt checkpoint manifest");
  return manifest.contains("segments");
}

void report_training(const dap::TrainOutput& output) {
  if (!output.metrics.empty()) {
    const auto& last = output.metrics.back();
    std::printf("steps=%lld final_loss=%.6f final_ppl=%.6f\n",
                static_cast<long long>(output.checkpoint.global_step), last.loss, last.running_ppl);
  } else {
    std::printf("steps=%lld (no new steps)\n",
                static_cast<long long>(output.checkpoint.global_step));
  }
}

void cmd_train(const GlobalOptions& global, const std::string& data_path,
               const std::string& checkpoint_dir) {
  const dap::RunConfig config = load_config(global);
  const dap::Vocab vocab = require_vocab(config);
  const dap::PackedDataset dataset = dap::load_packed(data_path, vocab.pad_id);
  const dap::ModelConfig mc = config.model_config(vocab.size());

  const int world_size = config.world.world_size();
  dap::TrainOutput output;
  if (world_size == 1) {
    output = dap::train(dataset, mc, config.trainer, checkpoint_dir);
  } else {
    output = dap::distributed_train(dataset, mc, config.trainer, config.world, checkpoint_dir);
  }
  std::printf("world_size=%d ", world_size);
  report_training(output);
}

void cmd_resume(const GlobalOptions& global, const std::string& data_path,
                const std::string& checkpoint_dir) {
  const dap::RunConfig config = load_config(global);
  const dap::Vocab vocab = require_vocab(config);
  const dap::PackedDataset dataset = dap::load_packed(data_path, vocab.pad_id);
  const dap::ModelConfig mc = config.model_config(vocab.size());

  dap::TrainOutput output;
  if (checkpoint_is_sharded(checkpoint_dir)) {
    std::optional<dap::WorldSpec> world;
    if (global.world_override) world = config.world;
    output = dap::distributed_resume(checkpoint_dir, dataset, mc, config.trainer, world);
  } else {
    if (global.world_override && *global.world_override != 1) {
      dap::raise(dap::ErrorCode::ConfigMismatch,
                 "checkpoint is single-worker; only sharded checkpoints resume at another world size");
    }
    output = dap::resume(checkpoint_dir, dataset, mc, config.trainer);
  }
  report_training(output);
}

void cmd_consolidate(const std::string& checkpoint_dir, const std::string& output_path) {
  dap::consolidate_checkpoint(checkpoint_dir, output_path);
  std::printf("wrote %s\n", output_path.c_str());
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

void cmd_eval(const GlobalOptions& global, const std::string& benchmark_path,
              const std::string& responses_path, const std::string& params_path,
              const std::string& output_path) {
  const dap::RunConfig config = load_config(global);
  const auto items = dap::load_benchmark(benchmark_path);

  dap::EvalOptions options;
  if (!config.eval.prompt_template.empty()) options.prompt_template = config.eval.prompt_template;
  options.letters = config.eval.letters;
  options.explanations = config.eval.explanations;
  options.max_new_tokens = config.eval.max_new_tokens;
  options.sample_n = config.eval.sample_n;
  options.sample_seed = config.eval.sample_seed;

  dap::EvalReport report;
  if (!responses_path.empty()) {
    report = dap::evaluate(items, dap::load_responses(responses_path), options);
  } else if (!params_path.empty()) {
    const dap::Vocab vocab = require_vocab(config);
    const dap::ModelConfig mc = config.model_config(vocab.size());
    const dap::Parameters params =
        dap::load_params(params_path, mc, dap::train_config_hash(mc, config.trainer));
    dap::ModelSource source{&params, &vocab};
    report = dap::evaluate(items, source, options);
  } else {
    dap::raise(dap::ErrorCode::InvalidInput, "eval needs --responses or --params");
  }

  if (!output_path.empty()) dap::atomic_write_file(output_path, dap::report_to_json(report));
  std::fputs(dap::report_to_table(report).c_str(), stdout);
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

void cmd_estimate(const dap::ResourceQuery& query, const std::string& instances_path,
                  bool as_json) {
  const double bytes = dap::model_bytes(query.params_billions, query.bytes_per_param);
  const auto [mem_low, mem_high] = dap::training_memory_range(bytes);
  const long long batch =
      dap::effective_batch(query.mbs, query.gas, query.num_devices, query.gpus_per_device);
  const int world = query.num_devices * query.gpus_per_device;

  if (!dap::alpha_in_range(query.alpha)) {
    std::fprintf(stderr, "warning: alpha %.2f outside the expected [3, 5] band\n", query.alpha);
  }
  const double mem_alpha = query.alpha * bytes;

  json out;
  out["model_bytes"] = bytes;
  out["model_gib"] = dap::bytes_to_gib(bytes);
  out["memory_low_bytes"] = mem_low;
  out["memory_high_bytes"] = mem_high;
  out["memory_alpha_bytes"] = mem_alpha;
  out["effective_batch"] = batch;
  out["world_size"] = world;
  if (query.tflops_per_gpu > 0.0) {
    out["compute_tflops"] = dap::compute_capacity(world, query.tflops_per_gpu);
  }

  std::vector<dap::InstancePreset> presets;
  if (!instances_path.empty() && dap::file_exists(instances_path)) {
    presets = dap::load_instance_presets(instances_path);
    json rows = json::array();
    for (const auto& p : presets) {
      rows.push_back({{"name", p.name},
                      {"num_gpus", p.num_gpus},
                      {"gpu_type", p.gpu_type},
                      {"compute_tflops", dap::compute_capacity(p.num_gpus, p.tflops_fp16)},
                      {"price_per_hour", p.price_per_hour}});
    }
    out["instances"] = std::move(rows);
  }

  if (as_json) {
    std::printf("%s\n", out.dump(2).c_str());
    return;
  }
  std::printf("model size:        %.4g bytes (%.2f GiB)\n", bytes, dap::bytes_to_gib(bytes));
  std::printf("training memory:   %.4g .. %.4g bytes (alpha=%.2f -> %.4g)\n", mem_low, mem_high,
              query.alpha, mem_alpha);
  std::printf("effective batch:   %lld (mbs=%d gas=%d world=%d)\n", batch, query.mbs, query.gas,
              world);
  if (query.tflops_per_gpu > 0.0) {
    std::printf("compute capacity:  %.2f TFLOPS\n", dap::compute_capacity(world, query.tflops_per_gpu));
  }
  for (const auto& p : presets) {
    std::printf("instance %-18s %d x %-12s %.2f TFLOPS  $%.3f/hr\n", p.name.c_str(), p.num_gpus,
                p.gpu_type.c_str(), dap::compute_capacity(p.num_gpus, p.tflops_fp16),
                p.price_per_hour);
  }
}

// ---------------------------------------------------------------------------
// fixture
// ---------------------------------------------------------------------------

void cmd_fixture(const std::string& output_dir, uint64_t seed, size_t n_docs,
                 size_t words_per_doc) {
  const auto docs = dap::fixture_documents(seed, n_docs, words_per_doc);
  dap::write_fixture_corpus((fs::path(output_dir) / "docs").string(), docs);

  const dap::Vocab vocab = dap::fixture_vocab();
  dap::atomic_write_file((fs::path(output_dir) / "vocab.txt").string(), dap::vocab_to_file(vocab));

  const dap::FixtureBenchmark bench = dap::fixture_benchmark();
  dap::atomic_write_file((fs::path(output_dir) / "bench.jsonl").string(), bench.items_jsonl);
  dap::atomic_write_file((fs::path(output_dir) / "responses.jsonl").string(),
                         bench.responses_jsonl);

  // Estimate train-token volume to size the variant budgets.
  const auto rules = dap::default_clean_rules();
  size_t total_tokens = 0;
  for (const auto& doc : docs) {
    for (const auto& paragraph : dap::segment_paragraphs(dap::clean_text(doc, rules))) {
      total_tokens += dap::encode(vocab, paragraph).size();
    }
  }
  const auto train_tokens = static_cast<uint64_t>(0.9 * static_cast<double>(total_tokens));

  dap::RunConfig config;
  config.corpus.seed = seed;
  config.corpus.budgets = {{"tiny", train_tokens / 4}, {"small", (train_tokens * 3) / 5}};
  config.tokenizer.vocab_path = (fs::path(output_dir) / "vocab.txt").string();
  config.tokenizer.seq_len = 64;
  config.model.d_model = 32;
  config.model.n_heads = 4;
  config.model.n_layers = 2;
  config.model.d_ff = 128;
  config.model.init_seed = 7;
  config.trainer.learning_rate = 3e-3;
  config.trainer.epochs = 2;
  config.trainer.micro_batch_size = 4;
  config.trainer.grad_accum_steps = 1;
  config.trainer.seed = seed;
  config.trainer.checkpoint_interval = 50;
  config.eval.sample_n = 20;
  dap::atomic_write_file((fs::path(output_dir) / "config.json").string(),
                         dap::run_config_to_json(config));

  std::printf("fixture: %zu docs, ~%zu corpus tokens -> %s\n", docs.size(), total_tokens,
              output_dir.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"desk-scale domain-adaptive pretraining workbench"};
  app.require_subcommand(1);
  app.fallthrough();  // global --config/--seed/--world-size may follow the subcommand

  GlobalOptions global;
  app.add_option("--config", global.config_path, "run configuration file (or $DAP_CONFIG)");
  uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "override corpus and trainer seeds");
  int world_value = 0;
  auto* world_opt =
      app.add_option("--world-size", world_value, "override world size (num_devices x 1)");

  std::string input_dir, output_path, corpus_path, split_path, subset = "train";
  std::string data_path, checkpoint_dir, benchmark_path, responses_path, params_path;

  auto* prep = app.add_subcommand("prep", "clean raw documents into a corpus JSONL");
  prep->add_option("--input", input_dir, "directory with documents and manifest.json")->required();
  prep->add_option("--output", output_path, "corpus JSONL path")->required();

  auto* split = app.add_subcommand("split", "seeded train/test split with token-budget variants");
  split->add_option("--corpus", corpus_path, "corpus JSONL")->required();
  split->add_option("--output", output_path, "split manifest path")->required();

  auto* pack_cmd = app.add_subcommand("pack", "pack records into fixed-length training sequences");
  pack_cmd->add_option("--corpus", corpus_path, "corpus JSONL")->required();
  pack_cmd->add_option("--split", split_path, "split manifest")->required();
  pack_cmd->add_option("--subset", subset, "train | test | <variant name>");
  pack_cmd->add_option("--output", output_path, "packed dataset path")->required();

  auto* train_cmd = app.add_subcommand("train", "train from scratch on a packed dataset");
  train_cmd->add_option("--data", data_path, "packed dataset")->required();
  train_cmd->add_option("--checkpoint-dir", checkpoint_dir, "checkpoint directory")->required();

  auto* resume_cmd = app.add_subcommand("resume", "continue an interrupted run");
  resume_cmd->add_option("--data", data_path, "packed dataset")->required();
  resume_cmd->add_option("--checkpoint-dir", checkpoint_dir, "checkpoint directory")->required();

  auto* consolidate_cmd =
      app.add_subcommand("consolidate", "merge shard files into one parameter container");
  consolidate_cmd->add_option("--checkpoint-dir", checkpoint_dir, "checkpoint directory")
      ->required();
  consolidate_cmd->add_option("--output", output_path, "parameter container path")->required();

  auto* eval_cmd = app.add_subcommand("eval", "score an MCQ benchmark");
  eval_cmd->add_option("--benchmark", benchmark_path, "benchmark JSONL")->required();
  eval_cmd->add_option("--responses", responses_path, "precomputed response JSONL");
  eval_cmd->add_option("--params", params_path, "parameter container (model-backed answers)");
  eval_cmd->add_option("--output", output_path, "report JSON path");

  dap::ResourceQuery query;
  std::string instances_path = "data/instances.json";
  bool estimate_json = false;
  auto* estimate_cmd = app.add_subcommand("estimate", "closed-form resource estimates");
  estimate_cmd->add_option("--params-billions", query.params_billions, "model size in billions");
  estimate_cmd->add_option("--bytes-per-param", query.bytes_per_param, "4 = full, 2 = half");
  estimate_cmd->add_option("--alpha", query.alpha, "training memory multiplier");
  estimate_cmd->add_option("--mbs", query.mbs, "micro batch size");
  estimate_cmd->add_option("--gas", query.gas, "gradient accumulation steps");
  estimate_cmd->add_option("--num-devices", query.num_devices, "device count");
  estimate_cmd->add_option("--gpus-per-device", query.gpus_per_device, "accelerators per device");
  estimate_cmd->add_option("--tflops-per-gpu", query.tflops_per_gpu, "per-GPU TFLOPS");
  estimate_cmd->add_option("--instances", instances_path, "instance preset data file");
  estimate_cmd->add_flag("--json", estimate_json, "machine-readable output");

  uint64_t fixture_seed = 1;
  size_t fixture_docs = 110, fixture_words = 420;
  auto* fixture_cmd = app.add_subcommand("fixture", "generate a synthetic demo workload");
  fixture_cmd->add_option("--output", output_path, "output directory")->required();
  fixture_cmd->add_option("--seed", fixture_seed, "generator seed");
  fixture_cmd->add_option("--docs", fixture_docs, "document count");
  fixture_cmd->add_option("--words-per-doc", fixture_words, "approximate words per document");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  if (seed_opt->count() > 0) global.seed_override = seed_value;
  if (world_opt->count() > 0) global.world_override = world_value;

  try {
    if (prep->parsed()) {
      cmd_prep(global, input_dir, output_path);
    } else if (split->parsed()) {
      cmd_split(global, corpus_path, output_path);
    } else if (pack_cmd->parsed()) {
      cmd_pack(global, corpus_path, split_path, subset, output_path);
    } else if (train_cmd->parsed()) {
      cmd_train(global, data_path, checkpoint_dir);
    } else if (resume_cmd->parsed()) {
      cmd_resume(global, data_path, checkpoint_dir);
    } else if (consolidate_cmd->parsed()) {
      cmd_consolidate(checkpoint_dir, output_path);
    } else if (eval_cmd->parsed()) {
      cmd_eval(global, benchmark_path, responses_path, params_path, output_path);
    } else if (estimate_cmd->parsed()) {
      cmd_estimate(query, instances_path, estimate_json);
    } else if (fixture_cmd->parsed()) {
      cmd_fixture(output_path, fixture_seed, fixture_docs, fixture_words);
    }
  } catch (const dap::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitData;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return kExitInternal;
  }
  return kExitOk;
}

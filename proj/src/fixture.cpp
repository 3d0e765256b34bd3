// SPDX-License-Identifier: Apache-2.0

#include "dap/fixture.hpp"

#include <filesystem>
#include <set>

#include <nlohmann/json.hpp>

#include "dap/error.hpp"
#include "dap/rng.hpp"
#include "dap/serialize.hpp"

namespace dap {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::vector<std::string>& fixture_words() {
  static const std::vector<std::string> words = {
      "network",   "packet",    "firewall",  "malware",   "threat",    "signature", "protocol",
      "cipher",    "token",     "access",    "control",   "audit",     "patch",     "exploit",
      "vector",    "phishing",  "incident",  "response",  "breach",    "forensic",  "kernel",
      "daemon",    "socket",    "gateway",   "intrusion", "detection", "sandbox",   "payload",
      "botnet",    "backdoor",  "encryption", "integrity", "monitor",  "alert",     "policy",
      "zero",      "trust",     "segment",   "traffic",   "anomaly",   "the",       "a",
      "and",       "of",        "in",        "to",        "is",        "for",       "with",
      "on",
  };
  return words;
}

}  // namespace

Vocab fixture_vocab() {
  std::vector<std::string> tokens = {"<pad>", "<bos>", "<eos>", "<unk>"};
  std::set<std::string> seen(tokens.begin(), tokens.end());
  auto add = [&](std::string token) {
    if (seen.insert(token).second) tokens.push_back(std::move(token));
  };
  for (const auto& w : fixture_words()) add(w);
  add(" ");
  add("\n");
  for (const char* p : {".", ",", ")", "(", "?", "!", ":"}) add(p);
  for (char c = 'a'; c <= 'z'; ++c) add(std::string(1, c));
  for (char c = 'A'; c <= 'E'; ++c) add(std::string(1, c));
  for (char c = '0'; c <= '9'; ++c) add(std::string(1, c));
  return vocab_from_tokens(std::move(tokens));
}

std::vector<RawDocument> fixture_documents(uint64_t seed, size_t n_docs, size_t words_per_doc) {
  const auto& words = fixture_words();
  const size_t W = words.size();
  SplitMix64 rng(seed);

  std::vector<RawDocument> docs;
  docs.reserve(n_docs);
  static const Category categories[4] = {Category::standard, Category::paper, Category::book,
                                         Category::other};
  for (size_t d = 0; d < n_docs; ++d) {
    std::string text;
    size_t words_emitted = 0;
    size_t sentence_in_paragraph = 0;
    const size_t sentences_per_paragraph = 3 + rng.next_below(3);
    size_t word_index = rng.next_below(W);
    size_t paragraph_index = 0;

    while (words_emitted < words_per_doc) {
      const size_t sentence_len = 6 + rng.next_below(7);
      std::string sentence;
      for (size_t i = 0; i < sentence_len; ++i) {
        if (i) sentence += " ";
        sentence += words[word_index];
        // Peaked first-order transitions give the corpus learnable structure.
        if (rng.next_unit() < 0.7) {
          word_index = (word_index * 7 + 3) % W;
        } else {
          word_index = rng.next_below(W);
        }
      }
      sentence += ".";
      words_emitted += sentence_len;

      text += sentence;
      ++sentence_in_paragraph;
      if (sentence_in_paragraph >= sentences_per_paragraph) {
        sentence_in_paragraph = 0;
        ++paragraph_index;
        // Noise between paragraphs: cleaning removes all of it.
        if (paragraph_index % 3 == 1) {
          text += "\n" + std::to_string(1 + rng.next_below(400));  // stray page number
        }
        if (paragraph_index % 5 == 2) {
          text += " [" + std::to_string(1 + rng.next_below(90)) + "]";  // citation marker
        }
        if (paragraph_index % 7 == 3) {
          text += "\nreach the team on ops" + std::to_string(rng.next_below(10)) +
                  "@example.com for details";
        }
        text += "\n\n";
      } else {
        text += " ";
      }
    }

    RawDocument doc;
    doc.id = "doc" + std::to_string(d);
    doc.category = categories[d % 4];
    doc.text = text;
    doc.source = "synthetic fixture " + std::to_string(seed);
    docs.push_back(std::move(doc));
  }
  return docs;
}

void write_fixture_corpus(const std::string& dir, const std::vector<RawDocument>& docs) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) raise(ErrorCode::WriteFailure, "cannot create '" + dir + "': " + ec.message());

  json manifest;
  json entries = json::array();
  for (const auto& doc : docs) {
    const std::string filename = doc.id + ".txt";
    atomic_write_file((fs::path(dir) / filename).string(), doc.text);
    entries.push_back({{"file", filename},
                       {"id", doc.id},
                       {"category", category_name(doc.category)},
                       {"source", doc.source}});
  }
  manifest["docs"] = std::move(entries);
  atomic_write_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

FixtureBenchmark fixture_benchmark() {
  FixtureBenchmark fixture;
  std::string items;
  std::string responses;
  const char* letters = "ABCD";

  // 60 single-answer items; the response is wrong whenever i % 4 == 0.
  size_t single_correct = 0;
  for (size_t i = 0; i < 60; ++i) {
    const char gold = letters[i % 4];
    json item;
    item["id"] = "s" + std::to_string(i);
    item["question"] = "which option is flagged in case " + std::to_string(i) + "?";
    item["choices"] = {{"A", "the packet"}, {"B", "the socket"}, {"C", "the kernel"}, {"D", "the token"}};
    item["gold"] = json::array({std::string(1, gold)});
    item["format"] = "single";
    items += item.dump();
    items.push_back('\n');

    char answer = gold;
    if (i % 4 == 0) {
      answer = letters[(i + 1) % 4];
    } else {
      ++single_correct;
    }
    json response;
    response["id"] = "s" + std::to_string(i);
    response["response"] = std::string("The answer is ") + answer + ".";
    response["explanation"] = "the flagged option matches the recorded event";
    responses += response.dump();
    responses.push_back('\n');
  }

  // 40 multi-answer items with gold {A, B}; the scripted predictions cycle
  // through Jaccard scores 1, 1/2, 1/3, 0.
  double multi_sum = 0.0;
  for (size_t i = 0; i < 40; ++i) {
    json item;
    item["id"] = "m" + std::to_string(i);
    item["question"] = "which options apply to event " + std::to_string(i) + "?";
    item["choices"] = {{"A", "the gateway"}, {"B", "the daemon"}, {"C", "the sandbox"}, {"D", "the botnet"}};
    item["gold"] = json::array({"A", "B"});
    item["format"] = "multi";
    items += item.dump();
    items.push_back('\n');

    std::string text;
    double score = 0.0;
    switch (i % 4) {
      case 0: text = "A and B apply here."; score = 1.0; break;
      case 1: text = "Only A applies."; score = 0.5; break;
      case 2: text = "A and C apply here."; score = 1.0 / 3.0; break;
      default: text = "C and D apply here."; score = 0.0; break;
    }
    multi_sum += score;
    json response;
    response["id"] = "m" + std::to_string(i);
    response["response"] = text;
    response["explanation"] = "the listed components were involved";
    responses += response.dump();
    responses.push_back('\n');
  }

  fixture.items_jsonl = std::move(items);
  fixture.responses_jsonl = std::move(responses);
  fixture.single_count = 60;
  fixture.multi_count = 40;
  fixture.expected_single_accuracy = static_cast<double>(single_correct) / 60.0;
  fixture.expected_multi_mean_jaccard = multi_sum / 40.0;
  fixture.expected_overall = (static_cast<double>(single_correct) + multi_sum) / 100.0;
  return fixture;
}

PackedDataset synthetic_dataset(size_t n_sequences, size_t seq_len, size_t vocab_size,
                                uint64_t seed, bool with_padding) {
  if (vocab_size < 8) raise(ErrorCode::InvalidInput, "vocab_size too small for synthetic data");
  SplitMix64 rng(seed);
  PackedDataset dataset;
  dataset.seq_len = seq_len;
  for (size_t s = 0; s < n_sequences; ++s) {
    const uint32_t pad_count =
        (with_padding && s % 5 == 4) ? static_cast<uint32_t>(std::min<size_t>(3, seq_len - 2)) : 0;
    const size_t content = seq_len - pad_count;
    std::vector<uint32_t> sequence(seq_len, 0);
    sequence[0] = 1;  // bos
    for (size_t t = 1; t + 1 < content; ++t) {
      sequence[t] = static_cast<uint32_t>(4 + rng.next_below(vocab_size - 4));
    }
    sequence[content - 1] = 2;  // eos
    dataset.sequences.push_back(std::move(sequence));
    dataset.pad_counts.push_back(pad_count);
    dataset.doc_ids.push_back("synthetic" + std::to_string(s));
  }
  return dataset;
}

}  // namespace dap

// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <functional>
#include <set>

#include "dap/error.hpp"
#include "dap/fixture.hpp"
#include "dap/rng.hpp"
#include "dap/serialize.hpp"
#include "dap/vocab.hpp"

using namespace dap;

namespace {

Vocab tiny_vocab(std::vector<std::string> extra) {
  std::vector<std::string> tokens = {"<pad>", "<bos>", "<eos>", "<unk>"};
  for (auto& t : extra) tokens.push_back(std::move(t));
  return vocab_from_tokens(std::move(tokens));
}

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected a dap::Error");
  return ErrorCode::InvalidInput;
}

}  // namespace

TEST_CASE("vocab ids are positional; specials resolved by reserved names") {
  const Vocab vocab = tiny_vocab({"a", "b"});
  CHECK(vocab.size() == 6);
  CHECK(vocab.pad_id == 0);
  CHECK(vocab.bos_id == 1);
  CHECK(vocab.eos_id == 2);
  CHECK(vocab.unk_id == 3);
  CHECK(vocab.ids.at("a") == 4);
}

TEST_CASE("duplicate and missing-special vocab files fail") {
  CHECK(code_of([] { tiny_vocab({"a", "a"}); }) == ErrorCode::DuplicateToken);
  CHECK(code_of([] {
          vocab_from_tokens({"<pad>", "<bos>", "<unk>", "a"});  // no <eos>
        }) == ErrorCode::MissingSpecialToken);
}

TEST_CASE("encode is greedy longest-match with unk fallback") {
  const Vocab vocab = tiny_vocab({"ab", "a", "b"});
  CHECK(encode(vocab, "ab") == std::vector<uint32_t>{vocab.ids.at("ab")});
  CHECK(encode(vocab, "ba") == std::vector<uint32_t>{vocab.ids.at("b"), vocab.ids.at("a")});
  CHECK(encode(vocab, "z") == std::vector<uint32_t>{vocab.unk_id});
  CHECK(encode(vocab, "").empty());
}

TEST_CASE("encode is deterministic") {
  const Vocab vocab = fixture_vocab();
  const std::string text = "malware in the network. threat detected!";
  CHECK(encode(vocab, text) == encode(vocab, text));
}

TEST_CASE("decode concatenates tokens, drops pads, flags bad ids") {
  const Vocab vocab = tiny_vocab({"ab", "a", "b"});
  CHECK(decode(vocab, encode(vocab, "ab")) == "ab");
  CHECK(decode(vocab, {vocab.pad_id}).empty());
  CHECK(code_of([&] { decode(vocab, {static_cast<uint32_t>(vocab.size())}); }) ==
        ErrorCode::IdOutOfRange);
}

TEST_CASE("round trip holds for text without unk characters") {
  const Vocab vocab = fixture_vocab();
  const std::string text = "the firewall monitor saw a packet.\nnew anomaly in traffic";
  CHECK(decode(vocab, encode(vocab, text)) == text);
}

TEST_CASE("round trip property over random fixture sentences") {
  const Vocab vocab = fixture_vocab();
  SplitMix64 rng(99);
  const std::vector<std::string> glue = {" ", ".", ",", "\n"};
  for (int trial = 0; trial < 50; ++trial) {
    std::string text;
    const size_t words = 1 + rng.next_below(20);
    for (size_t w = 0; w < words; ++w) {
      text += vocab.tokens[4 + rng.next_below(40)];  // word tokens sit after the specials
      text += glue[rng.next_below(glue.size())];
    }
    const auto ids = encode(vocab, text);
    CHECK(decode(vocab, ids) == text);
    CHECK(ids == encode(vocab, text));
  }
}

TEST_CASE("vocab file escapes make whitespace tokens loadable") {
  const Vocab vocab = fixture_vocab();
  const std::string path = (std::filesystem::temp_directory_path() / "dap_vocab_rt.txt").string();
  atomic_write_file(path, vocab_to_file(vocab));
  const Vocab reloaded = load_vocab(path);
  CHECK(reloaded.tokens == vocab.tokens);
  std::filesystem::remove(path);
}

// --- packing ---------------------------------------------------------------

namespace {

// Oracle: the stream for one document is bos + encode(join(texts, "\n")) + eos
// chunked into consecutive windows of L with the final short window padded.
std::vector<std::vector<uint32_t>> hand_chunk(const Vocab& vocab, const std::string& joined,
                                              size_t L) {
  std::vector<uint32_t> stream;
  stream.push_back(vocab.bos_id);
  for (uint32_t id : encode(vocab, joined)) stream.push_back(id);
  stream.push_back(vocab.eos_id);
  std::vector<std::vector<uint32_t>> chunks;
  for (size_t off = 0; off < stream.size(); off += L) {
    std::vector<uint32_t> chunk(stream.begin() + static_cast<std::ptrdiff_t>(off),
                                stream.begin() + static_cast<std::ptrdiff_t>(
                                                     std::min(stream.size(), off + L)));
    chunk.resize(L, vocab.pad_id);
    chunks.push_back(std::move(chunk));
  }
  return chunks;
}

std::string text_of_ids(size_t n) {  // n single-char tokens from {a, b}
  std::string text;
  for (size_t i = 0; i < n; ++i) text.push_back(i % 2 == 0 ? 'a' : 'b');
  return text;
}

}  // namespace

TEST_CASE("pack: document with 2L-2 content ids fills two windows exactly") {
  const Vocab vocab = tiny_vocab({"a", "b"});
  const size_t L = 8;
  const auto dataset = pack(vocab, {{text_of_ids(2 * L - 2), "d", 0}}, L);
  REQUIRE(dataset.sequences.size() == 2);
  CHECK(dataset.pad_counts == std::vector<uint32_t>{0, 0});
  CHECK(dataset.sequences == hand_chunk(vocab, text_of_ids(2 * L - 2), L));
}

TEST_CASE("pack: stream shorter than L pads the single window") {
  const Vocab vocab = tiny_vocab({"a", "b"});
  const size_t L = 8;
  // 2L-4 content ids -> stream of 2L-2 -> windows of L and L-2 (2 pads).
  const auto two_chunks = pack(vocab, {{text_of_ids(2 * L - 4), "d", 0}}, L);
  REQUIRE(two_chunks.sequences.size() == 2);
  CHECK(two_chunks.pad_counts == std::vector<uint32_t>{0, 2});
  // exactly L-2 content ids -> bos + ids + eos fills one window, no padding.
  const auto one_chunk = pack(vocab, {{text_of_ids(L - 2), "d", 0}}, L);
  REQUIRE(one_chunk.sequences.size() == 1);
  CHECK(one_chunk.pad_counts == std::vector<uint32_t>{0});
}

TEST_CASE("pack: empty record list gives an empty dataset") {
  const Vocab vocab = tiny_vocab({"a"});
  CHECK(pack(vocab, {}, 8).sequences.empty());
}

TEST_CASE("pack: conservation and no cross-document leakage") {
  const Vocab vocab = fixture_vocab();
  const size_t L = 16;
  const auto docs = fixture_documents(11, 3, 80);
  std::vector<CorpusRecord> records;
  std::vector<std::string> joined_per_doc;
  for (const auto& doc : docs) {
    std::string joined;
    size_t seq = 0;
    for (const auto& paragraph : segment_paragraphs(doc.text)) {
      if (!joined.empty()) joined.push_back('\n');
      joined += paragraph;
      records.push_back({paragraph, doc.id, static_cast<uint32_t>(seq++)});
    }
    joined_per_doc.push_back(joined);
  }

  const PackedDataset dataset = pack(vocab, records, L);

  size_t expected_non_pad = 0;
  for (const auto& joined : joined_per_doc) expected_non_pad += 2 + encode(vocab, joined).size();
  size_t actual_non_pad = 0;
  for (size_t i = 0; i < dataset.sequences.size(); ++i) {
    actual_non_pad += L - dataset.pad_counts[i];
  }
  CHECK(actual_non_pad == expected_non_pad);

  // Provenance: each sequence belongs to exactly one document, sequences of a
  // document are contiguous and ordered.
  REQUIRE(dataset.doc_ids.size() == dataset.sequences.size());
  std::set<std::string> seen;
  std::string current;
  for (const auto& doc_id : dataset.doc_ids) {
    if (doc_id != current) {
      CHECK(seen.insert(doc_id).second);
      current = doc_id;
    }
  }

  // Pads only as a suffix.
  for (size_t i = 0; i < dataset.sequences.size(); ++i) {
    const auto& sequence = dataset.sequences[i];
    const size_t content = L - dataset.pad_counts[i];
    for (size_t t = 0; t < L; ++t) {
      if (t >= content) CHECK(sequence[t] == vocab.pad_id);
    }
  }
}

TEST_CASE("packed dataset file round-trips and hashes consistently") {
  const Vocab vocab = fixture_vocab();
  const auto docs = fixture_documents(5, 2, 60);
  std::vector<CorpusRecord> records;
  for (const auto& doc : docs) {
    size_t seq = 0;
    for (const auto& paragraph : segment_paragraphs(doc.text)) {
      records.push_back({paragraph, doc.id, static_cast<uint32_t>(seq++)});
    }
  }
  const PackedDataset dataset = pack(vocab, records, 32);
  const std::string path = (std::filesystem::temp_directory_path() / "dap_packed_rt.bin").string();
  save_packed(path, dataset);
  const PackedDataset loaded = load_packed(path, vocab.pad_id);
  CHECK(loaded.seq_len == dataset.seq_len);
  CHECK(loaded.sequences == dataset.sequences);
  CHECK(loaded.pad_counts == dataset.pad_counts);
  CHECK(dataset_hash(loaded) == dataset_hash(dataset));
  std::filesystem::remove(path);
}

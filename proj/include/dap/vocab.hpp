// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dap/corpus.hpp"

namespace dap {

/// Fixed vocabulary with dense ids. Line i of the vocab file maps to id i;
/// the first four lines are reserved for "<pad>", "<bos>", "<eos>", "<unk>".
struct Vocab {
  std::vector<std::string> tokens;
  std::unordered_map<std::string, uint32_t> ids;
  uint32_t pad_id = 0;
  uint32_t bos_id = 1;
  uint32_t eos_id = 2;
  uint32_t unk_id = 3;
  size_t max_token_length = 0;

  size_t size() const { return tokens.size(); }
};

Vocab vocab_from_tokens(std::vector<std::string> tokens);

/// Loads a vocab file: UTF-8, one token per line. Backslash escapes
/// (n, t, r, s for space, and doubled backslash) make whitespace tokens
/// representable in the line-per-token format.
Vocab load_vocab(const std::string& path);
std::string vocab_to_file(const Vocab& vocab);

/// Greedy longest-match over the vocabulary, left to right; an unmatched
/// byte maps to unk. No bos/eos added here.
std::vector<uint32_t> encode(const Vocab& vocab, std::string_view text);

/// Concatenation of token strings; pad ids dropped.
std::string decode(const Vocab& vocab, const std::vector<uint32_t>& ids);

/// Fixed-length training sequences with suffix padding only.
struct PackedDataset {
  size_t seq_len = 0;
  std::vector<std::vector<uint32_t>> sequences;
  std::vector<uint32_t> pad_counts;
  std::vector<std::string> doc_ids;  // provenance, per sequence (not serialized)
};

/// Packs records per document: records joined in seq order with "\n", token
/// stream bos + ids + eos chunked into consecutive windows of length L, the
/// final short window padded. Documents are never mixed inside one sequence.
PackedDataset pack(const Vocab& vocab, const std::vector<CorpusRecord>& records, size_t seq_len);

// Binary container: magic "DAPK", version, L, count, then count*L
// little-endian u32 ids per sequence.
std::string packed_to_bytes(const PackedDataset& dataset);
PackedDataset packed_from_bytes(std::string_view bytes, uint32_t pad_id = 0);
void save_packed(const std::string& path, const PackedDataset& dataset);
PackedDataset load_packed(const std::string& path, uint32_t pad_id = 0);

/// Content hash over the canonical serialized form (identical for a dataset
/// built in memory and one reloaded from disk).
uint64_t dataset_hash(const PackedDataset& dataset);

}  // namespace dap

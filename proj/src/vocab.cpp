// SPDX-License-Identifier: Apache-2.0

#include "dap/vocab.hpp"

#include <algorithm>
#include <array>
#include <map>

#include "dap/error.hpp"
#include "dap/hash.hpp"
#include "dap/serialize.hpp"

namespace dap {

namespace {

constexpr std::array<const char*, 4> kReserved = {"<pad>", "<bos>", "<eos>", "<unk>"};

std::string unescape_token(const std::string& raw) {
  std::string out;
  out.reserve(raw.size());
  for (size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] != '\\' || i + 1 == raw.size()) {
      out.push_back(raw[i]);
      continue;
    }
    ++i;
    switch (raw[i]) {
      case 'n': out.push_back('\n'); break;
      case 't': out.push_back('\t'); break;
      case 'r': out.push_back('\r'); break;
      case 's': out.push_back(' '); break;
      case '\\': out.push_back('\\'); break;
      default:
        out.push_back('\\');
        out.push_back(raw[i]);
    }
  }
  return out;
}

std::string escape_token(const std::string& token) {
  std::string out;
  for (char ch : token) {
    switch (ch) {
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      case '\r': out += "\\r"; break;
      case ' ': out += "\\s"; break;
      case '\\': out += "\\\\"; break;
      default: out.push_back(ch);
    }
  }
  return out;
}

}  // namespace

Vocab vocab_from_tokens(std::vector<std::string> tokens) {
  if (tokens.size() < kReserved.size()) {
    raise(ErrorCode::MissingSpecialToken, "vocab needs the four reserved leading tokens");
  }
  for (size_t i = 0; i < kReserved.size(); ++i) {
    if (tokens[i] != kReserved[i]) {
      raise(ErrorCode::MissingSpecialToken,
            "line " + std::to_string(i) + " must be '" + kReserved[i] + "', found '" + tokens[i] + "'");
    }
  }
  Vocab vocab;
  vocab.tokens = std::move(tokens);
  for (size_t i = 0; i < vocab.tokens.size(); ++i) {
    const std::string& token = vocab.tokens[i];
    if (token.empty()) raise(ErrorCode::InvalidInput, "empty token at line " + std::to_string(i));
    if (!vocab.ids.emplace(token, static_cast<uint32_t>(i)).second) {
      raise(ErrorCode::DuplicateToken, "token '" + token + "' appears twice");
    }
    vocab.max_token_length = std::max(vocab.max_token_length, token.size());
  }
  vocab.pad_id = 0;
  vocab.bos_id = 1;
  vocab.eos_id = 2;
  vocab.unk_id = 3;
  return vocab;
}

Vocab load_vocab(const std::string& path) {
  const std::string contents = read_file(path);
  std::vector<std::string> tokens;
  size_t start = 0;
  while (start < contents.size()) {
    size_t end = contents.find('\n', start);
    if (end == std::string::npos) end = contents.size();
    tokens.push_back(unescape_token(contents.substr(start, end - start)));
    start = end + 1;
  }
  // A trailing newline leaves no phantom final token; an interior empty line
  // is rejected by vocab_from_tokens.
  if (!tokens.empty() && tokens.back().empty() && contents.back() == '\n') tokens.pop_back();
  return vocab_from_tokens(std::move(tokens));
}

std::string vocab_to_file(const Vocab& vocab) {
  std::string out;
  for (const auto& token : vocab.tokens) {
    out += escape_token(token);
    out.push_back('\n');
  }
  return out;
}

std::vector<uint32_t> encode(const Vocab& vocab, std::string_view text) {
  std::vector<uint32_t> ids;
  size_t i = 0;
  std::string probe;
  while (i < text.size()) {
    const size_t longest = std::min(vocab.max_token_length, text.size() - i);
    uint32_t matched = vocab.unk_id;
    size_t advance = 1;
    for (size_t len = longest; len >= 1; --len) {
      probe.assign(text.substr(i, len));
      auto it = vocab.ids.find(probe);
      // Pad never appears inside an encoded stream, even if the literal
      // "<pad>" string shows up in text.
      if (it != vocab.ids.end() && it->second != vocab.pad_id) {
        matched = it->second;
        advance = len;
        break;
      }
    }
    ids.push_back(matched);
    i += advance;
  }
  return ids;
}

std::string decode(const Vocab& vocab, const std::vector<uint32_t>& ids) {
  std::string out;
  for (uint32_t id : ids) {
    if (id >= vocab.size()) {
      raise(ErrorCode::IdOutOfRange, "id " + std::to_string(id) + " >= vocab size " +
                                         std::to_string(vocab.size()));
    }
    if (id == vocab.pad_id) continue;
    out += vocab.tokens[id];
  }
  return out;
}

PackedDataset pack(const Vocab& vocab, const std::vector<CorpusRecord>& records, size_t seq_len) {
  if (seq_len < 2) raise(ErrorCode::InvalidInput, "sequence length must be >= 2");

  // Group records by document, preserving first-appearance order.
  std::vector<std::string> doc_order;
  std::map<std::string, std::vector<const CorpusRecord*>> by_doc;
  for (const auto& record : records) {
    auto [it, inserted] = by_doc.try_emplace(record.doc_id);
    if (inserted) doc_order.push_back(record.doc_id);
    it->second.push_back(&record);
  }

  PackedDataset dataset;
  dataset.seq_len = seq_len;
  for (const auto& doc_id : doc_order) {
    auto& doc_records = by_doc[doc_id];
    std::stable_sort(doc_records.begin(), doc_records.end(),
                     [](const CorpusRecord* a, const CorpusRecord* b) { return a->seq < b->seq; });
    std::string joined;
    for (size_t i = 0; i < doc_records.size(); ++i) {
      if (i) joined.push_back('\n');
      joined += doc_records[i]->text;
    }
    std::vector<uint32_t> stream;
    stream.push_back(vocab.bos_id);
    for (uint32_t id : encode(vocab, joined)) stream.push_back(id);
    stream.push_back(vocab.eos_id);

    for (size_t offset = 0; offset < stream.size(); offset += seq_len) {
      const size_t content = std::min(seq_len, stream.size() - offset);
      std::vector<uint32_t> sequence(stream.begin() + static_cast<std::ptrdiff_t>(offset),
                                     stream.begin() + static_cast<std::ptrdiff_t>(offset + content));
      sequence.resize(seq_len, vocab.pad_id);
      dataset.sequences.push_back(std::move(sequence));
      dataset.pad_counts.push_back(static_cast<uint32_t>(seq_len - content));
      dataset.doc_ids.push_back(doc_id);
    }
  }
  return dataset;
}

namespace {
constexpr char kPackedMagic[4] = {'D', 'A', 'P', 'K'};
constexpr uint32_t kPackedVersion = 1;
}  // namespace

std::string packed_to_bytes(const PackedDataset& dataset) {
  ByteWriter w;
  w.put_bytes(std::string_view(kPackedMagic, 4));
  w.put_u32(kPackedVersion);
  w.put_u32(static_cast<uint32_t>(dataset.seq_len));
  w.put_u64(dataset.sequences.size());
  for (const auto& sequence : dataset.sequences) {
    for (uint32_t id : sequence) w.put_u32(id);
  }
  return w.take();
}

PackedDataset packed_from_bytes(std::string_view bytes, uint32_t pad_id) {
  ByteReader r(bytes);
  if (r.get_bytes(4) != std::string_view(kPackedMagic, 4)) {
    raise(ErrorCode::InvalidInput, "not a packed dataset file");
  }
  const uint32_t version = r.get_u32();
  if (version != kPackedVersion) {
    raise(ErrorCode::InvalidInput, "unsupported packed dataset version " + std::to_string(version));
  }
  PackedDataset dataset;
  dataset.seq_len = r.get_u32();
  const uint64_t count = r.get_u64();
  dataset.sequences.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    std::vector<uint32_t> sequence(dataset.seq_len);
    for (auto& id : sequence) id = r.get_u32();
    uint32_t pads = 0;
    for (auto it = sequence.rbegin(); it != sequence.rend() && *it == pad_id; ++it) ++pads;
    dataset.pad_counts.push_back(pads);
    dataset.sequences.push_back(std::move(sequence));
    dataset.doc_ids.emplace_back();
  }
  if (!r.at_end()) raise(ErrorCode::InvalidInput, "trailing bytes in packed dataset file");
  return dataset;
}

void save_packed(const std::string& path, const PackedDataset& dataset) {
  atomic_write_file(path, packed_to_bytes(dataset));
}

PackedDataset load_packed(const std::string& path, uint32_t pad_id) {
  return packed_from_bytes(read_file(path), pad_id);
}

uint64_t dataset_hash(const PackedDataset& dataset) {
  return fnv1a64(packed_to_bytes(dataset));
}

}  // namespace dap

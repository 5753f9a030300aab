#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tunekit/corpus.hpp"
#include "tunekit/detail/jsonl.hpp"
#include "tunekit/errors.hpp"

namespace tunekit {

// Byte-level token space: ids 0..255 are raw bytes, 256 is the end-of-sample
// separator. The language model smooths over the full 257-symbol vocabulary.
using TokenId = std::uint16_t;
inline constexpr TokenId kSeparatorToken = 256;
inline constexpr std::size_t kLmVocabSize = 257;

struct TokenizedSample {
  std::string id;
  std::vector<TokenId> instruction_tokens;
  std::vector<TokenId> code_tokens;
  std::size_t instruction_len = 0;
  std::size_t code_len = 0;
  std::size_t total_len = 0;  // instruction + code + structural overhead
};

/// Deterministic byte-level tokenizer: one token per byte, so every length is
/// exactly a byte count. structural_overhead (default one end-of-sample
/// marker) is added to total_len only.
struct ByteTokenizer {
  std::size_t structural_overhead = 1;

  TokenizedSample tokenize(const Sample& sample) const {
    if (sample.code.empty()) {
      fail(ErrorCode::empty_code, "sample '" + sample.id + "': code tokenizes to zero tokens");
    }
    TokenizedSample out;
    out.id = sample.id;
    out.instruction_tokens.reserve(sample.instruction.size());
    for (unsigned char b : sample.instruction) out.instruction_tokens.push_back(b);
    out.code_tokens.reserve(sample.code.size());
    for (unsigned char b : sample.code) out.code_tokens.push_back(b);
    out.instruction_len = out.instruction_tokens.size();
    out.code_len = out.code_tokens.size();
    out.total_len = out.instruction_len + out.code_len + structural_overhead;
    return out;
  }

  TokenLengths lengths(const Sample& sample) const {
    TokenLengths out;
    out.instruction = sample.instruction.size();
    out.code = sample.code.size();
    out.total = out.instruction + out.code + structural_overhead;
    return out;
  }
};

struct CountRecord {
  std::string id;
  std::size_t instruction_len = 0;
  std::size_t code_len = 0;
};

/// Answers per-sample token counts either from the built-in byte tokenizer or
/// from an externally produced counts file, so a real model tokenizer can
/// drive validation and packing.
class TokenCountProvider {
 public:
  enum class Mode { builtin, external };

  static TokenCountProvider builtin(std::size_t structural_overhead = 1) {
    TokenCountProvider p;
    p.mode_ = Mode::builtin;
    p.overhead_ = structural_overhead;
    return p;
  }

  static TokenCountProvider external(std::vector<CountRecord> records,
                                     std::size_t structural_overhead = 1) {
    TokenCountProvider p;
    p.mode_ = Mode::external;
    p.overhead_ = structural_overhead;
    p.records_ = std::move(records);
    for (const auto& r : p.records_) {
      p.index_.emplace(r.id, std::pair<std::size_t, std::size_t>{r.instruction_len, r.code_len});
    }
    return p;
  }

  Mode mode() const { return mode_; }
  std::size_t structural_overhead() const { return overhead_; }
  const std::vector<CountRecord>& records() const { return records_; }

  TokenLengths lengths(const Sample& sample) const {
    if (mode_ == Mode::builtin) {
      return ByteTokenizer{overhead_}.lengths(sample);
    }
    auto it = index_.find(sample.id);
    if (it == index_.end()) {
      fail(ErrorCode::missing_id, "no token counts for id '" + sample.id + "'");
    }
    TokenLengths out;
    out.instruction = it->second.first;
    out.code = it->second.second;
    out.total = out.instruction + out.code + overhead_;
    return out;
  }

  // Convenience for corpus operations taking a counter callable.
  TokenLengths operator()(const Sample& sample) const { return lengths(sample); }

 private:
  Mode mode_ = Mode::builtin;
  std::size_t overhead_ = 1;
  std::vector<CountRecord> records_;
  std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> index_;
};

/// Counts file: JSON Lines {"id", "instruction_len", "code_len"}.
inline TokenCountProvider load_external_counts(const std::string& path,
                                               std::size_t structural_overhead = 1) {
  std::vector<CountRecord> records;
  detail::for_each_jsonl(path, [&](std::size_t line, nlohmann::json record) {
    auto where = path + ":" + std::to_string(line);
    if (!record.contains("id") || !record.contains("instruction_len") ||
        !record.contains("code_len")) {
      fail(ErrorCode::malformed_record, where + ": expected id, instruction_len, code_len");
    }
    if (!record["instruction_len"].is_number_unsigned() ||
        !record["code_len"].is_number_unsigned()) {
      fail(ErrorCode::malformed_record, where + ": counts must be non-negative integers");
    }
    records.push_back({detail::field_as_string(record["id"]),
                       record["instruction_len"].get<std::size_t>(),
                       record["code_len"].get<std::size_t>()});
  });
  return TokenCountProvider::external(std::move(records), structural_overhead);
}

inline void write_external_counts(const std::vector<CountRecord>& records,
                                  const std::string& path) {
  detail::JsonlWriter out(path);
  for (const auto& r : records) {
    out.write({{"id", r.id},
               {"instruction_len", r.instruction_len},
               {"code_len", r.code_len}});
  }
}

}  // namespace tunekit

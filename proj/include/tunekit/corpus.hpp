#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tunekit/detail/jsonl.hpp"
#include "tunekit/errors.hpp"

namespace tunekit {

/// One instruction-code pair, the unit of selection. Texts are kept verbatim;
/// validation only checks that they are non-empty after trimming.
struct Sample {
  std::string id;
  std::string instruction;
  std::string code;

  bool operator==(const Sample&) const = default;
};

struct Corpus {
  std::vector<Sample> samples;
  std::string source_path;

  std::size_t size() const { return samples.size(); }

  bool operator==(const Corpus& other) const { return samples == other.samples; }
};

/// Maps dataset-specific field names onto the canonical schema. Candidate
/// names are tried in order; the first present one wins. An empty id_field
/// synthesizes "line-<n>" ids from file line numbers.
struct FieldMap {
  std::string id_field;
  std::vector<std::string> instruction_fields{"instruction"};
  std::vector<std::string> code_fields{"output", "code"};
};

struct RecordIssue {
  std::size_t line = 0;
  std::string id;
  ErrorCode code = ErrorCode::malformed_record;
  std::string detail;
};

struct LoadOptions {
  bool skip_invalid = false;
};

struct LoadResult {
  Corpus corpus;
  std::vector<RecordIssue> skipped;
};

namespace detail {

inline std::string trimmed(const std::string& s) {
  const char* ws = " \t\r\n\v\f";
  auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline const nlohmann::json* find_field(const nlohmann::json& record,
                                        const std::vector<std::string>& names) {
  for (const auto& name : names) {
    auto it = record.find(name);
    if (it != record.end()) return &*it;
  }
  return nullptr;
}

inline std::string field_as_string(const nlohmann::json& value) {
  if (value.is_string()) return value.get<std::string>();
  return value.dump();
}

}  // namespace detail

inline LoadResult load_corpus(const std::string& path, const FieldMap& fields = {},
                              const LoadOptions& options = {}) {
  LoadResult result;
  result.corpus.source_path = path;
  std::unordered_set<std::string> seen_ids;

  auto reject = [&](std::size_t line, const std::string& id, ErrorCode code,
                    const std::string& detail) {
    if (!options.skip_invalid) {
      fail(code, path + ":" + std::to_string(line) + ": " + detail);
    }
    result.skipped.push_back({line, id, code, detail});
  };

  auto consume = [&](std::size_t line, nlohmann::json record) {
    std::string id;
    if (!fields.id_field.empty()) {
      auto it = record.find(fields.id_field);
      if (it == record.end()) {
        reject(line, "", ErrorCode::empty_field,
               "missing id field '" + fields.id_field + "'");
        return;
      }
      id = detail::field_as_string(*it);
      if (detail::trimmed(id).empty()) {
        reject(line, id, ErrorCode::empty_field, "empty id field");
        return;
      }
    } else {
      id = "line-" + std::to_string(line);
    }

    const nlohmann::json* instruction = detail::find_field(record, fields.instruction_fields);
    if (instruction == nullptr || !instruction->is_string()) {
      reject(line, id, ErrorCode::empty_field,
             "sample '" + id + "': missing instruction field");
      return;
    }
    const nlohmann::json* code = detail::find_field(record, fields.code_fields);
    if (code == nullptr || !code->is_string()) {
      reject(line, id, ErrorCode::empty_field,
             "sample '" + id + "': missing code field");
      return;
    }

    Sample sample{id, instruction->get<std::string>(), code->get<std::string>()};
    if (detail::trimmed(sample.instruction).empty()) {
      reject(line, id, ErrorCode::empty_field, "sample '" + id + "': empty instruction");
      return;
    }
    if (detail::trimmed(sample.code).empty()) {
      reject(line, id, ErrorCode::empty_field, "sample '" + id + "': empty code");
      return;
    }
    if (!seen_ids.insert(sample.id).second) {
      reject(line, id, ErrorCode::duplicate_id, "duplicate id '" + id + "'");
      return;
    }
    result.corpus.samples.push_back(std::move(sample));
  };

  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io_error, "cannot open " + path);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      reject(line_no, "", ErrorCode::malformed_record, e.what());
      continue;
    }
    if (!record.is_object()) {
      reject(line_no, "", ErrorCode::malformed_record, "record is not an object");
      continue;
    }
    consume(line_no, std::move(record));
  }

  if (result.corpus.samples.empty()) {
    fail(ErrorCode::empty_corpus, path + ": no valid samples");
  }
  return result;
}

/// Write-back in the canonical schema {"id", "instruction", "code"}, one
/// record per line. Loading the result reproduces the corpus exactly.
inline void write_corpus(const Corpus& corpus, const std::string& path) {
  detail::JsonlWriter out(path);
  for (const auto& sample : corpus.samples) {
    out.write({{"id", sample.id},
               {"instruction", sample.instruction},
               {"code", sample.code}});
  }
}

inline FieldMap canonical_fields() {
  FieldMap fields;
  fields.id_field = "id";
  fields.instruction_fields = {"instruction"};
  fields.code_fields = {"code"};
  return fields;
}

/// Per-sample token counts as produced by a token-count provider. total
/// includes structural tokens on top of instruction and code.
struct TokenLengths {
  std::size_t instruction = 0;
  std::size_t code = 0;
  std::size_t total = 0;
};

/// Ids whose total token count exceeds context_len, in corpus order. An empty
/// result means every sample can be packed without truncation.
template <class Counter>
std::vector<std::string> validate_for_context(const Corpus& corpus, Counter&& counter,
                                              std::size_t context_len) {
  if (context_len < 1) fail(ErrorCode::bad_config, "context_len must be >= 1");
  std::vector<std::string> violations;
  for (const auto& sample : corpus.samples) {
    TokenLengths lengths = counter(sample);
    if (lengths.total > context_len) violations.push_back(sample.id);
  }
  return violations;
}

struct LengthStats {
  std::size_t min = 0;
  std::size_t max = 0;
  double mean = 0.0;
  std::size_t p50 = 0;
  std::size_t p90 = 0;
  std::size_t p99 = 0;
};

struct CorpusStats {
  std::size_t n = 0;
  LengthStats instruction;
  LengthStats code;
  LengthStats total;
  std::size_t context_len = 0;
  std::size_t over_context = 0;
};

namespace detail {

inline std::size_t nearest_rank(const std::vector<std::size_t>& sorted, double pct) {
  std::size_t rank = static_cast<std::size_t>(
      std::ceil(pct / 100.0 * static_cast<double>(sorted.size())));
  if (rank < 1) rank = 1;
  return sorted[rank - 1];
}

inline LengthStats length_stats(std::vector<std::size_t> values) {
  LengthStats stats;
  std::sort(values.begin(), values.end());
  stats.min = values.front();
  stats.max = values.back();
  double sum = 0;
  for (auto v : values) sum += static_cast<double>(v);
  stats.mean = sum / static_cast<double>(values.size());
  stats.p50 = nearest_rank(values, 50);
  stats.p90 = nearest_rank(values, 90);
  stats.p99 = nearest_rank(values, 99);
  return stats;
}

}  // namespace detail

template <class Counter>
CorpusStats corpus_stats(const Corpus& corpus, Counter&& counter,
                         std::size_t context_len = 4096) {
  CorpusStats stats;
  stats.n = corpus.size();
  stats.context_len = context_len;
  std::vector<std::size_t> instruction, code, total;
  instruction.reserve(stats.n);
  code.reserve(stats.n);
  total.reserve(stats.n);
  for (const auto& sample : corpus.samples) {
    TokenLengths lengths = counter(sample);
    instruction.push_back(lengths.instruction);
    code.push_back(lengths.code);
    total.push_back(lengths.total);
    if (lengths.total > context_len) ++stats.over_context;
  }
  stats.instruction = detail::length_stats(std::move(instruction));
  stats.code = detail::length_stats(std::move(code));
  stats.total = detail::length_stats(std::move(total));
  return stats;
}

inline nlohmann::json corpus_stats_to_json(const CorpusStats& stats) {
  auto lengths = [](const LengthStats& s) {
    return nlohmann::json{{"min", s.min}, {"max", s.max},   {"mean", s.mean},
                          {"p50", s.p50}, {"p90", s.p90},   {"p99", s.p99}};
  };
  return {{"n", stats.n},
          {"instruction", lengths(stats.instruction)},
          {"code", lengths(stats.code)},
          {"total", lengths(stats.total)},
          {"context_len", stats.context_len},
          {"over_context", stats.over_context},
          {"deduplication", "not performed"}};
}

}  // namespace tunekit

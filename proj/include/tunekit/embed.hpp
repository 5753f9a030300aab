#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tunekit/corpus.hpp"
#include "tunekit/detail/hashing.hpp"
#include "tunekit/detail/jsonl.hpp"
#include "tunekit/detail/parallel.hpp"
#include "tunekit/errors.hpp"

namespace tunekit {

struct InstructionEmbedding {
  std::string id;
  std::vector<double> vector;
};

struct EmbeddingSet {
  std::size_t dim = 0;
  std::vector<InstructionEmbedding> entries;  // aligned to corpus order

  std::size_t size() const { return entries.size(); }
};

namespace detail {

inline constexpr std::size_t kNgramMin = 3;
inline constexpr std::size_t kNgramMax = 5;

inline std::string normalize_instruction(const std::string& text) {
  std::string out = trimmed(text);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

// Signed feature hashing: bucket from the high bits, sign from the low bit.
inline void hash_ngrams_into(const std::string& text, std::size_t dim,
                             std::uint64_t seed, std::vector<double>& accum) {
  for (std::size_t n = kNgramMin; n <= kNgramMax; ++n) {
    if (text.size() < n) break;
    for (std::size_t i = 0; i + n <= text.size(); ++i) {
      std::uint64_t h = mix64(fnv1a64(text.data() + i, n, seed));
      std::size_t bucket = static_cast<std::size_t>((h >> 1) % dim);
      accum[bucket] += (h & 1) ? 1.0 : -1.0;
    }
  }
}

inline double l2_norm(const std::vector<double>& v) {
  double sum = 0;
  for (double x : v) sum += x * x;
  return std::sqrt(sum);
}

}  // namespace detail

/// Embed one instruction: term-frequency bag of character 3..5-grams over the
/// lowercased text, feature-hashed into d signed buckets, L2-normalized.
inline std::vector<double> embed_text(const std::string& instruction, std::size_t dim,
                                      std::uint64_t seed, const std::string& id = "") {
  if (dim < 2) fail(ErrorCode::bad_config, "embedding dimension must be >= 2");
  std::string text = detail::normalize_instruction(instruction);
  if (text.size() < detail::kNgramMin) {
    fail(ErrorCode::degenerate_input,
         "sample '" + id + "': instruction shorter than " +
             std::to_string(detail::kNgramMin) + " characters after normalization");
  }
  std::vector<double> v(dim, 0.0);
  detail::hash_ngrams_into(text, dim, seed, v);
  double norm = detail::l2_norm(v);
  if (norm == 0.0) {
    fail(ErrorCode::degenerate_input, "sample '" + id + "': all hashed features cancelled");
  }
  for (double& x : v) x /= norm;
  return v;
}

inline EmbeddingSet embed_instructions(const Corpus& corpus, std::size_t dim,
                                       std::uint64_t seed, unsigned workers = 0) {
  if (dim < 2) fail(ErrorCode::bad_config, "embedding dimension must be >= 2");
  EmbeddingSet set;
  set.dim = dim;
  set.entries.resize(corpus.size());
  detail::for_blocks(corpus.size(), workers, [&](std::size_t, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const Sample& sample = corpus.samples[i];
      set.entries[i] = {sample.id, embed_text(sample.instruction, dim, seed, sample.id)};
    }
  });
  return set;
}

/// Import vectors computed elsewhere (JSON Lines {"id", "vector": [...]}).
/// Vectors are unit-normalized on load; already-unit vectors pass through
/// bit-exactly so a write/load round trip is stable.
inline EmbeddingSet load_external_embeddings(const std::string& path, const Corpus& corpus) {
  std::unordered_map<std::string, std::vector<double>> by_id;
  std::size_t dim = 0;
  detail::for_each_jsonl(path, [&](std::size_t line, nlohmann::json record) {
    auto where = path + ":" + std::to_string(line);
    if (!record.contains("id") || !record.contains("vector") || !record["vector"].is_array()) {
      fail(ErrorCode::malformed_record, where + ": expected id and vector");
    }
    std::string id = detail::field_as_string(record["id"]);
    std::vector<double> v;
    v.reserve(record["vector"].size());
    for (const auto& x : record["vector"]) {
      if (!x.is_number()) fail(ErrorCode::non_finite_value, where + ": non-numeric component");
      v.push_back(x.get<double>());
    }
    if (dim == 0) {
      dim = v.size();
      if (dim < 2) fail(ErrorCode::dimension_mismatch, where + ": dimension must be >= 2");
    } else if (v.size() != dim) {
      fail(ErrorCode::dimension_mismatch,
           where + ": expected dimension " + std::to_string(dim) + ", got " +
               std::to_string(v.size()));
    }
    for (double x : v) {
      if (!std::isfinite(x)) fail(ErrorCode::non_finite_value, where + ": id '" + id + "'");
    }
    by_id.emplace(std::move(id), std::move(v));
  });

  EmbeddingSet set;
  set.dim = dim;
  set.entries.reserve(corpus.size());
  for (const auto& sample : corpus.samples) {
    auto it = by_id.find(sample.id);
    if (it == by_id.end()) {
      fail(ErrorCode::missing_id, "no embedding for id '" + sample.id + "'");
    }
    std::vector<double> v = it->second;
    double norm = detail::l2_norm(v);
    if (!(norm > 0.0) || !std::isfinite(norm)) {
      fail(ErrorCode::degenerate_input, "zero-norm embedding for id '" + sample.id + "'");
    }
    if (std::abs(norm - 1.0) > 1e-9) {
      for (double& x : v) x /= norm;
    }
    set.entries.push_back({sample.id, std::move(v)});
  }
  return set;
}

inline void write_embeddings(const EmbeddingSet& set, const std::string& path) {
  detail::JsonlWriter out(path);
  for (const auto& entry : set.entries) {
    out.write({{"id", entry.id}, {"vector", entry.vector}});
  }
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return dot / std::sqrt(na * nb);
}

}  // namespace tunekit

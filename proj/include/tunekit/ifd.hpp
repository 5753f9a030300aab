#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tunekit/corpus.hpp"
#include "tunekit/detail/jsonl.hpp"
#include "tunekit/detail/parallel.hpp"
#include "tunekit/errors.hpp"
#include "tunekit/tokenize.hpp"

namespace tunekit {

/// Conditional perplexity, unconditional perplexity, and their ratio for one
/// sample. The ratio is computed in log space: exp(mean_nll_cond -
/// mean_nll_uncond), which equals ppl_cond / ppl_uncond up to rounding.
struct IfdRecord {
  std::string id;
  double ppl_cond = 0.0;
  double ppl_uncond = 0.0;
  double ifd = 0.0;
  std::size_t n_tokens = 0;
};

/// Serves one natural-log probability per code token, in order. The code
/// tokens are scored twice: with the instruction prefix visible and without.
class PerplexityProvider {
 public:
  virtual ~PerplexityProvider() = default;
  virtual std::vector<double> cond_logprobs(const TokenizedSample& sample) const = 0;
  virtual std::vector<double> uncond_logprobs(const TokenizedSample& sample) const = 0;
};

namespace detail {

// Compensated sum; code sequences can run to thousands of tokens.
inline double kahan_sum(const std::vector<double>& values) {
  double sum = 0.0, carry = 0.0;
  for (double v : values) {
    double y = v - carry;
    double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
  return sum;
}

inline double mean_nll(const std::vector<double>& logprobs) {
  return -kahan_sum(logprobs) / static_cast<double>(logprobs.size());
}

}  // namespace detail

/// Add-k smoothed n-gram model over the byte vocabulary plus separator,
/// trained on full sample streams (instruction, code, end marker). A
/// deterministic stand-in for a real language model; contexts are the last
/// order-1 tokens of the visible prefix, shorter near sequence starts.
class NgramLm final : public PerplexityProvider {
 public:
  static constexpr std::size_t kMaxOrder = 7;  // contexts pack into 64-bit keys

  NgramLm(std::size_t order, double add_k, std::size_t structural_overhead = 1)
      : order_(order), add_k_(add_k), tokenizer_{structural_overhead} {
    if (order_ < 1) fail(ErrorCode::bad_config, "order must be >= 1");
    if (order_ > kMaxOrder) {
      fail(ErrorCode::order_too_large,
           "order " + std::to_string(order_) + " > " + std::to_string(kMaxOrder));
    }
    if (!(add_k_ > 0)) fail(ErrorCode::bad_config, "add_k must be > 0");
    for (std::size_t level = 0; level < order_ && level <= kMaxDenseLevel; ++level) {
      std::size_t contexts = 1;
      for (std::size_t i = 0; i < level; ++i) contexts *= kLmVocabSize;
      dense_pair_.emplace_back(contexts * kLmVocabSize, 0);
      dense_ctx_.emplace_back(contexts, 0);
    }
    sparse_pair_.resize(order_ > kMaxDenseLevel + 1 ? order_ - kMaxDenseLevel - 1 : 0);
    sparse_ctx_.resize(sparse_pair_.size());
  }

  void observe(const Corpus& corpus) {
    for (const auto& sample : corpus.samples) observe(tokenizer_.tokenize(sample));
  }

  void observe(const TokenizedSample& sample) {
    std::vector<TokenId> stream = full_stream(sample);
    for (std::size_t t = 0; t < stream.size(); ++t) {
      const std::size_t max_level = std::min(order_ - 1, t);
      for (std::size_t level = 0; level <= max_level; ++level) {
        count(stream.data() + t - level, level, stream[t]);
      }
    }
  }

  std::vector<double> cond_logprobs(const TokenizedSample& sample) const override {
    return score(sample, /*with_instruction=*/true);
  }

  std::vector<double> uncond_logprobs(const TokenizedSample& sample) const override {
    return score(sample, /*with_instruction=*/false);
  }

  // P(next | ctx) with add-k smoothing over the 257-symbol vocabulary.
  double logprob(const TokenId* ctx, std::size_t level, TokenId next) const {
    auto [pair_count, ctx_count] = lookup(ctx, level, next);
    double num = static_cast<double>(pair_count) + add_k_;
    double den = static_cast<double>(ctx_count) +
                 add_k_ * static_cast<double>(kLmVocabSize);
    return std::log(num) - std::log(den);
  }

  std::size_t order() const { return order_; }
  double add_k() const { return add_k_; }
  const ByteTokenizer& tokenizer() const { return tokenizer_; }

 private:
  static constexpr std::size_t kMaxDenseLevel = 2;  // trigram tables stay dense

  std::vector<TokenId> full_stream(const TokenizedSample& sample) const {
    std::vector<TokenId> stream;
    stream.reserve(sample.instruction_len + sample.code_len + 1);
    stream.insert(stream.end(), sample.instruction_tokens.begin(),
                  sample.instruction_tokens.end());
    stream.insert(stream.end(), sample.code_tokens.begin(), sample.code_tokens.end());
    if (tokenizer_.structural_overhead > 0) stream.push_back(kSeparatorToken);
    return stream;
  }

  static std::size_t dense_ctx_index(const TokenId* ctx, std::size_t level) {
    std::size_t idx = 0;
    for (std::size_t i = 0; i < level; ++i) idx = idx * kLmVocabSize + ctx[i];
    return idx;
  }

  // Tokens are 9 bits wide; a leading 1 bit disambiguates context lengths.
  static std::uint64_t sparse_ctx_key(const TokenId* ctx, std::size_t level) {
    std::uint64_t key = 1;
    for (std::size_t i = 0; i < level; ++i) key = (key << 9) | ctx[i];
    return key;
  }

  void count(const TokenId* ctx, std::size_t level, TokenId next) {
    if (level <= kMaxDenseLevel) {
      std::size_t c = dense_ctx_index(ctx, level);
      ++dense_pair_[level][c * kLmVocabSize + next];
      ++dense_ctx_[level][c];
    } else {
      std::size_t s = level - kMaxDenseLevel - 1;
      ++sparse_pair_[s][(sparse_ctx_key(ctx, level) << 9) | next];
      ++sparse_ctx_[s][sparse_ctx_key(ctx, level)];
    }
  }

  std::pair<std::uint64_t, std::uint64_t> lookup(const TokenId* ctx, std::size_t level,
                                                 TokenId next) const {
    if (level <= kMaxDenseLevel) {
      std::size_t c = dense_ctx_index(ctx, level);
      return {dense_pair_[level][c * kLmVocabSize + next], dense_ctx_[level][c]};
    }
    std::size_t s = level - kMaxDenseLevel - 1;
    auto pit = sparse_pair_[s].find((sparse_ctx_key(ctx, level) << 9) | next);
    auto cit = sparse_ctx_[s].find(sparse_ctx_key(ctx, level));
    return {pit == sparse_pair_[s].end() ? 0 : pit->second,
            cit == sparse_ctx_[s].end() ? 0 : cit->second};
  }

  std::vector<double> score(const TokenizedSample& sample, bool with_instruction) const {
    if (sample.code_len == 0) {
      fail(ErrorCode::zero_length_code, "sample '" + sample.id + "'");
    }
    std::vector<TokenId> prefix;
    if (with_instruction) {
      prefix.reserve(sample.instruction_len + sample.code_len);
      prefix.insert(prefix.end(), sample.instruction_tokens.begin(),
                    sample.instruction_tokens.end());
    } else {
      prefix.reserve(sample.code_len);
    }
    std::vector<double> logprobs;
    logprobs.reserve(sample.code_len);
    for (std::size_t j = 0; j < sample.code_len; ++j) {
      const std::size_t level = std::min(order_ - 1, prefix.size());
      logprobs.push_back(logprob(prefix.data() + prefix.size() - level, level,
                                 sample.code_tokens[j]));
      prefix.push_back(sample.code_tokens[j]);
    }
    return logprobs;
  }

  std::size_t order_;
  double add_k_;
  ByteTokenizer tokenizer_;
  std::vector<std::vector<std::uint32_t>> dense_pair_;
  std::vector<std::vector<std::uint32_t>> dense_ctx_;
  std::vector<std::unordered_map<std::uint64_t, std::uint32_t>> sparse_pair_;
  std::vector<std::unordered_map<std::uint64_t, std::uint32_t>> sparse_ctx_;
};

/// Count n-gram statistics of the corpus itself and serve smoothed
/// probabilities from them. Deterministic; no model server involved.
inline NgramLm train_builtin_lm(const Corpus& corpus, std::size_t order = 3,
                                double add_k = 0.5, std::size_t structural_overhead = 1) {
  NgramLm lm(order, add_k, structural_overhead);
  lm.observe(corpus);
  return lm;
}

/// Log-probabilities computed by an external model, served verbatim.
class StoredLogprobs final : public PerplexityProvider {
 public:
  struct Entry {
    std::vector<double> cond;
    std::vector<double> uncond;
  };

  void insert(std::string id, Entry entry) { entries_.emplace(std::move(id), std::move(entry)); }

  std::vector<double> cond_logprobs(const TokenizedSample& sample) const override {
    return find(sample.id).cond;
  }

  std::vector<double> uncond_logprobs(const TokenizedSample& sample) const override {
    return find(sample.id).uncond;
  }

  const Entry& find(const std::string& id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) {
      fail(ErrorCode::missing_id, "no stored log-probs for id '" + id + "'");
    }
    return it->second;
  }

 private:
  std::unordered_map<std::string, Entry> entries_;
};

inline double conditional_ppl(const TokenizedSample& sample,
                              const PerplexityProvider& provider) {
  auto logprobs = provider.cond_logprobs(sample);
  if (logprobs.empty()) fail(ErrorCode::zero_length_code, "sample '" + sample.id + "'");
  return std::exp(detail::mean_nll(logprobs));
}

inline double unconditional_ppl(const TokenizedSample& sample,
                                const PerplexityProvider& provider) {
  auto logprobs = provider.uncond_logprobs(sample);
  if (logprobs.empty()) fail(ErrorCode::zero_length_code, "sample '" + sample.id + "'");
  return std::exp(detail::mean_nll(logprobs));
}

/// IFD = PPL(code | instruction) / PPL(code), evaluated in log space so an
/// instruction-blind provider gives exactly 1.0.
inline IfdRecord ifd_score(const TokenizedSample& sample, const PerplexityProvider& provider) {
  auto cond = provider.cond_logprobs(sample);
  auto uncond = provider.uncond_logprobs(sample);
  if (cond.empty() || uncond.empty()) {
    fail(ErrorCode::zero_length_code, "sample '" + sample.id + "'");
  }
  if (cond.size() != uncond.size()) {
    fail(ErrorCode::length_mismatch,
         "sample '" + sample.id + "': conditional has " + std::to_string(cond.size()) +
             " log-probs, unconditional " + std::to_string(uncond.size()));
  }
  IfdRecord record;
  record.id = sample.id;
  record.n_tokens = cond.size();
  const double nll_cond = detail::mean_nll(cond);
  const double nll_uncond = detail::mean_nll(uncond);
  record.ppl_cond = std::exp(nll_cond);
  record.ppl_uncond = std::exp(nll_uncond);
  record.ifd = std::exp(nll_cond - nll_uncond);
  return record;
}

/// Score every sample; pure parallel map, output in corpus order.
inline std::vector<IfdRecord> score_corpus(const Corpus& corpus,
                                           const PerplexityProvider& provider,
                                           const ByteTokenizer& tokenizer = {},
                                           unsigned workers = 0) {
  std::vector<IfdRecord> records(corpus.size());
  detail::for_blocks(corpus.size(), workers,
                     [&](std::size_t, std::size_t begin, std::size_t end) {
                       for (std::size_t i = begin; i < end; ++i) {
                         records[i] = ifd_score(tokenizer.tokenize(corpus.samples[i]), provider);
                       }
                     });
  return records;
}

/// External log-probs file: JSON Lines {"id", "cond_logprobs", "uncond_logprobs"},
/// natural log, one value per code token. Array lengths are validated against
/// the active token-count provider.
template <class CodeLenFn>
StoredLogprobs load_external_logprobs(const std::string& path, const Corpus& corpus,
                                      CodeLenFn&& code_len_of) {
  std::unordered_map<std::string, StoredLogprobs::Entry> parsed;
  detail::for_each_jsonl(path, [&](std::size_t line, nlohmann::json record) {
    auto where = path + ":" + std::to_string(line);
    if (!record.contains("id") || !record.contains("cond_logprobs") ||
        !record.contains("uncond_logprobs")) {
      fail(ErrorCode::malformed_record,
           where + ": expected id, cond_logprobs, uncond_logprobs");
    }
    std::string id = detail::field_as_string(record["id"]);
    auto read_array = [&](const char* key) {
      std::vector<double> values;
      const auto& arr = record[key];
      if (!arr.is_array()) fail(ErrorCode::malformed_record, where + ": " + key + " not an array");
      values.reserve(arr.size());
      for (std::size_t i = 0; i < arr.size(); ++i) {
        if (!arr[i].is_number()) {
          fail(ErrorCode::malformed_record, where + ": non-numeric log-prob");
        }
        double v = arr[i].get<double>();
        if (!std::isfinite(v)) {
          fail(ErrorCode::non_finite_value, where + ": id '" + id + "' index " + std::to_string(i));
        }
        if (v > 0.0) {
          fail(ErrorCode::positive_log_prob,
               where + ": id '" + id + "' index " + std::to_string(i) + " is " +
                   std::to_string(v));
        }
        values.push_back(v);
      }
      return values;
    };
    StoredLogprobs::Entry entry{read_array("cond_logprobs"), read_array("uncond_logprobs")};
    parsed.emplace(std::move(id), std::move(entry));
  });

  StoredLogprobs provider;
  for (const auto& sample : corpus.samples) {
    auto it = parsed.find(sample.id);
    if (it == parsed.end()) {
      fail(ErrorCode::missing_id, "no stored log-probs for id '" + sample.id + "'");
    }
    const std::size_t expected = code_len_of(sample);
    auto check = [&](const std::vector<double>& values, const char* which) {
      if (values.size() != expected) {
        fail(ErrorCode::length_mismatch,
             "id '" + sample.id + "': expected " + std::to_string(expected) + " " + which +
                 " log-probs, got " + std::to_string(values.size()));
      }
    };
    check(it->second.cond, "conditional");
    check(it->second.uncond, "unconditional");
    provider.insert(sample.id, it->second);
  }
  return provider;
}

inline void write_ifd_records(const std::vector<IfdRecord>& records, const std::string& path) {
  detail::JsonlWriter out(path);
  for (const auto& r : records) {
    out.write({{"id", r.id},
               {"ppl_cond", r.ppl_cond},
               {"ppl_uncond", r.ppl_uncond},
               {"ifd", r.ifd},
               {"n_tokens", r.n_tokens}});
  }
}

inline std::vector<IfdRecord> load_ifd_records(const std::string& path) {
  std::vector<IfdRecord> records;
  detail::for_each_jsonl(path, [&](std::size_t line, nlohmann::json record) {
    auto where = path + ":" + std::to_string(line);
    if (!record.contains("id") || !record.contains("ifd")) {
      fail(ErrorCode::malformed_record, where + ": expected id and ifd");
    }
    IfdRecord r;
    r.id = detail::field_as_string(record["id"]);
    r.ppl_cond = record.value("ppl_cond", 0.0);
    r.ppl_uncond = record.value("ppl_uncond", 0.0);
    r.ifd = record["ifd"].get<double>();
    r.n_tokens = record.value("n_tokens", std::size_t{0});
    records.push_back(std::move(r));
  });
  return records;
}

}  // namespace tunekit

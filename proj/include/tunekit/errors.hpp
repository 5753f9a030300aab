#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace tunekit {

enum class ErrorCode {
  io_error,
  bad_config,
  empty_corpus,
  malformed_record,
  duplicate_id,
  empty_field,
  missing_id,
  dimension_mismatch,
  non_finite_value,
  degenerate_input,
  k_too_large,
  non_finite_embedding,
  empty_code,
  zero_length_code,
  length_mismatch,
  positive_log_prob,
  order_too_large,
  score_missing,
  sample_exceeds_context,
  too_many_items,
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::io_error: return "io_error";
    case ErrorCode::bad_config: return "bad_config";
    case ErrorCode::empty_corpus: return "empty_corpus";
    case ErrorCode::malformed_record: return "malformed_record";
    case ErrorCode::duplicate_id: return "duplicate_id";
    case ErrorCode::empty_field: return "empty_field";
    case ErrorCode::missing_id: return "missing_id";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::non_finite_value: return "non_finite_value";
    case ErrorCode::degenerate_input: return "degenerate_input";
    case ErrorCode::k_too_large: return "k_too_large";
    case ErrorCode::non_finite_embedding: return "non_finite_embedding";
    case ErrorCode::empty_code: return "empty_code";
    case ErrorCode::zero_length_code: return "zero_length_code";
    case ErrorCode::length_mismatch: return "length_mismatch";
    case ErrorCode::positive_log_prob: return "positive_log_prob";
    case ErrorCode::order_too_large: return "order_too_large";
    case ErrorCode::score_missing: return "score_missing";
    case ErrorCode::sample_exceeds_context: return "sample_exceeds_context";
    case ErrorCode::too_many_items: return "too_many_items";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message)
      : std::runtime_error(std::move(message)), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace tunekit

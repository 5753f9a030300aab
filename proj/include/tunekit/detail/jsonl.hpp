#pragma once

#include <fstream>
#include <string>
#include <utility>

#include <json.hpp>

#include "tunekit/errors.hpp"

namespace tunekit::detail {

// Calls fn(line_number, object) for every non-blank line. Line numbers are
// 1-based file positions, so skipped blank lines still advance the count.
template <class Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
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
      fail(ErrorCode::malformed_record,
           path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!record.is_object()) {
      fail(ErrorCode::malformed_record,
           path + ":" + std::to_string(line_no) + ": record is not an object");
    }
    fn(line_no, std::move(record));
  }
}

class JsonlWriter {
 public:
  explicit JsonlWriter(const std::string& path) : out_(path, std::ios::binary) {
    if (!out_) fail(ErrorCode::io_error, "cannot write " + path);
  }

  void write(const nlohmann::json& record) { out_ << record.dump() << '\n'; }

 private:
  std::ofstream out_;
};

inline void write_json_file(const std::string& path, const nlohmann::json& doc) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io_error, "cannot write " + path);
  out << doc.dump(2) << '\n';
}

inline nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io_error, "cannot open " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::malformed_record, path + ": " + e.what());
  }
  return doc;
}

}  // namespace tunekit::detail

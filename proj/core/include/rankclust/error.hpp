#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace rankclust {

// Caller handed us something outside an operation's contract.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed container bytes. Carries the record index and byte offset where
// parsing stopped so tooling can point at the damage.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& what, std::int64_t record, std::uint64_t offset);

  std::int64_t record() const noexcept { return record_; }
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::int64_t record_;
  std::uint64_t offset_;
};

// A file could not be read or written, or its contents make no sense as the
// expected kind of data (corpus, sidecar config, report).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values surfaced during training or evaluation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rankclust

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace isoex {

enum class ErrorKind {
  kIo,
  kEmptyDataset,
  kSchema,
  kParse,
  kValidation,
  kInsufficientData,
  kShape,
  kTooLarge,
  kNotFound,
};

std::string_view error_kind_name(ErrorKind kind);

// Base of every typed failure raised by the library. Callers branch on kind()
// rather than on the concrete subclass when mapping to exit codes or HTTP
// statuses.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& m) : Error(ErrorKind::kIo, m) {}
};

class EmptyDatasetError : public Error {
 public:
  explicit EmptyDatasetError(const std::string& m)
      : Error(ErrorKind::kEmptyDataset, m) {}
};

class SchemaError : public Error {
 public:
  SchemaError(const std::string& column, const std::string& m)
      : Error(ErrorKind::kSchema, m), column_(column) {}
  const std::string& column() const noexcept { return column_; }

 private:
  std::string column_;
};

class ParseError : public Error {
 public:
  explicit ParseError(const std::string& m) : Error(ErrorKind::kParse, m) {}
};

// Raised on an invariant violation; field() names the offending entry using a
// dotted path such as "thresholds.top_quantile".
class ValidationError : public Error {
 public:
  ValidationError(const std::string& field, const std::string& m)
      : Error(ErrorKind::kValidation, field + ": " + m), field_(field) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class InsufficientDataError : public Error {
 public:
  explicit InsufficientDataError(const std::string& m)
      : Error(ErrorKind::kInsufficientData, m) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& m) : Error(ErrorKind::kShape, m) {}
};

class TooLargeError : public Error {
 public:
  explicit TooLargeError(const std::string& m) : Error(ErrorKind::kTooLarge, m) {}
};

class NotFoundError : public Error {
 public:
  explicit NotFoundError(const std::string& m) : Error(ErrorKind::kNotFound, m) {}
};

}  // namespace isoex

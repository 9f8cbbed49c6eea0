#include "isoex/error.hpp"

namespace isoex {

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo: return "IoError";
    case ErrorKind::kEmptyDataset: return "EmptyDataset";
    case ErrorKind::kSchema: return "SchemaError";
    case ErrorKind::kParse: return "ParseError";
    case ErrorKind::kValidation: return "ValidationError";
    case ErrorKind::kInsufficientData: return "InsufficientData";
    case ErrorKind::kShape: return "ShapeError";
    case ErrorKind::kTooLarge: return "TooLarge";
    case ErrorKind::kNotFound: return "NotFound";
  }
  return "Error";
}

}  // namespace isoex

#include "cvit/errors.hpp"

namespace cvit {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimension:
      return "dimension error";
    case ErrorKind::kParameter:
      return "parameter error";
    case ErrorKind::kGeometry:
      return "geometry error";
    case ErrorKind::kIndex:
      return "index error";
    case ErrorKind::kState:
      return "state error";
    case ErrorKind::kFormat:
      return "format error";
    case ErrorKind::kContract:
      return "contract violation";
    case ErrorKind::kDivergence:
      return "divergence";
    case ErrorKind::kIo:
      return "io error";
  }
  return "error";
}

}  // namespace cvit

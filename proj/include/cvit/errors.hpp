#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace cvit {

// Error categories. The CLI maps each category to its own exit code.
enum class ErrorKind {
  kDimension = 2,
  kParameter = 3,
  kGeometry = 4,
  kIndex = 5,
  kState = 6,
  kFormat = 7,
  kContract = 8,
  kDivergence = 9,
  kIo = 10,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

#define CVIT_DEFINE_ERROR(Name, Kind)                                   \
  class Name : public Error {                                           \
   public:                                                              \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  };

CVIT_DEFINE_ERROR(DimensionError, kDimension)
CVIT_DEFINE_ERROR(ParameterError, kParameter)
CVIT_DEFINE_ERROR(GeometryError, kGeometry)
CVIT_DEFINE_ERROR(IndexError, kIndex)
CVIT_DEFINE_ERROR(StateError, kState)
CVIT_DEFINE_ERROR(FormatError, kFormat)
CVIT_DEFINE_ERROR(ContractError, kContract)
CVIT_DEFINE_ERROR(DivergenceError, kDivergence)
CVIT_DEFINE_ERROR(IoError, kIo)

#undef CVIT_DEFINE_ERROR

}  // namespace cvit

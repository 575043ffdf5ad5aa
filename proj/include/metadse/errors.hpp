#pragma once

#include <stdexcept>
#include <string>

namespace metadse {

// Coarse class of a failure; the CLI maps it to an exit code.
enum class ErrorClass { Usage, Data, Numeric };

class Error : public std::runtime_error {
 public:
  Error(std::string kind, ErrorClass cls, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)), cls_(cls) {}

  const std::string& kind() const noexcept { return kind_; }
  ErrorClass error_class() const noexcept { return cls_; }

 private:
  std::string kind_;
  ErrorClass cls_;
};

#define METADSE_DEFINE_ERROR(Name, Class)                                  \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string& what) : Error(#Name, Class, what) {} \
  };

METADSE_DEFINE_ERROR(ContractError, ErrorClass::Usage)
METADSE_DEFINE_ERROR(ShapeError, ErrorClass::Usage)
METADSE_DEFINE_ERROR(ConfigError, ErrorClass::Usage)
METADSE_DEFINE_ERROR(InvalidPoint, ErrorClass::Data)
METADSE_DEFINE_ERROR(InvalidVector, ErrorClass::Data)
METADSE_DEFINE_ERROR(SourceExhausted, ErrorClass::Data)
METADSE_DEFINE_ERROR(SchemaError, ErrorClass::Data)
METADSE_DEFINE_ERROR(DuplicateError, ErrorClass::Data)
METADSE_DEFINE_ERROR(ParseError, ErrorClass::Data)
METADSE_DEFINE_ERROR(IoError, ErrorClass::Data)
METADSE_DEFINE_ERROR(NumericError, ErrorClass::Numeric)
METADSE_DEFINE_ERROR(DegenerateMask, ErrorClass::Numeric)
METADSE_DEFINE_ERROR(DivisionByZero, ErrorClass::Numeric)

#undef METADSE_DEFINE_ERROR

}  // namespace metadse

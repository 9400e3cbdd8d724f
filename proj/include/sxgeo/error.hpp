#pragma once

#include <stdexcept>
#include <string>

namespace sxgeo {

// Process exit codes used by the command-line front end.
enum class ExitCode : int {
  kOk = 0,
  kConfig = 2,
  kData = 3,
  kNumeric = 4,
  kInternal = 5,
};

class Error : public std::runtime_error {
 public:
  Error(const std::string& kind, const std::string& what, ExitCode code)
      : std::runtime_error(kind + ": " + what), kind_(kind), code_(code) {}

  const std::string& kind() const noexcept { return kind_; }
  ExitCode exit_code() const noexcept { return code_; }

 private:
  std::string kind_;
  ExitCode code_;
};

#define SXGEO_DEFINE_ERROR(Name, Code)                  \
  class Name : public Error {                           \
   public:                                              \
    explicit Name(const std::string& what)              \
        : Error(#Name, what, ExitCode::Code) {}         \
  }

SXGEO_DEFINE_ERROR(ConfigError, kConfig);
SXGEO_DEFINE_ERROR(ParameterError, kConfig);
SXGEO_DEFINE_ERROR(SchemaError, kData);
SXGEO_DEFINE_ERROR(DataError, kData);
SXGEO_DEFINE_ERROR(DegenerateColumnError, kData);
SXGEO_DEFINE_ERROR(ShapeError, kData);
SXGEO_DEFINE_ERROR(FormatError, kData);
SXGEO_DEFINE_ERROR(ZeroVarianceError, kNumeric);
SXGEO_DEFINE_ERROR(SingularFitError, kNumeric);
SXGEO_DEFINE_ERROR(DegenerateGeometryError, kNumeric);

#undef SXGEO_DEFINE_ERROR

}  // namespace sxgeo

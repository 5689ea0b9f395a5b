#pragma once

#include <stdexcept>
#include <string>

namespace cfglearn {

/// Coarse failure classes. The CLI maps these onto its exit codes.
enum class ErrorKind {
  usage,      // exit 1
  data,       // exit 2
  numerical,  // exit 3
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define CFGLEARN_DEFINE_ERROR(Name, Kind)                                \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {} \
  }

// Schema / configuration space.
CFGLEARN_DEFINE_ERROR(SchemaError, data);
CFGLEARN_DEFINE_ERROR(DecodeError, data);
CFGLEARN_DEFINE_ERROR(DimensionError, data);
CFGLEARN_DEFINE_ERROR(EnumerationCapError, data);

// Performance data and datasets.
CFGLEARN_DEFINE_ERROR(DegenerateDataError, data);
CFGLEARN_DEFINE_ERROR(DataError, data);
CFGLEARN_DEFINE_ERROR(ParseError, data);
CFGLEARN_DEFINE_ERROR(PersistenceError, data);
CFGLEARN_DEFINE_ERROR(ExternalError, data);

// Learning / optimisation.
CFGLEARN_DEFINE_ERROR(DivergenceError, numerical);
CFGLEARN_DEFINE_ERROR(ClusteringError, data);
CFGLEARN_DEFINE_ERROR(SolveError, data);

// Caller mistakes.
CFGLEARN_DEFINE_ERROR(ArgumentError, usage);

#undef CFGLEARN_DEFINE_ERROR

/// Exit code for a failure of the given kind (0 is reserved for success).
int exit_code(ErrorKind kind) noexcept;

}  // namespace cfglearn

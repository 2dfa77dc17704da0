#pragma once

#include <stdexcept>
#include <string>

namespace dpts {

// Library-wide error taxonomy. Every failure mode raises one of these so the
// CLI can map them to exit codes and messages uniformly.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define DPTS_DEFINE_ERROR(NAME)                       \
  class NAME : public Error {                         \
   public:                                            \
    explicit NAME(const std::string& what) : Error(what) {} \
  }

DPTS_DEFINE_ERROR(DimensionError);     // tensor/dataset shape mismatches
DPTS_DEFINE_ERROR(ArgumentError);      // violated scalar preconditions
DPTS_DEFINE_ERROR(FormatError);        // unparsable input files
DPTS_DEFINE_ERROR(ArchitectureError);  // unsatisfiable network descriptors
DPTS_DEFINE_ERROR(ConfigError);        // invalid run configuration
DPTS_DEFINE_ERROR(CorruptionError);    // checkpoint magic/checksum failures
DPTS_DEFINE_ERROR(VersionError);       // checkpoint format version mismatch
DPTS_DEFINE_ERROR(RangeError);         // search bracket exhausted
DPTS_DEFINE_ERROR(DivergenceError);    // non-finite training loss

#undef DPTS_DEFINE_ERROR

}  // namespace dpts

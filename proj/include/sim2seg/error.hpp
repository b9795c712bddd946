#pragma once

#include <stdexcept>
#include <string>

namespace sim2seg {

enum class ErrorKind {
  kShape,
  kDomain,
  kDimension,
  kConfig,
  kData,
  kMissingArtifact,
  kTrainingFault,
  kSettling,
  kRender,
  kIo,
};

const char* to_string(ErrorKind kind);

/// Single exception type for the library; `kind()` drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace sim2seg

#pragma once

#include <stdexcept>
#include <string>

namespace scenekit {

enum class ErrorCode {
  kDomain,
  kDimension,
  kDegenerateInstance,
  kIngest,
  kRankDeficient,
  kCompletion,
  kReconstruction,
  kDivergence,
  kGeneration,
  kComposition,
  kDegenerateMesh,
  kIo,
  kNoBackground,
};

const char* to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries one of the codes above so that
// callers (the pipeline, the CLI) can decide between skipping and aborting.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace scenekit

#include "scenekit/error.hpp"

namespace scenekit {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kDomain: return "domain";
    case ErrorCode::kDimension: return "dimension";
    case ErrorCode::kDegenerateInstance: return "degenerate_instance";
    case ErrorCode::kIngest: return "ingest";
    case ErrorCode::kRankDeficient: return "rank_deficient";
    case ErrorCode::kCompletion: return "completion";
    case ErrorCode::kReconstruction: return "reconstruction";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kGeneration: return "generation";
    case ErrorCode::kComposition: return "composition";
    case ErrorCode::kDegenerateMesh: return "degenerate_mesh";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kNoBackground: return "no_background";
  }
  return "unknown";
}

}  // namespace scenekit

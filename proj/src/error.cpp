#include "afflab/error.hpp"

namespace afflab {

const char* to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
    case ErrorCode::kIo: return "Io";
    case ErrorCode::kEmptyDataset: return "EmptyDataset";
    case ErrorCode::kBinOverfull: return "BinOverfull";
    case ErrorCode::kOutOfWorkspace: return "OutOfWorkspace";
    case ErrorCode::kImageTooSmall: return "ImageTooSmall";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kEmptyMask: return "EmptyMask";
    case ErrorCode::kCacheMismatch: return "CacheMismatch";
    case ErrorCode::kDivergedGradient: return "DivergedGradient";
    case ErrorCode::kIncompatibleArchitecture: return "IncompatibleArchitecture";
    case ErrorCode::kNoValidAction: return "NoValidAction";
    case ErrorCode::kInvalidTarget: return "InvalidTarget";
    case ErrorCode::kEmptyBuffer: return "EmptyBuffer";
    case ErrorCode::kBadIndex: return "BadIndex";
    case ErrorCode::kEmptyScene: return "EmptyScene";
  }
  return "Unknown";
}

}  // namespace afflab

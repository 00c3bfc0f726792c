// Copyright (C) 2026 metapose contributors
// SPDX-License-Identifier: Apache-2.0

#include "metapose/error.hpp"

namespace metapose {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDegenerateRotation: return "DegenerateRotation";
    case ErrorKind::kNotARotation: return "NotARotation";
    case ErrorKind::kDegeneratePose: return "DegeneratePose";
    case ErrorKind::kAlignmentFailed: return "AlignmentFailed";
    case ErrorKind::kEmptyHeatmap: return "EmptyHeatmap";
    case ErrorKind::kNoActiveTerms: return "NoActiveTerms";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kTrainingDiverged: return "TrainingDiverged";
    case ErrorKind::kInvalidConfig: return "InvalidConfig";
    case ErrorKind::kSchema: return "SchemaError";
  }
  return "Unknown";
}

}  // namespace metapose

// Copyright (C) 2026 metapose contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace metapose {

enum class ErrorKind {
  kDegenerateRotation,
  kNotARotation,
  kDegeneratePose,
  kAlignmentFailed,
  kEmptyHeatmap,
  kNoActiveTerms,
  kShapeMismatch,
  kTrainingDiverged,
  kInvalidConfig,
  kSchema,
};

const char* to_string(ErrorKind kind);

/// Single exception type for the library; `kind()` tells callers which
/// contract was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace metapose

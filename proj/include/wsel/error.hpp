// Copyright 2026 The wsel Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace wsel {

enum class ErrorCode {
  kIo,
  kMalformedHeader,
  kOutOfBounds,
  kOverlap,
  kUnknownDtype,
  kDuplicateName,
  kInvariant,
  kSchema,
  kDanglingGroup,
  kZeroDepth,
  kMissingTensor,
  kRankMismatch,
  kShapeMismatch,
  kFamilyMismatch,
  kStudentWider,
  kFixedMismatch,
  kInvalidArgument,
  kIndexOutOfRange,
  kUnbound,
  kLengthMismatch,
  kNotNormalized,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kIo: return "io";
    case ErrorCode::kMalformedHeader: return "malformed-header";
    case ErrorCode::kOutOfBounds: return "out-of-bounds";
    case ErrorCode::kOverlap: return "offset-overlap";
    case ErrorCode::kUnknownDtype: return "unknown-dtype";
    case ErrorCode::kDuplicateName: return "duplicate-name";
    case ErrorCode::kInvariant: return "invariant-violation";
    case ErrorCode::kSchema: return "schema-violation";
    case ErrorCode::kDanglingGroup: return "dangling-group";
    case ErrorCode::kZeroDepth: return "zero-depth";
    case ErrorCode::kMissingTensor: return "missing-tensor";
    case ErrorCode::kRankMismatch: return "rank-mismatch";
    case ErrorCode::kShapeMismatch: return "shape-mismatch";
    case ErrorCode::kFamilyMismatch: return "family-mismatch";
    case ErrorCode::kStudentWider: return "student-wider";
    case ErrorCode::kFixedMismatch: return "fixed-axis-mismatch";
    case ErrorCode::kInvalidArgument: return "invalid-argument";
    case ErrorCode::kIndexOutOfRange: return "index-out-of-range";
    case ErrorCode::kUnbound: return "unbound-tensor";
    case ErrorCode::kLengthMismatch: return "length-mismatch";
    case ErrorCode::kNotNormalized: return "not-normalized";
  }
  return "unknown";
}

/// Every failure raised by the library. `code()` lets callers branch
/// without parsing the message.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace wsel

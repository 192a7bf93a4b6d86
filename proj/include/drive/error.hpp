// Copyright 2026 The dqn-drive Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DRIVE_ERROR_HPP_
#define DRIVE_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace drive {

enum class ErrorCode {
  // trackmap
  MissingHeaderField,
  DimensionMismatch,
  InvalidCell,
  SpawnOccupied,
  CheckpointOccupied,
  BadNumber,
  InvalidRadii,
  InvalidDimensions,
  // env
  SteppedWhenTerminal,
  InvalidConfig,
  // nn
  NonFiniteInput,
  EmptyMask,
  NonFiniteGradient,
  ArchitectureMismatch,
  BadFormat,
  BadVersion,
  ShapeMismatch,
  // agent
  NotEnoughSamples,
  // harness
  ConfigInvalid,
  IoError,
  DivergedNonFinite,
  EmptyEval,
  PortInUse,
  ProtocolViolation,
};

inline std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::MissingHeaderField: return "MissingHeaderField";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InvalidCell: return "InvalidCell";
    case ErrorCode::SpawnOccupied: return "SpawnOccupied";
    case ErrorCode::CheckpointOccupied: return "CheckpointOccupied";
    case ErrorCode::BadNumber: return "BadNumber";
    case ErrorCode::InvalidRadii: return "InvalidRadii";
    case ErrorCode::InvalidDimensions: return "InvalidDimensions";
    case ErrorCode::SteppedWhenTerminal: return "SteppedWhenTerminal";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::NonFiniteInput: return "NonFiniteInput";
    case ErrorCode::EmptyMask: return "EmptyMask";
    case ErrorCode::NonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::ArchitectureMismatch: return "ArchitectureMismatch";
    case ErrorCode::BadFormat: return "BadFormat";
    case ErrorCode::BadVersion: return "BadVersion";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NotEnoughSamples: return "NotEnoughSamples";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::DivergedNonFinite: return "DivergedNonFinite";
    case ErrorCode::EmptyEval: return "EmptyEval";
    case ErrorCode::PortInUse: return "PortInUse";
    case ErrorCode::ProtocolViolation: return "ProtocolViolation";
  }
  return "Unknown";
}

// All library failures are reported with this exception type; callers switch
// on code() rather than on the message text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace drive

#endif  // DRIVE_ERROR_HPP_

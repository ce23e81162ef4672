/*
 * Copyright (c) 2026, The covclust Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace covclust {

enum class ErrorCode {
  InvalidMatrix,
  NotPSD,
  DimMismatch,
  EmptySet,
  InvalidParam,
  InvalidDistance,
  DegenerateDistances,
  TooFewItems,
  NeedsTwoClusters,
  RequiresRawCurves,
  TooFewCurves,
  InputFormat,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidMatrix: return "InvalidMatrix";
    case ErrorCode::NotPSD: return "NotPSD";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::InvalidParam: return "InvalidParam";
    case ErrorCode::InvalidDistance: return "InvalidDistance";
    case ErrorCode::DegenerateDistances: return "DegenerateDistances";
    case ErrorCode::TooFewItems: return "TooFewItems";
    case ErrorCode::NeedsTwoClusters: return "NeedsTwoClusters";
    case ErrorCode::RequiresRawCurves: return "RequiresRawCurves";
    case ErrorCode::TooFewCurves: return "TooFewCurves";
    case ErrorCode::InputFormat: return "InputFormat";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (the CLI in particular) can map it without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

  /// Input-side failures (bad files, bad flags) as opposed to numeric ones.
  bool is_input_error() const noexcept {
    return code_ == ErrorCode::InputFormat || code_ == ErrorCode::InvalidParam ||
           code_ == ErrorCode::TooFewCurves || code_ == ErrorCode::RequiresRawCurves ||
           code_ == ErrorCode::TooFewItems;
  }

 private:
  ErrorCode code_;
};

}  // namespace covclust

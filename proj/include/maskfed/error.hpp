// Copyright 2026 The maskfed Authors.
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

#ifndef MASKFED_ERROR_HPP_
#define MASKFED_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace maskfed {

enum class ErrorCode {
  kInvalidInput,
  kDegenerateInput,
  kEmptyInput,
  kCheckFailed,
  kSerialization,
  kProtocol,
  kParse,
  kTrainingDiverged,
  kUndefinedTest,
  kConfig,
};

inline const char* ErrorCodeName(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidInput: return "invalid input";
    case ErrorCode::kDegenerateInput: return "degenerate input";
    case ErrorCode::kEmptyInput: return "empty input";
    case ErrorCode::kCheckFailed: return "check failed";
    case ErrorCode::kSerialization: return "serialization error";
    case ErrorCode::kProtocol: return "protocol error";
    case ErrorCode::kParse: return "parse error";
    case ErrorCode::kTrainingDiverged: return "training diverged";
    case ErrorCode::kUndefinedTest: return "undefined test";
    case ErrorCode::kConfig: return "config error";
  }
  return "error";
}

// Every failure raised by the library carries one of the codes above so
// callers (and the CLI exit-code mapping) can dispatch without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(ErrorCodeName(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

inline void Require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

}  // namespace maskfed

#endif  // MASKFED_ERROR_HPP_

// Copyright 2026 The feccm Authors.
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

#ifndef FECCM_ERRORS_HPP_
#define FECCM_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace feccm {

// Error categories. The numeric values are mirrored by the C API status codes
// in feccm.h; keep the two in sync.
enum class ErrorCode : int {
  kOk = 0,
  kParse = 1,
  kSchema = 2,
  kLookup = 3,
  kContract = 4,
  kDegenerateSplit = 5,
  kEmptyFit = 6,
  kNumeric = 7,
  kCapability = 8,
  kEmptyEval = 9,
  kConfig = 10,
  kIo = 11,
};

const char* ErrorCodeName(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void Fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace feccm

#endif  // FECCM_ERRORS_HPP_

// Copyright (c) 2026 FlowDiar Authors
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

#ifndef FLOWDIAR_ERRORS_HPP_
#define FLOWDIAR_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace flowdiar {

// Failure categories. The CLI maps these to a single machine-parsable
// "ERROR <category>: <message>" line and a distinct exit code.
enum class ErrorCategory {
  kUsage,
  kConfig,
  kIo,
  kFormat,
  kShape,
  kPrereq,
  kNumeric,
  kInternal,
};

inline const char* error_category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::kUsage: return "usage";
    case ErrorCategory::kConfig: return "config";
    case ErrorCategory::kIo: return "io";
    case ErrorCategory::kFormat: return "format";
    case ErrorCategory::kShape: return "shape";
    case ErrorCategory::kPrereq: return "prereq";
    case ErrorCategory::kNumeric: return "numeric";
    case ErrorCategory::kInternal: return "internal";
  }
  return "internal";
}

inline int error_category_exit_code(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::kUsage: return 2;
    case ErrorCategory::kConfig: return 2;
    case ErrorCategory::kIo: return 3;
    case ErrorCategory::kFormat: return 4;
    case ErrorCategory::kShape: return 5;
    case ErrorCategory::kPrereq: return 6;
    case ErrorCategory::kNumeric: return 7;
    case ErrorCategory::kInternal: return 1;
  }
  return 1;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& message)
      : std::runtime_error(message), category_(category) {}

  ErrorCategory category() const { return category_; }

 private:
  ErrorCategory category_;
};

}  // namespace flowdiar

#endif  // FLOWDIAR_ERRORS_HPP_

/*
 * Copyright 2026 The TACOS Gateway Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
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

namespace tacos {

enum class ErrorCode {
  kParse,
  kDuplicateId,
  kInvalidPath,
  kUnknownLabel,
  kEmptySubset,
  kInvalidArgument,
  kInsufficientExemplars,
  kParseFailure,
  kClassificationFailure,
  kTransport,
  kTimeout,
  kDanglingId,
  kInsufficientPool,
  kEmptyPool,
  kStorage,
  kConflict,
  kNotFound,
  kPrecondition,
  kConfig,
};

std::string_view to_string(ErrorCode code);

// All library failures are reported as tacos::Error. `location` names the
// offending input (file:line, record index, label id) when one exists.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string message, std::string location = {});

  ErrorCode code() const noexcept { return code_; }
  const std::string& location() const noexcept { return location_; }
  const std::string& message() const noexcept { return message_; }

 private:
  ErrorCode code_;
  std::string message_;
  std::string location_;
};

}  // namespace tacos

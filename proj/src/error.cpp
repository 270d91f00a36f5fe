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

#include "tacos/error.hpp"

namespace tacos {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kParse: return "parse_error";
    case ErrorCode::kDuplicateId: return "duplicate_id";
    case ErrorCode::kInvalidPath: return "invalid_path";
    case ErrorCode::kUnknownLabel: return "unknown_label";
    case ErrorCode::kEmptySubset: return "empty_subset";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kInsufficientExemplars: return "insufficient_exemplars";
    case ErrorCode::kParseFailure: return "parse_failure";
    case ErrorCode::kClassificationFailure: return "classification_failed";
    case ErrorCode::kTransport: return "transport_error";
    case ErrorCode::kTimeout: return "timeout";
    case ErrorCode::kDanglingId: return "dangling_id";
    case ErrorCode::kInsufficientPool: return "insufficient_pool";
    case ErrorCode::kEmptyPool: return "empty_pool";
    case ErrorCode::kStorage: return "storage_error";
    case ErrorCode::kConflict: return "conflict";
    case ErrorCode::kNotFound: return "not_found";
    case ErrorCode::kPrecondition: return "precondition_failed";
    case ErrorCode::kConfig: return "config_error";
  }
  return "unknown";
}

namespace {

std::string format_what(ErrorCode code, const std::string& message,
                        const std::string& location) {
  std::string out(to_string(code));
  if (!location.empty()) out += " at " + location;
  out += ": " + message;
  return out;
}

}  // namespace

Error::Error(ErrorCode code, std::string message, std::string location)
    : std::runtime_error(format_what(code, message, location)),
      code_(code),
      message_(std::move(message)),
      location_(std::move(location)) {}

}  // namespace tacos

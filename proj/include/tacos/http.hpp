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

#include <chrono>
#include <map>
#include <memory>
#include <semaphore>
#include <string>
#include <string_view>

namespace tacos {

struct HttpResponse {
  int status = 0;
  std::string body;
};

// Minimal POST-only client surface so remote backends can be exercised
// against scripted transports in tests.
class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  // Throws kTimeout or kTransport. Non-2xx statuses are returned, not thrown.
  virtual HttpResponse post(const std::string& path, const std::string& body,
                            const std::map<std::string, std::string>& headers,
                            std::chrono::milliseconds timeout) = 0;
};

struct Url {
  std::string base;  // scheme://host[:port]
  std::string path;  // starts with '/'
};

// Splits "http://host:port/path" into base and path. Throws kConfig.
Url parse_url(std::string_view url);

std::unique_ptr<HttpTransport> make_http_transport(const std::string& base_url);

struct RetryOptions {
  int max_retries = 2;
  std::chrono::milliseconds timeout{30000};
  std::chrono::milliseconds initial_backoff{50};
};

// POSTs with bounded retries on transport errors, timeouts, 429 and 5xx.
// Throws the last error once the budget is spent; other 4xx are returned.
HttpResponse post_with_retry(HttpTransport& transport, const std::string& path,
                             const std::string& body,
                             const std::map<std::string, std::string>& headers,
                             const RetryOptions& options);

// Bounds in-flight requests of one backend.
class InFlightLimiter {
 public:
  explicit InFlightLimiter(int limit) : slots_(limit < 1 ? 1 : limit) {}

  class Guard {
   public:
    explicit Guard(InFlightLimiter& owner) : owner_(owner) { owner_.slots_.acquire(); }
    ~Guard() { owner_.slots_.release(); }
    Guard(const Guard&) = delete;
    Guard& operator=(const Guard&) = delete;

   private:
    InFlightLimiter& owner_;
  };

 private:
  std::counting_semaphore<1024> slots_;
};

}  // namespace tacos

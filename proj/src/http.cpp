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

#include "tacos/http.hpp"

#include <thread>

#include "httplib.h"
#include "tacos/error.hpp"

namespace tacos {

Url parse_url(std::string_view url) {
  auto scheme_end = url.find("://");
  if (scheme_end == std::string_view::npos) {
    throw Error(ErrorCode::kConfig, "endpoint must be an absolute URL", std::string(url));
  }
  auto path_begin = url.find('/', scheme_end + 3);
  Url out;
  if (path_begin == std::string_view::npos) {
    out.base = std::string(url);
    out.path = "/";
  } else {
    out.base = std::string(url.substr(0, path_begin));
    out.path = std::string(url.substr(path_begin));
  }
  return out;
}

namespace {

class HttplibTransport final : public HttpTransport {
 public:
  explicit HttplibTransport(const std::string& base_url) : base_url_(base_url) {}

  HttpResponse post(const std::string& path, const std::string& body,
                    const std::map<std::string, std::string>& headers,
                    std::chrono::milliseconds timeout) override {
    // One client per call keeps the transport safe for concurrent use.
    httplib::Client client(base_url_);
    auto seconds = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    auto micros = std::chrono::duration_cast<std::chrono::microseconds>(timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());
    httplib::Headers h;
    for (const auto& [k, v] : headers) h.emplace(k, v);
    auto result = client.Post(path, h, body, "application/json");
    if (!result) {
      auto err = result.error();
      std::string what = httplib::to_string(err);
      if (err == httplib::Error::Read || err == httplib::Error::ConnectionTimeout) {
        throw Error(ErrorCode::kTimeout, what, base_url_ + path);
      }
      throw Error(ErrorCode::kTransport, what, base_url_ + path);
    }
    return HttpResponse{result->status, result->body};
  }

 private:
  std::string base_url_;
};

}  // namespace

std::unique_ptr<HttpTransport> make_http_transport(const std::string& base_url) {
  return std::make_unique<HttplibTransport>(base_url);
}

HttpResponse post_with_retry(HttpTransport& transport, const std::string& path,
                             const std::string& body,
                             const std::map<std::string, std::string>& headers,
                             const RetryOptions& options) {
  auto backoff = options.initial_backoff;
  for (int attempt = 0;; ++attempt) {
    bool last = attempt >= options.max_retries;
    try {
      HttpResponse response = transport.post(path, body, headers, options.timeout);
      bool retryable = response.status == 429 || response.status >= 500;
      if (!retryable) return response;
      if (last) {
        throw Error(ErrorCode::kTransport,
                    "server returned HTTP " + std::to_string(response.status), path);
      }
    } catch (const Error& e) {
      if (last || (e.code() != ErrorCode::kTransport && e.code() != ErrorCode::kTimeout)) throw;
    }
    std::this_thread::sleep_for(backoff);
    backoff *= 2;
  }
}

}  // namespace tacos

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

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "tacos/dataset.hpp"
#include "tacos/error.hpp"
#include "tacos/http.hpp"
#include "tacos/taxonomy.hpp"
#include "tacos/util.hpp"

namespace tacos::testing {

inline std::filesystem::path data_dir() { return TACOS_DATA_DIR; }

inline const Taxonomy& canonical_taxonomy() {
  static const Taxonomy t = load_taxonomy_file(data_dir() / "tacos.yaml");
  return t;
}

inline const Taxonomy& separate_taxonomy() {
  static const Taxonomy t = load_taxonomy_file(data_dir() / "tacos_separate.yaml");
  return t;
}

// Fresh directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("tacos-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Labeled synthetic items: counts[label] items per label, unique texts.
inline Pool synthetic_pool(const std::map<std::string, std::size_t>& counts,
                           std::uint64_t seed = 1) {
  Pool pool;
  Rng rng(seed);
  for (const auto& [label, n] : counts) {
    for (std::size_t i = 0; i < n; ++i) {
      LabeledQuery item;
      item.text = "synthetic " + label + " query " + std::to_string(i) + " #" +
                  std::to_string(rng.below(1'000'000));
      item.id = query_id(item.text);
      item.label_id = label;
      item.source = "synthetic";
      item.provenance = Provenance::kCollected;
      pool.add(std::move(item));
    }
  }
  return pool;
}

inline std::map<std::string, std::size_t> uniform_counts(const Taxonomy& taxonomy, std::size_t n) {
  std::map<std::string, std::size_t> counts;
  for (const auto& id : taxonomy.ids()) counts[id] = n;
  return counts;
}

// In-process HTTP server on an ephemeral port.
class StubServer {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  explicit StubServer(Handler handler) : handler_(std::move(handler)) {
    server_.Post(R"(/.*)", [this](const httplib::Request& req, httplib::Response& res) {
      ++requests_;
      handler_(req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~StubServer() {
    server_.stop();
    thread_.join();
  }

  std::string base() const { return "http://127.0.0.1:" + std::to_string(port_); }
  std::string url(const std::string& path) const { return base() + path; }
  int requests() const { return requests_.load(); }

 private:
  Handler handler_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::atomic<int> requests_{0};
};

// Scripted transport: replies are consumed in order; an empty body with
// status 0 simulates a transport error.
class ScriptedTransport : public HttpTransport {
 public:
  explicit ScriptedTransport(std::vector<HttpResponse> replies) : replies_(std::move(replies)) {}

  HttpResponse post(const std::string& path, const std::string& body,
                    const std::map<std::string, std::string>& headers,
                    std::chrono::milliseconds) override {
    paths.push_back(path);
    bodies.push_back(body);
    last_headers = headers;
    if (next_ >= replies_.size()) throw Error(ErrorCode::kTransport, "script exhausted");
    HttpResponse r = replies_[next_++];
    if (r.status == 0) throw Error(ErrorCode::kTransport, "scripted transport error");
    return r;
  }

  std::vector<std::string> paths;
  std::vector<std::string> bodies;
  std::map<std::string, std::string> last_headers;

 private:
  std::vector<HttpResponse> replies_;
  std::size_t next_ = 0;
};

inline std::string chat_reply(const std::string& content) {
  return nlohmann::json{{"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}
      .dump();
}

}  // namespace tacos::testing

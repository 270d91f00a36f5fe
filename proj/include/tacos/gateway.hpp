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
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "tacos/annotation.hpp"
#include "tacos/audit.hpp"
#include "tacos/classifier.hpp"
#include "tacos/experiment.hpp"
#include "tacos/routing.hpp"
#include "tacos/taxonomy.hpp"

namespace httplib {
class Server;
}

namespace tacos {

// Versioned media type of every gateway request and response body.
inline constexpr std::string_view kMediaType = "application/vnd.tacos.v1+json";
// Header naming the annotator on annotation actions.
inline constexpr std::string_view kAnnotatorHeader = "X-Annotator-Id";

struct GatewayConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::filesystem::path taxonomy_file;
  std::filesystem::path policy_file;
  std::filesystem::path templates_file;
  std::string active_backend;
  std::vector<BackendConfig> backends;
  std::filesystem::path audit_log;
  std::filesystem::path dataset_pool;  // optional; enables the annotation API
  std::filesystem::path dataset_log;   // revision log, defaults next to the pool
  std::filesystem::path reports_dir;   // optional; enables the reports API
  double request_timeout_seconds = 10.0;
  bool expose_scores = false;
  int threads = 8;
  std::size_t max_body_bytes = 64 * 1024;
};

// Relative paths resolve against base_dir. Throws kConfig.
GatewayConfig parse_gateway_config(const nlohmann::json& node,
                                   const std::filesystem::path& base_dir = {});
GatewayConfig load_gateway_config(const std::filesystem::path& path);

nlohmann::json taxonomy_to_json(const Taxonomy& taxonomy);
nlohmann::json to_json(const RoutingDecision& decision);

struct ApiRequest {
  std::string method;
  std::string path;
  std::map<std::string, std::string> query;
  std::map<std::string, std::string> headers;  // lower-case names
  std::string body;
};

struct ApiResponse {
  int status = 200;
  std::string body;
  std::string content_type = std::string(kMediaType);
};

// Classification + routing + audit, plus the annotation and report APIs.
// Startup loads and validates every referenced file and throws on failure,
// so an invalid policy never serves a request.
class Gateway {
 public:
  explicit Gateway(GatewayConfig config);
  // Uses `classifier` instead of building the active backend.
  Gateway(GatewayConfig config, std::shared_ptr<Classifier> classifier);
  ~Gateway();

  ApiResponse handle(const ApiRequest& request);

  // Re-reads taxonomy, policy and templates and swaps them in atomically.
  // On failure the previous snapshot stays active and the error propagates.
  void reload();

  AuditStore& audit() { return *audit_; }
  AnnotationStore* annotations() { return annotations_.get(); }
  const GatewayConfig& config() const { return config_; }

 private:
  struct Snapshot {
    Taxonomy taxonomy;
    RoutingPolicy policy;
    MessageTemplates templates;
    std::shared_ptr<Classifier> classifier;
  };

  std::shared_ptr<const Snapshot> load_snapshot(std::shared_ptr<Classifier> classifier) const;
  std::shared_ptr<const Snapshot> snapshot() const;
  std::string next_request_id();

  ApiResponse classify_route(const ApiRequest& request);
  ApiResponse get_taxonomy();
  ApiResponse list_items(const ApiRequest& request);
  ApiResponse get_item(const std::string& id);
  ApiResponse item_action(const ApiRequest& request, const std::string& id);
  ApiResponse list_reports();
  ApiResponse get_report(const std::string& digest);
  ApiResponse get_report_file(const std::string& digest, const std::string& file);

  GatewayConfig config_;
  bool injected_classifier_ = false;
  mutable std::mutex snapshot_mutex_;
  std::shared_ptr<const Snapshot> snapshot_;
  std::unique_ptr<AuditStore> audit_;
  std::unique_ptr<AnnotationStore> annotations_;
  std::unique_ptr<ReportStore> reports_;
  std::string request_prefix_;
  std::atomic<std::uint64_t> request_counter_{0};
};

// httplib front end for a Gateway.
class GatewayServer {
 public:
  explicit GatewayServer(Gateway& gateway);
  ~GatewayServer();

  // Binds without serving; port 0 picks a free port. Returns the port.
  int bind(const std::string& host, int port);
  // Serves on a background thread (after bind).
  void start();
  // Serves on the calling thread until stop() (after bind).
  void run();
  void stop();

 private:
  Gateway& gateway_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
};

}  // namespace tacos

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

#include "tacos/gateway.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <future>
#include <random>

#include "httplib.h"
#include "tacos/error.hpp"
#include "tacos/util.hpp"

namespace tacos {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
  std::filesystem::path p(value);
  return p.is_relative() && !base.empty() ? base / p : p;
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound:
      return 404;
    case ErrorCode::kConflict:
      return 409;
    case ErrorCode::kParse:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kUnknownLabel:
      return 400;
    default:
      return 500;
  }
}

ApiResponse json_response(int status, const nlohmann::json& body) {
  return ApiResponse{status, body.dump(), std::string(kMediaType)};
}

ApiResponse error_response(int status, std::string_view code, std::string_view message) {
  return json_response(status, {{"error", {{"code", code}, {"message", message}}}});
}

ApiResponse error_response(const Error& e) {
  return error_response(status_for(e.code()), to_string(e.code()), e.message());
}

std::optional<nlohmann::json> parse_body(const ApiRequest& request) {
  auto parsed = nlohmann::json::parse(request.body, nullptr, false);
  if (parsed.is_discarded() || !parsed.is_object()) return std::nullopt;
  return parsed;
}

std::vector<std::string> split_path(std::string_view path) {
  std::vector<std::string> parts;
  std::size_t i = 0;
  while (i < path.size()) {
    while (i < path.size() && path[i] == '/') ++i;
    std::size_t j = path.find('/', i);
    if (j == std::string_view::npos) j = path.size();
    if (j > i) parts.emplace_back(path.substr(i, j - i));
    i = j;
  }
  return parts;
}

std::string content_type_for(std::string_view file) {
  auto ends_with = [&](std::string_view suffix) {
    return file.size() >= suffix.size() && file.substr(file.size() - suffix.size()) == suffix;
  };
  if (ends_with(".json")) return "application/json";
  if (ends_with(".jsonl")) return "application/x-ndjson";
  if (ends_with(".csv")) return "text/csv";
  return "application/octet-stream";
}

std::optional<std::size_t> parse_size(const std::map<std::string, std::string>& query,
                                      const std::string& key) {
  auto it = query.find(key);
  if (it == query.end()) return std::nullopt;
  try {
    std::size_t used = 0;
    unsigned long long v = std::stoull(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument(key);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw Error(ErrorCode::kInvalidArgument, "expected a non-negative integer", key);
  }
}

AnnotationFilter filter_from(const std::map<std::string, std::string>& fields) {
  AnnotationFilter filter;
  if (auto it = fields.find("provenance"); it != fields.end()) {
    filter.provenance = parse_provenance(it->second);
    if (!filter.provenance) throw Error(ErrorCode::kInvalidArgument, "unknown provenance", it->second);
  }
  if (auto it = fields.find("label_id"); it != fields.end()) filter.label_id = it->second;
  if (auto it = fields.find("source"); it != fields.end()) filter.source = it->second;
  if (auto it = fields.find("pending"); it != fields.end()) {
    filter.pending_only = it->second == "1" || it->second == "true";
  }
  if (auto it = fields.find("include_removed"); it != fields.end()) {
    filter.include_removed = it->second == "1" || it->second == "true";
  }
  return filter;
}

constexpr std::size_t kDefaultPageSize = 50;
constexpr std::size_t kMaxPageSize = 500;

}  // namespace

GatewayConfig parse_gateway_config(const nlohmann::json& node, const std::filesystem::path& base_dir) {
  GatewayConfig config;
  try {
    if (node.value("schema", std::string("tacos-gateway/1")) != "tacos-gateway/1") {
      throw Error(ErrorCode::kConfig, "unsupported gateway config schema");
    }
    if (node.contains("listen")) {
      const auto& listen = node["listen"];
      config.host = listen.value("host", config.host);
      config.port = listen.value("port", config.port);
    }
    config.taxonomy_file = resolve(base_dir, node.at("taxonomy").get<std::string>());
    config.policy_file = resolve(base_dir, node.at("policy").get<std::string>());
    config.templates_file = resolve(base_dir, node.at("templates").get<std::string>());
    config.active_backend = node.at("active_backend").get<std::string>();
    for (const auto& b : node.at("backends")) {
      BackendConfig backend = parse_backend_config(b);
      if (!backend.rules_file.empty()) backend.rules_file = resolve(base_dir, backend.rules_file.string());
      if (!backend.exemplar_file.empty()) {
        backend.exemplar_file = resolve(base_dir, backend.exemplar_file.string());
      }
      config.backends.push_back(std::move(backend));
    }
    config.audit_log = resolve(base_dir, node.at("audit_log").get<std::string>());
    if (node.contains("dataset")) {
      const auto& dataset = node["dataset"];
      config.dataset_pool = resolve(base_dir, dataset.at("pool").get<std::string>());
      config.dataset_log = dataset.contains("revisions")
                               ? resolve(base_dir, dataset["revisions"].get<std::string>())
                               : std::filesystem::path(config.dataset_pool.string() + ".revisions.jsonl");
    }
    if (node.contains("reports")) config.reports_dir = resolve(base_dir, node["reports"].get<std::string>());
    config.request_timeout_seconds = node.value("request_timeout", config.request_timeout_seconds);
    config.expose_scores = node.value("expose_scores", false);
    config.threads = node.value("threads", config.threads);
    config.max_body_bytes = node.value("max_body_bytes", config.max_body_bytes);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, e.what(), "gateway config");
  }
  if (config.request_timeout_seconds <= 0) {
    throw Error(ErrorCode::kConfig, "request_timeout must be positive");
  }
  if (config.threads < 1) throw Error(ErrorCode::kConfig, "threads must be at least 1");
  bool found = std::any_of(config.backends.begin(), config.backends.end(),
                           [&](const BackendConfig& b) { return b.backend_id == config.active_backend; });
  if (!found) throw Error(ErrorCode::kConfig, "active_backend is not configured", config.active_backend);
  return config;
}

GatewayConfig load_gateway_config(const std::filesystem::path& path) {
  return parse_gateway_config(load_yaml_file_as_json(path), path.parent_path());
}

nlohmann::json taxonomy_to_json(const Taxonomy& taxonomy) {
  nlohmann::json leaves = nlohmann::json::array();
  for (const auto& leaf : taxonomy.leaves()) {
    nlohmann::json tools = nullptr;
    if (auto t = tool_set_from_id(leaf.id)) {
      tools = nlohmann::json::array();
      for (auto r : t->items()) tools.push_back(to_string(r));
    }
    leaves.push_back({{"id", leaf.id},
                      {"display_name", leaf.display_name},
                      {"path",
                       {{"safety", to_string(leaf.path.safety)},
                        {"clinicality", to_string(leaf.path.clinicality)},
                        {"seeking", to_string(leaf.path.seeking)}}},
                      {"description", leaf.description},
                      {"examples", leaf.examples},
                      {"tools", std::move(tools)}});
  }
  return {{"version", taxonomy.version()},
          {"source_digest", taxonomy.source_digest()},
          {"default_locale", taxonomy.default_locale()},
          {"leaves", std::move(leaves)}};
}

nlohmann::json to_json(const RoutingDecision& d) {
  nlohmann::json tools = nlohmann::json::array();
  for (auto t : d.tools.items()) tools.push_back(to_string(t));
  return {{"label_id", d.label_id.empty() ? nlohmann::json(nullptr) : nlohmann::json(d.label_id)},
          {"action", to_string(d.action)},
          {"tools", std::move(tools)},
          {"message_template_id", d.message_template_id},
          {"log_unsafe", d.log_unsafe},
          {"error", d.error ? nlohmann::json(*d.error) : nlohmann::json(nullptr)}};
}

// ---------------------------------------------------------------------------

Gateway::Gateway(GatewayConfig config) : Gateway(std::move(config), nullptr) {}

Gateway::Gateway(GatewayConfig config, std::shared_ptr<Classifier> classifier)
    : config_(std::move(config)), injected_classifier_(classifier != nullptr) {
  snapshot_ = load_snapshot(std::move(classifier));
  audit_ = std::make_unique<AuditStore>(config_.audit_log);
  if (!config_.dataset_pool.empty()) {
    annotations_ = std::make_unique<AnnotationStore>(load_pool(config_.dataset_pool),
                                                     config_.dataset_log, snapshot_->taxonomy);
  }
  if (!config_.reports_dir.empty()) reports_ = std::make_unique<ReportStore>(config_.reports_dir);
  std::random_device rd;
  char prefix[17];
  std::snprintf(prefix, sizeof prefix, "%08x%08x", rd(), rd());
  request_prefix_ = prefix;
}

Gateway::~Gateway() = default;

std::shared_ptr<const Gateway::Snapshot> Gateway::load_snapshot(
    std::shared_ptr<Classifier> classifier) const {
  Taxonomy taxonomy = load_taxonomy_file(config_.taxonomy_file);
  RoutingPolicy policy = load_policy_file(config_.policy_file);
  validate_policy(policy, taxonomy);
  MessageTemplates templates = load_templates_file(config_.templates_file);
  validate_templates(templates, policy);
  if (!classifier) {
    auto it = std::find_if(config_.backends.begin(), config_.backends.end(),
                           [&](const BackendConfig& b) { return b.backend_id == config_.active_backend; });
    if (it == config_.backends.end()) {
      throw Error(ErrorCode::kConfig, "active_backend is not configured", config_.active_backend);
    }
    classifier = make_classifier(*it, taxonomy);
  }
  return std::make_shared<const Snapshot>(
      Snapshot{std::move(taxonomy), std::move(policy), std::move(templates), std::move(classifier)});
}

std::shared_ptr<const Gateway::Snapshot> Gateway::snapshot() const {
  std::lock_guard lock(snapshot_mutex_);
  return snapshot_;
}

void Gateway::reload() {
  std::shared_ptr<Classifier> keep = injected_classifier_ ? snapshot()->classifier : nullptr;
  auto next = load_snapshot(std::move(keep));
  std::lock_guard lock(snapshot_mutex_);
  snapshot_ = std::move(next);
}

std::string Gateway::next_request_id() {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%s-%010llu", request_prefix_.c_str(),
                static_cast<unsigned long long>(++request_counter_));
  return buf;
}

ApiResponse Gateway::handle(const ApiRequest& request) {
  try {
    auto parts = split_path(request.path);
    if (parts.empty() || parts[0] != "v1") return error_response(404, "not_found", "no such route");
    bool get = request.method == "GET";
    bool post = request.method == "POST";
    if (parts.size() == 2 && parts[1] == "classify-route") {
      if (!post) return error_response(405, "method_not_allowed", "use POST");
      return classify_route(request);
    }
    if (parts.size() == 2 && parts[1] == "taxonomy") {
      if (!get) return error_response(405, "method_not_allowed", "use GET");
      return get_taxonomy();
    }
    if (parts.size() == 3 && parts[1] == "audit" && parts[2] == "counters") {
      if (!get) return error_response(405, "method_not_allowed", "use GET");
      return json_response(200, {{"counters", audit_->counters()},
                                 {"last_sequence", audit_->last_sequence()}});
    }
    if (parts.size() >= 3 && parts[1] == "annotation" && parts[2] == "items") {
      if (!annotations_) return error_response(404, "not_found", "annotation store not configured");
      if (parts.size() == 3) {
        if (!get && !post) return error_response(405, "method_not_allowed", "use GET or POST");
        return list_items(request);
      }
      if (parts.size() == 4) {
        if (!get) return error_response(405, "method_not_allowed", "use GET");
        return get_item(parts[3]);
      }
      if (parts.size() == 5 && parts[4] == "action") {
        if (!post) return error_response(405, "method_not_allowed", "use POST");
        return item_action(request, parts[3]);
      }
    }
    if (parts.size() >= 2 && parts[1] == "reports") {
      if (!reports_) return error_response(404, "not_found", "report store not configured");
      if (!get) return error_response(405, "method_not_allowed", "use GET");
      if (parts.size() == 2) return list_reports();
      if (parts.size() == 3) return get_report(parts[2]);
      std::string file;
      for (std::size_t i = 3; i < parts.size(); ++i) file += (i > 3 ? "/" : "") + parts[i];
      return get_report_file(parts[2], file);
    }
    return error_response(404, "not_found", "no such route");
  } catch (const Error& e) {
    return error_response(e);
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
}

ApiResponse Gateway::classify_route(const ApiRequest& request) {
  using Clock = std::chrono::steady_clock;
  auto body = parse_body(request);
  if (!body || !body->contains("text") || !(*body)["text"].is_string()) {
    return error_response(400, "invalid_argument", "body must be an object with a string 'text'");
  }
  std::string locale = body->value("locale", "");
  std::string text;
  try {
    text = normalize_text((*body)["text"].get<std::string>());
  } catch (const Error&) {
    return error_response(400, "invalid_argument", "text is not valid UTF-8");
  }
  if (text.empty()) return error_response(400, "invalid_argument", "text is empty");

  auto snap = snapshot();
  std::string request_id = next_request_id();
  auto respond = [&](int status, const RoutingDecision& decision, const Prediction* prediction,
                     double classify_seconds, double route_seconds, const char* error_code,
                     const std::string& error_message) {
    nlohmann::json out{
        {"request_id", request_id},
        {"label_id", prediction ? nlohmann::json(prediction->label_id) : nlohmann::json(nullptr)},
        {"decision", to_json(decision)},
        {"latency", {{"classify_seconds", classify_seconds}, {"route_seconds", route_seconds}}},
        {"taxonomy_version", snap->taxonomy.version()},
        {"policy_version", snap->policy.version}};
    try {
      out["decision"]["message"] = snap->templates.resolve(decision.message_template_id, locale);
    } catch (const Error&) {
      out["decision"]["message"] = nullptr;
    }
    if (prediction && config_.expose_scores && !prediction->scores.empty()) {
      nlohmann::json scores = nlohmann::json::object();
      for (std::size_t i = 0; i < prediction->scores.size(); ++i) {
        scores[snap->taxonomy.leaf(i).id] = prediction->scores[i];
      }
      out["scores"] = std::move(scores);
    }
    if (error_code) out["error"] = {{"code", error_code}, {"message", error_message}};
    return json_response(status, out);
  };

  // The classifier runs on its own thread so a hung backend cannot hold
  // the request past the deadline; the thread owns the snapshot it uses.
  auto start = Clock::now();
  auto promise = std::make_shared<std::promise<Prediction>>();
  std::future<Prediction> future = promise->get_future();
  std::thread([snap, promise, text] {
    try {
      promise->set_value(snap->classifier->classify(snap->taxonomy, text));
    } catch (...) {
      promise->set_exception(std::current_exception());
    }
  }).detach();
  auto deadline = std::chrono::duration<double>(config_.request_timeout_seconds);
  if (future.wait_for(deadline) != std::future_status::ready) {
    double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
    return respond(504, fail_closed_decision("timeout"), nullptr, elapsed, 0.0, "timeout",
                   "classification exceeded the request timeout");
  }
  Prediction prediction;
  try {
    prediction = future.get();
  } catch (const Error& e) {
    double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
    bool timeout = e.code() == ErrorCode::kTimeout;
    return respond(timeout ? 504 : 503, fail_closed_decision(timeout ? "timeout" : "classification_failed"),
                   nullptr, elapsed, 0.0, timeout ? "timeout" : "classification_failed", e.message());
  } catch (const std::exception& e) {
    double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
    return respond(503, fail_closed_decision("classification_failed"), nullptr, elapsed, 0.0,
                   "classification_failed", e.what());
  }
  double classify_seconds = std::chrono::duration<double>(Clock::now() - start).count();

  auto route_start = Clock::now();
  RoutingDecision decision = route(snap->taxonomy, snap->policy, prediction.label_id);
  double route_seconds = std::chrono::duration<double>(Clock::now() - route_start).count();
  if (decision.error) {
    return respond(503, decision, &prediction, classify_seconds, route_seconds, "routing_failed",
                   *decision.error);
  }
  if (decision.log_unsafe) {
    try {
      audit_->record_unsafe(decision, text);
    } catch (const Error& e) {
      return respond(500, decision, &prediction, classify_seconds, route_seconds, "audit_failed",
                     e.message());
    }
  }
  return respond(200, decision, &prediction, classify_seconds, route_seconds, nullptr, {});
}

ApiResponse Gateway::get_taxonomy() {
  auto snap = snapshot();
  nlohmann::json out = taxonomy_to_json(snap->taxonomy);
  out["policy_version"] = snap->policy.version;
  return json_response(200, out);
}

ApiResponse Gateway::list_items(const ApiRequest& request) {
  std::map<std::string, std::string> fields = request.query;
  if (request.method == "POST" && !request.body.empty()) {
    auto body = parse_body(request);
    if (!body) return error_response(400, "invalid_argument", "body must be a JSON object");
    for (const auto& [key, value] : body->items()) {
      fields[key] = value.is_string() ? value.get<std::string>() : value.dump();
    }
  }
  AnnotationFilter filter = filter_from(fields);
  std::size_t offset = parse_size(fields, "offset").value_or(0);
  std::size_t limit = std::min(parse_size(fields, "limit").value_or(kDefaultPageSize), kMaxPageSize);
  std::size_t total = 0;
  auto items = annotations_->list(filter, offset, limit, &total);
  nlohmann::json array = nlohmann::json::array();
  for (const auto& item : items) array.push_back(to_json(item));
  return json_response(200, {{"total", total},
                             {"offset", offset},
                             {"items", std::move(array)},
                             {"progress", annotations_->progress()}});
}

ApiResponse Gateway::get_item(const std::string& id) {
  return json_response(200, to_json(annotations_->get(id)));
}

ApiResponse Gateway::item_action(const ApiRequest& request, const std::string& id) {
  auto header = request.headers.find("x-annotator-id");
  if (header == request.headers.end() || trim(header->second).empty()) {
    return error_response(400, "invalid_argument", "missing X-Annotator-Id header");
  }
  auto body = parse_body(request);
  if (!body || !body->contains("action") || !(*body)["action"].is_string()) {
    return error_response(400, "invalid_argument", "body must name an action");
  }
  ActionRequest action;
  action.annotator_id = std::string(trim(header->second));
  auto parsed = parse_review_action((*body)["action"].get<std::string>());
  if (!parsed) return error_response(400, "invalid_argument", "unknown action");
  action.action = *parsed;
  if (!body->contains("base_version") || !(*body)["base_version"].is_number_unsigned()) {
    return error_response(400, "invalid_argument", "base_version is required");
  }
  action.base_version = (*body)["base_version"].get<std::uint64_t>();
  if (body->contains("label_id") && (*body)["label_id"].is_string()) {
    action.label_id = (*body)["label_id"].get<std::string>();
  }
  if (body->contains("text") && (*body)["text"].is_string()) {
    action.text = (*body)["text"].get<std::string>();
  }
  try {
    return json_response(200, to_json(annotations_->apply(id, action)));
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kConflict) throw;
    // The loser gets the winning state so it can reconcile.
    return json_response(409, {{"error", {{"code", to_string(e.code())}, {"message", e.message()}}},
                               {"current", to_json(annotations_->get(id))}});
  }
}

ApiResponse Gateway::list_reports() {
  nlohmann::json bundles = nlohmann::json::array();
  for (const auto& digest : reports_->list()) {
    auto manifest = nlohmann::json::parse(reports_->read(digest, "manifest.json"), nullptr, false);
    bundles.push_back({{"digest", digest},
                       {"kind", manifest.is_object() ? manifest.value("kind", "") : ""}});
  }
  return json_response(200, {{"bundles", std::move(bundles)}});
}

ApiResponse Gateway::get_report(const std::string& digest) {
  auto manifest = nlohmann::json::parse(reports_->read(digest, "manifest.json"), nullptr, false);
  return json_response(200, {{"digest", digest},
                             {"manifest", manifest},
                             {"files", reports_->files(digest)}});
}

ApiResponse Gateway::get_report_file(const std::string& digest, const std::string& file) {
  return ApiResponse{200, reports_->read(digest, file), content_type_for(file)};
}

// ---------------------------------------------------------------------------

GatewayServer::GatewayServer(Gateway& gateway)
    : gateway_(gateway), server_(std::make_unique<httplib::Server>()) {
  int threads = gateway_.config().threads;
  server_->new_task_queue = [threads] { return new httplib::ThreadPool(threads); };
  server_->set_payload_max_length(gateway_.config().max_body_bytes);
  auto handler = [this](const httplib::Request& req, httplib::Response& res) {
    ApiRequest request;
    request.method = req.method;
    request.path = req.path;
    for (const auto& [k, v] : req.params) request.query[k] = v;
    for (const auto& [k, v] : req.headers) request.headers[ascii_lower(k)] = v;
    request.body = req.body;
    ApiResponse response = gateway_.handle(request);
    res.status = response.status;
    res.set_content(response.body, response.content_type);
  };
  server_->Get(R"(/.*)", handler);
  server_->Post(R"(/.*)", handler);
}

GatewayServer::~GatewayServer() { stop(); }

int GatewayServer::bind(const std::string& host, int port) {
  int bound = port == 0 ? server_->bind_to_any_port(host) : (server_->bind_to_port(host, port) ? port : -1);
  if (bound < 0) {
    throw Error(ErrorCode::kConfig, "cannot bind", host + ":" + std::to_string(port));
  }
  return bound;
}

void GatewayServer::start() {
  thread_ = std::thread([this] { server_->listen_after_bind(); });
  server_->wait_until_ready();
}

void GatewayServer::run() { server_->listen_after_bind(); }

void GatewayServer::stop() {
  server_->stop();
  if (thread_.joinable()) thread_.join();
}

}  // namespace tacos

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

#include <gtest/gtest.h>

#include <thread>

#include "httplib.h"
#include "tacos/error.hpp"
#include "tacos/gateway.hpp"
#include "gateway_fixture.hpp"
#include "test_support.hpp"

namespace tacos {
namespace {

using testing::canonical_taxonomy;
using testing::data_dir;
using testing::encoder_handler;
using testing::gateway_yaml;
using testing::StubServer;
using testing::synthetic_pool;
using testing::TempDir;

GatewayConfig config_in(const TempDir& dir, const std::string& yaml) {
  write_file_atomic(dir / "gateway.yaml", yaml);
  return load_gateway_config(dir / "gateway.yaml");
}

ApiRequest post(std::string path, nlohmann::json body) {
  return ApiRequest{"POST", std::move(path), {}, {}, body.dump()};
}
ApiRequest get(std::string path) { return ApiRequest{"GET", std::move(path), {}, {}, {}}; }

nlohmann::json tools_of(const std::string& label) {
  nlohmann::json out = nlohmann::json::array();
  if (auto tools = tool_set_from_id(label)) {
    for (auto t : tools->items()) out.push_back(to_string(t));
  }
  return out;
}

// ---------------------------------------------------------------------------

TEST(GatewayEndToEnd, HundredQuerySuiteOverHttp) {
  const Taxonomy& t = canonical_taxonomy();
  RoutingPolicy policy = load_policy_file(data_dir() / "policy.yaml");
  StubServer encoder(encoder_handler());
  TempDir dir;
  Gateway gateway(config_in(dir, gateway_yaml(encoder.url("/v1/score"))));
  GatewayServer server(gateway);
  int port = server.bind("127.0.0.1", 0);
  server.start();
  httplib::Client client("127.0.0.1", port);

  std::map<std::string, std::uint64_t> expected_unsafe;
  for (int i = 0; i < 100; ++i) {
    std::string label = t.leaf(static_cast<std::size_t>(i * 13) % t.size()).id;
    std::string text = "synthetic query " + std::to_string(i) + " #" + label;
    auto res = client.Post("/v1/classify-route", nlohmann::json{{"text", text}}.dump(),
                           std::string(kMediaType));
    ASSERT_TRUE(res) << i;
    ASSERT_EQ(res->status, 200) << res->body;
    EXPECT_EQ(res->get_header_value("Content-Type"), kMediaType);
    EXPECT_EQ(res->body.find(text), std::string::npos) << "query text echoed";
    auto body = nlohmann::json::parse(res->body);
    const RoutingRule& rule = policy.rules.at(label);
    EXPECT_EQ(body["label_id"], label);
    EXPECT_EQ(body["decision"]["label_id"], label);
    EXPECT_EQ(body["decision"]["action"], to_string(rule.action));
    EXPECT_EQ(body["decision"]["tools"], tools_of(label)) << label;
    EXPECT_EQ(body["decision"]["log_unsafe"], rule.log_unsafe);
    EXPECT_TRUE(body["decision"]["message"].is_string());
    EXPECT_FALSE(body.contains("scores"));
    EXPECT_EQ(body["taxonomy_version"], t.version());
    if (t.at(label).path.safety == Safety::kUnsafe) {
      EXPECT_EQ(body["decision"]["action"], "block_with_warning");
      ++expected_unsafe[label];
    }
  }
  EXPECT_EQ(gateway.audit().counters(), expected_unsafe);
  std::uint64_t unsafe_total = 0;
  for (const auto& [label, n] : expected_unsafe) unsafe_total += n;
  EXPECT_EQ(AuditStore::read_records(gateway.config().audit_log).size(), unsafe_total);

  auto counters = client.Get("/v1/audit/counters");
  ASSERT_TRUE(counters);
  auto cj = nlohmann::json::parse(counters->body);
  for (const auto& [label, n] : expected_unsafe) EXPECT_EQ(cj["counters"][label], n);
  EXPECT_EQ(cj["last_sequence"], unsafe_total);
  server.stop();
}

TEST(GatewayFailClosed, BackendErrorIs503WithBlock) {
  StubServer encoder(encoder_handler());
  TempDir dir;
  Gateway gateway(config_in(dir, gateway_yaml(encoder.url("/v1/score"))));
  ApiResponse r = gateway.handle(post("/v1/classify-route", {{"text", "please #explode"}}));
  EXPECT_EQ(r.status, 503);
  auto body = nlohmann::json::parse(r.body);
  EXPECT_EQ(body["decision"]["action"], "block_with_warning");
  EXPECT_EQ(body["decision"]["message_template_id"], kClassificationFailureTemplate);
  EXPECT_TRUE(body["label_id"].is_null());
  EXPECT_EQ(body["error"]["code"], "classification_failed");
  EXPECT_TRUE(gateway.audit().counters().empty());
}

TEST(GatewayFailClosed, UnreachableBackendIs503) {
  TempDir dir;
  Gateway gateway(config_in(dir, gateway_yaml("http://127.0.0.1:1/v1/score")));
  ApiResponse r = gateway.handle(post("/v1/classify-route", {{"text", "hello"}}));
  EXPECT_TRUE(r.status == 503 || r.status == 504) << r.status;
  EXPECT_EQ(nlohmann::json::parse(r.body)["decision"]["action"], "block_with_warning");
}

class SleepyClassifier : public Classifier {
 public:
  const std::string& id() const override { return id_; }
  bool probabilistic() const override { return false; }

 protected:
  Prediction do_classify(const Taxonomy& t, std::string_view) override {
    std::this_thread::sleep_for(std::chrono::milliseconds(600));
    return one_hot_prediction(t, "general_inquiry", id_);
  }

 private:
  std::string id_ = "sleepy";
};

TEST(GatewayFailClosed, SlowClassifierIs504) {
  TempDir dir;
  GatewayConfig config = config_in(dir, gateway_yaml("http://127.0.0.1:1/x"));
  config.request_timeout_seconds = 0.1;
  Gateway gateway(config, std::make_shared<SleepyClassifier>());
  auto start = std::chrono::steady_clock::now();
  ApiResponse r = gateway.handle(post("/v1/classify-route", {{"text", "hello"}}));
  double waited = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_EQ(r.status, 504);
  EXPECT_LT(waited, 0.5);
  auto body = nlohmann::json::parse(r.body);
  EXPECT_EQ(body["decision"]["action"], "block_with_warning");
  EXPECT_EQ(body["error"]["code"], "timeout");
  std::this_thread::sleep_for(std::chrono::milliseconds(700));  // let the worker finish
}

TEST(GatewayApi, ScoresOnlyWhenEnabled) {
  StubServer encoder(encoder_handler());
  TempDir dir;
  Gateway gateway(config_in(dir, gateway_yaml(encoder.url("/s"), "expose_scores: true\n")));
  auto body = nlohmann::json::parse(
      gateway.handle(post("/v1/classify-route", {{"text", "hi #empathy"}})).body);
  ASSERT_TRUE(body.contains("scores"));
  EXPECT_EQ(body["scores"].size(), 21u);
  EXPECT_NEAR(body["scores"]["empathy"].get<double>(), 0.8, 1e-12);
}

TEST(GatewayApi, RequestValidationAndRouting) {
  TempDir dir;
  Gateway gateway(config_in(dir, gateway_yaml("http://127.0.0.1:1/x")));
  EXPECT_EQ(gateway.handle(ApiRequest{"POST", "/v1/classify-route", {}, {}, "not json"}).status, 400);
  EXPECT_EQ(gateway.handle(post("/v1/classify-route", {{"txt", "x"}})).status, 400);
  EXPECT_EQ(gateway.handle(post("/v1/classify-route", {{"text", "   "}})).status, 400);
  EXPECT_EQ(gateway.handle(get("/v1/classify-route")).status, 405);
  EXPECT_EQ(gateway.handle(get("/v2/taxonomy")).status, 404);
  EXPECT_EQ(gateway.handle(get("/v1/annotation/items")).status, 404);  // not configured
  EXPECT_EQ(gateway.handle(get("/v1/reports")).status, 404);

  ApiResponse tax = gateway.handle(get("/v1/taxonomy"));
  ASSERT_EQ(tax.status, 200);
  auto j = nlohmann::json::parse(tax.body);
  EXPECT_EQ(j["leaves"].size(), 21u);
  EXPECT_EQ(j["version"], canonical_taxonomy().version());
  EXPECT_EQ(j["leaves"][20]["tools"].size(), 3u);
  EXPECT_TRUE(j["leaves"][0]["tools"].is_null());
}

TEST(GatewayApi, KeywordBackendAndReload) {
  TempDir dir;
  std::string d = data_dir().string();
  write_file_atomic(dir / "policy.yaml", read_file(data_dir() / "policy.yaml"));
  std::string yaml = gateway_yaml("http://127.0.0.1:1/x");
  yaml.replace(yaml.find("active_backend: enc"), 19, "active_backend: kw");
  yaml.replace(yaml.find(d + "/policy.yaml"), d.size() + 12, "policy.yaml");
  Gateway gateway(config_in(dir, yaml));
  auto body = nlohmann::json::parse(
      gateway.handle(post("/v1/classify-route", {{"text", "I want to end my life"}})).body);
  EXPECT_EQ(body["label_id"], "self_harm");
  EXPECT_EQ(gateway.audit().count("self_harm"), 1u);

  // A broken policy is refused and the old one keeps serving.
  write_file_atomic(dir / "policy.yaml", "schema: tacos-policy/1\nversion: broken\nrules: {}\n");
  EXPECT_THROW(gateway.reload(), Error);
  EXPECT_EQ(gateway.handle(post("/v1/classify-route", {{"text", "end my life"}})).status, 200);

  std::string policy = read_file(data_dir() / "policy.yaml");
  policy.replace(policy.find("version: default/1.0"), 20, "version: default/1.1");
  write_file_atomic(dir / "policy.yaml", policy);
  gateway.reload();
  body = nlohmann::json::parse(gateway.handle(post("/v1/classify-route", {{"text", "hello"}})).body);
  EXPECT_EQ(body["policy_version"], "default/1.1");
}

TEST(GatewayApi, InvalidStartupConfigRefused) {
  TempDir dir;
  write_file_atomic(dir / "policy.yaml", "schema: tacos-policy/1\nversion: x\nrules: {}\n");
  std::string d = data_dir().string();
  std::string yaml = gateway_yaml("http://127.0.0.1:1/x");
  yaml.replace(yaml.find(d + "/policy.yaml"), d.size() + 12, "policy.yaml");
  EXPECT_THROW(Gateway(config_in(dir, yaml)), Error);
  EXPECT_THROW(config_in(dir, gateway_yaml("http://x/y", "request_timeout: 0\n")), Error);
  std::string wrong = gateway_yaml("http://x/y");
  wrong.replace(wrong.find("active_backend: enc"), 19, "active_backend: zz");
  EXPECT_THROW(config_in(dir, wrong), Error);
}

// ---------------------------------------------------------------------------
// Annotation API

TEST(GatewayAnnotation, ListGetActAndConflict) {
  TempDir dir;
  Pool pool = synthetic_pool({{"empathy", 4}, {"gibberish", 3}}, 12);
  save_pool(pool, dir / "pool.jsonl");
  Gateway gateway(config_in(dir, gateway_yaml("http://127.0.0.1:1/x", "dataset: {pool: pool.jsonl}\n")));
  ASSERT_NE(gateway.annotations(), nullptr);

  ApiRequest list = get("/v1/annotation/items");
  list.query = {{"label_id", "empathy"}, {"limit", "2"}};
  auto page = nlohmann::json::parse(gateway.handle(list).body);
  EXPECT_EQ(page["total"], 4);
  EXPECT_EQ(page["items"].size(), 2u);

  ApiRequest filter = post("/v1/annotation/items", {{"label_id", "gibberish"}, {"offset", 1}});
  auto filtered = nlohmann::json::parse(gateway.handle(filter).body);
  EXPECT_EQ(filtered["total"], 3);
  EXPECT_EQ(filtered["items"].size(), 2u);

  std::string id = page["items"][0]["id"];
  auto item = nlohmann::json::parse(gateway.handle(get("/v1/annotation/items/" + id)).body);
  EXPECT_EQ(item["version"], 0);
  EXPECT_EQ(gateway.handle(get("/v1/annotation/items/qnope")).status, 404);

  ApiRequest action = post("/v1/annotation/items/" + id + "/action",
                           {{"action", "relabeled"}, {"label_id", "self_harm"}, {"base_version", 0}});
  EXPECT_EQ(gateway.handle(action).status, 400);  // no annotator header
  action.headers["x-annotator-id"] = "ann-1";
  ApiResponse done = gateway.handle(action);
  ASSERT_EQ(done.status, 200) << done.body;
  EXPECT_EQ(nlohmann::json::parse(done.body)["label_id"], "self_harm");

  action.headers["x-annotator-id"] = "ann-2";
  ApiResponse conflict = gateway.handle(action);
  EXPECT_EQ(conflict.status, 409);
  auto cj = nlohmann::json::parse(conflict.body);
  EXPECT_EQ(cj["current"]["version"], 1);
  EXPECT_EQ(cj["current"]["label_id"], "self_harm");

  ApiRequest unversioned = post("/v1/annotation/items/" + id + "/action", {{"action", "confirmed"}});
  unversioned.headers["x-annotator-id"] = "ann-2";
  EXPECT_EQ(gateway.handle(unversioned).status, 400);
  ApiRequest bad_label = post("/v1/annotation/items/" + id + "/action",
                              {{"action", "relabeled"}, {"label_id", "nope"}, {"base_version", 1}});
  bad_label.headers["x-annotator-id"] = "ann-2";
  EXPECT_EQ(gateway.handle(bad_label).status, 400);

  // The log persists across restarts.
  Gateway restarted(config_in(dir, gateway_yaml("http://127.0.0.1:1/x", "dataset: {pool: pool.jsonl}\n")));
  EXPECT_EQ(restarted.annotations()->get(id).item.label_id, "self_harm");
}

// ---------------------------------------------------------------------------
// Reports API

TEST(GatewayReports, ServesBundleFilesByteForByte) {
  TempDir dir;
  std::string digest(64, 'c');
  auto bundle = dir / "reports" / digest;
  std::filesystem::create_directories(bundle / "confusion");
  write_file_atomic(bundle / "manifest.json", "{\"kind\": \"distribution\"}\n");
  std::string csv = "gold\\predicted,a,b\na,1,0\nb,0,1\n";
  write_file_atomic(bundle / "confusion" / "m.csv", csv);
  write_file_atomic(dir / "reports" / "outside.txt", "secret");
  Gateway gateway(config_in(dir, gateway_yaml("http://127.0.0.1:1/x", "reports: reports\n")));

  auto list = nlohmann::json::parse(gateway.handle(get("/v1/reports")).body);
  ASSERT_EQ(list["bundles"].size(), 1u);
  EXPECT_EQ(list["bundles"][0]["digest"], digest);
  EXPECT_EQ(list["bundles"][0]["kind"], "distribution");

  auto detail = nlohmann::json::parse(gateway.handle(get("/v1/reports/" + digest)).body);
  EXPECT_EQ(detail["files"], nlohmann::json::array({"confusion/m.csv", "manifest.json"}));

  ApiResponse file = gateway.handle(get("/v1/reports/" + digest + "/confusion/m.csv"));
  EXPECT_EQ(file.status, 200);
  EXPECT_EQ(file.body, csv);
  EXPECT_EQ(file.content_type, "text/csv");
  EXPECT_EQ(gateway.handle(get("/v1/reports/" + digest + "/../outside.txt")).status, 404);
  EXPECT_EQ(gateway.handle(get("/v1/reports/" + std::string(64, 'd'))).status, 404);
  EXPECT_EQ(gateway.handle(post("/v1/reports", {})).status, 405);

  GatewayServer server(gateway);
  int port = server.bind("127.0.0.1", 0);
  server.start();
  httplib::Client client("127.0.0.1", port);
  auto res = client.Get("/v1/reports/" + digest + "/confusion/m.csv");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->body, csv);
  server.stop();
}

}  // namespace
}  // namespace tacos

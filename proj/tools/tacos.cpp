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

// tacos: command-line front end for the dataset pipeline, evaluation
// harness, experiment runner and gateway.

#include <atomic>
#include <chrono>
#include <csignal>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "tacos/classifier.hpp"
#include "tacos/dataset.hpp"
#include "tacos/error.hpp"
#include "tacos/eval.hpp"
#include "tacos/experiment.hpp"
#include "tacos/gateway.hpp"
#include "tacos/routing.hpp"
#include "tacos/taxonomy.hpp"
#include "tacos/util.hpp"

namespace fs = std::filesystem;
using namespace tacos;

namespace {

BackendConfig load_backend(const fs::path& path) {
  nlohmann::json node = load_yaml_file_as_json(path);
  if (node.contains("backend")) node = node["backend"];
  BackendConfig config = parse_backend_config(node);
  auto base = path.parent_path();
  if (!config.rules_file.empty() && config.rules_file.is_relative()) config.rules_file = base / config.rules_file;
  if (!config.exemplar_file.empty() && config.exemplar_file.is_relative()) {
    config.exemplar_file = base / config.exemplar_file;
  }
  return config;
}

std::vector<std::string> split_csv(const std::string& value) {
  std::vector<std::string> out;
  std::string current;
  for (char c : value + ",") {
    if (c == ',') {
      if (auto t = trim(current); !t.empty()) out.emplace_back(t);
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  return out;
}

// "name=a,b,c"
GroupSpec parse_groups(const std::vector<std::string>& specs) {
  GroupSpec groups;
  for (const auto& spec : specs) {
    auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw Error(ErrorCode::kInvalidArgument, "group must look like name=label,label", spec);
    }
    groups.emplace_back(spec.substr(0, eq), split_csv(spec.substr(eq + 1)));
  }
  return groups;
}

void print_json(const nlohmann::json& value) { std::cout << value.dump(2) << '\n'; }

std::vector<std::string> read_query_texts(const fs::path& path) {
  std::string text = read_file(path);
  auto first = text.substr(0, text.find('\n'));
  auto header = nlohmann::json::parse(first, nullptr, false);
  Pool pool;
  if (header.is_object() && header.value("schema", "") == "tacos-pool/1") {
    pool = load_pool(path);
  } else if (header.is_object() && header.value("schema", "") == "tacos-dataset/1") {
    std::vector<std::string> out;
    for (const auto& e : load_exemplars(path)) out.push_back(e.text);
    return out;
  } else {
    IngestReport report;
    ingest_text(pool, text, path.stem().string(), report);
  }
  std::vector<std::string> out;
  for (const auto& item : pool.items()) out.push_back(item.text);
  return out;
}

// Signal handlers only set flags; a watcher thread acts on them.
volatile std::sig_atomic_t g_stop = 0;
volatile std::sig_atomic_t g_reload = 0;
void on_stop(int) { g_stop = 1; }
void on_reload(int) { g_reload = 1; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TACOS safety gateway: taxonomy, dataset pipeline, evaluation and serving"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "tacos 1.0.0");

  // taxonomy
  auto* taxonomy_cmd = app.add_subcommand("taxonomy", "Validate a taxonomy and print it as JSON");
  fs::path taxonomy_path;
  bool canonical = false;
  taxonomy_cmd->add_option("--taxonomy,-t", taxonomy_path, "Taxonomy YAML")->required()->check(CLI::ExistingFile);
  taxonomy_cmd->add_flag("--canonical", canonical, "Also require the canonical 21-leaf shape");

  // route
  auto* route_cmd = app.add_subcommand("route", "Route labels through a policy");
  fs::path policy_path;
  std::vector<std::string> route_labels;
  route_cmd->add_option("--taxonomy,-t", taxonomy_path, "Taxonomy YAML")->required()->check(CLI::ExistingFile);
  route_cmd->add_option("--policy,-p", policy_path, "Policy YAML")->required()->check(CLI::ExistingFile);
  route_cmd->add_option("labels", route_labels, "Label ids (default: every leaf)");

  // ingest
  auto* ingest_cmd = app.add_subcommand("ingest", "Build a pool from corpus files");
  std::vector<fs::path> corpus_files;
  fs::path out_path;
  ingest_cmd->add_option("files", corpus_files, "tacos-corpus/1 files")->required()->check(CLI::ExistingFile);
  ingest_cmd->add_option("--output,-o", out_path, "Pool file to write")->required();

  // label
  auto* label_cmd = app.add_subcommand("label", "Label unlabeled pool items with a backend");
  fs::path pool_path, backend_path, checkpoint_path;
  int workers = 1;
  bool retry_failed = false;
  label_cmd->add_option("--pool", pool_path, "Pool file")->required()->check(CLI::ExistingFile);
  label_cmd->add_option("--taxonomy,-t", taxonomy_path, "Taxonomy YAML")->required()->check(CLI::ExistingFile);
  label_cmd->add_option("--config,-c", backend_path, "Backend YAML")->required()->check(CLI::ExistingFile);
  label_cmd->add_option("--checkpoint", checkpoint_path, "Checkpoint pool (default: output)");
  label_cmd->add_option("--workers", workers, "Concurrent requests")->check(CLI::PositiveNumber);
  label_cmd->add_flag("--retry-failed", retry_failed, "Retry items flagged by earlier runs");
  label_cmd->add_option("--output,-o", out_path, "Output pool (default: --pool)");

  // augment
  auto* augment_cmd = app.add_subcommand("augment", "Generate synthetic items up to class parity");
  std::uint64_t seed = 0;
  double temperature = 1.0;
  augment_cmd->add_option("--pool", pool_path, "Pool file")->required()->check(CLI::ExistingFile);
  augment_cmd->add_option("--taxonomy,-t", taxonomy_path, "Taxonomy YAML")->required()->check(CLI::ExistingFile);
  augment_cmd->add_option("--config,-c", backend_path, "Generator backend YAML")->required()->check(CLI::ExistingFile);
  augment_cmd->add_option("--seed", seed, "Seed for exemplar choice");
  augment_cmd->add_option("--temperature", temperature, "Sampling temperature");
  augment_cmd->add_option("--output,-o", out_path, "Output pool (default: --pool)");

  // sample
  auto* sample_cmd = app.add_subcommand("sample", "Draw a train/validation/test split");
  std::string plan_spec, subset_csv;
  std::optional<std::size_t> total, test_per_class;
  fs::path mapping_path;
  sample_cmd->add_option("--pool", pool_path, "Pool file")->required()->check(CLI::ExistingFile);
  sample_cmd->add_option("--taxonomy,-t", taxonomy_path, "Taxonomy YAML")->required()->check(CLI::ExistingFile);
  sample_cmd->add_option("--plan", plan_spec, "kind:size, e.g. balanced:500")->required();
  sample_cmd->add_option("--seed", seed, "Sampling seed");
  sample_cmd->add_option("--total", total, "per_class_fixed: total train items");
  sample_cmd->add_option("--subset", subset_csv, "Comma-separated label ids");
  sample_cmd->add_option("--test-per-class", test_per_class, "Fixed test items per class");
  sample_cmd->add_option("--mapping", mapping_path, "Collapse mapping (toxic plans)")->check(CLI::ExistingFile);
  sample_cmd->add_option("--output,-o", out_path, "Split manifest to write")->required();

  // export
  auto* export_cmd = app.add_subcommand("export", "Write train/validation/test files for a split");
  fs::path split_path, out_dir;
  export_cmd->add_option("--pool", pool_path, "Pool file")->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--split", split_path, "Split manifest")->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--output,-o", out_dir, "Output directory")->required();

  // evaluate / confusion
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a prediction file");
  fs::path predictions_path, eval_config_path;
  std::vector<std::string> group_specs;
  evaluate_cmd->add_option("--predictions", predictions_path, "tacos-predictions/1 file")->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--taxonomy,-t", taxonomy_path, "Taxonomy YAML")->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--group", group_specs, "name=label,label (repeatable)");
  evaluate_cmd->add_option("--config,-c", eval_config_path, "YAML with taxonomy, predictions, groups")->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--output,-o", out_path, "Report JSON (default: stdout)");

  auto* confusion_cmd = app.add_subcommand("confusion", "Export a confusion matrix");
  fs::path csv_path, json_path;
  confusion_cmd->add_option("--predictions", predictions_path, "tacos-predictions/1 file")->check(CLI::ExistingFile);
  confusion_cmd->add_option("--taxonomy,-t", taxonomy_path, "Taxonomy YAML")->check(CLI::ExistingFile);
  confusion_cmd->add_option("--config,-c", eval_config_path, "YAML with taxonomy and predictions")->check(CLI::ExistingFile);
  confusion_cmd->add_option("--csv", csv_path, "Grid file (default: stdout)");
  confusion_cmd->add_option("--json", json_path, "Plot-data file");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "Measure per-query latency of a backend");
  fs::path queries_path;
  std::size_t warmup = 5;
  bench_cmd->add_option("--config,-c", backend_path, "Backend YAML")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--taxonomy,-t", taxonomy_path, "Taxonomy YAML")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--queries", queries_path, "Corpus, pool or dataset file")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--warmup", warmup, "Queries run before recording");
  bench_cmd->add_option("--output,-o", out_path, "Report JSON (default: stdout)");

  // experiment
  auto* experiment_cmd = app.add_subcommand("experiment", "Run an experiment and write a report bundle");
  fs::path config_path;
  experiment_cmd->add_option("--config,-c", config_path, "Experiment YAML")->required()->check(CLI::ExistingFile);
  experiment_cmd->add_option("--seed", seed, "Override the config seed");

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "Run the HTTP gateway");
  serve_cmd->add_option("--config,-c", config_path, "Gateway YAML")->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*taxonomy_cmd) {
      Taxonomy t = load_taxonomy_file(taxonomy_path);
      if (canonical) validate_canonical(t);
      print_json(taxonomy_to_json(t));
    } else if (*route_cmd) {
      Taxonomy t = load_taxonomy_file(taxonomy_path);
      RoutingPolicy policy = load_policy_file(policy_path);
      validate_policy(policy, t);
      if (route_labels.empty()) route_labels = t.ids();
      nlohmann::json out = nlohmann::json::array();
      for (const auto& label : route_labels) out.push_back(to_json(route(t, policy, label)));
      print_json(out);
    } else if (*ingest_cmd) {
      IngestReport report;
      Pool pool = ingest(corpus_files, &report);
      save_pool(pool, out_path);
      print_json({{"records", report.records}, {"added", report.added},
                  {"duplicates", report.duplicates}, {"malformed", report.malformed},
                  {"pool_digest", pool.digest()}});
    } else if (*label_cmd) {
      Taxonomy t = load_taxonomy_file(taxonomy_path);
      Pool pool = load_pool(pool_path);
      auto classifier = make_classifier(load_backend(backend_path), t, backend_path.parent_path());
      if (out_path.empty()) out_path = pool_path;
      LabelOptions options;
      options.checkpoint = checkpoint_path.empty() ? out_path : checkpoint_path;
      options.workers = workers;
      options.retry_failed = retry_failed;
      LabelReport report = llm_label(pool, *classifier, t, options);
      save_pool(pool, out_path);
      print_json({{"labeled", report.labeled}, {"flagged", report.flagged}, {"skipped", report.skipped}});
    } else if (*augment_cmd) {
      Taxonomy t = load_taxonomy_file(taxonomy_path);
      Pool pool = load_pool(pool_path);
      BackendConfig backend = load_backend(backend_path);
      ChatQueryGenerator generator(backend, make_http_transport(parse_url(backend.endpoint).base),
                                   temperature);
      if (out_path.empty()) out_path = pool_path;
      AugmentOptions options;
      options.checkpoint = out_path;
      AugmentReport report = augment_to_parity(pool, generator, t, seed, options);
      save_pool(pool, out_path);
      print_json({{"target", report.target}, {"added", report.added}, {"shortfall", report.shortfall}});
    } else if (*sample_cmd) {
      Taxonomy t = load_taxonomy_file(taxonomy_path);
      Pool pool = load_pool(pool_path);
      SamplingPlan plan = parse_plan_spec(plan_spec);
      plan.seed = seed;
      plan.total = total;
      plan.test_per_class = test_per_class;
      plan.subset = split_csv(subset_csv);
      if (!mapping_path.empty()) plan.collapse = load_label_mapping_file(mapping_path);
      DatasetSplit split = sample(pool, t, plan);
      write_file_atomic(out_path, to_json(split).dump() + "\n");
      print_json({{"train", split.train.size()}, {"validation", split.validation.size()},
                  {"test", split.test.size()}});
    } else if (*export_cmd) {
      Pool pool = load_pool(pool_path);
      DatasetSplit split = split_from_json(nlohmann::json::parse(read_file(split_path)));
      if (split.pool_digest != pool.digest()) {
        std::cerr << "warning: pool changed since the split was drawn\n";
      }
      fs::create_directories(out_dir);
      export_split(split, pool, out_dir);
    } else if (*evaluate_cmd || *confusion_cmd) {
      if (!eval_config_path.empty()) {
        nlohmann::json node = load_yaml_file_as_json(eval_config_path);
        auto base = eval_config_path.parent_path();
        if (taxonomy_path.empty() && node.contains("taxonomy")) {
          taxonomy_path = base / node["taxonomy"].get<std::string>();
        }
        if (predictions_path.empty() && node.contains("predictions")) {
          predictions_path = base / node["predictions"].get<std::string>();
        }
        if (group_specs.empty() && node.contains("groups")) {
          for (const auto& [name, ids] : node["groups"].items()) {
            std::string spec = name + "=";
            for (const auto& id : ids) spec += id.get<std::string>() + ",";
            group_specs.push_back(spec);
          }
        }
      }
      if (taxonomy_path.empty() || predictions_path.empty()) {
        throw Error(ErrorCode::kInvalidArgument, "need --taxonomy and --predictions (or --config)");
      }
      Taxonomy t = load_taxonomy_file(taxonomy_path);
      PredictionSet set = load_prediction_set(predictions_path);
      if (*evaluate_cmd) {
        EvalReport report = evaluate(set.gold, set.predictions, t, parse_groups(group_specs));
        std::string text = to_json(report).dump(2) + "\n";
        if (out_path.empty()) std::cout << text;
        else write_file_atomic(out_path, text);
      } else {
        std::vector<std::string> predicted;
        for (const auto& p : set.predictions) predicted.push_back(p.label_id);
        ConfusionMatrix m = confusion(set.gold, predicted, t);
        if (csv_path.empty()) std::cout << confusion_csv(m);
        else write_file_atomic(csv_path, confusion_csv(m));
        if (!json_path.empty()) write_file_atomic(json_path, confusion_plot_data(m).dump(2) + "\n");
      }
    } else if (*bench_cmd) {
      Taxonomy t = load_taxonomy_file(taxonomy_path);
      BackendConfig backend = load_backend(backend_path);
      auto classifier = make_classifier(backend, t, backend_path.parent_path());
      std::vector<std::string> queries = read_query_texts(queries_path);
      std::optional<std::size_t> shots;
      if (backend.kind == BackendKind::kPrompt) shots = backend.shots;
      LatencyReport report = benchmark_latency(*classifier, t, queries, warmup, shots);
      nlohmann::json out = to_json(report);
      out.erase("seconds");
      if (out_path.empty()) print_json(out);
      else write_file_atomic(out_path, to_json(report).dump(2) + "\n");
    } else if (*experiment_cmd) {
      ExperimentConfig config = load_experiment_config(config_path);
      if (experiment_cmd->count("--seed")) {
        config.seed = seed;
        for (auto& plan : config.plans) plan.seed = seed;
      }
      ExperimentResult result = run_experiment(config);
      print_json({{"config_digest", result.config_digest},
                  {"bundle", result.bundle_dir.string()}});
    } else if (*serve_cmd) {
      GatewayConfig config = load_gateway_config(config_path);
      Gateway gateway(config);
      GatewayServer server(gateway);
      int port = server.bind(config.host, config.port);
      std::cerr << "tacos gateway listening on " << config.host << ":" << port << "\n";
      std::signal(SIGINT, on_stop);
      std::signal(SIGTERM, on_stop);
      std::signal(SIGHUP, on_reload);
      std::atomic<bool> done{false};
      std::thread watcher([&] {
        while (!done) {
          if (g_stop) {
            server.stop();
            return;
          }
          if (g_reload) {
            g_reload = 0;
            try {
              gateway.reload();
              std::cerr << "tacos gateway: configuration reloaded\n";
            } catch (const Error& e) {
              std::cerr << "tacos gateway: reload rejected, keeping previous configuration: "
                        << e.message() << "\n";
            }
          }
          std::this_thread::sleep_for(std::chrono::milliseconds(100));
        }
      });
      server.run();
      done = true;
      watcher.join();
    }
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.code()) << ": " << e.message();
    if (!e.location().empty()) std::cerr << " (" << e.location() << ")";
    std::cerr << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

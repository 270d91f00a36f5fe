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

#include "tacos/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <unistd.h>

#include "tacos/error.hpp"
#include "tacos/util.hpp"

namespace tacos {

namespace {

constexpr std::string_view kExperimentSchema = "tacos-experiment/1";

constexpr std::pair<ExperimentKind, std::string_view> kKindNames[] = {
    {ExperimentKind::kUnderSpecificity, "under_specificity"},
    {ExperimentKind::kOverSpecificity, "over_specificity"},
    {ExperimentKind::kDistribution, "distribution"},
};

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& value) {
  std::filesystem::path p(value);
  return p.is_relative() && !base.empty() ? base / p : p;
}

std::string file_name_safe(std::string_view key) {
  std::string out;
  for (char c : key) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
              c == '_' || c == '-' || c == '.';
    out.push_back(ok ? c : '_');
  }
  return out;
}

std::string fmt(double v) {
  std::ostringstream out;
  out.precision(10);
  out << v;
  return out.str();
}

std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

}  // namespace

std::string_view to_string(ExperimentKind kind) {
  for (const auto& [k, name] : kKindNames) {
    if (k == kind) return name;
  }
  return "";
}

std::optional<ExperimentKind> parse_experiment_kind(std::string_view name) {
  for (const auto& [k, n] : kKindNames) {
    if (n == name) return k;
  }
  return std::nullopt;
}

ExperimentConfig parse_experiment_config(const nlohmann::json& node,
                                         const std::filesystem::path& base_dir) {
  ExperimentConfig config;
  try {
    if (node.value("schema", std::string(kExperimentSchema)) != kExperimentSchema) {
      throw Error(ErrorCode::kConfig, "unsupported experiment schema", node["schema"].dump());
    }
    auto kind = parse_experiment_kind(node.at("kind").get<std::string>());
    if (!kind) throw Error(ErrorCode::kConfig, "unknown experiment kind", node["kind"].dump());
    config.kind = *kind;
    config.taxonomy_file = resolve(base_dir, node.at("taxonomy").get<std::string>());
    config.pool_file = resolve(base_dir, node.at("pool").get<std::string>());
    config.output_dir = resolve(base_dir, node.value("output", "reports"));
    if (node.contains("separate_taxonomy")) {
      config.separate_taxonomy_file = resolve(base_dir, node["separate_taxonomy"].get<std::string>());
    }
    if (node.contains("mapping")) {
      config.mapping_file = resolve(base_dir, node["mapping"].get<std::string>());
    }
    config.seed = node.value("seed", std::uint64_t{0});
    if (node.contains("shots")) config.shots = node["shots"].get<std::vector<std::size_t>>();
    config.replication = node.value("replication", true);
    if (node.contains("test_per_class")) {
      config.test_per_class = node["test_per_class"].get<std::size_t>();
    }
    config.concurrency = node.value("concurrency", std::size_t{4});
    config.warmup = node.value("warmup", std::size_t{0});
    for (const auto& p : node.value("plans", nlohmann::json::array())) {
      SamplingPlan plan = p.is_string() ? parse_plan_spec(p.get<std::string>()) : plan_from_json(p);
      if (!p.is_object() || !p.contains("seed")) plan.seed = config.seed;
      if (plan.name.empty()) plan.name = std::string(to_string(plan.kind));
      config.plans.push_back(std::move(plan));
    }
    for (const auto& b : node.value("backends", nlohmann::json::array())) {
      ExperimentBackend backend;
      backend.config = parse_backend_config(b);
      if (!backend.config.rules_file.empty()) {
        backend.config.rules_file = resolve(base_dir, backend.config.rules_file.string());
      }
      if (!backend.config.exemplar_file.empty()) {
        backend.config.exemplar_file = resolve(base_dir, backend.config.exemplar_file.string());
      }
      backend.scheme = b.value("scheme", "");
      backend.plan = b.value("plan", "");
      config.backends.push_back(std::move(backend));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, e.what(), "experiment config");
  }

  std::set<std::string> names;
  for (const auto& plan : config.plans) {
    if (!names.insert(plan.name).second) {
      throw Error(ErrorCode::kConfig, "duplicate plan name", plan.name);
    }
  }
  std::set<std::string> ids;
  for (const auto& b : config.backends) {
    if (!ids.insert(b.config.backend_id).second) {
      throw Error(ErrorCode::kConfig, "duplicate backend id", b.config.backend_id);
    }
  }
  if (config.concurrency == 0) throw Error(ErrorCode::kConfig, "concurrency must be positive");
  switch (config.kind) {
    case ExperimentKind::kUnderSpecificity:
      if (config.shots.empty()) config.shots.assign(std::begin(kReplicationShots), std::end(kReplicationShots));
      if (config.replication) {
        for (std::size_t k : config.shots) {
          if (std::find(std::begin(kReplicationShots), std::end(kReplicationShots), k) ==
              std::end(kReplicationShots)) {
            throw Error(ErrorCode::kConfig, "shot count outside the replication sweep",
                        std::to_string(k));
          }
        }
      }
      if (config.plans.size() > 1) {
        throw Error(ErrorCode::kConfig, "under_specificity takes at most one plan");
      }
      break;
    case ExperimentKind::kOverSpecificity:
      if (config.separate_taxonomy_file.empty() || config.mapping_file.empty()) {
        throw Error(ErrorCode::kConfig, "over_specificity needs separate_taxonomy and mapping");
      }
      for (const auto& b : config.backends) {
        if (b.scheme != "total" && b.scheme != "separate") {
          throw Error(ErrorCode::kConfig, "backend scheme must be total or separate",
                      b.config.backend_id);
        }
      }
      for (const auto& plan : config.plans) {
        if (plan.kind != PlanKind::kToxicTotal && plan.kind != PlanKind::kToxicSeparate) {
          throw Error(ErrorCode::kConfig, "over_specificity plans must be toxic plans", plan.name);
        }
      }
      break;
    case ExperimentKind::kDistribution:
      if (config.plans.empty()) throw Error(ErrorCode::kConfig, "distribution needs plans");
      for (const auto& b : config.backends) {
        if (!names.count(b.plan)) {
          throw Error(ErrorCode::kConfig, "backend must name one of the plans",
                      b.config.backend_id);
        }
      }
      break;
  }
  return config;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(load_yaml_file_as_json(path), path.parent_path());
}

nlohmann::json to_json(const ExperimentConfig& config) {
  nlohmann::json plans = nlohmann::json::array();
  for (const auto& p : config.plans) plans.push_back(to_json(p));
  nlohmann::json backends = nlohmann::json::array();
  for (const auto& b : config.backends) {
    nlohmann::json j = to_json(b.config);
    if (!b.scheme.empty()) j["scheme"] = b.scheme;
    if (!b.plan.empty()) j["plan"] = b.plan;
    backends.push_back(std::move(j));
  }
  nlohmann::json out{{"schema", kExperimentSchema},
                     {"kind", to_string(config.kind)},
                     {"taxonomy", config.taxonomy_file.string()},
                     {"pool", config.pool_file.string()},
                     {"seed", config.seed},
                     {"shots", config.shots},
                     {"replication", config.replication},
                     {"plans", std::move(plans)},
                     {"backends", std::move(backends)},
                     {"concurrency", config.concurrency},
                     {"warmup", config.warmup}};
  if (!config.separate_taxonomy_file.empty()) {
    out["separate_taxonomy"] = config.separate_taxonomy_file.string();
  }
  if (!config.mapping_file.empty()) out["mapping"] = config.mapping_file.string();
  if (config.test_per_class) out["test_per_class"] = *config.test_per_class;
  return out;
}

std::unique_ptr<Classifier> default_classifier_factory(const BackendConfig& config,
                                                       const Taxonomy& active,
                                                       const std::vector<Exemplar>& exemplars,
                                                       std::size_t shots) {
  if (config.kind != BackendKind::kPrompt) return make_classifier(config, active);
  PromptSpec spec{active, shots, config.seed, exemplars, {}};
  if (!config.exemplar_file.empty()) spec.pool = load_exemplars(config.exemplar_file);
  return std::make_unique<PromptClassifier>(config, std::move(spec),
                                            make_http_transport(parse_url(config.endpoint).base));
}

std::vector<std::optional<Prediction>> classify_all(Classifier& classifier, const Taxonomy& taxonomy,
                                                    std::span<const std::string> texts,
                                                    std::size_t concurrency) {
  std::vector<std::optional<Prediction>> out(texts.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  std::mutex mutex;
  std::exception_ptr failure;
  std::size_t failure_index = texts.size();
  auto worker = [&] {
    while (!stop.load()) {
      std::size_t i = next.fetch_add(1);
      if (i >= texts.size()) return;
      try {
        out[i] = classifier.classify(taxonomy, texts[i]);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::kClassificationFailure || e.code() == ErrorCode::kParseFailure) {
          continue;
        }
        std::lock_guard lock(mutex);
        // Keep the lowest-index failure so the reported error is stable.
        if (i < failure_index) {
          failure_index = i;
          failure = std::current_exception();
        }
        stop = true;
      }
    }
  };
  std::size_t n = std::max<std::size_t>(1, std::min(concurrency, texts.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < n; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

struct TestSet {
  std::vector<std::string> ids;
  std::vector<std::string> texts;
  std::vector<std::string> gold;
};

TestSet test_set(const DatasetSplit& split, const Pool& pool) {
  TestSet out;
  for (const auto& entry : split.test) {
    const LabeledQuery* item = pool.find(entry.id);
    if (!item) throw Error(ErrorCode::kDanglingId, "test id not in pool", entry.id);
    out.ids.push_back(entry.id);
    out.texts.push_back(item->text);
    out.gold.push_back(entry.label_id);
  }
  return out;
}

std::vector<Exemplar> train_exemplars(const DatasetSplit& split, const Pool& pool) {
  std::vector<Exemplar> out;
  for (const auto& entry : split.train) out.push_back({pool.find(entry.id)->text, entry.label_id});
  return out;
}

class Bundle {
 public:
  explicit Bundle(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
  }
  void write(const std::string& relative, const std::string& bytes) {
    auto path = dir_ / relative;
    std::filesystem::create_directories(path.parent_path());
    write_file_atomic(path, bytes);
  }
  void write_json(const std::string& relative, const nlohmann::json& value) {
    write(relative, value.dump(2) + "\n");
  }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

struct RunOutput {
  EvalReport report;
  LatencyReport latency;
  std::size_t failed_items = 0;
};

// Classifies the test set and evaluates; `collapse` maps predictions made
// under `active` into `frame` first.
RunOutput evaluate_backend(Classifier& classifier, const Taxonomy& active, const Taxonomy& frame,
                           const LabelMapping* collapse, const TestSet& test,
                           const GroupSpec& groups, const ExperimentConfig& config,
                           std::optional<std::size_t> shots, Bundle& bundle,
                           const std::string& run_key) {
  auto raw = classify_all(classifier, active, test.texts, config.concurrency);
  PredictionSet kept, kept_raw;
  kept.taxonomy_version = frame.version();
  kept_raw.taxonomy_version = active.version();
  std::vector<double> seconds;
  RunOutput out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!raw[i]) {
      if (i >= config.warmup) ++out.failed_items;
      continue;
    }
    if (i >= config.warmup) seconds.push_back(raw[i]->latency_seconds);
    Prediction p = collapse ? collapse_prediction(*raw[i], *collapse, active, frame) : *raw[i];
    kept.ids.push_back(test.ids[i]);
    kept.gold.push_back(test.gold[i]);
    kept.predictions.push_back(std::move(p));
    if (collapse) {
      kept_raw.ids.push_back(test.ids[i]);
      kept_raw.gold.push_back(test.gold[i]);
      kept_raw.predictions.push_back(*raw[i]);
    }
  }
  out.report = evaluate(kept.gold, kept.predictions, frame, groups);
  out.latency = summarize_latency(classifier.id(), shots, config.warmup, std::move(seconds),
                                  out.failed_items);
  std::string base = "predictions/" + file_name_safe(run_key);
  bundle.write(base + ".jsonl", serialize_prediction_set(kept));
  if (collapse) bundle.write(base + ".raw.jsonl", serialize_prediction_set(kept_raw));
  bundle.write("confusion/" + file_name_safe(run_key) + ".csv", confusion_csv(out.report.confusion));
  bundle.write_json("confusion/" + file_name_safe(run_key) + ".json",
                    confusion_plot_data(out.report.confusion));
  return out;
}

nlohmann::json run_entry(const RunOutput& run, const std::string& backend_id,
                         std::optional<std::size_t> shots) {
  nlohmann::json out{{"backend_id", backend_id},
                     {"failed_items", run.failed_items},
                     {"report", to_json(run.report)}};
  out["shots"] = shots ? nlohmann::json(*shots) : nlohmann::json(nullptr);
  return out;
}

std::string test_digest(const DatasetSplit& split) {
  std::string bytes;
  for (const auto& e : split.test) bytes += e.id + "\t" + e.label_id + "\n";
  return sha256_hex(bytes);
}

void write_split(Bundle& bundle, const DatasetSplit& split, const Pool& pool,
                 const std::string& plan_name) {
  std::string dir = "splits/" + file_name_safe(plan_name) + "/";
  bundle.write(dir + "train.jsonl", export_part(split.train, pool, split, "train"));
  bundle.write(dir + "validation.jsonl", export_part(split.validation, pool, split, "validation"));
  bundle.write(dir + "test.jsonl", export_part(split.test, pool, split, "test"));
}

std::string plan_counts_rows(const DatasetSplit& split, const std::string& plan_name) {
  std::map<std::string, std::array<std::size_t, 3>> counts;
  for (const auto& e : split.train) ++counts[e.label_id][0];
  for (const auto& e : split.validation) ++counts[e.label_id][1];
  for (const auto& e : split.test) ++counts[e.label_id][2];
  std::string out;
  for (const auto& [label, c] : counts) {
    out += plan_name + "," + label + "," + std::to_string(c[0]) + "," + std::to_string(c[1]) +
           "," + std::to_string(c[2]) + "\n";
  }
  return out;
}

constexpr std::string_view kPlanCountsHeader = "plan,label_id,train,validation,test\n";

void run_under_specificity(const ExperimentConfig& config, const Taxonomy& taxonomy,
                           const Pool& pool, const ClassifierFactory& factory, Bundle& bundle,
                           nlohmann::json& metrics, nlohmann::json& latency) {
  std::set<std::string> is_ids = information_seeking_ids(taxonomy);
  Taxonomy active = restrict_taxonomy(taxonomy, is_ids, "information_seeking");
  SamplingPlan plan = config.plans.empty() ? parse_plan_spec("per_class_fixed:200") : config.plans[0];
  if (config.plans.empty()) {
    plan.seed = config.seed;
    plan.name = "per_class_fixed";
  }
  plan.subset = active.ids();
  if (config.test_per_class) plan.test_per_class = config.test_per_class;
  DatasetSplit split = sample(pool, taxonomy, plan);
  write_split(bundle, split, pool, plan.name);
  bundle.write("plan_counts.csv", std::string(kPlanCountsHeader) + plan_counts_rows(split, plan.name));
  TestSet test = test_set(split, pool);
  std::vector<Exemplar> exemplars = train_exemplars(split, pool);

  std::string sweep = "backend_id,shots,n_items,failed_items,accuracy,macro_f1,macro_auprc\n";
  std::string latency_csv = "backend_id,shots,samples,p50_seconds,p95_seconds,mean_seconds\n";
  nlohmann::json runs = nlohmann::json::object();
  nlohmann::json latencies = nlohmann::json::object();
  for (const auto& backend : config.backends) {
    std::vector<std::optional<std::size_t>> points;
    if (backend.config.kind == BackendKind::kPrompt) {
      for (std::size_t k : config.shots) points.emplace_back(k);
    } else {
      points.emplace_back(std::nullopt);
    }
    for (const auto& shots : points) {
      std::string key = backend.config.backend_id + (shots ? "@" + std::to_string(*shots) : "");
      auto classifier = factory(backend.config, active, exemplars, shots.value_or(0));
      RunOutput run = evaluate_backend(*classifier, active, active, nullptr, test, {}, config,
                                       shots, bundle, key);
      runs[key] = run_entry(run, backend.config.backend_id, shots);
      latencies[key] = to_json(run.latency);
      const auto& t = run.report.total;
      std::string k = shots ? std::to_string(*shots) : "";
      sweep += backend.config.backend_id + "," + k + "," + std::to_string(t.n_items) + "," +
               std::to_string(run.failed_items) + "," + fmt(t.accuracy) + "," + fmt(t.macro_f1) +
               "," + fmt(t.macro_auprc) + "\n";
      latency_csv += backend.config.backend_id + "," + k + "," +
                     std::to_string(run.latency.seconds.size()) + "," + fmt(run.latency.p50) + "," +
                     fmt(run.latency.p95) + "," + fmt(run.latency.mean) + "\n";
    }
  }
  bundle.write("shot_sweep.csv", sweep);
  bundle.write("latency_sweep.csv", latency_csv);
  metrics["runs"] = std::move(runs);
  metrics["test_set"] = {{"plan", plan.name},
                         {"n_items", split.test.size()},
                         {"digest", test_digest(split)},
                         {"taxonomy_version", active.version()}};
  latency["runs"] = std::move(latencies);
}

void run_over_specificity(const ExperimentConfig& config, const Taxonomy& taxonomy,
                          const Pool& pool, const ClassifierFactory& factory, Bundle& bundle,
                          nlohmann::json& metrics, nlohmann::json& latency) {
  Taxonomy separate = load_taxonomy_file(config.separate_taxonomy_file);
  LabelMapping mapping = load_label_mapping_file(config.mapping_file);
  mapping.validate(separate, taxonomy);

  std::vector<SamplingPlan> plans = config.plans;
  if (plans.empty()) {
    for (const char* spec : {"toxic_total:100", "toxic_separate:100"}) {
      SamplingPlan plan = parse_plan_spec(spec);
      plan.seed = config.seed;
      plan.name = std::string(to_string(plan.kind));
      plans.push_back(std::move(plan));
    }
  }
  std::optional<DatasetSplit> reference;
  std::string counts(kPlanCountsHeader);
  for (auto& plan : plans) {
    plan.collapse = mapping;
    plan.test_per_class = config.test_per_class.value_or(plan.test_per_class.value_or(100));
    DatasetSplit split = sample(pool, separate, plan);
    write_split(bundle, split, pool, plan.name);
    counts += plan_counts_rows(split, plan.name);
    if (!reference) {
      reference = std::move(split);
    } else if (reference->test != split.test) {
      throw Error(ErrorCode::kPrecondition, "toxic plans produced different test sets", plan.name);
    }
  }
  bundle.write("plan_counts.csv", counts);
  TestSet test = test_set(*reference, pool);

  // A target is "toxic" when some other label collapses into it.
  std::set<std::string> merged;
  for (const auto& [source, target] : mapping.entries()) {
    if (source != target) merged.insert(target);
  }
  std::vector<std::string> toxic, non_toxic;
  for (const auto& id : taxonomy.ids()) (merged.count(id) ? toxic : non_toxic).push_back(id);
  GroupSpec groups{{"toxic", toxic}, {"non_toxic", non_toxic}};

  std::string table = "backend_id,scheme,block,n_items,accuracy,macro_f1,macro_f1_union,weighted_f1,macro_auprc\n";
  nlohmann::json runs = nlohmann::json::object();
  nlohmann::json latencies = nlohmann::json::object();
  for (const auto& backend : config.backends) {
    bool is_separate = backend.scheme == "separate";
    const Taxonomy& active = is_separate ? separate : taxonomy;
    auto classifier = factory(backend.config, active, {}, 0);
    RunOutput run = evaluate_backend(*classifier, active, taxonomy, is_separate ? &mapping : nullptr,
                                     test, groups, config, std::nullopt, bundle,
                                     backend.config.backend_id);
    nlohmann::json entry = run_entry(run, backend.config.backend_id, std::nullopt);
    entry["scheme"] = backend.scheme;
    runs[backend.config.backend_id] = std::move(entry);
    latencies[backend.config.backend_id] = to_json(run.latency);
    auto row = [&](const std::string& block, const MetricBlock& m) {
      table += backend.config.backend_id + "," + backend.scheme + "," + block + "," +
               std::to_string(m.n_items) + "," + fmt(m.accuracy) + "," + fmt(m.macro_f1) + "," +
               fmt(m.macro_f1_union) + "," + fmt(m.weighted_f1) + "," + fmt(m.macro_auprc) + "\n";
    };
    row("total", run.report.total);
    for (const auto& [name, block] : run.report.groups) row(name, block);
  }
  bundle.write("comparison.csv", table);
  metrics["runs"] = std::move(runs);
  metrics["groups"] = {{"toxic", toxic}, {"non_toxic", non_toxic}};
  metrics["test_set"] = {{"n_items", reference->test.size()},
                         {"digest", test_digest(*reference)},
                         {"shared_by", [&] {
                            nlohmann::json names = nlohmann::json::array();
                            for (const auto& p : plans) names.push_back(p.name);
                            return names;
                          }()},
                         {"taxonomy_version", taxonomy.version()}};
  latency["runs"] = std::move(latencies);
}

void run_distribution(const ExperimentConfig& config, const Taxonomy& taxonomy, const Pool& pool,
                      const ClassifierFactory& factory, Bundle& bundle, nlohmann::json& metrics,
                      nlohmann::json& latency) {
  std::string summary = "plan,backend_id,n_items,failed_items,accuracy,macro_f1,macro_f1_union,macro_auprc\n";
  std::string per_class = "plan,backend_id,label_id,support,precision,recall,f1\n";
  std::string counts(kPlanCountsHeader);
  nlohmann::json runs = nlohmann::json::object();
  nlohmann::json latencies = nlohmann::json::object();
  nlohmann::json test_sets = nlohmann::json::object();
  for (auto plan : config.plans) {
    if (config.test_per_class) plan.test_per_class = config.test_per_class;
    DatasetSplit split = sample(pool, taxonomy, plan);
    write_split(bundle, split, pool, plan.name);
    counts += plan_counts_rows(split, plan.name);
    test_sets[plan.name] = {{"n_items", split.test.size()},
                            {"train_items", split.train.size()},
                            {"digest", test_digest(split)}};
    TestSet test = test_set(split, pool);
    for (const auto& backend : config.backends) {
      if (backend.plan != plan.name) continue;
      auto classifier = factory(backend.config, taxonomy, {}, 0);
      std::string key = plan.name + "/" + backend.config.backend_id;
      RunOutput run = evaluate_backend(*classifier, taxonomy, taxonomy, nullptr, test, {}, config,
                                       std::nullopt, bundle, key);
      nlohmann::json entry = run_entry(run, backend.config.backend_id, std::nullopt);
      entry["plan"] = plan.name;
      runs[key] = std::move(entry);
      latencies[key] = to_json(run.latency);
      const auto& t = run.report.total;
      summary += plan.name + "," + backend.config.backend_id + "," + std::to_string(t.n_items) +
                 "," + std::to_string(run.failed_items) + "," + fmt(t.accuracy) + "," +
                 fmt(t.macro_f1) + "," + fmt(t.macro_f1_union) + "," + fmt(t.macro_auprc) + "\n";
      for (const auto& s : t.per_class) {
        per_class += plan.name + "," + backend.config.backend_id + "," + s.label_id + "," +
                     std::to_string(s.support) + "," + fmt(s.precision) + "," + fmt(s.recall) +
                     "," + fmt(s.f1) + "\n";
      }
    }
  }
  bundle.write("plan_counts.csv", counts);
  bundle.write("summary.csv", summary);
  bundle.write("per_class_f1.csv", per_class);
  metrics["runs"] = std::move(runs);
  metrics["test_sets"] = std::move(test_sets);
  latency["runs"] = std::move(latencies);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const ClassifierFactory& factory) {
  Taxonomy taxonomy = load_taxonomy_file(config.taxonomy_file);
  Pool pool = load_pool(config.pool_file);

  // The digest covers content, not locations: the same inputs and settings
  // name the same bundle wherever the files live.
  nlohmann::json identity = to_json(config);
  identity.erase("taxonomy");
  identity.erase("pool");
  identity.erase("separate_taxonomy");
  identity.erase("mapping");
  identity["taxonomy_digest"] = taxonomy.source_digest();
  identity["pool_digest"] = pool.digest();
  if (!config.separate_taxonomy_file.empty()) {
    identity["separate_taxonomy_digest"] = sha256_hex(read_file(config.separate_taxonomy_file));
  }
  if (!config.mapping_file.empty()) {
    identity["mapping_digest"] = sha256_hex(read_file(config.mapping_file));
  }

  ExperimentResult result;
  result.config_digest = sha256_hex(identity.dump());
  result.bundle_dir = config.output_dir / result.config_digest;

  auto staging = config.output_dir /
                 (".staging-" + result.config_digest.substr(0, 16) + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(staging);
  Bundle bundle(staging);
  nlohmann::json metrics{{"schema", "tacos-metrics/1"},
                         {"kind", to_string(config.kind)},
                         {"config_digest", result.config_digest},
                         {"seed", config.seed},
                         {"taxonomy_version", taxonomy.version()}};
  nlohmann::json latency{{"schema", "tacos-latency/1"}, {"config_digest", result.config_digest}};
  try {
    switch (config.kind) {
      case ExperimentKind::kUnderSpecificity:
        run_under_specificity(config, taxonomy, pool, factory, bundle, metrics, latency);
        break;
      case ExperimentKind::kOverSpecificity:
        run_over_specificity(config, taxonomy, pool, factory, bundle, metrics, latency);
        break;
      case ExperimentKind::kDistribution:
        run_distribution(config, taxonomy, pool, factory, bundle, metrics, latency);
        break;
    }
    nlohmann::json seeds = nlohmann::json::object();
    for (const auto& p : config.plans) seeds[p.name] = p.seed;
    bundle.write_json("manifest.json", {{"schema", "tacos-bundle/1"},
                                        {"config_digest", result.config_digest},
                                        {"kind", to_string(config.kind)},
                                        {"seed", config.seed},
                                        {"plan_seeds", seeds},
                                        {"identity", identity}});
    bundle.write_json("metrics.json", metrics);
    bundle.write_json("latency.json", latency);
  } catch (...) {
    std::error_code ignored;
    std::filesystem::remove_all(staging, ignored);
    throw;
  }
  std::filesystem::remove_all(result.bundle_dir);
  std::filesystem::rename(staging, result.bundle_dir);
  result.metrics = std::move(metrics);
  result.latency = std::move(latency);
  return result;
}

// ---------------------------------------------------------------------------

ReportStore::ReportStore(std::filesystem::path root) : root_(std::move(root)) {}

std::filesystem::path ReportStore::bundle_path(std::string_view digest) const {
  bool hex = digest.size() == 64 && std::all_of(digest.begin(), digest.end(), [](char c) {
               return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'f');
             });
  auto path = root_ / std::string(digest);
  if (!hex || !std::filesystem::is_regular_file(path / "manifest.json")) {
    throw Error(ErrorCode::kNotFound, "unknown report bundle", std::string(digest));
  }
  return path;
}

std::vector<std::string> ReportStore::list() const {
  std::vector<std::string> out;
  std::error_code ec;
  if (!std::filesystem::is_directory(root_, ec)) return out;
  for (const auto& entry : std::filesystem::directory_iterator(root_)) {
    std::string name = entry.path().filename().string();
    if (contains(name)) out.push_back(name);
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool ReportStore::contains(std::string_view digest) const {
  try {
    bundle_path(digest);
    return true;
  } catch (const Error&) {
    return false;
  }
}

std::vector<std::string> ReportStore::files(std::string_view digest) const {
  auto base = bundle_path(digest);
  std::vector<std::string> out;
  for (const auto& entry : std::filesystem::recursive_directory_iterator(base)) {
    if (entry.is_regular_file()) {
      out.push_back(std::filesystem::relative(entry.path(), base).generic_string());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string ReportStore::read(std::string_view digest, std::string_view file) const {
  auto base = bundle_path(digest);
  std::filesystem::path relative{std::string(file)};
  bool escapes = relative.empty() || relative.is_absolute();
  for (const auto& part : relative) escapes = escapes || part == "..";
  auto path = base / relative;
  if (escapes || !std::filesystem::is_regular_file(path)) {
    throw Error(ErrorCode::kNotFound, "no such bundle file", std::string(file));
  }
  return read_file(path);
}

}  // namespace tacos

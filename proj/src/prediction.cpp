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

#include "tacos/prediction.hpp"

#include <cmath>

#include "tacos/error.hpp"
#include "tacos/kernels.hpp"

namespace tacos {

Prediction prediction_from_scores(const Taxonomy& taxonomy, std::vector<double> scores,
                                  std::string backend_id) {
  if (scores.size() != taxonomy.size()) {
    throw Error(ErrorCode::kClassificationFailure,
                "score vector has " + std::to_string(scores.size()) + " entries, taxonomy has " +
                    std::to_string(taxonomy.size()),
                backend_id);
  }
  for (double s : scores) {
    if (!std::isfinite(s)) {
      throw Error(ErrorCode::kClassificationFailure, "non-finite score", backend_id);
    }
  }
  Prediction p;
  p.label_id = taxonomy.leaf(kernels::argmax(scores)).id;
  p.scores = std::move(scores);
  p.backend_id = std::move(backend_id);
  return p;
}

Prediction one_hot_prediction(const Taxonomy& taxonomy, std::string_view label_id,
                              std::string backend_id) {
  std::vector<double> scores(taxonomy.size(), 0.0);
  scores[taxonomy.require_index(label_id)] = 1.0;
  return prediction_from_scores(taxonomy, std::move(scores), std::move(backend_id));
}

void validate_prediction(const Prediction& prediction, const Taxonomy& taxonomy,
                         bool probabilistic) {
  auto fail = [&](const std::string& why) {
    throw Error(ErrorCode::kClassificationFailure, why, prediction.backend_id);
  };
  const auto& s = prediction.scores;
  if (s.size() != taxonomy.size()) fail("score arity does not match taxonomy");
  for (double v : s) {
    if (!std::isfinite(v)) fail("non-finite score");
  }
  if (!s.empty() && kernels::min(s) < 0.0) fail("negative score");
  auto index = taxonomy.index_of(prediction.label_id);
  if (!index) fail("label '" + prediction.label_id + "' not in taxonomy");
  if (kernels::argmax(s) != *index) fail("label is not the lowest-index argmax of scores");
  if (probabilistic) {
    if (std::fabs(kernels::sum(s) - 1.0) > kProbabilitySumTolerance) fail("scores do not sum to 1");
  } else {
    std::size_t ones = 0;
    for (double v : s) {
      if (v == 1.0) ++ones;
      else if (v != 0.0) fail("non-probabilistic backend must emit one-hot scores");
    }
    if (ones != 1) fail("non-probabilistic backend must emit one-hot scores");
  }
}

Prediction collapse_prediction(const Prediction& prediction, const LabelMapping& mapping,
                               const Taxonomy& source, const Taxonomy& target) {
  if (prediction.scores.size() != source.size()) {
    throw Error(ErrorCode::kInvalidArgument, "score arity does not match source taxonomy",
                prediction.backend_id);
  }
  Prediction out;
  out.label_id = mapping.map(prediction.label_id);
  target.require_index(out.label_id);
  out.scores.assign(target.size(), 0.0);
  for (std::size_t i = 0; i < source.size(); ++i) {
    out.scores[target.require_index(mapping.map(source.leaf(i).id))] += prediction.scores[i];
  }
  out.latency_seconds = prediction.latency_seconds;
  out.backend_id = prediction.backend_id;
  return out;
}

}  // namespace tacos

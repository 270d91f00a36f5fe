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

#include <span>
#include <string>
#include <vector>

#include "tacos/taxonomy.hpp"

namespace tacos {

struct Prediction {
  std::string label_id;
  // Indexed by the active taxonomy's canonical leaf order.
  std::vector<double> scores;
  double latency_seconds = 0.0;
  std::string backend_id;
};

// Sum tolerance for probabilistic score vectors.
inline constexpr double kProbabilitySumTolerance = 1e-6;

// label_id = argmax(scores), lowest canonical index on ties.
Prediction prediction_from_scores(const Taxonomy& taxonomy, std::vector<double> scores,
                                  std::string backend_id);
Prediction one_hot_prediction(const Taxonomy& taxonomy, std::string_view label_id,
                              std::string backend_id);

// Contract shared by every backend: arity, finite non-negative scores,
// label == argmax with lowest-index tie-break, and either a probability
// vector (sum 1) or a one-hot vector. Throws kClassificationFailure.
void validate_prediction(const Prediction& prediction, const Taxonomy& taxonomy,
                         bool probabilistic);

// Maps a prediction made under `source` onto `target`: the label goes through
// the mapping and scores of sources sharing a target are summed.
Prediction collapse_prediction(const Prediction& prediction, const LabelMapping& mapping,
                               const Taxonomy& source, const Taxonomy& target);

}  // namespace tacos

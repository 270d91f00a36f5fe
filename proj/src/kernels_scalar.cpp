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

#include <limits>

#include "tacos/kernels.hpp"

namespace tacos::kernels::scalar {

std::size_t argmax(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

double sum(std::span<const double> values) {
  double total = 0.0;
  for (double v : values) total += v;
  return total;
}

double min(std::span<const double> values) {
  double lowest = std::numeric_limits<double>::infinity();
  for (double v : values) {
    if (v < lowest) lowest = v;
  }
  return lowest;
}

std::size_t count_equal(std::span<const std::uint32_t> a,
                        std::span<const std::uint32_t> b) {
  std::size_t n = a.size() < b.size() ? a.size() : b.size();
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) count += a[i] == b[i] ? 1 : 0;
  return count;
}

}  // namespace tacos::kernels::scalar

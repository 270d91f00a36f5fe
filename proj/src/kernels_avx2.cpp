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

// Compiled with -mavx2. Only reached through dispatch after a CPUID check.
#include <immintrin.h>

#include <limits>

#include "tacos/kernels.hpp"

namespace tacos::kernels::avx2 {

namespace {

double horizontal_max(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  __m128d m = _mm_max_pd(lo, hi);
  m = _mm_max_pd(m, _mm_unpackhi_pd(m, m));
  return _mm_cvtsd_f64(m);
}

double horizontal_min(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  __m128d m = _mm_min_pd(lo, hi);
  m = _mm_min_pd(m, _mm_unpackhi_pd(m, m));
  return _mm_cvtsd_f64(m);
}

}  // namespace

std::size_t argmax(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 8) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (values[i] > values[best]) best = i;
    }
    return best;
  }
  const double* data = values.data();
  // Pass 1: the maximum value.
  __m256d acc = _mm256_loadu_pd(data);
  std::size_t i = 4;
  for (; i + 4 <= n; i += 4) acc = _mm256_max_pd(acc, _mm256_loadu_pd(data + i));
  double best = horizontal_max(acc);
  for (; i < n; ++i) {
    if (data[i] > best) best = data[i];
  }
  // Pass 2: first index holding it. -0.0 == 0.0, which matches the scalar
  // strict-greater scan keeping the first of equal values.
  const __m256d target = _mm256_set1_pd(best);
  for (i = 0; i + 4 <= n; i += 4) {
    int mask = _mm256_movemask_pd(
        _mm256_cmp_pd(_mm256_loadu_pd(data + i), target, _CMP_EQ_OQ));
    if (mask != 0) return i + static_cast<std::size_t>(__builtin_ctz(mask));
  }
  for (; i < n; ++i) {
    if (data[i] == best) return i;
  }
  return 0;
}

double sum(std::span<const double> values) {
  const std::size_t n = values.size();
  const double* data = values.data();
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(data + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(data + i + 4));
  }
  acc0 = _mm256_add_pd(acc0, acc1);
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, acc0);
  double total = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) total += data[i];
  return total;
}

double min(std::span<const double> values) {
  const std::size_t n = values.size();
  const double* data = values.data();
  __m256d acc = _mm256_set1_pd(std::numeric_limits<double>::infinity());
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_min_pd(acc, _mm256_loadu_pd(data + i));
  double lowest = horizontal_min(acc);
  for (; i < n; ++i) {
    if (data[i] < lowest) lowest = data[i];
  }
  return lowest;
}

std::size_t count_equal(std::span<const std::uint32_t> a,
                        std::span<const std::uint32_t> b) {
  const std::size_t n = a.size() < b.size() ? a.size() : b.size();
  std::size_t count = 0;
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    __m256i va = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(a.data() + i));
    __m256i vb = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(b.data() + i));
    int mask = _mm256_movemask_ps(_mm256_castsi256_ps(_mm256_cmpeq_epi32(va, vb)));
    count += static_cast<std::size_t>(__builtin_popcount(mask));
  }
  for (; i < n; ++i) count += a[i] == b[i] ? 1 : 0;
  return count;
}

}  // namespace tacos::kernels::avx2

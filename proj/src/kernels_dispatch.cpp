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

#include <atomic>

#include "tacos/kernels.hpp"

namespace tacos::kernels {

namespace {

struct Table {
  std::size_t (*argmax)(std::span<const double>);
  double (*sum)(std::span<const double>);
  double (*min)(std::span<const double>);
  std::size_t (*count_equal)(std::span<const std::uint32_t>,
                             std::span<const std::uint32_t>);
};

constexpr Table kScalarTable{scalar::argmax, scalar::sum, scalar::min,
                             scalar::count_equal};
#ifdef TACOS_HAVE_AVX2_KERNELS
constexpr Table kAvx2Table{avx2::argmax, avx2::sum, avx2::min, avx2::count_equal};
#endif

const Table* table_for(Isa isa) {
#ifdef TACOS_HAVE_AVX2_KERNELS
  if (isa == Isa::kAvx2) return &kAvx2Table;
#endif
  (void)isa;
  return &kScalarTable;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{best_supported_isa()};
  return isa;
}

const Table& active() { return *table_for(current().load(std::memory_order_relaxed)); }

}  // namespace

std::string_view to_string(Isa isa) {
  return isa == Isa::kAvx2 ? "avx2" : "scalar";
}

Isa best_supported_isa() {
#ifdef TACOS_HAVE_AVX2_KERNELS
  if (__builtin_cpu_supports("avx2")) return Isa::kAvx2;
#endif
  return Isa::kScalar;
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

Isa set_isa(Isa isa) {
  if (isa == Isa::kAvx2 && best_supported_isa() != Isa::kAvx2) isa = Isa::kScalar;
  current().store(isa, std::memory_order_relaxed);
  return isa;
}

std::size_t argmax(std::span<const double> values) { return active().argmax(values); }
double sum(std::span<const double> values) { return active().sum(values); }
double min(std::span<const double> values) { return active().min(values); }
std::size_t count_equal(std::span<const std::uint32_t> a,
                        std::span<const std::uint32_t> b) {
  return active().count_equal(a, b);
}

}  // namespace tacos::kernels

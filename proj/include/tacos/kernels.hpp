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

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

// Score-vector kernels. Every operation has a scalar reference in
// tacos::kernels::scalar and, on x86-64, an AVX2 variant in
// tacos::kernels::avx2. The unqualified entry points dispatch at runtime to
// the widest ISA the CPU supports.
namespace tacos::kernels {

enum class Isa { kScalar, kAvx2 };

std::string_view to_string(Isa isa);

// ISA the dispatching entry points currently use.
Isa active_isa();
// Widest ISA supported by this CPU and build.
Isa best_supported_isa();
// Overrides dispatch (tests and benchmarks). Requesting an unsupported ISA
// falls back to scalar. Returns the ISA actually selected.
Isa set_isa(Isa isa);

// Index of the maximum element; the lowest index wins ties. Empty -> 0.
// Inputs must not contain NaN.
std::size_t argmax(std::span<const double> values);
double sum(std::span<const double> values);
double min(std::span<const double> values);
// Number of positions where a[i] == b[i]. Spans must have equal length.
std::size_t count_equal(std::span<const std::uint32_t> a,
                        std::span<const std::uint32_t> b);

namespace scalar {
std::size_t argmax(std::span<const double> values);
double sum(std::span<const double> values);
double min(std::span<const double> values);
std::size_t count_equal(std::span<const std::uint32_t> a,
                        std::span<const std::uint32_t> b);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define TACOS_HAVE_AVX2_KERNELS 1
namespace avx2 {
std::size_t argmax(std::span<const double> values);
double sum(std::span<const double> values);
double min(std::span<const double> values);
std::size_t count_equal(std::span<const std::uint32_t> a,
                        std::span<const std::uint32_t> b);
}  // namespace avx2
#endif

}  // namespace tacos::kernels

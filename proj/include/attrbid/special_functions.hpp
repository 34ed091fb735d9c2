/*
 * Copyright 2026 The attrbid Authors.
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

// Regularized lower incomplete gamma function P(a, x).

#pragma once

#include <cmath>
#include <numbers>

#include "attrbid/common.hpp"

namespace attrbid {

namespace internal {

// lgamma(a) - [(a - 1/2) log a - a + log(2 pi) / 2], valid for a >= 20.
inline double StirlingError(double a) {
  const double inv = 1.0 / a;
  const double inv2 = inv * inv;
  return inv * (1.0 / 12 - inv2 * (1.0 / 360 - inv2 * (1.0 / 1260 - inv2 * (1.0 / 1680))));
}

}  // namespace internal

// log(x^a e^{-x} / Gamma(a)) for a > 0, x > 0. For large a the naive form
// subtracts quantities of size a log a; the expanded form keeps only the
// O(1) remainder.
inline double LogGammaKernel(double a, double x) {
  if (a < 20) return a * std::log(x) - x - std::lgamma(a);
  const double t = (x - a) / a;
  return a * (std::log1p(t) - t) + 0.5 * std::log(a / (2.0 * std::numbers::pi)) -
         internal::StirlingError(a);
}

// P(a, x) = gamma(a, x) / Gamma(a): power series below a + 1, Lentz continued
// fraction for the complement above.
inline double RegularizedGammaP(double a, double x) {
  if (!(a > 0)) throw DomainError("incomplete gamma: a must be > 0");
  if (!(x >= 0)) throw DomainError("incomplete gamma: x must be >= 0");
  if (x == 0) return 0.0;
  if (std::isinf(x)) return 1.0;
  constexpr double kSeriesEps = 1e-17;
  constexpr double kFractionEps = 4e-16;
  constexpr long kMaxIter = 100'000'000;
  const double log_kernel = LogGammaKernel(a, x);
  if (x < a + 1) {
    double term = 1.0 / a;
    double sum = term;
    double ap = a;
    for (long n = 1; n < kMaxIter; ++n) {
      ap += 1.0;
      term *= x / ap;
      sum += term;
      if (std::abs(term) < std::abs(sum) * kSeriesEps) break;
    }
    return std::min(1.0, sum * std::exp(log_kernel));
  }
  constexpr double kTiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (long i = 1; i < kMaxIter; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kFractionEps) break;
  }
  return std::max(0.0, 1.0 - std::exp(log_kernel) * h);
}

}  // namespace attrbid

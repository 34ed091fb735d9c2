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

// Limited-memory BFGS with a backtracking Armijo line search. Every accepted
// step strictly decreases the objective.

#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "attrbid/common.hpp"

namespace attrbid {

struct LbfgsOptions {
  int max_iter = 500;
  double gradient_tolerance = 1e-6;  // on the infinity norm
  int history = 10;
  int max_backtracks = 50;
  double armijo = 1e-4;
};

struct LbfgsResult {
  std::vector<double> x;
  double value = 0.0;
  double gradient_inf_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> accepted_values;  // objective after each accepted step
  std::string message;
};

// Objective(x, gradient_out) -> value
using Objective = std::function<double(std::span<const double>, std::span<double>)>;

namespace internal {

inline double Dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double InfNorm(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace internal

inline LbfgsResult MinimizeLbfgs(const Objective& objective, std::vector<double> x0,
                                 const LbfgsOptions& options = {}) {
  using internal::Dot;
  const std::size_t n = x0.size();
  LbfgsResult result;
  result.x = std::move(x0);
  std::vector<double> g(n), g_new(n), x_new(n), d(n);
  double f = objective(result.x, g);
  if (!std::isfinite(f)) throw Error("lbfgs: non-finite objective at the starting point");

  struct Pair {
    std::vector<double> s, y;
    double rho;
  };
  std::deque<Pair> memory;
  std::vector<double> alpha;

  for (int iter = 0;; ++iter) {
    result.iterations = iter;
    result.value = f;
    result.gradient_inf_norm = internal::InfNorm(g);
    if (result.gradient_inf_norm <= options.gradient_tolerance) {
      result.converged = true;
      result.message = "gradient tolerance reached";
      return result;
    }
    if (iter >= options.max_iter) {
      result.message = "iteration limit reached";
      return result;
    }

    // Two-loop recursion: d = -H g.
    for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
    alpha.assign(memory.size(), 0.0);
    for (std::size_t k = memory.size(); k-- > 0;) {
      alpha[k] = memory[k].rho * Dot(memory[k].s, d);
      for (std::size_t i = 0; i < n; ++i) d[i] -= alpha[k] * memory[k].y[i];
    }
    if (!memory.empty()) {
      const auto& last = memory.back();
      const double gamma = Dot(last.s, last.y) / Dot(last.y, last.y);
      for (double& v : d) v *= gamma;
    }
    for (std::size_t k = 0; k < memory.size(); ++k) {
      const double beta = memory[k].rho * Dot(memory[k].y, d);
      for (std::size_t i = 0; i < n; ++i) d[i] += (alpha[k] - beta) * memory[k].s[i];
    }
    double slope = Dot(g, d);
    if (!(slope < 0)) {
      memory.clear();
      for (std::size_t i = 0; i < n; ++i) d[i] = -g[i];
      slope = Dot(g, d);
    }

    double step = memory.empty() ? std::min(1.0, 1.0 / std::sqrt(Dot(g, g))) : 1.0;
    bool accepted = false;
    double f_new = f;
    for (int b = 0; b < options.max_backtracks; ++b) {
      for (std::size_t i = 0; i < n; ++i) x_new[i] = result.x[i] + step * d[i];
      f_new = objective(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= f + options.armijo * step * slope && f_new < f) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      result.message = "line search made no progress";
      return result;
    }

    Pair pair{std::vector<double>(n), std::vector<double>(n), 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      pair.s[i] = x_new[i] - result.x[i];
      pair.y[i] = g_new[i] - g[i];
    }
    const double sy = Dot(pair.s, pair.y);
    if (sy > 1e-12 * Dot(pair.y, pair.y)) {
      pair.rho = 1.0 / sy;
      memory.push_back(std::move(pair));
      if (memory.size() > static_cast<std::size_t>(options.history)) memory.pop_front();
    }
    result.x.swap(x_new);
    g.swap(g_new);
    f = f_new;
    result.accepted_values.push_back(f);
  }
}

}  // namespace attrbid

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

// Exponential-decay attribution model. The probability that a conversion is
// still attributed to the platform delta seconds after its last click is
// exp(-lambda * delta); lambda is fitted by maximum likelihood.

#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "attrbid/common.hpp"
#include "attrbid/data_core.hpp"

namespace attrbid {

enum class FitBoundary {
  kNone,
  kAllAttributed,   // likelihood maximized as lambda -> 0
  kNoneAttributed,  // likelihood maximized as lambda -> infinity
  kLowerBound,      // optimum below lambda_min
  kUpperBound,      // optimum above lambda_max
};

inline const char* ToString(FitBoundary b) {
  switch (b) {
    case FitBoundary::kNone: return "none";
    case FitBoundary::kAllAttributed: return "all_attributed";
    case FitBoundary::kNoneAttributed: return "none_attributed";
    case FitBoundary::kLowerBound: return "lower_bound";
    case FitBoundary::kUpperBound: return "upper_bound";
  }
  return "none";
}

inline FitBoundary FitBoundaryFromString(const std::string& s) {
  for (auto b : {FitBoundary::kNone, FitBoundary::kAllAttributed, FitBoundary::kNoneAttributed,
                 FitBoundary::kLowerBound, FitBoundary::kUpperBound}) {
    if (s == ToString(b)) return b;
  }
  throw Error("unknown fit boundary '" + s + "'");
}

struct AttributionModel {
  double lambda = 0.0;  // per second
  std::size_t n_samples = 0;
  double final_nllh = 0.0;
  bool converged = false;
  FitBoundary boundary = FitBoundary::kNone;
  std::string family = "exponential";
  // Latest event time covered by the fit (data time, not wall-clock time).
  Seconds fit_timestamp = 0;

  static AttributionModel WithLambda(double lambda) {
    AttributionModel m;
    m.lambda = lambda;
    m.converged = true;
    return m;
  }
};

inline double AttributionProbability(const AttributionModel& model, double delta) {
  if (!(delta >= 0)) throw DomainError("attribution probability: delta must be >= 0");
  return std::exp(-model.lambda * delta);
}

// Share of the attribution a new click gains over the surviving credit of
// the previous click; 1 when there is no previous click.
inline double MarginalContribution(const AttributionModel& model,
                                   std::optional<double> delta_c) {
  if (!delta_c) return 1.0;
  if (!(*delta_c >= 0)) throw DomainError("marginal contribution: delta_c must be >= 0");
  return -std::expm1(-model.lambda * *delta_c);
}

// log(1 - exp(-x)) for x >= 0.
inline double Log1mExp(double x) {
  if (x <= 0) return -kInf;
  return x < std::numbers::ln2 ? std::log(-std::expm1(-x)) : std::log1p(-std::exp(-x));
}

inline double Nllh(double lambda, std::span<const AttributionSample> samples) {
  if (samples.empty()) throw DomainError("nllh: empty sample set");
  if (!(lambda >= 0)) throw DomainError("nllh: lambda must be >= 0");
  CompensatedSum sum;
  for (const auto& s : samples) {
    if (!(s.delta > 0)) throw DomainError("nllh: sample delta must be > 0");
    if (s.attributed) {
      sum.Add(lambda * s.delta);
    } else {
      const double term = Log1mExp(lambda * s.delta);
      if (std::isinf(term)) return kInf;
      sum.Add(-term);
    }
  }
  return sum.Value();
}

inline double NllhGradient(double lambda, std::span<const AttributionSample> samples) {
  if (!(lambda > 0)) throw DomainError("nllh gradient: lambda must be > 0");
  CompensatedSum sum;
  for (const auto& s : samples) {
    if (s.attributed) {
      sum.Add(s.delta);
    } else {
      // delta * e^{-x} / (1 - e^{-x}) == delta / expm1(x)
      sum.Add(-s.delta / std::expm1(lambda * s.delta));
    }
  }
  return sum.Value();
}

// Second derivative; also the observed Fisher information.
inline double NllhCurvature(double lambda, std::span<const AttributionSample> samples) {
  CompensatedSum sum;
  for (const auto& s : samples) {
    if (s.attributed) continue;
    const double x = lambda * s.delta;
    // delta^2 e^x / (e^x - 1)^2, written so that large x underflows to 0
    sum.Add(s.delta * s.delta / (std::expm1(x) * -std::expm1(-x)));
  }
  return sum.Value();
}

struct LambdaFitOptions {
  // Convergence when |gradient| * lambda <= tolerance.
  double tolerance = 1e-6;
  int max_iter = 200;
  double lambda_min = 1e-12;
  double lambda_max = 1.0;
};

// Minimizes the negative log-likelihood over [lambda_min, lambda_max]. The
// gradient is increasing in lambda, so its root is bracketed and refined by
// Newton steps that fall back to geometric bisection whenever a step leaves
// the bracket.
inline AttributionModel FitLambda(std::span<const AttributionSample> samples,
                                  const LambdaFitOptions& options = {}) {
  if (samples.empty()) throw DomainError("fit lambda: empty sample set");
  if (!(options.lambda_min > 0 && options.lambda_max > options.lambda_min)) {
    throw DomainError("fit lambda: need 0 < lambda_min < lambda_max");
  }
  AttributionModel model;
  model.n_samples = samples.size();
  std::size_t n_attributed = 0;
  for (const auto& s : samples) {
    if (!(s.delta > 0)) throw DomainError("fit lambda: sample delta must be > 0");
    n_attributed += s.attributed ? 1 : 0;
  }
  auto finish = [&](double lambda, bool converged, FitBoundary boundary) {
    model.lambda = lambda;
    model.converged = converged;
    model.boundary = boundary;
    model.final_nllh = Nllh(lambda, samples);
    return model;
  };
  if (n_attributed == samples.size()) {
    return finish(options.lambda_min, false, FitBoundary::kAllAttributed);
  }
  if (n_attributed == 0) {
    return finish(options.lambda_max, false, FitBoundary::kNoneAttributed);
  }
  double lo = options.lambda_min;
  double hi = options.lambda_max;
  if (NllhGradient(lo, samples) >= 0) return finish(lo, false, FitBoundary::kLowerBound);
  if (NllhGradient(hi, samples) <= 0) return finish(hi, false, FitBoundary::kUpperBound);

  double lambda = std::sqrt(lo * hi);
  for (int iter = 0; iter < options.max_iter; ++iter) {
    const double g = NllhGradient(lambda, samples);
    if (std::abs(g) * lambda <= options.tolerance) return finish(lambda, true, FitBoundary::kNone);
    if (g > 0) {
      hi = lambda;
    } else {
      lo = lambda;
    }
    if (hi - lo < lambda * 1e-9) return finish(lambda, true, FitBoundary::kNone);
    const double curvature = NllhCurvature(lambda, samples);
    double next = curvature > 0 ? lambda - g / curvature : -1.0;
    if (!(next > lo && next < hi)) next = std::sqrt(lo * hi);
    lambda = next;
  }
  return finish(lambda, false, FitBoundary::kNone);
}

struct PerAdvertiserFit {
  std::map<std::string, AttributionModel> models;
  std::size_t omitted_groups = 0;
};

inline PerAdvertiserFit FitPerAdvertiser(std::span<const AttributionSample> samples,
                                         std::span<const std::string> campaign_ids,
                                         std::size_t min_samples = 100,
                                         const LambdaFitOptions& options = {}) {
  if (samples.size() != campaign_ids.size()) {
    throw DomainError("per-advertiser fit: samples and campaign ids differ in length");
  }
  std::map<std::string, std::vector<AttributionSample>> groups;
  for (std::size_t i = 0; i < samples.size(); ++i) groups[campaign_ids[i]].push_back(samples[i]);
  PerAdvertiserFit out;
  for (const auto& [campaign, group] : groups) {
    if (group.size() < min_samples) {
      ++out.omitted_groups;
      continue;
    }
    out.models.emplace(campaign, FitLambda(group, options));
  }
  return out;
}

struct DayFit {
  std::int64_t day = 0;
  AttributionModel model;
  double relative_deviation = 0.0;  // (lambda_day - lambda_global) / lambda_global
  double standard_error = 0.0;      // from the Fisher information at lambda_day
  bool flagged = false;
};

struct StabilityReport {
  AttributionModel global;
  std::vector<DayFit> days;
  double max_relative_deviation = 0.0;
  bool shift_detected = false;
};

// Fits lambda per day and compares each with the global fit. A day is
// flagged when its estimate lies more than `z_threshold` standard errors
// from the global value.
inline StabilityReport DailyStability(std::span<const AttributionSample> samples,
                                      std::span<const std::int64_t> days,
                                      double z_threshold = 4.0,
                                      const LambdaFitOptions& options = {}) {
  if (samples.size() != days.size()) {
    throw DomainError("daily stability: samples and day labels differ in length");
  }
  std::map<std::int64_t, std::vector<AttributionSample>> by_day;
  for (std::size_t i = 0; i < samples.size(); ++i) by_day[days[i]].push_back(samples[i]);
  if (by_day.size() < 2) throw DomainError("daily stability: need at least 2 days");
  StabilityReport report;
  report.global = FitLambda(samples, options);
  const double global = report.global.lambda;
  for (const auto& [day, group] : by_day) {
    DayFit fit;
    fit.day = day;
    fit.model = FitLambda(group, options);
    fit.relative_deviation = (fit.model.lambda - global) / global;
    const double info = NllhCurvature(fit.model.lambda, group);
    fit.standard_error = info > 0 ? 1.0 / std::sqrt(info) : kInf;
    fit.flagged = std::abs(fit.model.lambda - global) > z_threshold * fit.standard_error;
    report.max_relative_deviation =
        std::max(report.max_relative_deviation, std::abs(fit.relative_deviation));
    report.shift_detected = report.shift_detected || fit.flagged;
    report.days.push_back(std::move(fit));
  }
  return report;
}

inline nlohmann::json ToJson(const AttributionModel& m) {
  return nlohmann::json{{"family", m.family},
                        {"lambda", m.lambda},
                        {"n_samples", m.n_samples},
                        {"final_nllh", m.final_nllh},
                        {"converged", m.converged},
                        {"boundary", ToString(m.boundary)},
                        {"fit_timestamp", m.fit_timestamp}};
}

inline AttributionModel AttributionModelFromJson(const nlohmann::json& j) {
  AttributionModel m;
  m.family = j.value("family", std::string("exponential"));
  if (m.family != "exponential") {
    throw Error("attribution model family '" + m.family + "' is not supported");
  }
  m.lambda = j.at("lambda").get<double>();
  if (!(m.lambda >= 0)) throw DomainError("attribution model: lambda must be >= 0");
  m.n_samples = j.value("n_samples", std::size_t{0});
  m.final_nllh = j.value("final_nllh", 0.0);
  m.converged = j.value("converged", true);
  m.boundary = FitBoundaryFromString(j.value("boundary", std::string("none")));
  m.fit_timestamp = j.value("fit_timestamp", Seconds{0});
  return m;
}

}  // namespace attrbid

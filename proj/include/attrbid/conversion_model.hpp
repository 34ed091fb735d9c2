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

// Post-click conversion predictor: hashed sparse binary features, L2-penalized
// logistic regression and a scalar calibration multiplier.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "attrbid/common.hpp"
#include "attrbid/data_core.hpp"
#include "attrbid/lbfgs.hpp"

namespace attrbid {

inline constexpr int kMinHashBits = 10;
inline constexpr int kMaxHashBits = 28;
inline constexpr int kDefaultHashBits = 18;

struct HashedFeatureVector {
  std::vector<std::uint32_t> indices;  // strictly increasing, < 2^bits
  int bits = kDefaultHashBits;

  bool operator==(const HashedFeatureVector&) const = default;
};

// FNV-1a of "field:token", reduced modulo 2^bits.
inline std::uint32_t HashFeature(const Feature& feature, int bits) {
  const std::string key = std::to_string(feature.field) + ":" + feature.token;
  return static_cast<std::uint32_t>(Fnv1a64(key) & ((std::uint64_t{1} << bits) - 1));
}

inline HashedFeatureVector HashFeatures(std::span<const Feature> features,
                                        int bits = kDefaultHashBits) {
  if (bits < kMinHashBits || bits > kMaxHashBits) {
    throw DomainError("hash bits must lie in [" + std::to_string(kMinHashBits) + ", " +
                      std::to_string(kMaxHashBits) + "]");
  }
  HashedFeatureVector out;
  out.bits = bits;
  out.indices.reserve(features.size());
  for (const auto& f : features) out.indices.push_back(HashFeature(f, bits));
  std::sort(out.indices.begin(), out.indices.end());
  out.indices.erase(std::unique(out.indices.begin(), out.indices.end()), out.indices.end());
  return out;
}

struct TrainingExample {
  HashedFeatureVector features;
  // Soft target in [0, 1]: the example counts as a positive with importance
  // `weight` and as a negative with importance 1 - weight.
  double weight = 0.0;
  bool label = false;
};

struct TrainOptions {
  double l2 = 1.0;
  int max_iter = 500;
  double tolerance = 1e-4;  // on the gradient infinity norm
};

struct TrainDiagnostics {
  int iterations = 0;
  double final_loss = 0.0;
  double gradient_inf_norm = 0.0;
  bool converged = false;
  std::vector<double> loss_history;
};

struct LinearConversionModel {
  int bits = kDefaultHashBits;
  std::vector<double> weights;
  double bias = 0.0;
  double l2 = 0.0;
  double calibration = 1.0;
  TrainDiagnostics diagnostics;

  static LinearConversionModel Zero(int bits) {
    LinearConversionModel m;
    m.bits = bits;
    m.weights.assign(std::size_t{1} << bits, 0.0);
    return m;
  }
};

inline double Sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z)
inline double Softplus(double z) {
  return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

// Weighted logistic loss plus (l2 / 2) * |w|^2 over the parameter vector
// [w_0, ..., w_{2^bits - 1}, bias]; the bias is not penalized.
class LogisticObjective {
 public:
  LogisticObjective(std::span<const TrainingExample> examples, int bits, double l2)
      : dim_(std::size_t{1} << bits), l2_(l2) {
    offsets_.reserve(examples.size() + 1);
    offsets_.push_back(0);
    targets_.reserve(examples.size());
    for (const auto& e : examples) {
      if (e.features.bits != bits) throw DomainError("training example hashed with other bits");
      indices_.insert(indices_.end(), e.features.indices.begin(), e.features.indices.end());
      offsets_.push_back(indices_.size());
      targets_.push_back(e.weight);
    }
  }

  std::size_t dimension() const { return dim_ + 1; }

  double operator()(std::span<const double> params, std::span<double> grad) const {
    const double bias = params[dim_];
    std::fill(grad.begin(), grad.end(), 0.0);
    CompensatedSum loss;
    for (std::size_t i = 0; i < targets_.size(); ++i) {
      double z = bias;
      for (std::size_t k = offsets_[i]; k < offsets_[i + 1]; ++k) z += params[indices_[k]];
      loss.Add(Softplus(z) - targets_[i] * z);
      const double residual = Sigmoid(z) - targets_[i];
      for (std::size_t k = offsets_[i]; k < offsets_[i + 1]; ++k) grad[indices_[k]] += residual;
      grad[dim_] += residual;
    }
    double penalty = 0.0;
    for (std::size_t j = 0; j < dim_; ++j) {
      penalty += params[j] * params[j];
      grad[j] += l2_ * params[j];
    }
    loss.Add(0.5 * l2_ * penalty);
    return loss.Value();
  }

 private:
  std::size_t dim_;
  double l2_;
  std::vector<std::size_t> offsets_;
  std::vector<std::uint32_t> indices_;
  std::vector<double> targets_;
};

inline LinearConversionModel Train(std::span<const TrainingExample> examples,
                                   const TrainOptions& options = {},
                                   int bits = kDefaultHashBits) {
  if (!(options.l2 >= 0)) throw DomainError("train: l2 must be >= 0");
  double positive = 0.0;
  double negative = 0.0;
  for (const auto& e : examples) {
    if (!(e.weight >= 0 && e.weight <= 1)) throw DomainError("train: weight outside [0, 1]");
    positive += e.weight;
    negative += 1.0 - e.weight;
  }
  if (!(positive > 0 && negative > 0)) {
    throw DomainError("train: need both positive and negative weight (single-class data)");
  }
  LogisticObjective objective(examples, bits, options.l2);
  LbfgsOptions lbfgs;
  lbfgs.max_iter = options.max_iter;
  lbfgs.gradient_tolerance = options.tolerance;
  std::vector<double> x0(objective.dimension(), 0.0);
  LbfgsResult result;
  try {
    result = MinimizeLbfgs(std::cref(objective), std::move(x0), lbfgs);
  } catch (const Error& e) {
    throw Error(std::string("train: ") + e.what());
  }
  if (!std::isfinite(result.value)) {
    throw Error("train: non-finite loss after " + std::to_string(result.iterations) +
                " iterations");
  }
  LinearConversionModel model;
  model.bits = bits;
  model.l2 = options.l2;
  model.bias = result.x.back();
  result.x.pop_back();
  model.weights = std::move(result.x);
  model.diagnostics = {result.iterations, result.value, result.gradient_inf_norm,
                       result.converged, std::move(result.accepted_values)};
  return model;
}

// Calibrated probability, clamped to 1.
inline double Predict(const LinearConversionModel& model, const HashedFeatureVector& x) {
  if (x.bits != model.bits) {
    throw DomainError("predict: features hashed with " + std::to_string(x.bits) +
                      " bits, model has " + std::to_string(model.bits));
  }
  double z = model.bias;
  for (const auto i : x.indices) z += model.weights[i];
  return std::min(1.0, model.calibration * Sigmoid(z));
}

// Bid of record i given a candidate model.
using BidFunction = std::function<double(const LinearConversionModel&, std::size_t)>;

// Chooses the calibration multiplier so that the bids over n records sum to
// reference_total. Without clamping the sum is linear in the multiplier and
// one rescaling is exact; otherwise the monotone sum is bisected.
inline LinearConversionModel Calibrate(LinearConversionModel model, const BidFunction& bid,
                                       std::size_t n, double reference_total,
                                       double relative_tolerance = 1e-9) {
  if (n == 0) throw DomainError("calibrate: no evaluation records");
  if (!(reference_total > 0)) throw DomainError("calibrate: reference total must be > 0");
  auto total_at = [&](double c) {
    model.calibration = c;
    CompensatedSum s;
    for (std::size_t i = 0; i < n; ++i) s.Add(bid(model, i));
    return s.Value();
  };
  auto close = [&](double total) {
    return std::abs(total - reference_total) <= relative_tolerance * reference_total;
  };
  const double start = model.calibration;
  const double current = total_at(start);
  if (!(current > 0)) throw Error("calibrate: all bids are zero");
  if (close(current)) return model;
  const double scaled = start * reference_total / current;
  if (close(total_at(scaled))) return model;

  double lo = 0.0;
  double hi = std::max(start, scaled);
  int expansions = 0;
  while (total_at(hi) < reference_total) {
    lo = hi;
    hi *= 2.0;
    if (++expansions > 200) {
      throw Error("calibrate: reference total unreachable, bids saturate at the clamp");
    }
  }
  double mid = hi;
  for (int iter = 0; iter < 400; ++iter) {
    mid = 0.5 * (lo + hi);
    const double total = total_at(mid);
    if (close(total)) break;
    (total < reference_total ? lo : hi) = mid;
  }
  model.calibration = mid;
  return model;
}

// Text persistence; doubles use the shortest exact representation so a
// reloaded model reproduces predictions bit for bit.
inline constexpr const char* kModelHeader = "attrbid-linear-conversion-model";
inline constexpr int kModelVersion = 1;

inline void SaveModel(std::ostream& out, const LinearConversionModel& m) {
  std::size_t nonzero = 0;
  for (double w : m.weights) nonzero += w != 0.0 ? 1 : 0;
  out << kModelHeader << ' ' << kModelVersion << '\n'
      << "bits " << m.bits << '\n'
      << "l2 " << FormatDouble(m.l2) << '\n'
      << "bias " << FormatDouble(m.bias) << '\n'
      << "calibration " << FormatDouble(m.calibration) << '\n'
      << "nonzero " << nonzero << '\n';
  for (std::size_t i = 0; i < m.weights.size(); ++i) {
    if (m.weights[i] != 0.0) out << i << ' ' << FormatDouble(m.weights[i]) << '\n';
  }
}

inline LinearConversionModel LoadModel(std::istream& in) {
  auto fail = [](const std::string& what) { return Error("load model: " + what); };
  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != kModelHeader) throw fail("bad header");
  if (version != kModelVersion) throw fail("unsupported version " + std::to_string(version));
  auto read_double = [&](const char* key) {
    std::string k, v;
    double out = 0;
    if (!(in >> k >> v) || k != key || !ParseDouble(v, out)) {
      throw fail(std::string("expected '") + key + "'");
    }
    return out;
  };
  std::string k;
  LinearConversionModel m;
  if (!(in >> k >> m.bits) || k != "bits" || m.bits < kMinHashBits || m.bits > kMaxHashBits) {
    throw fail("bad bits");
  }
  m.l2 = read_double("l2");
  m.bias = read_double("bias");
  m.calibration = read_double("calibration");
  if (!(m.calibration > 0)) throw fail("calibration must be > 0");
  std::size_t nonzero = 0;
  if (!(in >> k >> nonzero) || k != "nonzero") throw fail("expected 'nonzero'");
  m.weights.assign(std::size_t{1} << m.bits, 0.0);
  for (std::size_t j = 0; j < nonzero; ++j) {
    std::size_t index = 0;
    std::string v;
    double w = 0;
    if (!(in >> index >> v) || index >= m.weights.size() || !ParseDouble(v, w) ||
        !std::isfinite(w)) {
      throw fail("bad weight entry " + std::to_string(j));
    }
    m.weights[index] = w;
  }
  return m;
}

}  // namespace attrbid

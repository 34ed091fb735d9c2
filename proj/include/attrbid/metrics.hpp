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

// Replay metrics: empirical utility, Expected Utility under a Gamma
// perturbation of the observed cost, its attribution-aware variants, win rate,
// bootstrap bands and the bucketed attribution-rate curves.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "attrbid/attribution_model.hpp"
#include "attrbid/common.hpp"
#include "attrbid/data_core.hpp"
#include "attrbid/labeling.hpp"
#include "attrbid/special_functions.hpp"

namespace attrbid {

// Gamma(shape = beta * c + 1, rate = beta) around the observed cost c;
// beta = infinity leaves the cost unperturbed.
struct CostPerturbation {
  double beta = kInf;

  static CostPerturbation Infinite() { return {kInf}; }
  static CostPerturbation Finite(double beta) {
    if (!(beta > 0) || std::isinf(beta)) throw DomainError("cost perturbation: beta must be > 0");
    return {beta};
  }
  bool infinite() const { return std::isinf(beta); }
  std::string Name() const { return infinite() ? "inf" : FormatDouble(beta); }
};

enum class AttributionFunctionKind { kLastClick, kModel, kModelNormalized };

struct AttributionFunction {
  AttributionFunctionKind kind = AttributionFunctionKind::kLastClick;
  std::optional<AttributionModel> model;

  static AttributionFunction LastClick() { return {AttributionFunctionKind::kLastClick, {}}; }
  static AttributionFunction Model(const AttributionModel& m) {
    return {AttributionFunctionKind::kModel, m};
  }
  static AttributionFunction ModelNormalized(const AttributionModel& m) {
    return {AttributionFunctionKind::kModelNormalized, m};
  }

  // U_LC, U_A* (raw model weights) and U_A (normalized model weights).
  std::string Name() const {
    switch (kind) {
      case AttributionFunctionKind::kLastClick: return "U_LC";
      case AttributionFunctionKind::kModel: return "U_A*";
      case AttributionFunctionKind::kModelNormalized: return "U_A";
    }
    return "";
  }

  AttributionScheme AsScheme() const {
    if (model.has_value() == (kind == AttributionFunctionKind::kLastClick)) {
      throw DomainError("attribution function: model required by, and only by, model kinds");
    }
    switch (kind) {
      case AttributionFunctionKind::kLastClick: return AttributionScheme::Of(SchemeKind::kLastClick);
      case AttributionFunctionKind::kModel: return AttributionScheme::ModelWeights(*model, false);
      case AttributionFunctionKind::kModelNormalized:
        return AttributionScheme::ModelWeights(*model, true);
    }
    return {};
  }
};

// Attribution weight of every record; identical to the labeling credit of
// the matching scheme so metric and training labels agree.
inline std::vector<double> AttributionWeights(const AttributionFunction& fn,
                                              std::span<const ImpressionRecord> records,
                                              const ConversionIndex& index) {
  return SchemeWeights(records, index, fn.AsScheme());
}

inline double AttributionWeight(const AttributionFunction& fn, std::size_t record,
                                std::span<const ImpressionRecord> records,
                                const ConversionIndex& index) {
  const std::int64_t g = index.group_of_record.at(record);
  if (g < 0 || !records[record].click) return 0.0;
  const auto& group = index.groups[static_cast<std::size_t>(g)];
  if (!group.attributed) return 0.0;
  const auto w = LabelConversionClicks(group.click_times, fn.AsScheme());
  return w[static_cast<std::size_t>(index.position_of_record[record])];
}

// Per-display attribution flags read straight from the log: within each
// attributed conversion, the clicked record with the highest click_pos.
inline std::vector<double> RawAttributionFlags(std::span<const ImpressionRecord> records) {
  std::map<std::tuple<std::string, std::string, Seconds>, std::pair<int, std::size_t>> last;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (!r.click || !r.attribution || !r.click_pos || !r.conversion_timestamp) continue;
    auto key = std::make_tuple(r.user_id, r.campaign_id, *r.conversion_timestamp);
    auto it = last.find(key);
    if (it == last.end() || *r.click_pos >= it->second.first) {
      last[key] = {*r.click_pos, i};
    }
  }
  std::vector<double> flags(records.size(), 0.0);
  for (const auto& [key, entry] : last) flags[entry.second] = 1.0;
  return flags;
}

enum class ValueSource { kConversionValueOrCpo, kCpo };

inline std::vector<double> RecordValues(std::span<const ImpressionRecord> records,
                                        ValueSource source = ValueSource::kConversionValueOrCpo) {
  std::vector<double> v(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    v[i] = source == ValueSource::kConversionValueOrCpo && r.conversion_value
               ? *r.conversion_value
               : r.cpo;
  }
  return v;
}

// Utility of one auction. For finite beta this is
//   int_0^bid (a v - c) Gamma(c; alpha = beta c_obs + 1, rate beta) dc
//     = a v P(alpha, beta bid) - (alpha / beta) P(alpha + 1, beta bid),
// evaluated in the equivalent form
//     (a v - alpha / beta) P(alpha, x) + x^alpha e^{-x} / (beta Gamma(alpha)),
// x = beta * bid, which avoids a second incomplete gamma evaluation.
inline double AuctionUtility(double attribution, double value, double cost, double bid,
                             const CostPerturbation& perturbation) {
  if (perturbation.infinite()) {
    return bid > cost ? attribution * value - cost : 0.0;
  }
  if (!(cost > 0)) throw DomainError("expected utility: cost must be > 0 for finite beta");
  if (!(bid > 0)) return 0.0;
  const double beta = perturbation.beta;
  const double alpha = beta * cost + 1.0;
  const double x = beta * bid;
  const double p = RegularizedGammaP(alpha, x);
  const double density_term = std::exp(LogGammaKernel(alpha, x)) / beta;
  return (attribution * value - alpha / beta) * p + density_term;
}

struct ReplayColumns {
  std::span<const double> attribution;  // a_i
  std::span<const double> values;       // v_i
  std::span<const double> costs;        // c_i
  std::span<const double> bids;
};

inline std::vector<double> UtilityContributions(const ReplayColumns& cols,
                                                const CostPerturbation& perturbation) {
  const std::size_t n = cols.bids.size();
  if (cols.attribution.size() != n || cols.values.size() != n || cols.costs.size() != n) {
    throw DomainError("utility: columns differ in length");
  }
  if (!perturbation.infinite()) {
    std::string offending;
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!(cols.costs[i] > 0)) {
        if (++count <= 10) offending += (offending.empty() ? "" : ", ") + std::to_string(i);
      }
    }
    if (count > 0) {
      throw DomainError("expected utility: non-positive cost with finite beta at records " +
                        offending + (count > 10 ? ", ..." : ""));
    }
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = AuctionUtility(cols.attribution[i], cols.values[i], cols.costs[i], cols.bids[i],
                            perturbation);
  }
  return out;
}

inline double EmpiricalUtility(const ReplayColumns& cols) {
  return OrderedSum(UtilityContributions(cols, CostPerturbation::Infinite()));
}

inline double ExpectedUtility(const ReplayColumns& cols, const CostPerturbation& perturbation) {
  return OrderedSum(UtilityContributions(cols, perturbation));
}

// Attribution-aware Expected Utility: a_i comes from the attribution function.
inline double AttributionAwareExpectedUtility(std::span<const ImpressionRecord> records,
                                              const ConversionIndex& index,
                                              const AttributionFunction& fn,
                                              std::span<const double> values,
                                              std::span<const double> bids,
                                              const CostPerturbation& perturbation) {
  const auto weights = AttributionWeights(fn, records, index);
  std::vector<double> costs(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) costs[i] = records[i].cost;
  return ExpectedUtility({weights, values, costs, bids}, perturbation);
}

inline double WinRate(std::span<const double> costs, std::span<const double> bids) {
  if (bids.empty()) return 0.0;
  std::size_t wins = 0;
  for (std::size_t i = 0; i < bids.size(); ++i) wins += bids[i] > costs[i] ? 1 : 0;
  return static_cast<double>(wins) / static_cast<double>(bids.size());
}

// Linear interpolation between order statistics of a sorted sample.
inline double SortedQuantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw DomainError("quantile of an empty sample");
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

struct BootstrapOptions {
  int n_resamples = 100;
  double quantile = 0.05;
  std::uint64_t seed = 42;

  void Validate() const {
    if (n_resamples < 2) throw DomainError("bootstrap: need at least 2 resamples");
    if (!(quantile > 0 && quantile <= 0.5)) throw DomainError("bootstrap: quantile in (0, 0.5]");
  }
};

struct Band {
  double low = 0.0;
  double high = 0.0;
};

// Percentile band of the resampled sum. Resample r draws its indices from
// its own derived stream.
inline Band BootstrapCi(std::span<const double> contributions,
                        const BootstrapOptions& options = {}) {
  options.Validate();
  if (contributions.empty()) throw DomainError("bootstrap: empty contributions");
  const std::size_t n = contributions.size();
  std::vector<double> sums(static_cast<std::size_t>(options.n_resamples));
  for (int r = 0; r < options.n_resamples; ++r) {
    Rng rng(DeriveSeed(options.seed, static_cast<std::uint64_t>(r)));
    CompensatedSum s;
    for (std::size_t k = 0; k < n; ++k) s.Add(contributions[rng.Index(n)]);
    sums[static_cast<std::size_t>(r)] = s.Value();
  }
  std::sort(sums.begin(), sums.end());
  return {SortedQuantile(sums, options.quantile), SortedQuantile(sums, 1.0 - options.quantile)};
}

namespace internal {

inline std::vector<std::size_t> OrderById(std::span<const std::size_t> ids) {
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return ids[a] < ids[b]; });
  return order;
}

}  // namespace internal

// As above, but resampling indexes the universe sorted by record id, so the
// band does not depend on the order records are supplied in.
inline Band BootstrapCi(std::span<const double> contributions, std::span<const std::size_t> ids,
                        const BootstrapOptions& options = {}) {
  if (ids.size() != contributions.size()) throw DomainError("bootstrap: ids length mismatch");
  const auto order = internal::OrderById(ids);
  std::vector<double> sorted(contributions.size());
  for (std::size_t k = 0; k < order.size(); ++k) sorted[k] = contributions[order[k]];
  return BootstrapCi(sorted, options);
}

struct Uplift {
  double uplift = 0.0;  // (sum a - sum b) / |sum b|
  Band band;
  bool significant = false;
};

// Paired bootstrap of the relative difference between two bidders replayed
// on the same records.
inline Uplift UpliftSignificance(std::span<const double> a, std::span<const double> b,
                                 const BootstrapOptions& options = {}) {
  options.Validate();
  if (a.size() != b.size()) throw DomainError("uplift: contribution lists differ in length");
  if (a.empty()) throw DomainError("uplift: empty contributions");
  const double sum_b = OrderedSum(b);
  if (sum_b == 0.0) throw DomainError("uplift: baseline sum is zero");
  Uplift out;
  out.uplift = (OrderedSum(a) - sum_b) / std::abs(sum_b);
  const std::size_t n = a.size();
  std::vector<double> ratios;
  ratios.reserve(static_cast<std::size_t>(options.n_resamples));
  for (int r = 0; r < options.n_resamples; ++r) {
    Rng rng(DeriveSeed(options.seed, static_cast<std::uint64_t>(r)));
    CompensatedSum sa, sb;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = rng.Index(n);
      sa.Add(a[i]);
      sb.Add(b[i]);
    }
    const double denom = std::abs(sb.Value());
    const double diff = sa.Value() - sb.Value();
    ratios.push_back(denom > 0 ? diff / denom : (diff > 0 ? kInf : diff < 0 ? -kInf : 0.0));
  }
  std::sort(ratios.begin(), ratios.end());
  out.band = {SortedQuantile(ratios, options.quantile),
              SortedQuantile(ratios, 1.0 - options.quantile)};
  out.significant = out.band.low > 0 || out.band.high < 0;
  return out;
}

inline Uplift UpliftSignificance(std::span<const double> a, std::span<const double> b,
                                 std::span<const std::size_t> ids,
                                 const BootstrapOptions& options = {}) {
  if (ids.size() != a.size()) throw DomainError("uplift: ids length mismatch");
  const auto order = internal::OrderById(ids);
  std::vector<double> sa(a.size()), sb(b.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    sa[k] = a[order[k]];
    sb[k] = b[order[k]];
  }
  return UpliftSignificance(sa, sb, options);
}

struct UtilityReport {
  double value = 0.0;
  std::size_t n_auctions = 0;
  double win_rate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::uint64_t seed = 0;
};

struct MetricVariant {
  AttributionFunction function;
  CostPerturbation perturbation;

  std::string Name() const { return function.Name() + ",beta=" + perturbation.Name(); }
};

struct BidderTrace {
  std::string bidder;
  std::vector<double> bids;  // aligned with the suite's record list
};

struct SuiteResult {
  // Keyed by (bidder, variant name).
  std::map<std::pair<std::string, std::string>, UtilityReport> reports;
  std::map<std::pair<std::string, std::string>, std::vector<double>> contributions;
};

// Scores every bidder trace under every variant on the records `record_ids`.
// The percentile band is widened to include the point value when needed.
inline SuiteResult UtilitySuite(std::span<const ImpressionRecord> records,
                                const ConversionIndex& index,
                                std::span<const std::size_t> record_ids,
                                std::span<const double> values,
                                std::span<const BidderTrace> traces,
                                std::span<const MetricVariant> variants,
                                const BootstrapOptions& bootstrap = {}) {
  std::vector<double> costs(record_ids.size()), vals(record_ids.size());
  for (std::size_t k = 0; k < record_ids.size(); ++k) {
    costs[k] = records[record_ids[k]].cost;
    vals[k] = values[record_ids[k]];
  }
  std::map<std::string, std::vector<double>> weights_by_function;
  SuiteResult out;
  for (const auto& variant : variants) {
    const std::string fname = variant.function.Name();
    if (!weights_by_function.contains(fname)) {
      const auto all = AttributionWeights(variant.function, records, index);
      std::vector<double> w(record_ids.size());
      for (std::size_t k = 0; k < record_ids.size(); ++k) w[k] = all[record_ids[k]];
      weights_by_function.emplace(fname, std::move(w));
    }
    const auto& weights = weights_by_function.at(fname);
    for (const auto& trace : traces) {
      if (trace.bids.size() != record_ids.size()) {
        throw DomainError("utility suite: trace '" + trace.bidder + "' is misaligned");
      }
      auto contributions =
          UtilityContributions({weights, vals, costs, trace.bids}, variant.perturbation);
      UtilityReport report;
      report.value = OrderedSum(contributions);
      report.n_auctions = record_ids.size();
      report.win_rate = WinRate(costs, trace.bids);
      report.seed = bootstrap.seed;
      if (!contributions.empty()) {
        const Band band = BootstrapCi(contributions, record_ids, bootstrap);
        report.ci_low = std::min(band.low, report.value);
        report.ci_high = std::max(band.high, report.value);
      }
      const auto key = std::make_pair(trace.bidder, variant.Name());
      out.reports[key] = report;
      out.contributions[key] = std::move(contributions);
    }
  }
  return out;
}

struct CurvePoint {
  double lower = 0.0;  // bucket start, seconds
  double mean = 0.0;
  std::size_t count = 0;
};

using Curve = std::vector<CurvePoint>;

inline Curve BucketMeans(std::span<const double> x, std::span<const double> y,
                         double bucket_width, double horizon = kInf) {
  if (!(bucket_width > 0)) throw DomainError("curve: bucket width must be > 0");
  std::map<std::int64_t, std::pair<CompensatedSum, std::size_t>> acc;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (x[i] >= horizon) continue;
    auto& slot = acc[static_cast<std::int64_t>(std::floor(x[i] / bucket_width))];
    slot.first.Add(y[i]);
    ++slot.second;
  }
  Curve curve;
  for (const auto& [bucket, slot] : acc) {
    curve.push_back({static_cast<double>(bucket) * bucket_width,
                     slot.first.Value() / static_cast<double>(slot.second), slot.second});
  }
  return curve;
}

// Mean attribution among conversions per time-since-last-click bucket.
inline Curve ConversionAttributionCurve(std::span<const AttributionSample> samples,
                                        double bucket_width, double horizon = kInf) {
  std::vector<double> x(samples.size()), y(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    x[i] = samples[i].delta;
    y[i] = samples[i].attributed ? 1.0 : 0.0;
  }
  return BucketMeans(x, y, bucket_width, horizon);
}

struct AttributionRateCurves {
  Curve conversion_attribution;  // per conversion
  Curve last_click_labels;       // per clicked display
  Curve first_click_labels;
};

// Per-display positive-label rates under last-click and first-click labeling,
// bucketed by delta_c; displays with no prior click are left out.
inline AttributionRateCurves ComputeAttributionRateCurves(
    std::span<const ImpressionRecord> records, const TimelineMap& timelines,
    double bucket_width, double horizon = kInf, Seconds window = kDefaultAttributionWindow) {
  AttributionRateCurves out;
  const auto extraction = ExtractAttributionSamples(records, timelines, window);
  out.conversion_attribution =
      ConversionAttributionCurve(extraction.samples, bucket_width, horizon);
  const auto index = BuildConversionIndex(records, timelines, window);
  const auto delta_c = DeltaCForRecords(records, timelines);
  const auto lc = SchemeWeights(records, index, AttributionScheme::Of(SchemeKind::kLastClick));
  const auto fc = SchemeWeights(records, index, AttributionScheme::Of(SchemeKind::kFirstClick));
  std::vector<double> x, y_lc, y_fc;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (!records[i].click || !delta_c[i]) continue;
    x.push_back(static_cast<double>(*delta_c[i]));
    y_lc.push_back(lc[i] > 0 ? 1.0 : 0.0);
    y_fc.push_back(fc[i] > 0 ? 1.0 : 0.0);
  }
  out.last_click_labels = BucketMeans(x, y_lc, bucket_width, horizon);
  out.first_click_labels = BucketMeans(x, y_fc, bucket_width, horizon);
  return out;
}

}  // namespace attrbid

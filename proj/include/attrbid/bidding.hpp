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

// Bidding policies: last-click (LCB), first-click (FCB), attribution-aware
// (AB) and the multiplier transform of a reference bid.

#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "attrbid/attribution_model.hpp"
#include "attrbid/common.hpp"
#include "attrbid/conversion_model.hpp"
#include "attrbid/data_core.hpp"
#include "attrbid/labeling.hpp"

namespace attrbid {

enum class BidderKind { kLCB, kFCB, kAB, kMultiplierPolicy };

inline const char* ToString(BidderKind k) {
  switch (k) {
    case BidderKind::kLCB: return "LCB";
    case BidderKind::kFCB: return "FCB";
    case BidderKind::kAB: return "AB";
    case BidderKind::kMultiplierPolicy: return "MP";
  }
  return "";
}

inline BidderKind BidderKindFromString(const std::string& s) {
  for (auto k : {BidderKind::kLCB, BidderKind::kFCB, BidderKind::kAB,
                 BidderKind::kMultiplierPolicy}) {
    if (s == ToString(k)) return k;
  }
  throw Error("unknown bidder '" + s + "'");
}

// Labeling scheme each bidder's conversion model is trained under.
inline SchemeKind DefaultScheme(BidderKind k) {
  switch (k) {
    case BidderKind::kFCB: return SchemeKind::kFirstClick;
    case BidderKind::kAB: return SchemeKind::kAllClicks;
    default: return SchemeKind::kLastClick;
  }
}

struct BidContext {
  const HashedFeatureVector* features = nullptr;
  std::optional<double> delta_c;  // seconds since the last click, if any
  double cpa = 0.0;
};

inline double BidLcb(const BidContext& ctx, const LinearConversionModel& model) {
  return ctx.cpa * Predict(model, *ctx.features);
}

inline double BidFcb(const BidContext& ctx, const LinearConversionModel& model) {
  return ctx.cpa * Predict(model, *ctx.features);
}

inline double BidAb(const BidContext& ctx, const LinearConversionModel& conversion_model,
                    const AttributionModel& attribution_model) {
  return ctx.cpa * Predict(conversion_model, *ctx.features) *
         MarginalContribution(attribution_model, ctx.delta_c);
}

// reference_bid * A * (1 - B exp(-lambda delta_c)); with no prior click the
// decay term is 0 and the factor is A.
inline double ApplyMultiplierPolicy(double reference_bid, const AttributionModel& model,
                                    std::optional<double> delta_c, double a, double b) {
  if (!(a > 0)) throw DomainError("multiplier policy: A must be > 0");
  if (!(b >= 0 && b <= 1)) throw DomainError("multiplier policy: B must lie in [0, 1]");
  if (!delta_c) return reference_bid * a;
  if (!(*delta_c >= 0)) throw DomainError("multiplier policy: delta_c must be >= 0");
  return reference_bid * a * (1.0 - b * std::exp(-model.lambda * *delta_c));
}

struct BidderSpec {
  BidderKind kind = BidderKind::kLCB;
  // For MultiplierPolicy: the reference (last-click) model.
  LinearConversionModel conversion_model;
  std::optional<AttributionModel> attribution_model;
  double a = 1.0;
  double b = 1.0;

  void Validate() const {
    const bool needs_model =
        kind == BidderKind::kAB || kind == BidderKind::kMultiplierPolicy;
    if (needs_model != attribution_model.has_value()) {
      throw DomainError(std::string("bidder ") + ToString(kind) +
                        (needs_model ? " requires" : " must not carry") +
                        " an attribution model");
    }
  }
};

inline double PlaceBid(const BidderSpec& spec, const BidContext& ctx) {
  switch (spec.kind) {
    case BidderKind::kLCB: return BidLcb(ctx, spec.conversion_model);
    case BidderKind::kFCB: return BidFcb(ctx, spec.conversion_model);
    case BidderKind::kAB: return BidAb(ctx, spec.conversion_model, *spec.attribution_model);
    case BidderKind::kMultiplierPolicy:
      return ApplyMultiplierPolicy(BidLcb(ctx, spec.conversion_model), *spec.attribution_model,
                                   ctx.delta_c, spec.a, spec.b);
  }
  return 0.0;
}

struct ProfileBucket {
  std::int64_t bucket = 0;
  double lower = 0.0;  // seconds
  double mean_bid = 0.0;
  std::size_t count = 0;
};

struct BidProfile {
  std::vector<ProfileBucket> buckets;  // ascending, empty buckets omitted
  double no_prior_click_mean = 0.0;   // reference level of bids with no prior click
  std::size_t no_prior_click_count = 0;
};

// Mean bid per delta_c bucket over [0, horizon).
inline BidProfile ComputeBidProfile(std::span<const std::optional<double>> delta_c,
                                    std::span<const double> bids, double bucket_width,
                                    double horizon) {
  if (delta_c.size() != bids.size()) throw DomainError("bid profile: length mismatch");
  if (!(bucket_width > 0)) throw DomainError("bid profile: bucket width must be > 0");
  std::map<std::int64_t, std::pair<CompensatedSum, std::size_t>> acc;
  CompensatedSum none;
  BidProfile profile;
  for (std::size_t i = 0; i < bids.size(); ++i) {
    if (!delta_c[i]) {
      none.Add(bids[i]);
      ++profile.no_prior_click_count;
      continue;
    }
    if (*delta_c[i] >= horizon) continue;
    auto& slot = acc[static_cast<std::int64_t>(std::floor(*delta_c[i] / bucket_width))];
    slot.first.Add(bids[i]);
    ++slot.second;
  }
  for (const auto& [bucket, slot] : acc) {
    profile.buckets.push_back({bucket, static_cast<double>(bucket) * bucket_width,
                               slot.first.Value() / static_cast<double>(slot.second),
                               slot.second});
  }
  if (profile.no_prior_click_count > 0) {
    profile.no_prior_click_mean =
        none.Value() / static_cast<double>(profile.no_prior_click_count);
  }
  return profile;
}

// Replays `spec` over every record, with delta_c taken from the record's own
// timeline and cpa from its cpo, and buckets the bids.
inline BidProfile ComputeBidProfile(std::span<const ImpressionRecord> records,
                                    const TimelineMap& timelines, const BidderSpec& spec,
                                    double bucket_width, double horizon) {
  spec.Validate();
  const auto delta = DeltaCForRecords(records, timelines);
  std::vector<std::optional<double>> delta_c(records.size());
  std::vector<double> bids(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (delta[i]) delta_c[i] = static_cast<double>(*delta[i]);
    const auto x = HashFeatures(records[i].features, spec.conversion_model.bits);
    bids[i] = PlaceBid(spec, {&x, delta_c[i], records[i].cpo});
  }
  return ComputeBidProfile(delta_c, bids, bucket_width, horizon);
}

// Bid-trace row layout shared by writers and readers.
struct BidTraceRow {
  std::size_t record_id = 0;
  std::string bidder;
  std::optional<double> delta_c;
  double prediction = 0.0;
  double bid = 0.0;
};

inline void WriteBidTrace(std::ostream& out, std::span<const BidTraceRow> rows) {
  out << "record_id\tbidder\tdelta_c\tprediction\tbid\n";
  for (const auto& r : rows) {
    out << r.record_id << '\t' << r.bidder << '\t';
    if (r.delta_c) out << FormatDouble(*r.delta_c);
    out << '\t' << FormatDouble(r.prediction) << '\t' << FormatDouble(r.bid) << '\n';
  }
}

}  // namespace attrbid

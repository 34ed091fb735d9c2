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

#include "attrbid/bidding.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>
#include <vector>

#include "attrbid/synthetic.hpp"

namespace attrbid {
namespace {

constexpr double kPublicLogLambda = 6.25e-6;
constexpr double kHalfLife = 110904;  // ln 2 / 6.25e-6, rounded to the second

LinearConversionModel ConstantModel(double probability, int bits = 10) {
  auto m = LinearConversionModel::Zero(bits);
  m.bias = std::log(probability / (1 - probability));
  return m;
}

class BiddingTest : public ::testing::Test {
 protected:
  HashedFeatureVector x_ = HashFeatures({}, 10);
  BidContext Ctx(std::optional<double> delta_c, double cpa = 10) { return {&x_, delta_c, cpa}; }
};

TEST_F(BiddingTest, LastClickBidder) {
  auto zero = LinearConversionModel::Zero(10);
  zero.bias = -800;
  EXPECT_EQ(BidLcb(Ctx(std::nullopt), zero), 0.0);
  EXPECT_NEAR(BidLcb(Ctx(std::nullopt), ConstantModel(0.02)), 0.2, 1e-15);
  EXPECT_NEAR(BidLcb(Ctx(5.0), ConstantModel(0.02)), 0.2, 1e-15);
}

TEST_F(BiddingTest, FirstClickBidder) {
  auto zero = LinearConversionModel::Zero(10);
  zero.bias = -800;
  EXPECT_EQ(BidFcb(Ctx(std::nullopt), zero), 0.0);
  EXPECT_NEAR(BidFcb(Ctx(std::nullopt), ConstantModel(0.01)), 0.1, 1e-15);
}

TEST_F(BiddingTest, AttributionBidder) {
  const auto m = ConstantModel(0.02);
  const auto lambda = AttributionModel::WithLambda(kPublicLogLambda);
  EXPECT_EQ(BidAb(Ctx(0.0), m, lambda), 0.0);
  EXPECT_NEAR(BidAb(Ctx(std::nullopt), m, lambda), 0.2, 1e-15);
  EXPECT_NEAR(BidAb(Ctx(kHalfLife), m, lambda), 0.1, 1e-6);
}

TEST_F(BiddingTest, AttributionBidderProperties) {
  const auto m = ConstantModel(0.03);
  const auto lambda = AttributionModel::WithLambda(1e-5);
  double previous = 0.0;
  for (double d = 0; d < 5e6; d = d * 1.3 + 1) {
    const double bid = BidAb(Ctx(d), m, lambda);
    EXPECT_GE(bid, previous);
    EXPECT_TRUE(std::isfinite(bid));
    previous = bid;
  }
  EXPECT_LE(previous, BidAb(Ctx(std::nullopt), m, lambda));
  const auto flat = AttributionModel::WithLambda(0);
  for (double d : {0.0, 1.0, 1e9}) EXPECT_EQ(BidAb(Ctx(d), m, flat), 0.0);
  EXPECT_EQ(BidAb(Ctx(std::nullopt), m, flat), BidLcb(Ctx(std::nullopt), m));
}

TEST_F(BiddingTest, PositiveHomogeneityInCpa) {
  const auto m = ConstantModel(0.03);
  const auto lambda = AttributionModel::WithLambda(1e-5);
  for (double s : {0.5, 3.0, 1e3}) {
    for (auto d : {std::optional<double>{}, std::optional<double>{4000.0}}) {
      EXPECT_NEAR(BidAb(Ctx(d, 10 * s), m, lambda), s * BidAb(Ctx(d, 10), m, lambda), 1e-12 * s);
      EXPECT_NEAR(BidLcb(Ctx(d, 10 * s), m), s * BidLcb(Ctx(d, 10), m), 1e-12 * s);
    }
  }
}

TEST(ApplyMultiplierPolicy, Examples) {
  const auto lambda = AttributionModel::WithLambda(kPublicLogLambda);
  EXPECT_EQ(ApplyMultiplierPolicy(3.0, lambda, 100.0, 1.5, 0.0), 4.5);
  EXPECT_EQ(ApplyMultiplierPolicy(3.0, lambda, 0.0, 1.0, 1.0), 0.0);
  EXPECT_NEAR(ApplyMultiplierPolicy(1.0, lambda, kHalfLife, 2.0, 1.0), 1.0, 1e-5);
  EXPECT_EQ(ApplyMultiplierPolicy(3.0, lambda, std::nullopt, 2.0, 0.7), 6.0);
}

TEST(ApplyMultiplierPolicy, UnitMultipliersEqualMarginalContribution) {
  const auto lambda = AttributionModel::WithLambda(1e-5);
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const double ref = rng.Uniform() * 5;
    const double d = rng.Uniform() * 1e6;
    EXPECT_EQ(ApplyMultiplierPolicy(ref, lambda, d, 1.0, 1.0),
              ref * (1.0 - std::exp(-lambda.lambda * d)));
    EXPECT_NEAR(ApplyMultiplierPolicy(ref, lambda, d, 1.0, 1.0),
                ref * MarginalContribution(lambda, d), 1e-15 * ref);
  }
}

TEST(ApplyMultiplierPolicy, Errors) {
  const auto lambda = AttributionModel::WithLambda(1e-5);
  EXPECT_THROW(ApplyMultiplierPolicy(1, lambda, 1.0, 0.0, 0.5), DomainError);
  EXPECT_THROW(ApplyMultiplierPolicy(1, lambda, 1.0, 1.0, 1.5), DomainError);
  EXPECT_THROW(ApplyMultiplierPolicy(1, lambda, -1.0, 1.0, 0.5), DomainError);
}

TEST(BidderSpec, ValidateAndPlace) {
  BidderSpec spec;
  spec.kind = BidderKind::kAB;
  spec.conversion_model = ConstantModel(0.02);
  EXPECT_THROW(spec.Validate(), DomainError);
  spec.attribution_model = AttributionModel::WithLambda(kPublicLogLambda);
  EXPECT_NO_THROW(spec.Validate());
  const auto x = HashFeatures({}, 10);
  EXPECT_NEAR(PlaceBid(spec, {&x, kHalfLife, 10}), 0.1, 1e-6);
  spec.kind = BidderKind::kLCB;
  EXPECT_THROW(spec.Validate(), DomainError);
  spec.kind = BidderKind::kMultiplierPolicy;
  spec.a = 2.0;
  EXPECT_NEAR(PlaceBid(spec, {&x, kHalfLife, 10}), 0.2, 1e-6);
}

TEST(BidderKind, NamesRoundTrip) {
  for (auto k : {BidderKind::kLCB, BidderKind::kFCB, BidderKind::kAB, BidderKind::kMultiplierPolicy}) {
    EXPECT_EQ(BidderKindFromString(ToString(k)), k);
  }
  EXPECT_THROW(BidderKindFromString("XYZ"), Error);
  EXPECT_EQ(DefaultScheme(BidderKind::kFCB), SchemeKind::kFirstClick);
  EXPECT_EQ(DefaultScheme(BidderKind::kAB), SchemeKind::kAllClicks);
  EXPECT_EQ(DefaultScheme(BidderKind::kLCB), SchemeKind::kLastClick);
}

TEST(ComputeBidProfile, BucketsAndNoClickLevel) {
  const std::vector<std::optional<double>> d = {std::nullopt, 10.0, 20.0, 3700.0, 90000.0};
  const std::vector<double> bids = {5, 1, 3, 7, 100};
  const auto p = ComputeBidProfile(d, bids, 3600, 86400);
  ASSERT_EQ(p.buckets.size(), 2u);
  EXPECT_EQ(p.buckets[0].mean_bid, 2.0);
  EXPECT_EQ(p.buckets[0].count, 2u);
  EXPECT_EQ(p.buckets[1].lower, 3600.0);
  EXPECT_EQ(p.no_prior_click_mean, 5.0);
  EXPECT_EQ(p.no_prior_click_count, 1u);
  EXPECT_THROW(ComputeBidProfile(d, std::vector<double>{1.0}, 3600, 86400), DomainError);
}

TEST(ComputeBidProfile, AttributionBidderRisesUnderConstantPrediction) {
  auto config = SyntheticWorldConfig::Default();
  config.n_users = 300;
  config.horizon = 10 * kSecondsPerDay;
  config.impression_rate = 30.0 / kSecondsPerDay;
  const auto records = GenerateSyntheticLog(config);
  BidderSpec spec;
  spec.kind = BidderKind::kAB;
  spec.conversion_model = ConstantModel(0.05, 12);
  spec.attribution_model = AttributionModel::WithLambda(1e-5);
  const auto p = ComputeBidProfile(records, BuildTimelines(records), spec, 3600, 86400);
  ASSERT_GT(p.buckets.size(), 20u);
  EXPECT_LT(p.buckets.front().mean_bid, 0.05 * 10 * 0.05);
  for (std::size_t k = 1; k < p.buckets.size(); ++k) {
    EXPECT_GE(p.buckets[k].mean_bid, p.buckets[k - 1].mean_bid);
  }
  EXPECT_NEAR(p.no_prior_click_mean, 0.5, 1e-12);
}

TEST(WriteBidTrace, Layout) {
  std::ostringstream out;
  const std::vector<BidTraceRow> rows = {{3, "AB", 60.0, 0.25, 1.5}, {4, "AB", std::nullopt, 0.5, 2}};
  WriteBidTrace(out, rows);
  EXPECT_EQ(out.str(),
            "record_id\tbidder\tdelta_c\tprediction\tbid\n3\tAB\t60\t0.25\t1.5\n4\tAB\t\t0.5\t2\n");
}

}  // namespace
}  // namespace attrbid

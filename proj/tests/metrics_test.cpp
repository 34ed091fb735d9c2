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

#include "attrbid/metrics.hpp"

#include <gmock/gmock.h>
#include <gtest/gtest.h>

#include <algorithm>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numeric>
#include <set>
#include <vector>

#include "attrbid/synthetic.hpp"
#include "oracles.hpp"

namespace attrbid {
namespace {

using ::testing::DoubleNear;
using ::testing::ElementsAre;

constexpr Seconds kHalfLife = 110904;  // ln 2 / 6.25e-6

ImpressionRecord Display(const std::string& user, Seconds t, double cost = 1.0) {
  ImpressionRecord r;
  r.timestamp = t;
  r.user_id = user;
  r.campaign_id = "c0";
  r.cost = cost;
  r.cpo = 10.0;
  return r;
}

ImpressionRecord Click(const std::string& user, Seconds t, int pos,
                       std::optional<Seconds> conversion, bool attributed) {
  auto r = Display(user, t);
  r.click = true;
  r.click_pos = pos;
  if (conversion) {
    r.conversion = true;
    r.conversion_timestamp = conversion;
    r.attribution = attributed;
  }
  return r;
}

// One display, then three clicks at half-life gaps sharing one attributed
// conversion, then a single-click conversion of a second user.
std::vector<ImpressionRecord> HandLog() {
  const Seconds conv = 2 * kHalfLife + 100;
  return {Display("u", 0),
          Click("u", 1, 1, conv, true),
          Click("u", 1 + kHalfLife, 2, conv, true),
          Click("u", 1 + 2 * kHalfLife, 3, conv, true),
          Click("v", 50, 1, 500, true)};
}

TEST(AttributionWeights, HandExample) {
  const auto log = HandLog();
  const auto timelines = BuildTimelines(log);
  const auto index = BuildConversionIndex(log, timelines);
  const auto model = AttributionModel::WithLambda(6.25e-6);
  EXPECT_THAT(AttributionWeights(AttributionFunction::LastClick(), log, index),
              ElementsAre(0, 0, 0, 1, 1));
  EXPECT_THAT(AttributionWeights(AttributionFunction::Model(model), log, index),
              ElementsAre(0, 1, DoubleNear(0.5, 1e-5), DoubleNear(0.5, 1e-5), 1));
  EXPECT_THAT(AttributionWeights(AttributionFunction::ModelNormalized(model), log, index),
              ElementsAre(0, DoubleNear(0.5, 1e-5), DoubleNear(0.25, 1e-5),
                          DoubleNear(0.25, 1e-5), 1));
  for (std::size_t i = 0; i < log.size(); ++i) {
    EXPECT_EQ(AttributionWeight(AttributionFunction::Model(model), i, log, index),
              AttributionWeights(AttributionFunction::Model(model), log, index)[i]);
  }
}

TEST(AttributionWeights, UnattributedConversionGivesZero) {
  auto log = HandLog();
  for (auto& r : log) r.attribution = false;
  const auto index = BuildConversionIndex(log, BuildTimelines(log));
  const auto model = AttributionModel::WithLambda(1e-5);
  for (const auto& fn : {AttributionFunction::LastClick(), AttributionFunction::Model(model),
                         AttributionFunction::ModelNormalized(model)}) {
    for (double w : AttributionWeights(fn, log, index)) EXPECT_EQ(w, 0.0);
  }
}

TEST(AttributionFunction, NamesAndModelPresence) {
  const auto m = AttributionModel::WithLambda(1e-5);
  EXPECT_EQ(AttributionFunction::LastClick().Name(), "U_LC");
  EXPECT_EQ(AttributionFunction::Model(m).Name(), "U_A*");
  EXPECT_EQ(AttributionFunction::ModelNormalized(m).Name(), "U_A");
  AttributionFunction missing{AttributionFunctionKind::kModel, std::nullopt};
  EXPECT_THROW(missing.AsScheme(), DomainError);
  AttributionFunction stray{AttributionFunctionKind::kLastClick, m};
  EXPECT_THROW(stray.AsScheme(), DomainError);
}

TEST(CostPerturbation, Validation) {
  EXPECT_THROW(CostPerturbation::Finite(0), DomainError);
  EXPECT_THROW(CostPerturbation::Finite(-3), DomainError);
  EXPECT_THROW(CostPerturbation::Finite(kInf), DomainError);
  EXPECT_EQ(CostPerturbation::Finite(1000).Name(), "1000");
  EXPECT_EQ(CostPerturbation::Infinite().Name(), "inf");
}

TEST(EmpiricalUtility, HandExamples) {
  auto eu = [](double a, double v, double c, double bid) {
    const std::vector<double> av{a}, vv{v}, cv{c}, bv{bid};
    return EmpiricalUtility({av, vv, cv, bv});
  };
  EXPECT_DOUBLE_EQ(eu(1, 2, 1, 1.5), 1.0);
  EXPECT_DOUBLE_EQ(eu(0, 2, 1, 1.5), -1.0);
  EXPECT_EQ(eu(1, 2, 1, 1.0), 0.0);  // ties lose
  EXPECT_EQ(eu(1, 2, 1, 0.5), 0.0);
}

TEST(ExpectedUtility, InfiniteBetaMatchesEmpirical) {
  const std::vector<double> a{1}, v{2}, c{1}, bid{1.5};
  EXPECT_DOUBLE_EQ(ExpectedUtility({a, v, c, bid}, CostPerturbation::Infinite()), 1.0);
}

TEST(ExpectedUtility, ZeroBidContributesNothing) {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    EXPECT_EQ(AuctionUtility(rng.Uniform(), 10 * rng.Uniform(), 0.01 + rng.Uniform(), 0.0,
                             CostPerturbation::Finite(1000)),
              0.0);
  }
}

TEST(ExpectedUtility, ClosedFormMatchesQuadrature) {
  Rng rng(11);
  const double beta = 1000;
  for (int i = 0; i < 200; ++i) {
    const double a = rng.Bernoulli(0.3) ? 0.0 : rng.Uniform();
    const double v = 0.02 + 0.3 * rng.Uniform();
    const double cost = std::exp(std::log(0.05) + 0.8 * rng.StandardNormal());
    const double bid = cost * std::exp(0.5 * rng.StandardNormal());
    const double closed = AuctionUtility(a, v, cost, bid, CostPerturbation::Finite(beta));
    const double quad = oracle::QuadratureUtility(a, v, cost, bid, beta);
    const double scale = a * v + (beta * cost + 1) / beta;
    EXPECT_LE(std::abs(closed - quad), 1e-8 * std::abs(quad) + 1e-13 * scale)
        << "a=" << a << " v=" << v << " c=" << cost << " bid=" << bid;
  }
}

TEST(ExpectedUtility, ConvergesToEmpiricalForLargeBeta) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 500;
    std::vector<double> a(n), v(n), c(n), bid(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = rng.Bernoulli(0.5) ? 1.0 : 0.0;
      v[i] = 0.5;
      c[i] = std::exp(std::log(0.05) + 0.8 * rng.StandardNormal());
      // Bids at least 1% away from the cost, i.e. > 50 sd of the perturbed
      // cost at beta = 1e9; nearer ties converge more slowly.
      const double gap = 0.01 + 0.5 * rng.Uniform();
      bid[i] = c[i] * std::exp(rng.Bernoulli(0.5) ? gap : -gap);
    }
    const double finite = ExpectedUtility({a, v, c, bid}, CostPerturbation::Finite(1e9));
    const double inf = ExpectedUtility({a, v, c, bid}, CostPerturbation::Infinite());
    EXPECT_LE(std::abs(finite - inf), 1e-3 * std::abs(inf));
  }
}

TEST(ExpectedUtility, DerivativeInBidIsIntegrand) {
  const double beta = 1000, a = 0.7, v = 0.3, cost = 0.05;
  const double alpha = beta * cost + 1;
  const auto p = CostPerturbation::Finite(beta);
  for (double bid : {0.02, 0.04, 0.05, 0.06, 0.09}) {
    const double h = 1e-6;
    const double fd = (AuctionUtility(a, v, cost, bid + h, p) -
                       AuctionUtility(a, v, cost, bid - h, p)) / (2 * h);
    const double pdf = beta * boost::math::gamma_p_derivative(alpha, beta * bid);
    EXPECT_NEAR(fd, (a * v - bid) * pdf, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

TEST(ExpectedUtility, NonDecreasingInBidBelowValue) {
  const auto p = CostPerturbation::Finite(1000);
  const double a = 1.0, v = 0.2, cost = 0.05;
  double prev = 0.0;
  for (double bid = 0.0; bid <= a * v; bid += 0.002) {
    const double u = AuctionUtility(a, v, cost, bid, p);
    EXPECT_GE(u, prev - 1e-15);
    prev = u;
  }
}

TEST(ExpectedUtility, NonPositiveCostListsRecords) {
  const std::vector<double> a{1, 1, 1}, v{1, 1, 1}, c{0.1, 0.0, -1.0}, bid{1, 1, 1};
  try {
    ExpectedUtility({a, v, c, bid}, CostPerturbation::Finite(1000));
    FAIL() << "expected DomainError";
  } catch (const DomainError& e) {
    EXPECT_THAT(e.what(), ::testing::HasSubstr("1, 2"));
  }
  EXPECT_NO_THROW(ExpectedUtility({a, v, c, bid}, CostPerturbation::Infinite()));
}

TEST(ExpectedUtility, MisalignedColumnsRejected) {
  const std::vector<double> a{1, 1}, v{1}, c{1}, bid{1};
  EXPECT_THROW(ExpectedUtility({a, v, c, bid}, CostPerturbation::Infinite()), DomainError);
}

std::vector<ImpressionRecord> SmallWorld(std::uint64_t seed = 1) {
  auto c = SyntheticWorldConfig::Default();
  c.n_users = 400;
  c.horizon = 10 * kSecondsPerDay;
  c.click_prob = 0.4;
  c.conversion_prob_given_click = 0.3;
  c.rng_seed = seed;
  return GenerateSyntheticLog(c);
}

TEST(AttributionAwareExpectedUtility, LastClickEqualsRawFlags) {
  const auto log = SmallWorld();
  const auto index = BuildConversionIndex(log, BuildTimelines(log));
  const auto values = RecordValues(log);
  std::vector<double> bids(log.size()), costs(log.size());
  Rng rng(9);
  for (std::size_t i = 0; i < log.size(); ++i) {
    bids[i] = 0.08 * rng.Uniform();
    costs[i] = log[i].cost;
  }
  const auto flags = RawAttributionFlags(log);
  const auto lc = AttributionWeights(AttributionFunction::LastClick(), log, index);
  ASSERT_GT(std::accumulate(flags.begin(), flags.end(), 0.0), 10.0);
  EXPECT_EQ(lc, flags);
  for (const auto& p : {CostPerturbation::Finite(1000), CostPerturbation::Infinite()}) {
    EXPECT_EQ(UtilityContributions({lc, values, costs, bids}, p),
              UtilityContributions({flags, values, costs, bids}, p));
    EXPECT_EQ(AttributionAwareExpectedUtility(log, index, AttributionFunction::LastClick(),
                                              values, bids, p),
              ExpectedUtility({flags, values, costs, bids}, p));
  }
}

TEST(AttributionWeights, SumsPerConversion) {
  const auto log = SmallWorld(2);
  const auto index = BuildConversionIndex(log, BuildTimelines(log));
  const auto model = AttributionModel::WithLambda(1e-5);
  const auto raw = AttributionWeights(AttributionFunction::Model(model), log, index);
  const auto norm = AttributionWeights(AttributionFunction::ModelNormalized(model), log, index);
  int checked = 0;
  for (const auto& g : index.groups) {
    if (!g.attributed) continue;
    double s_raw = 0, s_norm = 0;
    for (std::size_t i : g.clicks) {
      s_raw += raw[i];
      s_norm += norm[i];
    }
    EXPECT_NEAR(s_norm, 1.0, 1e-12);
    EXPECT_GT(s_raw, 0.0);
    EXPECT_LE(s_raw, static_cast<double>(g.clicks.size()) + 1e-12);
    ++checked;
  }
  EXPECT_GT(checked, 10);
}

TEST(RecordValues, PrefersConversionValueUnlessConfigured) {
  auto r = Display("u", 0);
  r.conversion_value = 3.5;
  const std::vector<ImpressionRecord> log{r, Display("v", 1)};
  EXPECT_THAT(RecordValues(log), ElementsAre(3.5, 10.0));
  EXPECT_THAT(RecordValues(log, ValueSource::kCpo), ElementsAre(10.0, 10.0));
}

TEST(WinRate, StrictInequality) {
  const std::vector<double> c{1, 1, 1, 1}, b{0.5, 1.0, 1.5, 2.0};
  EXPECT_DOUBLE_EQ(WinRate(c, b), 0.5);
  EXPECT_EQ(WinRate({}, {}), 0.0);
}

TEST(SortedQuantile, LinearInterpolation) {
  const std::vector<double> s{1, 2, 3, 4, 5};
  EXPECT_DOUBLE_EQ(SortedQuantile(s, 0.0), 1.0);
  EXPECT_DOUBLE_EQ(SortedQuantile(s, 0.5), 3.0);
  EXPECT_DOUBLE_EQ(SortedQuantile(s, 0.1), 1.4);
  EXPECT_DOUBLE_EQ(SortedQuantile(s, 1.0), 5.0);
  EXPECT_THROW(SortedQuantile({}, 0.5), DomainError);
}

TEST(BootstrapCi, ConstantContributions) {
  const std::vector<double> x(250, 0.75);
  const Band b = BootstrapCi(x);
  EXPECT_NEAR(b.low, 250 * 0.75, 1e-12);
  EXPECT_NEAR(b.high, 250 * 0.75, 1e-12);
}

TEST(BootstrapCi, DeterministicForSeed) {
  Rng rng(1);
  std::vector<double> x(1000);
  for (auto& v : x) v = rng.StandardNormal();
  const Band a = BootstrapCi(x), b = BootstrapCi(x);
  EXPECT_EQ(a.low, b.low);
  EXPECT_EQ(a.high, b.high);
  BootstrapOptions other;
  other.seed = 43;
  EXPECT_NE(BootstrapCi(x, other).low, a.low);
}

TEST(BootstrapCi, MatchesNormalBand) {
  Rng rng(21);
  const std::size_t n = 10000;
  std::vector<double> x(n);
  for (auto& v : x) v = 1.0 + 2.0 * rng.StandardNormal();
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ss = 0;
  for (double v : x) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1));
  const double half = 1.6448536269514722 * sd * std::sqrt(static_cast<double>(n));
  BootstrapOptions opt;
  opt.n_resamples = 2000;
  const Band b = BootstrapCi(x, opt);
  const double sum = mean * n;
  EXPECT_NEAR(b.high - sum, half, 0.1 * half);
  EXPECT_NEAR(sum - b.low, half, 0.1 * half);
}

TEST(BootstrapCi, PermutationInvariantWithIds) {
  Rng rng(4);
  const std::size_t n = 300;
  std::vector<double> x(n);
  std::vector<std::size_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = rng.Exponential(1.0);
    ids[i] = 1000 + 7 * i;
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.Index(i + 1)]);
  std::vector<double> xp(n), xq(n, 0.0);
  std::vector<std::size_t> idp(n);
  for (std::size_t k = 0; k < n; ++k) {
    xp[k] = x[perm[k]];
    idp[k] = ids[perm[k]];
  }
  const Band a = BootstrapCi(x, ids), b = BootstrapCi(xp, idp);
  EXPECT_EQ(a.low, b.low);
  EXPECT_EQ(a.high, b.high);
  for (std::size_t k = 0; k < n; ++k) xq[k] = 2 * x[perm[k]];
  const Uplift u = UpliftSignificance(xq, xp, idp);
  const Uplift w = UpliftSignificance(
      [&] {
        std::vector<double> d(n);
        for (std::size_t i = 0; i < n; ++i) d[i] = 2 * x[i];
        return d;
      }(),
      x, ids);
  EXPECT_EQ(u.band.low, w.band.low);
  EXPECT_EQ(u.band.high, w.band.high);
}

TEST(BootstrapCi, Errors) {
  EXPECT_THROW(BootstrapCi({}), DomainError);
  const std::vector<double> x{1, 2};
  BootstrapOptions bad;
  bad.n_resamples = 1;
  EXPECT_THROW(BootstrapCi(x, bad), DomainError);
  bad = {};
  bad.quantile = 0.6;
  EXPECT_THROW(BootstrapCi(x, bad), DomainError);
  const std::vector<std::size_t> ids{1};
  EXPECT_THROW(BootstrapCi(x, ids), DomainError);
}

TEST(UpliftSignificance, IdenticalTracesAreNotSignificant) {
  Rng rng(8);
  std::vector<double> x(500);
  for (auto& v : x) v = rng.StandardNormal() + 0.5;
  const Uplift u = UpliftSignificance(x, x);
  EXPECT_EQ(u.uplift, 0.0);
  EXPECT_FALSE(u.significant);
}

TEST(UpliftSignificance, DoubledContributionsGiveOneHundredPercent) {
  Rng rng(8);
  std::vector<double> a(500), b(500);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = rng.Exponential(1.0);
    b[i] = 0.5 * a[i];
  }
  const Uplift u = UpliftSignificance(a, b);
  EXPECT_NEAR(u.uplift, 1.0, 1e-12);
  EXPECT_NEAR(u.band.low, 1.0, 1e-9);
  EXPECT_NEAR(u.band.high, 1.0, 1e-9);
  EXPECT_TRUE(u.significant);
}

TEST(UpliftSignificance, Errors) {
  const std::vector<double> a{1, 2}, zero{0, 0}, short_b{1};
  EXPECT_THROW(UpliftSignificance(a, zero), DomainError);
  EXPECT_THROW(UpliftSignificance(a, short_b), DomainError);
  EXPECT_THROW(UpliftSignificance({}, {}), DomainError);
}

struct SuiteFixture {
  std::vector<ImpressionRecord> log;
  ConversionIndex index;
  std::vector<std::size_t> ids;
  std::vector<double> values;
};

SuiteFixture MakeSuite(std::vector<ImpressionRecord> log) {
  SuiteFixture f;
  f.log = std::move(log);
  f.index = BuildConversionIndex(f.log, BuildTimelines(f.log));
  f.ids.resize(f.log.size());
  std::iota(f.ids.begin(), f.ids.end(), std::size_t{0});
  f.values = RecordValues(f.log);
  return f;
}

TEST(UtilitySuite, NeverWinningBidder) {
  const auto f = MakeSuite(SmallWorld());
  const std::vector<BidderTrace> traces{{"zero", std::vector<double>(f.log.size(), 0.0)}};
  const std::vector<MetricVariant> variants{
      {AttributionFunction::LastClick(), CostPerturbation::Infinite()},
      {AttributionFunction::LastClick(), CostPerturbation::Finite(1000)}};
  const auto result = UtilitySuite(f.log, f.index, f.ids, f.values, traces, variants);
  ASSERT_EQ(result.reports.size(), 2u);
  for (const auto& [key, report] : result.reports) {
    EXPECT_EQ(report.value, 0.0);
    EXPECT_EQ(report.win_rate, 0.0);
    EXPECT_EQ(report.n_auctions, f.log.size());
  }
}

TEST(UtilitySuite, GridAndBandContainsValue) {
  const auto f = MakeSuite(SmallWorld());
  Rng rng(2);
  std::vector<BidderTrace> traces{{"x", {}}, {"y", {}}};
  for (auto& t : traces) {
    t.bids.resize(f.log.size());
    for (auto& b : t.bids) b = 0.1 * rng.Uniform();
  }
  const auto m = AttributionModel::WithLambda(1e-5);
  std::vector<MetricVariant> variants;
  for (const auto& fn : {AttributionFunction::LastClick(), AttributionFunction::Model(m),
                         AttributionFunction::ModelNormalized(m)}) {
    for (const auto& p : {CostPerturbation::Finite(1000), CostPerturbation::Infinite()}) {
      variants.push_back({fn, p});
    }
  }
  const auto result = UtilitySuite(f.log, f.index, f.ids, f.values, traces, variants);
  EXPECT_EQ(result.reports.size(), 12u);
  EXPECT_TRUE(result.reports.contains({"x", "U_A,beta=1000"}));
  EXPECT_TRUE(result.reports.contains({"y", "U_LC,beta=inf"}));
  for (const auto& [key, r] : result.reports) {
    EXPECT_LE(r.ci_low, r.value);
    EXPECT_GE(r.ci_high, r.value);
    EXPECT_GT(r.win_rate, 0.0);
    EXPECT_LT(r.win_rate, 1.0);
  }
  std::vector<BidderTrace> bad{{"short", {1.0}}};
  EXPECT_THROW(UtilitySuite(f.log, f.index, f.ids, f.values, bad, variants), DomainError);
}

TEST(UtilitySuite, SingleClickConversionsMakeUaEqualUlc) {
  auto c = SyntheticWorldConfig::Default();
  c.n_users = 300;
  c.horizon = 10 * kSecondsPerDay;
  c.impression_rate = 0.5 / kSecondsPerDay;
  c.click_prob = 0.3;
  c.conversion_prob_given_click = 0.5;
  auto log = GenerateSyntheticLog(c);
  // Keep users whose conversions each carry a single click.
  const auto full = BuildConversionIndex(log, BuildTimelines(log));
  std::set<std::string> multi;
  for (const auto& g : full.groups) {
    if (g.clicks.size() > 1) multi.insert(log[g.clicks.front()].user_id);
  }
  std::erase_if(log, [&](const ImpressionRecord& r) { return multi.contains(r.user_id); });
  const auto f = MakeSuite(std::move(log));
  ASSERT_GT(std::count_if(f.log.begin(), f.log.end(),
                          [](const ImpressionRecord& r) { return r.attribution; }),
            5);
  std::vector<BidderTrace> traces{{"b", std::vector<double>(f.log.size(), 0.08)}};
  const auto m = AttributionModel::WithLambda(1e-5);
  const std::vector<MetricVariant> variants{
      {AttributionFunction::LastClick(), CostPerturbation::Finite(1000)},
      {AttributionFunction::ModelNormalized(m), CostPerturbation::Finite(1000)}};
  const auto result = UtilitySuite(f.log, f.index, f.ids, f.values, traces, variants);
  EXPECT_EQ(result.reports.at({"b", "U_LC,beta=1000"}).value,
            result.reports.at({"b", "U_A,beta=1000"}).value);
}

TEST(BucketMeans, Buckets) {
  const std::vector<double> x{0, 5, 10, 25, 40}, y{1, 0, 1, 1, 0};
  const Curve c = BucketMeans(x, y, 10, 30);
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[0].lower, 0);
  EXPECT_DOUBLE_EQ(c[0].mean, 0.5);
  EXPECT_EQ(c[0].count, 2u);
  EXPECT_EQ(c[2].lower, 20);
  EXPECT_THROW(BucketMeans(x, y, 0), DomainError);
}

TEST(AttributionRateCurves, NoCompetitorsGivesFlatOne) {
  auto c = SyntheticWorldConfig::Default();
  c.n_users = 300;
  c.horizon = 10 * kSecondsPerDay;
  c.click_prob = 0.4;
  c.conversion_prob_given_click = 0.4;
  c.competitor_click_rate = 0;
  const auto log = GenerateSyntheticLog(c);
  const auto curves = ComputeAttributionRateCurves(log, BuildTimelines(log), 6 * 3600.0);
  ASSERT_FALSE(curves.conversion_attribution.empty());
  for (const auto& p : curves.conversion_attribution) EXPECT_EQ(p.mean, 1.0);
}

TEST(AttributionRateCurves, ConversionCurveFollowsSurvival) {
  auto c = SyntheticWorldConfig::Default();
  c.n_users = 4000;
  c.horizon = 20 * kSecondsPerDay;
  c.impression_rate = 2.0 / kSecondsPerDay;
  c.click_prob = 0.5;
  c.conversion_prob_given_click = 0.5;
  const auto log = GenerateSyntheticLog(c);
  const double width = 6 * 3600.0;
  const auto samples = ExtractAttributionSamples(log, BuildTimelines(log)).samples;
  const Curve curve = ConversionAttributionCurve(samples, width, 3 * kSecondsPerDay);
  ASSERT_GE(curve.size(), 10u);
  for (const auto& p : curve) {
    if (p.count < 100) continue;
    // Mean survival over the bucket, weighted uniformly as an envelope.
    const double hi = std::exp(-c.competitor_click_rate * p.lower);
    const double lo = std::exp(-c.competitor_click_rate * (p.lower + width));
    const double sigma = std::sqrt(lo * (1 - lo) / static_cast<double>(p.count));
    EXPECT_LE(p.mean, hi + 3 * sigma) << "bucket " << p.lower;
    EXPECT_GE(p.mean, lo - 3 * sigma) << "bucket " << p.lower;
  }
}

TEST(AttributionRateCurves, LastClickFallsAndFirstClickRises) {
  auto c = SyntheticWorldConfig::Default();
  c.n_users = 3000;
  c.horizon = 20 * kSecondsPerDay;
  c.impression_rate = 4.0 / kSecondsPerDay;
  c.click_prob = 0.4;
  c.conversion_prob_given_click = 0.3;
  const auto log = GenerateSyntheticLog(c);
  const auto curves =
      ComputeAttributionRateCurves(log, BuildTimelines(log), 12 * 3600.0, 4 * kSecondsPerDay);
  ASSERT_GE(curves.last_click_labels.size(), 6u);
  auto slope = [](const Curve& curve) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
    for (const auto& p : curve) {
      sx += p.lower;
      sy += p.mean;
      sxx += p.lower * p.lower;
      sxy += p.lower * p.mean;
      ++n;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
  };
  EXPECT_LT(slope(curves.last_click_labels), 0.0);
  EXPECT_GT(slope(curves.first_click_labels), 0.0);
  EXPECT_GT(curves.last_click_labels.front().mean, curves.last_click_labels.back().mean);
  EXPECT_LT(curves.first_click_labels.front().mean, curves.first_click_labels.back().mean);
}

}  // namespace
}  // namespace attrbid

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

// Synthetic impression logs with known ground truth. Competitor clicks form a
// Poisson process per (user, campaign), so the probability that a conversion
// is still attributed to the platform delta seconds after its last click is
// exactly exp(-competitor_click_rate * delta).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "attrbid/common.hpp"
#include "attrbid/data_core.hpp"

namespace attrbid {

struct SyntheticWorldConfig {
  std::size_t n_users = 4200;
  Seconds horizon = 30 * kSecondsPerDay;
  Seconds start_timestamp = 0;
  double impression_rate = 8.0 / kSecondsPerDay;  // per user, per second
  double click_prob = 0.2;
  double conversion_prob_given_click = 0.1;
  double conversion_delay_rate = 1.0 / kSecondsPerDay;  // per second
  double competitor_click_rate = 1e-5;                  // per second
  std::map<std::string, double> base_conversion_rate_per_feature;
  std::uint64_t rng_seed = 1;

  std::size_t n_campaigns = 1;
  // Per-campaign overrides of competitor_click_rate; campaign k uses entry k.
  std::vector<double> campaign_competitor_rates;
  // From this day on, every competitor rate is multiplied by
  // competitor_rate_multiplier.
  std::optional<int> competitor_rate_change_day;
  double competitor_rate_multiplier = 1.0;

  double cost_median = 0.05;
  double cost_sigma = 0.8;
  std::vector<double> campaign_cpo = {10.0};  // campaign k uses entry k % size

  int n_user_segments = 4;  // field 1 tokens "u<k>", fixed per user
  int n_publishers = 8;     // field 2 tokens "p<k>", drawn per impression
  bool recency_feature = true;  // field 4: bucketed time since last click
  Seconds attribution_window = kDefaultAttributionWindow;

  static SyntheticWorldConfig Default() {
    SyntheticWorldConfig c;
    c.base_conversion_rate_per_feature = {
        {"u0", 2.0}, {"u1", 1.2}, {"u2", 0.8}, {"u3", 0.4},
        {"p0", 1.6}, {"p1", 1.3}, {"p2", 1.1}, {"p3", 1.0},
        {"p4", 1.0}, {"p5", 0.9}, {"p6", 0.7}, {"p7", 0.5}};
    return c;
  }

  // Empty string when valid.
  std::string Validate() const {
    auto probability = [](double p) { return p >= 0.0 && p <= 1.0; };
    if (!(impression_rate >= 0 && conversion_delay_rate >= 0 && competitor_click_rate >= 0))
      return "rates must be >= 0";
    for (double r : campaign_competitor_rates)
      if (!(r >= 0)) return "campaign competitor rates must be >= 0";
    if (!probability(click_prob) || !probability(conversion_prob_given_click))
      return "probabilities must lie in [0, 1]";
    if (horizon < 0) return "horizon must be >= 0";
    if (n_campaigns < 1) return "n_campaigns must be >= 1";
    if (campaign_cpo.empty()) return "campaign_cpo must not be empty";
    if (!(cost_median > 0) || !(cost_sigma >= 0)) return "cost distribution must be positive";
    if (!(competitor_rate_multiplier >= 0)) return "competitor_rate_multiplier must be >= 0";
    if (n_user_segments < 1 || n_publishers < 1) return "feature vocabularies must be non-empty";
    for (const auto& [token, effect] : base_conversion_rate_per_feature)
      if (!(effect >= 0)) return "feature effect for '" + token + "' must be >= 0";
    return {};
  }
};

inline constexpr int kUserSegmentField = 1;
inline constexpr int kPublisherField = 2;
inline constexpr int kCampaignField = 3;
inline constexpr int kRecencyField = 4;

// Bucket token of the recency feature.
inline std::string RecencyToken(std::optional<Seconds> since_last_click) {
  if (!since_last_click) return "r_none";
  const Seconds d = *since_last_click;
  if (d < 3600) return "r_1h";
  if (d < 6 * 3600) return "r_6h";
  if (d < kSecondsPerDay) return "r_1d";
  if (d < 3 * kSecondsPerDay) return "r_3d";
  if (d < 7 * kSecondsPerDay) return "r_7d";
  return "r_old";
}

namespace internal {

// Poisson arrivals on [begin, end) with a rate that may change once.
inline std::vector<double> CompetitorClicks(Rng& rng, double begin, double end, double rate,
                                            std::optional<double> change_at,
                                            double multiplier) {
  std::vector<double> times;
  auto fill = [&](double from, double to, double r) {
    if (r <= 0 || to <= from) return;
    double t = from + rng.Exponential(r);
    while (t < to) {
      times.push_back(t);
      t += rng.Exponential(r);
    }
  };
  if (change_at && *change_at > begin && *change_at < end) {
    fill(begin, *change_at, rate);
    fill(*change_at, end, rate * multiplier);
  } else if (change_at && *change_at <= begin) {
    fill(begin, end, rate * multiplier);
  } else {
    fill(begin, end, rate);
  }
  return times;
}

}  // namespace internal

// Simulates every user independently from its own derived random stream and
// returns the records sorted by timestamp (ties by user index).
inline std::vector<ImpressionRecord> GenerateSyntheticLog(const SyntheticWorldConfig& config) {
  if (const auto err = config.Validate(); !err.empty()) {
    throw DomainError("synthetic config: " + err);
  }
  const double begin = static_cast<double>(config.start_timestamp);
  const double end = begin + static_cast<double>(config.horizon);
  std::optional<double> change_at;
  if (config.competitor_rate_change_day) {
    change_at = begin + static_cast<double>(*config.competitor_rate_change_day) * kSecondsPerDay;
  }
  auto effect = [&](const std::string& token) {
    const auto it = config.base_conversion_rate_per_feature.find(token);
    return it == config.base_conversion_rate_per_feature.end() ? 1.0 : it->second;
  };

  std::vector<std::pair<std::size_t, ImpressionRecord>> all;
  for (std::size_t u = 0; u < config.n_users; ++u) {
    Rng rng(DeriveSeed(config.rng_seed, u));
    const std::size_t campaign = u % config.n_campaigns;
    const double competitor_rate = campaign < config.campaign_competitor_rates.size()
                                       ? config.campaign_competitor_rates[campaign]
                                       : config.competitor_click_rate;
    const double cpo = config.campaign_cpo[campaign % config.campaign_cpo.size()];
    const std::string user_id = "u" + std::to_string(u);
    const std::string campaign_id = "c" + std::to_string(campaign);
    const std::string segment =
        "u" + std::to_string(rng.Index(static_cast<std::size_t>(config.n_user_segments)));

    struct Impression {
      Seconds t;
      std::string publisher;
      std::optional<Seconds> since_click;
      bool click;
      double cost;
    };
    std::vector<Impression> impressions;
    std::vector<Seconds> clicks;
    std::vector<Seconds> conversions;
    if (config.impression_rate > 0) {
      double t = begin + rng.Exponential(config.impression_rate);
      while (t < end) {
        Impression imp;
        imp.t = static_cast<Seconds>(std::floor(t));
        imp.publisher =
            "p" + std::to_string(rng.Index(static_cast<std::size_t>(config.n_publishers)));
        imp.since_click = TimeSinceLastClick(clicks, imp.t);
        imp.click = rng.Bernoulli(config.click_prob);
        imp.cost = rng.LogNormal(config.cost_median, config.cost_sigma);
        if (imp.click) {
          clicks.push_back(imp.t);
          const double q = std::min(1.0, config.conversion_prob_given_click * effect(segment) *
                                             effect(imp.publisher));
          if (rng.Bernoulli(q) && config.conversion_delay_rate > 0) {
            const double delay =
                std::max(1.0, std::ceil(rng.Exponential(config.conversion_delay_rate)));
            const double conv = static_cast<double>(imp.t) + delay;
            if (conv < end) conversions.push_back(static_cast<Seconds>(conv));
          }
        }
        impressions.push_back(std::move(imp));
        t += rng.Exponential(config.impression_rate);
      }
    }
    const auto competitor = internal::CompetitorClicks(
        rng, begin, end, competitor_rate, change_at, config.competitor_rate_multiplier);

    std::sort(conversions.begin(), conversions.end());
    conversions.erase(std::unique(conversions.begin(), conversions.end()), conversions.end());
    std::vector<bool> attributed(conversions.size(), false);
    for (std::size_t k = 0; k < conversions.size(); ++k) {
      const Seconds conv = conversions[k];
      const auto it = std::upper_bound(clicks.begin(), clicks.end(), conv);
      if (it == clicks.begin()) continue;
      const Seconds last_click = *std::prev(it);
      if (conv - last_click > config.attribution_window) continue;
      const auto c = std::upper_bound(competitor.begin(), competitor.end(),
                                      static_cast<double>(last_click));
      attributed[k] = c == competitor.end() || *c > static_cast<double>(conv);
    }

    std::map<Seconds, int> clicks_in_group;
    for (const auto& imp : impressions) {
      ImpressionRecord r;
      r.timestamp = imp.t;
      r.user_id = user_id;
      r.campaign_id = campaign_id;
      r.cost = imp.cost;
      r.cpo = cpo;
      r.click = imp.click;
      r.features.push_back({kUserSegmentField, segment});
      r.features.push_back({kPublisherField, imp.publisher});
      r.features.push_back({kCampaignField, campaign_id});
      if (config.recency_feature) {
        r.features.push_back({kRecencyField, RecencyToken(imp.since_click)});
      }
      const auto next = std::upper_bound(conversions.begin(), conversions.end(), imp.t);
      if (next != conversions.end() && *next - imp.t <= config.attribution_window) {
        const std::size_t k = static_cast<std::size_t>(next - conversions.begin());
        r.conversion = true;
        r.conversion_timestamp = *next;
        r.conversion_value = cpo;
        r.attribution = attributed[k];
        if (r.click) r.click_pos = clicks_in_group[*next]++;
      }
      all.emplace_back(u, std::move(r));
    }
  }
  std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
    return a.second.timestamp < b.second.timestamp;
  });
  std::vector<ImpressionRecord> records;
  records.reserve(all.size());
  for (auto& entry : all) records.push_back(std::move(entry.second));
  return records;
}

}  // namespace attrbid

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

// Impression log schema, per-(user, campaign) click timelines, attribution
// samples and the sliding train/test split.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "attrbid/common.hpp"

namespace attrbid {

struct Feature {
  int field = 0;
  std::string token;

  bool operator==(const Feature&) const = default;
};

// One logged display.
struct ImpressionRecord {
  Seconds timestamp = 0;
  std::string user_id;
  std::string campaign_id;
  double cost = 0.0;  // price paid: the highest competing bid
  double cpo = 0.0;   // advertiser payment per attributed order
  std::vector<Feature> features;
  bool click = false;
  std::optional<int> click_pos;
  bool conversion = false;
  std::optional<Seconds> conversion_timestamp;
  std::optional<double> conversion_value;
  bool attribution = false;

  bool operator==(const ImpressionRecord&) const = default;
};

// Returns an empty string when the record satisfies the schema invariants,
// otherwise a description of the first violation.
inline std::string ValidateRecord(const ImpressionRecord& r) {
  if (r.timestamp < 0) return "negative timestamp";
  if (!(r.cost >= 0.0)) return "cost must be >= 0";
  if (!(r.cpo >= 0.0)) return "cpo must be >= 0";
  if (r.attribution && !r.conversion) return "attribution=1 requires conversion=1";
  if (r.click_pos) {
    if (*r.click_pos < 0) return "click_pos must be >= 0";
    if (!r.click || !r.conversion)
      return "click_pos requires click=1 and conversion=1";
  }
  if (r.conversion_timestamp.has_value() != r.conversion)
    return "conversion_timestamp must be present iff conversion=1";
  if (r.conversion_timestamp && *r.conversion_timestamp < r.timestamp)
    return "conversion_timestamp precedes timestamp";
  if (r.conversion_value && !(*r.conversion_value >= 0.0))
    return "conversion_value must be >= 0";
  return {};
}

inline std::int64_t DayOf(Seconds t) {
  return t >= 0 ? t / kSecondsPerDay : -((-t + kSecondsPerDay - 1) / kSecondsPerDay);
}

using TimelineKey = std::pair<std::string, std::string>;  // (user, campaign)

struct UserTimeline {
  TimelineKey key;
  // Indices into the record list the timeline was built from, ordered by
  // timestamp with ties kept in input order.
  std::vector<std::size_t> events;
  std::vector<Seconds> click_times;  // ascending
};

using TimelineMap = std::map<TimelineKey, UserTimeline>;

inline TimelineMap BuildTimelines(std::span<const ImpressionRecord> records) {
  TimelineMap timelines;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    TimelineKey key{r.user_id, r.campaign_id};
    auto it = timelines.find(key);
    if (it == timelines.end()) {
      it = timelines.emplace(key, UserTimeline{key, {}, {}}).first;
    }
    it->second.events.push_back(i);
  }
  for (auto& [key, timeline] : timelines) {
    std::stable_sort(timeline.events.begin(), timeline.events.end(),
                     [&](std::size_t a, std::size_t b) {
                       return records[a].timestamp < records[b].timestamp;
                     });
    for (const std::size_t i : timeline.events) {
      if (records[i].click) timeline.click_times.push_back(records[i].timestamp);
    }
  }
  return timelines;
}

// Time since the latest click strictly before `t`.
inline std::optional<Seconds> TimeSinceLastClick(std::span<const Seconds> click_times,
                                                 Seconds t) {
  const auto it = std::lower_bound(click_times.begin(), click_times.end(), t);
  if (it == click_times.begin()) return std::nullopt;
  return t - *std::prev(it);
}

inline std::optional<Seconds> TimeSinceLastClick(const UserTimeline& timeline,
                                                 Seconds t) {
  return TimeSinceLastClick(timeline.click_times, t);
}

// delta_c for every record, looked up in the record's own timeline.
inline std::vector<std::optional<Seconds>> DeltaCForRecords(
    std::span<const ImpressionRecord> records, const TimelineMap& timelines) {
  std::vector<std::optional<Seconds>> out(records.size());
  for (const auto& [key, timeline] : timelines) {
    for (const std::size_t i : timeline.events) {
      out[i] = TimeSinceLastClick(timeline, records[i].timestamp);
    }
  }
  return out;
}

struct AttributionSample {
  double delta = 0.0;  // seconds between last click and conversion, > 0
  bool attributed = false;

  bool operator==(const AttributionSample&) const = default;
};

struct SampleExtraction {
  std::vector<AttributionSample> samples;
  // Parallel to `samples`.
  std::vector<std::string> campaign_ids;
  std::vector<std::int64_t> conversion_days;
  std::size_t conversions = 0;
  std::size_t without_prior_click = 0;
  std::size_t outside_window = 0;
  std::size_t non_positive_delta = 0;  // clock skew: click at the conversion instant
};

// One sample per distinct conversion of each timeline, paired with the last
// platform click at or before the conversion instant. Clicks older than
// `window` cannot hold the attribution and yield no sample.
inline SampleExtraction ExtractAttributionSamples(
    std::span<const ImpressionRecord> records, const TimelineMap& timelines,
    Seconds window = kDefaultAttributionWindow) {
  SampleExtraction out;
  for (const auto& [key, timeline] : timelines) {
    std::map<Seconds, bool> conversions;
    for (const std::size_t i : timeline.events) {
      const auto& r = records[i];
      if (!r.conversion || !r.conversion_timestamp) continue;
      auto [it, inserted] = conversions.emplace(*r.conversion_timestamp, r.attribution);
      if (!inserted) it->second = it->second || r.attribution;
    }
    for (const auto& [conversion_ts, attributed] : conversions) {
      ++out.conversions;
      const auto& clicks = timeline.click_times;
      const auto it = std::upper_bound(clicks.begin(), clicks.end(), conversion_ts);
      if (it == clicks.begin()) {
        ++out.without_prior_click;
        continue;
      }
      const Seconds delta = conversion_ts - *std::prev(it);
      if (delta <= 0) {
        ++out.non_positive_delta;
        continue;
      }
      if (delta > window) {
        ++out.outside_window;
        continue;
      }
      out.samples.push_back({static_cast<double>(delta), attributed});
      out.campaign_ids.push_back(key.second);
      out.conversion_days.push_back(DayOf(conversion_ts));
    }
  }
  return out;
}

struct SplitPair {
  std::int64_t test_day = 0;
  std::int64_t first_train_day = 0;
  std::vector<std::size_t> train;  // record indices, input order
  std::vector<std::size_t> test;
};

// The last `test_days` days of the log are test days; each is paired with
// the `train_days` days immediately before it.
inline std::vector<SplitPair> SlidingSplit(std::span<const ImpressionRecord> records,
                                           int train_days = 21, int test_days = 7) {
  if (train_days < 1 || test_days < 1) {
    throw DomainError("sliding split: train_days and test_days must be >= 1");
  }
  if (records.empty()) {
    throw Error("sliding split: need " + std::to_string(train_days + 1) +
                " days of log, have 0");
  }
  std::int64_t first_day = DayOf(records.front().timestamp);
  std::int64_t last_day = first_day;
  for (const auto& r : records) {
    first_day = std::min(first_day, DayOf(r.timestamp));
    last_day = std::max(last_day, DayOf(r.timestamp));
  }
  const std::int64_t span_days = last_day - first_day + 1;
  if (span_days < train_days + 1) {
    throw Error("sliding split: need " + std::to_string(train_days + 1) +
                " days of log, have " + std::to_string(span_days));
  }
  const std::int64_t n_pairs = std::min<std::int64_t>(test_days, span_days - train_days);
  std::vector<SplitPair> pairs;
  for (std::int64_t k = 0; k < n_pairs; ++k) {
    SplitPair pair;
    pair.test_day = last_day - n_pairs + 1 + k;
    pair.first_train_day = pair.test_day - train_days;
    pairs.push_back(std::move(pair));
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::int64_t day = DayOf(records[i].timestamp);
    for (auto& pair : pairs) {
      if (day == pair.test_day) {
        pair.test.push_back(i);
      } else if (day >= pair.first_train_day && day < pair.test_day) {
        pair.train.push_back(i);
      }
    }
  }
  return pairs;
}

}  // namespace attrbid

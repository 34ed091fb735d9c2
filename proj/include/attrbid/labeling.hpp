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

// Per-click credit under the five attribution schemes, and the conversion
// groups they are applied to.

#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <span>
#include <string>
#include <vector>

#include "attrbid/attribution_model.hpp"
#include "attrbid/common.hpp"
#include "attrbid/data_core.hpp"
#include "attrbid/log_io.hpp"

namespace attrbid {

enum class SchemeKind { kLastClick, kFirstClick, kUniform, kAllClicks, kAttributionModel };

inline const char* ToString(SchemeKind k) {
  switch (k) {
    case SchemeKind::kLastClick: return "LastClick";
    case SchemeKind::kFirstClick: return "FirstClick";
    case SchemeKind::kUniform: return "Uniform";
    case SchemeKind::kAllClicks: return "AllClicks";
    case SchemeKind::kAttributionModel: return "AttributionModelWeights";
  }
  return "";
}

inline SchemeKind SchemeKindFromString(const std::string& s) {
  for (auto k : {SchemeKind::kLastClick, SchemeKind::kFirstClick, SchemeKind::kUniform,
                 SchemeKind::kAllClicks, SchemeKind::kAttributionModel}) {
    if (s == ToString(k)) return k;
  }
  throw Error("unknown attribution scheme '" + s + "'");
}

struct AttributionScheme {
  SchemeKind kind = SchemeKind::kLastClick;
  bool normalized = false;  // AttributionModelWeights only
  std::optional<AttributionModel> model;

  static AttributionScheme Of(SchemeKind kind) { return {kind, false, std::nullopt}; }
  static AttributionScheme ModelWeights(const AttributionModel& model, bool normalized) {
    return {SchemeKind::kAttributionModel, normalized, model};
  }
};

// Credit of each click of one conversion. `click_times` is the time-ordered
// list of the platform clicks preceding the conversion.
inline std::vector<double> LabelConversionClicks(std::span<const Seconds> click_times,
                                                 const AttributionScheme& scheme) {
  if (click_times.empty()) throw DomainError("label conversion clicks: empty click list");
  for (std::size_t j = 1; j < click_times.size(); ++j) {
    if (click_times[j] < click_times[j - 1]) {
      throw DomainError("label conversion clicks: clicks are not time-ordered");
    }
  }
  if (scheme.model.has_value() != (scheme.kind == SchemeKind::kAttributionModel)) {
    throw DomainError("label conversion clicks: a model is required by, and only by, "
                      "AttributionModelWeights");
  }
  const std::size_t k = click_times.size();
  std::vector<double> w(k, 0.0);
  switch (scheme.kind) {
    case SchemeKind::kLastClick: w.back() = 1.0; break;
    case SchemeKind::kFirstClick: w.front() = 1.0; break;
    case SchemeKind::kUniform: std::fill(w.begin(), w.end(), 1.0 / static_cast<double>(k)); break;
    case SchemeKind::kAllClicks: std::fill(w.begin(), w.end(), 1.0); break;
    case SchemeKind::kAttributionModel: {
      // First click has no predecessor: full marginal contribution.
      w[0] = 1.0;
      for (std::size_t j = 1; j < k; ++j) {
        w[j] = MarginalContribution(*scheme.model,
                                    static_cast<double>(click_times[j] - click_times[j - 1]));
      }
      if (scheme.normalized) {
        double total = 0.0;
        for (double x : w) total += x;
        for (double& x : w) x /= total;
      }
      break;
    }
  }
  return w;
}

// Clicked records sharing one conversion of one timeline.
struct ConversionGroup {
  Seconds conversion_timestamp = 0;
  bool attributed = false;
  std::vector<std::size_t> clicks;  // record indices, time-ordered
  std::vector<Seconds> click_times;
};

struct ConversionIndex {
  std::vector<ConversionGroup> groups;
  std::vector<std::int64_t> group_of_record;  // -1 when the record is in no group
  std::vector<int> position_of_record;
};

// A clicked record belongs to the conversion named by its own
// conversion_timestamp, provided that conversion lies within `window`.
inline ConversionIndex BuildConversionIndex(std::span<const ImpressionRecord> records,
                                            const TimelineMap& timelines,
                                            Seconds window = kDefaultAttributionWindow) {
  ConversionIndex index;
  index.group_of_record.assign(records.size(), -1);
  index.position_of_record.assign(records.size(), -1);
  for (const auto& [key, timeline] : timelines) {
    std::map<Seconds, std::size_t> by_conversion;
    for (const std::size_t i : timeline.events) {
      const auto& r = records[i];
      if (!r.click || !r.conversion || !r.conversion_timestamp) continue;
      if (*r.conversion_timestamp - r.timestamp > window) continue;
      auto [it, inserted] = by_conversion.emplace(*r.conversion_timestamp, index.groups.size());
      if (inserted) {
        index.groups.push_back({*r.conversion_timestamp, false, {}, {}});
      }
      auto& group = index.groups[it->second];
      group.attributed = group.attributed || r.attribution;
      index.group_of_record[i] = static_cast<std::int64_t>(it->second);
      index.position_of_record[i] = static_cast<int>(group.clicks.size());
      group.clicks.push_back(i);
      group.click_times.push_back(r.timestamp);
    }
  }
  return index;
}

struct LabeledClick {
  std::size_t record = 0;
  double weight = 0.0;  // in [0, 1]
  bool label = false;   // weight > 0
};

// Per-record credit under `scheme`: the scheme weight for clicks of
// attributed conversions, 0 for every other record.
inline std::vector<double> SchemeWeights(std::span<const ImpressionRecord> records,
                                         const ConversionIndex& index,
                                         const AttributionScheme& scheme) {
  std::vector<double> weights(records.size(), 0.0);
  for (const auto& group : index.groups) {
    if (!group.attributed) continue;
    const auto w = LabelConversionClicks(group.click_times, scheme);
    for (std::size_t j = 0; j < group.clicks.size(); ++j) weights[group.clicks[j]] = w[j];
  }
  return weights;
}

// One example per clicked record among `subset`.
inline std::vector<LabeledClick> BuildTrainingSet(std::span<const ImpressionRecord> records,
                                                  const ConversionIndex& index,
                                                  const AttributionScheme& scheme,
                                                  std::span<const std::size_t> subset) {
  const auto weights = SchemeWeights(records, index, scheme);
  std::vector<LabeledClick> out;
  for (const std::size_t i : subset) {
    if (!records[i].click) continue;
    out.push_back({i, weights[i], weights[i] > 0});
  }
  return out;
}

inline std::vector<LabeledClick> BuildTrainingSet(std::span<const ImpressionRecord> records,
                                                  const ConversionIndex& index,
                                                  const AttributionScheme& scheme) {
  std::vector<std::size_t> all(records.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return BuildTrainingSet(records, index, scheme, all);
}

// The log format plus weight and label columns.
inline void DumpTrainingSet(std::ostream& out, std::span<const ImpressionRecord> records,
                            std::span<const LabeledClick> examples,
                            const LogSchema& schema = {}) {
  std::vector<ImpressionRecord> rows;
  rows.reserve(examples.size());
  for (const auto& e : examples) rows.push_back(records[e.record]);
  std::ostringstream body;
  WriteLog(body, rows, schema);
  std::istringstream lines(body.str());
  std::string line;
  std::getline(lines, line);
  out << line << schema.delimiter << "weight" << schema.delimiter << "label\n";
  for (const auto& e : examples) {
    std::getline(lines, line);
    out << line << schema.delimiter << FormatDouble(e.weight) << schema.delimiter
        << (e.label ? '1' : '0') << '\n';
  }
}

}  // namespace attrbid

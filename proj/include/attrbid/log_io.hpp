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

// Delimited-text reading and writing of impression logs.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "attrbid/common.hpp"
#include "attrbid/data_core.hpp"

namespace attrbid {

// Maps logical record fields onto column names of a delimited file.
struct LogSchema {
  char delimiter = '\t';
  std::map<std::string, std::string> columns = DefaultColumns();
  // Empty: every header column named cat<N> is a feature of field N.
  // Otherwise the listed columns, with field index = list position.
  std::vector<std::string> feature_columns;
  // Cell values that mean "absent" for optional fields.
  std::vector<std::string> null_tokens = {""};
  // Multiplier turning file time units into seconds.
  double time_scale = 1.0;

  static std::map<std::string, std::string> DefaultColumns() {
    return {{"timestamp", "timestamp"},
            {"user_id", "uid"},
            {"campaign_id", "campaign"},
            {"cost", "cost"},
            {"cpo", "cpo"},
            {"click", "click"},
            {"click_pos", "click_pos"},
            {"conversion", "conversion"},
            {"conversion_timestamp", "conversion_timestamp"},
            {"conversion_value", "conversion_value"},
            {"attribution", "attribution"}};
  }

  const std::string& Column(const std::string& field) const {
    const auto it = columns.find(field);
    if (it == columns.end()) throw Error("log schema: no column for field '" + field + "'");
    return it->second;
  }
};

inline constexpr const char* kFieldOrder[] = {
    "timestamp",  "user_id",  "campaign_id",          "cost",
    "cpo",        "click",    "click_pos",            "conversion",
    "conversion_timestamp",   "conversion_value",     "attribution"};

namespace internal {

inline void SplitLine(std::string_view line, char delimiter,
                      std::vector<std::string_view>& cells) {
  cells.clear();
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delimiter, start);
    if (pos == std::string_view::npos) {
      cells.push_back(line.substr(start));
      return;
    }
    cells.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

inline bool FeatureFieldFromName(std::string_view name, int& field) {
  if (name.size() < 4 || name.substr(0, 3) != "cat") return false;
  std::int64_t value = 0;
  if (!ParseInt(name.substr(3), value) || value < 0) return false;
  field = static_cast<int>(value);
  return true;
}

}  // namespace internal

inline std::vector<ImpressionRecord> ParseLog(std::istream& in, const LogSchema& schema = {}) {
  std::string line;
  std::vector<std::string_view> cells;
  if (!std::getline(in, line)) throw ParseError(1, "missing header row");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::string header_line = line;
  internal::SplitLine(header_line, schema.delimiter, cells);
  const std::vector<std::string> header(cells.begin(), cells.end());
  const std::size_t n_columns = header.size();

  auto find_column = [&](const std::string& field) -> int {
    const auto it = schema.columns.find(field);
    if (it == schema.columns.end()) return -1;
    const auto pos = std::find(header.begin(), header.end(), it->second);
    return pos == header.end() ? -1 : static_cast<int>(pos - header.begin());
  };
  std::map<std::string, int> index;
  for (const char* field : kFieldOrder) index[field] = find_column(field);
  for (const char* required : {"timestamp", "user_id", "campaign_id", "cost", "cpo",
                               "click", "conversion", "attribution"}) {
    if (index[required] < 0) {
      throw ParseError(1, "header lacks column '" + schema.Column(required) + "'");
    }
  }
  std::vector<std::pair<int, int>> feature_cols;  // (column, field)
  if (schema.feature_columns.empty()) {
    for (std::size_t c = 0; c < header.size(); ++c) {
      int field = 0;
      if (internal::FeatureFieldFromName(header[c], field)) {
        feature_cols.emplace_back(static_cast<int>(c), field);
      }
    }
    std::stable_sort(feature_cols.begin(), feature_cols.end(),
                     [](auto a, auto b) { return a.second < b.second; });
  } else {
    for (std::size_t f = 0; f < schema.feature_columns.size(); ++f) {
      const auto pos = std::find(header.begin(), header.end(), schema.feature_columns[f]);
      if (pos == header.end()) {
        throw ParseError(1, "header lacks feature column '" + schema.feature_columns[f] + "'");
      }
      feature_cols.emplace_back(static_cast<int>(pos - header.begin()), static_cast<int>(f));
    }
  }

  auto is_null = [&](std::string_view cell) {
    return std::find(schema.null_tokens.begin(), schema.null_tokens.end(), cell) !=
           schema.null_tokens.end();
  };

  std::vector<ImpressionRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    internal::SplitLine(line, schema.delimiter, cells);
    if (cells.size() != n_columns) {
      throw ParseError(line_no, "expected " + std::to_string(n_columns) + " columns, found " +
                                    std::to_string(cells.size()));
    }
    auto cell = [&](const char* field) -> std::string_view {
      const int c = index[field];
      return c < 0 ? std::string_view{} : cells[static_cast<std::size_t>(c)];
    };
    auto bad = [&](const char* field, std::string_view value) {
      return ParseError(line_no, "field '" + std::string(field) + "': cannot parse '" +
                                     std::string(value) + "'");
    };
    auto parse_time = [&](const char* field, std::string_view text) -> Seconds {
      if (schema.time_scale == 1.0) {
        std::int64_t v = 0;
        if (!ParseInt(text, v)) throw bad(field, text);
        return v;
      }
      double v = 0;
      if (!ParseDouble(text, v) || !std::isfinite(v)) throw bad(field, text);
      return static_cast<Seconds>(std::llround(v * schema.time_scale));
    };
    auto parse_money = [&](const char* field, std::string_view text) {
      double v = 0;
      if (!ParseDouble(text, v) || !std::isfinite(v)) throw bad(field, text);
      return v;
    };
    auto parse_bool = [&](const char* field, std::string_view text) {
      if (text == "1") return true;
      if (text == "0") return false;
      throw bad(field, text);
    };
    auto present = [&](const char* field) {
      return index[field] >= 0 && !is_null(cell(field));
    };

    ImpressionRecord r;
    r.timestamp = parse_time("timestamp", cell("timestamp"));
    r.user_id = std::string(cell("user_id"));
    r.campaign_id = std::string(cell("campaign_id"));
    r.cost = parse_money("cost", cell("cost"));
    r.cpo = parse_money("cpo", cell("cpo"));
    r.click = parse_bool("click", cell("click"));
    r.conversion = parse_bool("conversion", cell("conversion"));
    r.attribution = parse_bool("attribution", cell("attribution"));
    if (present("click_pos")) {
      std::int64_t v = 0;
      if (!ParseInt(cell("click_pos"), v)) throw bad("click_pos", cell("click_pos"));
      r.click_pos = static_cast<int>(v);
    }
    if (present("conversion_timestamp")) {
      r.conversion_timestamp = parse_time("conversion_timestamp", cell("conversion_timestamp"));
    }
    if (present("conversion_value")) {
      r.conversion_value = parse_money("conversion_value", cell("conversion_value"));
    }
    for (const auto& [column, field] : feature_cols) {
      const std::string_view token = cells[static_cast<std::size_t>(column)];
      if (!is_null(token)) r.features.push_back({field, std::string(token)});
    }
    if (const std::string violation = ValidateRecord(r); !violation.empty()) {
      throw SchemaError(line_no, violation);
    }
    records.push_back(std::move(r));
  }
  return records;
}

inline std::vector<ImpressionRecord> LoadLog(const std::string& path,
                                             const LogSchema& schema = {}) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open log '" + path + "'");
  return ParseLog(in, schema);
}

// Writes records with a header row. Feature field f goes to column cat<f>;
// a record holds at most one token per field.
inline void WriteLog(std::ostream& out, std::span<const ImpressionRecord> records,
                     const LogSchema& schema = {}) {
  int max_field = -1;
  for (const auto& r : records) {
    for (const auto& f : r.features) max_field = std::max(max_field, f.field);
  }
  const char d = schema.delimiter;
  bool first = true;
  for (const char* field : kFieldOrder) {
    if (!first) out << d;
    out << schema.Column(field);
    first = false;
  }
  for (int f = 0; f <= max_field; ++f) out << d << "cat" << f;
  out << '\n';

  std::vector<const std::string*> tokens(static_cast<std::size_t>(max_field + 1));
  for (const auto& r : records) {
    out << r.timestamp << d << r.user_id << d << r.campaign_id << d << FormatDouble(r.cost)
        << d << FormatDouble(r.cpo) << d << (r.click ? '1' : '0') << d;
    if (r.click_pos) out << *r.click_pos;
    out << d << (r.conversion ? '1' : '0') << d;
    if (r.conversion_timestamp) out << *r.conversion_timestamp;
    out << d;
    if (r.conversion_value) out << FormatDouble(*r.conversion_value);
    out << d << (r.attribution ? '1' : '0');
    std::fill(tokens.begin(), tokens.end(), nullptr);
    for (const auto& f : r.features) tokens[static_cast<std::size_t>(f.field)] = &f.token;
    for (const auto* token : tokens) {
      out << d;
      if (token) out << *token;
    }
    out << '\n';
  }
}

inline void WriteLogFile(const std::string& path, std::span<const ImpressionRecord> records,
                         const LogSchema& schema = {}) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write log '" + path + "'");
  WriteLog(out, records, schema);
  if (!out) throw Error("write failed for '" + path + "'");
}

}  // namespace attrbid

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

// End-to-end pipeline behind the command line: synthesize or load a log,
// fit the attribution model, train, calibrate, replay and score bidders.

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "attrbid/attribution_model.hpp"
#include "attrbid/bidding.hpp"
#include "attrbid/common.hpp"
#include "attrbid/conversion_model.hpp"
#include "attrbid/data_core.hpp"
#include "attrbid/labeling.hpp"
#include "attrbid/log_io.hpp"
#include "attrbid/metrics.hpp"
#include "attrbid/synthetic.hpp"

namespace attrbid {

inline constexpr const char* kVersion = "attrbid 0.1.0";

// Error tagged with the pipeline stage that raised it.
class StageError : public Error {
 public:
  StageError(const std::string& stage, const std::string& what)
      : Error(stage + ": " + what), stage_(stage) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

template <typename F>
auto RunStage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

struct BidderConfig {
  BidderKind kind = BidderKind::kLCB;
  SchemeKind scheme = SchemeKind::kLastClick;
  double b = 1.0;  // MultiplierPolicy only; A is set by spend equalization
};

struct ExperimentConfig {
  std::optional<std::string> input;  // log path; synthetic world when absent
  LogSchema schema;
  SyntheticWorldConfig synthetic = SyntheticWorldConfig::Default();
  int train_days = 21;
  int test_days = 7;
  Seconds attribution_window = kDefaultAttributionWindow;
  LambdaFitOptions lambda_fit;
  std::optional<std::string> attribution_model_path;
  std::size_t min_samples_per_advertiser = 100;
  double stability_z = 4.0;
  std::vector<BidderConfig> bidders;
  int hash_bits = kDefaultHashBits;
  TrainOptions train;
  std::vector<AttributionFunctionKind> attribution_functions;
  std::vector<double> betas;  // kInf for the unperturbed variant
  ValueSource value_source = ValueSource::kConversionValueOrCpo;
  BootstrapOptions bootstrap;
  double curve_bucket_width = 3600;
  double curve_horizon = kSecondsPerDay;
  double attribution_curve_bucket_width = 6 * 3600;
  std::string output_dir = "attrbid_out";
  bool write_traces = true;
  nlohmann::json source;  // the document this config was read from

  void Validate() const {
    if (bidders.empty()) throw Error("config: at least one bidder is required");
    if (attribution_functions.empty() || betas.empty()) {
      throw Error("config: at least one metric variant is required");
    }
    for (double b : betas) {
      if (!(b > 0)) throw Error("config: betas must be > 0 or \"inf\"");
    }
    bootstrap.Validate();
  }
};

inline AttributionFunctionKind AttributionFunctionKindFromString(const std::string& s) {
  if (s == "U_LC" || s == "LastClick") return AttributionFunctionKind::kLastClick;
  if (s == "U_A*" || s == "Model") return AttributionFunctionKind::kModel;
  if (s == "U_A" || s == "ModelNormalized") return AttributionFunctionKind::kModelNormalized;
  throw Error("unknown attribution function '" + s + "'");
}

inline double BetaFromJson(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "Infinite" || s == "infinity") return kInf;
    double v = 0;
    if (ParseDouble(s, v)) return v;
    throw Error("config: bad beta '" + s + "'");
  }
  return j.get<double>();
}

inline LogSchema LogSchemaFromJson(const nlohmann::json& j) {
  LogSchema s;
  if (j.contains("delimiter")) {
    const auto d = j.at("delimiter").get<std::string>();
    if (d.size() != 1) throw Error("config: delimiter must be one character");
    s.delimiter = d[0];
  }
  if (j.contains("columns")) {
    for (const auto& [field, column] : j.at("columns").items()) {
      s.columns[field] = column.get<std::string>();
    }
  }
  s.feature_columns = j.value("feature_columns", s.feature_columns);
  s.null_tokens = j.value("null_tokens", s.null_tokens);
  s.time_scale = j.value("time_scale", s.time_scale);
  return s;
}

inline SyntheticWorldConfig SyntheticConfigFromJson(const nlohmann::json& j) {
  SyntheticWorldConfig c = SyntheticWorldConfig::Default();
  c.n_users = j.value("n_users", c.n_users);
  c.horizon = j.value("horizon", c.horizon);
  c.start_timestamp = j.value("start_timestamp", c.start_timestamp);
  c.impression_rate = j.value("impression_rate", c.impression_rate);
  c.click_prob = j.value("click_prob", c.click_prob);
  c.conversion_prob_given_click =
      j.value("conversion_prob_given_click", c.conversion_prob_given_click);
  c.conversion_delay_rate = j.value("conversion_delay_rate", c.conversion_delay_rate);
  c.competitor_click_rate = j.value("competitor_click_rate", c.competitor_click_rate);
  if (j.contains("base_conversion_rate_per_feature")) {
    c.base_conversion_rate_per_feature =
        j.at("base_conversion_rate_per_feature").get<std::map<std::string, double>>();
  }
  c.rng_seed = j.value("rng_seed", c.rng_seed);
  c.n_campaigns = j.value("n_campaigns", c.n_campaigns);
  c.campaign_competitor_rates = j.value("campaign_competitor_rates", c.campaign_competitor_rates);
  if (j.contains("competitor_rate_change_day") && !j.at("competitor_rate_change_day").is_null()) {
    c.competitor_rate_change_day = j.at("competitor_rate_change_day").get<int>();
  }
  c.competitor_rate_multiplier = j.value("competitor_rate_multiplier", c.competitor_rate_multiplier);
  c.cost_median = j.value("cost_median", c.cost_median);
  c.cost_sigma = j.value("cost_sigma", c.cost_sigma);
  c.campaign_cpo = j.value("campaign_cpo", c.campaign_cpo);
  c.n_user_segments = j.value("n_user_segments", c.n_user_segments);
  c.n_publishers = j.value("n_publishers", c.n_publishers);
  c.recency_feature = j.value("recency_feature", c.recency_feature);
  c.attribution_window = j.value("attribution_window", c.attribution_window);
  return c;
}

inline ExperimentConfig ExperimentConfigFromJson(const nlohmann::json& j) {
  ExperimentConfig c;
  c.source = j;
  if (j.contains("input") && !j.at("input").is_null()) c.input = j.at("input").get<std::string>();
  if (j.contains("schema")) c.schema = LogSchemaFromJson(j.at("schema"));
  if (j.contains("synthetic")) c.synthetic = SyntheticConfigFromJson(j.at("synthetic"));
  if (j.contains("split")) {
    c.train_days = j.at("split").value("train_days", c.train_days);
    c.test_days = j.at("split").value("test_days", c.test_days);
  }
  if (j.contains("attribution")) {
    const auto& a = j.at("attribution");
    c.attribution_window =
        static_cast<Seconds>(a.value("window_days", 30.0) * static_cast<double>(kSecondsPerDay));
    c.lambda_fit.tolerance = a.value("tolerance", c.lambda_fit.tolerance);
    c.lambda_fit.max_iter = a.value("max_iter", c.lambda_fit.max_iter);
    c.lambda_fit.lambda_min = a.value("lambda_min", c.lambda_fit.lambda_min);
    c.lambda_fit.lambda_max = a.value("lambda_max", c.lambda_fit.lambda_max);
    c.min_samples_per_advertiser =
        a.value("min_samples_per_advertiser", c.min_samples_per_advertiser);
    c.stability_z = a.value("stability_z", c.stability_z);
    if (a.contains("model") && !a.at("model").is_null()) {
      c.attribution_model_path = a.at("model").get<std::string>();
    }
  }
  if (j.contains("bidders")) {
    for (const auto& b : j.at("bidders")) {
      BidderConfig bc;
      bc.kind = BidderKindFromString(b.is_string() ? b.get<std::string>()
                                                   : b.at("kind").get<std::string>());
      bc.scheme = DefaultScheme(bc.kind);
      if (b.is_object()) {
        if (b.contains("scheme")) bc.scheme = SchemeKindFromString(b.at("scheme").get<std::string>());
        bc.b = b.value("B", bc.b);
      }
      c.bidders.push_back(bc);
    }
  } else {
    for (auto k : {BidderKind::kLCB, BidderKind::kFCB, BidderKind::kAB}) {
      c.bidders.push_back({k, DefaultScheme(k), 1.0});
    }
  }
  if (j.contains("model")) {
    const auto& m = j.at("model");
    c.hash_bits = m.value("hash_bits", c.hash_bits);
    c.train.l2 = m.value("l2", c.train.l2);
    c.train.max_iter = m.value("max_iter", c.train.max_iter);
    c.train.tolerance = m.value("tolerance", c.train.tolerance);
  }
  const nlohmann::json metrics = j.value("metrics", nlohmann::json::object());
  for (const auto& f : metrics.value("attribution_functions",
                                     std::vector<std::string>{"U_A", "U_A*", "U_LC"})) {
    c.attribution_functions.push_back(AttributionFunctionKindFromString(f));
  }
  if (metrics.contains("betas")) {
    for (const auto& b : metrics.at("betas")) c.betas.push_back(BetaFromJson(b));
  } else {
    c.betas = {1000.0, kInf};
  }
  const auto value_source = metrics.value("value_source", std::string("conversion_value_or_cpo"));
  if (value_source == "cpo") {
    c.value_source = ValueSource::kCpo;
  } else if (value_source != "conversion_value_or_cpo") {
    throw Error("config: unknown value_source '" + value_source + "'");
  }
  if (j.contains("bootstrap")) {
    const auto& b = j.at("bootstrap");
    c.bootstrap.n_resamples = b.value("n_resamples", c.bootstrap.n_resamples);
    c.bootstrap.quantile = b.value("quantile", c.bootstrap.quantile);
    c.bootstrap.seed = b.value("seed", c.bootstrap.seed);
  }
  if (j.contains("curves")) {
    const auto& cv = j.at("curves");
    c.curve_bucket_width = cv.value("bucket_width", c.curve_bucket_width);
    c.curve_horizon = cv.value("horizon", c.curve_horizon);
    c.attribution_curve_bucket_width =
        cv.value("attribution_bucket_width", c.attribution_curve_bucket_width);
  }
  c.output_dir = j.value("output_dir", c.output_dir);
  c.write_traces = j.value("write_traces", c.write_traces);
  return c;
}

inline ExperimentConfig LoadExperimentConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("config '" + path + "': " + e.what());
  }
  return ExperimentConfigFromJson(j);
}

inline std::uint64_t ConfigHash(const ExperimentConfig& c) { return Fnv1a64(c.source.dump()); }

namespace internal {

inline void WriteTextFile(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

inline std::string HexU64(std::uint64_t v) {
  std::ostringstream s;
  s << std::hex << v;
  return s.str();
}

inline std::string CurveCsv(const Curve& curve, const char* value_name) {
  std::ostringstream s;
  s << "bucket_start_seconds," << value_name << ",count\n";
  for (const auto& p : curve) {
    s << FormatDouble(p.lower) << ',' << FormatDouble(p.mean) << ',' << p.count << '\n';
  }
  return s.str();
}

inline nlohmann::json JsonNumber(double v) {
  if (std::isfinite(v)) return v;
  return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
}

}  // namespace internal

struct SynthSummary {
  std::size_t records = 0;
  std::size_t clicks = 0;
  std::size_t conversions = 0;  // distinct conversions
  std::size_t attributed = 0;   // distinct attributed conversions
};

inline SynthSummary Summarize(std::span<const ImpressionRecord> records) {
  SynthSummary s;
  s.records = records.size();
  std::map<std::tuple<std::string, std::string, Seconds>, bool> conversions;
  for (const auto& r : records) {
    s.clicks += r.click ? 1 : 0;
    if (r.conversion && r.conversion_timestamp) {
      auto& attributed = conversions[{r.user_id, r.campaign_id, *r.conversion_timestamp}];
      attributed = attributed || r.attribution;
    }
  }
  s.conversions = conversions.size();
  for (const auto& [key, attributed] : conversions) s.attributed += attributed ? 1 : 0;
  return s;
}

inline SynthSummary CmdSynth(const SyntheticWorldConfig& config, const std::string& out_path,
                             const LogSchema& schema = {}) {
  const auto records = RunStage("synth", [&] { return GenerateSyntheticLog(config); });
  RunStage("synth/write", [&] {
    if (const auto parent = std::filesystem::path(out_path).parent_path(); !parent.empty()) {
      std::filesystem::create_directories(parent);
    }
    WriteLogFile(out_path, records, schema);
    return 0;
  });
  return Summarize(records);
}

struct FitAttributionOptions {
  LambdaFitOptions fit;
  Seconds window = kDefaultAttributionWindow;
  bool per_advertiser = false;
  std::size_t min_samples = 100;
  bool daily = false;
  double stability_z = 4.0;
};

struct FitAttributionResult {
  AttributionModel model;
  SampleExtraction extraction;
  std::optional<PerAdvertiserFit> per_advertiser;
  std::optional<StabilityReport> stability;
};

inline FitAttributionResult FitAttribution(std::span<const ImpressionRecord> records,
                                           const FitAttributionOptions& options) {
  FitAttributionResult result;
  const auto timelines = BuildTimelines(records);
  result.extraction = ExtractAttributionSamples(records, timelines, options.window);
  if (result.extraction.samples.empty()) {
    throw Error("no attribution samples: the log has no conversion preceded by a click");
  }
  result.model = FitLambda(result.extraction.samples, options.fit);
  Seconds latest = 0;
  for (const auto& r : records) {
    latest = std::max(latest, r.timestamp);
    if (r.conversion_timestamp) latest = std::max(latest, *r.conversion_timestamp);
  }
  result.model.fit_timestamp = latest;
  if (options.per_advertiser) {
    result.per_advertiser = FitPerAdvertiser(result.extraction.samples,
                                             result.extraction.campaign_ids, options.min_samples,
                                             options.fit);
  }
  if (options.daily) {
    result.stability = DailyStability(result.extraction.samples,
                                      result.extraction.conversion_days, options.stability_z,
                                      options.fit);
  }
  return result;
}

// Writes attribution_model.json and, when computed, per_advertiser.tsv and
// daily_stability.tsv under out_dir.
inline FitAttributionResult CmdFitAttribution(const std::string& log_path,
                                              const LogSchema& schema,
                                              const FitAttributionOptions& options,
                                              const std::string& out_dir) {
  const auto records = RunStage("fit-attribution/load", [&] { return LoadLog(log_path, schema); });
  auto result = RunStage("fit-attribution/fit", [&] { return FitAttribution(records, options); });
  RunStage("fit-attribution/write", [&] {
    const std::filesystem::path dir(out_dir);
    auto doc = ToJson(result.model);
    doc["samples_skipped_non_positive_delta"] = result.extraction.non_positive_delta;
    doc["conversions_without_prior_click"] = result.extraction.without_prior_click;
    doc["conversions_outside_window"] = result.extraction.outside_window;
    internal::WriteTextFile(dir / "attribution_model.json", doc.dump(2) + "\n");
    if (result.per_advertiser) {
      std::ostringstream s;
      s << "campaign_id\tlambda\tn_samples\tconverged\tboundary\tratio_to_global\n";
      for (const auto& [campaign, m] : result.per_advertiser->models) {
        s << campaign << '\t' << FormatDouble(m.lambda) << '\t' << m.n_samples << '\t'
          << (m.converged ? 1 : 0) << '\t' << ToString(m.boundary) << '\t'
          << FormatDouble(m.lambda / result.model.lambda) << '\n';
      }
      internal::WriteTextFile(dir / "per_advertiser.tsv", s.str());
    }
    if (result.stability) {
      std::ostringstream s;
      s << "day\tlambda\tn_samples\trelative_deviation\tstandard_error\tflagged\n";
      for (const auto& d : result.stability->days) {
        s << d.day << '\t' << FormatDouble(d.model.lambda) << '\t' << d.model.n_samples << '\t'
          << FormatDouble(d.relative_deviation) << '\t' << FormatDouble(d.standard_error) << '\t'
          << (d.flagged ? 1 : 0) << '\n';
      }
      internal::WriteTextFile(dir / "daily_stability.tsv", s.str());
    }
    return 0;
  });
  return result;
}

struct EvaluationResult {
  std::vector<std::size_t> test_records;  // concatenated over splits
  std::vector<BidderTrace> traces;
  std::map<std::string, std::vector<double>> predictions;
  std::vector<std::optional<double>> test_delta_c;
  SuiteResult suite;
  // Keyed by (bidder, variant); each bidder against the reference bidder.
  std::map<std::pair<std::string, std::string>, Uplift> uplifts;
  std::string reference_bidder;
  AttributionModel evaluation_attribution_model;
  std::map<std::string, BidProfile> bid_profiles;
  AttributionRateCurves curves;
  std::vector<MetricVariant> variants;
  std::size_t n_records = 0;
  std::size_t n_splits = 0;
};

inline std::vector<MetricVariant> BuildVariants(const ExperimentConfig& config,
                                                const AttributionModel& model) {
  std::vector<MetricVariant> variants;
  for (const auto kind : config.attribution_functions) {
    AttributionFunction fn{kind, std::nullopt};
    if (kind != AttributionFunctionKind::kLastClick) fn.model = model;
    for (const double beta : config.betas) {
      variants.push_back({fn, std::isinf(beta) ? CostPerturbation::Infinite()
                                               : CostPerturbation::Finite(beta)});
    }
  }
  return variants;
}

// Runs the evaluation protocol in memory.
inline EvaluationResult Evaluate(const ExperimentConfig& config) {
  config.Validate();
  EvaluationResult out;
  const auto records = RunStage("evaluate/load", [&] {
    return config.input ? LoadLog(*config.input, config.schema)
                        : GenerateSyntheticLog(config.synthetic);
  });
  out.n_records = records.size();
  const auto timelines = BuildTimelines(records);
  const auto index = BuildConversionIndex(records, timelines, config.attribution_window);
  const auto delta_c = DeltaCForRecords(records, timelines);
  const auto values = RecordValues(records, config.value_source);
  const auto extraction = ExtractAttributionSamples(records, timelines, config.attribution_window);

  std::optional<AttributionModel> fixed_model;
  if (config.attribution_model_path) {
    fixed_model = RunStage("evaluate/attribution", [&] {
      std::ifstream in(*config.attribution_model_path);
      if (!in) throw Error("cannot open '" + *config.attribution_model_path + "'");
      return AttributionModelFromJson(nlohmann::json::parse(in));
    });
  }
  out.evaluation_attribution_model = fixed_model ? *fixed_model : RunStage("evaluate/attribution", [&] {
    if (extraction.samples.empty()) throw Error("no attribution samples in the log");
    return FitLambda(extraction.samples, config.lambda_fit);
  });
  out.variants = BuildVariants(config, out.evaluation_attribution_model);

  std::vector<HashedFeatureVector> hashed;
  hashed.reserve(records.size());
  for (const auto& r : records) hashed.push_back(HashFeatures(r.features, config.hash_bits));

  const auto splits = RunStage("evaluate/split", [&] {
    return SlidingSplit(records, config.train_days, config.test_days);
  });
  out.n_splits = splits.size();

  std::size_t reference = 0;
  for (std::size_t k = 0; k < config.bidders.size(); ++k) {
    if (config.bidders[k].kind == BidderKind::kLCB) {
      reference = k;
      break;
    }
  }
  auto bidder_name = [&](std::size_t k) {
    std::string name = ToString(config.bidders[k].kind);
    std::size_t same = 0;
    for (std::size_t m = 0; m < k; ++m) same += config.bidders[m].kind == config.bidders[k].kind;
    return same == 0 ? name : name + "_" + std::to_string(same + 1);
  };
  out.reference_bidder = bidder_name(reference);
  out.traces.resize(config.bidders.size());
  for (std::size_t k = 0; k < config.bidders.size(); ++k) out.traces[k].bidder = bidder_name(k);

  for (std::size_t s = 0; s < splits.size(); ++s) {
    const auto& split = splits[s];
    const std::string tag = "[split " + std::to_string(s) + ", test day " +
                            std::to_string(split.test_day) + "]";
    AttributionModel bid_attribution = fixed_model ? *fixed_model : RunStage("evaluate/attribution" + tag, [&] {
      std::vector<AttributionSample> train_samples;
      for (std::size_t i = 0; i < extraction.samples.size(); ++i) {
        const auto day = extraction.conversion_days[i];
        if (day >= split.first_train_day && day < split.test_day) {
          train_samples.push_back(extraction.samples[i]);
        }
      }
      if (train_samples.empty()) throw Error("no attribution samples in the training window");
      return FitLambda(train_samples, config.lambda_fit);
    });

    std::map<SchemeKind, LinearConversionModel> models;
    for (const auto& bc : config.bidders) {
      if (models.contains(bc.scheme)) continue;
      models[bc.scheme] = RunStage(std::string("evaluate/train ") + ToString(bc.scheme) + tag, [&] {
        const auto labeled =
            BuildTrainingSet(records, index, AttributionScheme::Of(bc.scheme), split.train);
        std::vector<TrainingExample> examples;
        examples.reserve(labeled.size());
        for (const auto& l : labeled) examples.push_back({hashed[l.record], l.weight, l.label});
        return Train(examples, config.train, config.hash_bits);
      });
    }

    const std::size_t n = split.test.size();
    if (n == 0) continue;
    std::vector<BidContext> contexts(n);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = split.test[k];
      std::optional<double> d;
      if (delta_c[i]) d = static_cast<double>(*delta_c[i]);
      contexts[k] = {&hashed[i], d, records[i].cpo};
    }
    std::vector<BidderSpec> specs;
    for (const auto& bc : config.bidders) {
      BidderSpec spec;
      spec.kind = bc.kind;
      spec.conversion_model = models.at(bc.scheme);
      if (bc.kind == BidderKind::kAB || bc.kind == BidderKind::kMultiplierPolicy) {
        spec.attribution_model = bid_attribution;
      }
      spec.b = bc.b;
      spec.Validate();
      specs.push_back(std::move(spec));
    }
    auto total_bid = [&](const BidderSpec& spec) {
      CompensatedSum sum;
      for (const auto& ctx : contexts) sum.Add(PlaceBid(spec, ctx));
      return sum.Value();
    };
    const double reference_total = total_bid(specs[reference]);
    for (std::size_t k = 0; k < specs.size(); ++k) {
      if (k == reference) continue;
      RunStage("evaluate/calibrate " + out.traces[k].bidder + tag, [&] {
        auto& spec = specs[k];
        if (spec.kind == BidderKind::kMultiplierPolicy) {
          spec.a = 1.0;
          const double total = total_bid(spec);
          if (!(total > 0)) throw Error("all bids are zero");
          spec.a = reference_total / total;
        } else {
          const BidFunction bid = [&](const LinearConversionModel& m, std::size_t i) {
            switch (spec.kind) {
              case BidderKind::kAB: return BidAb(contexts[i], m, *spec.attribution_model);
              default: return BidLcb(contexts[i], m);
            }
          };
          spec.conversion_model =
              Calibrate(std::move(spec.conversion_model), bid, n, reference_total);
        }
        return 0;
      });
    }
    for (std::size_t k = 0; k < specs.size(); ++k) {
      auto& trace = out.traces[k];
      auto& preds = out.predictions[trace.bidder];
      for (const auto& ctx : contexts) {
        trace.bids.push_back(PlaceBid(specs[k], ctx));
        preds.push_back(Predict(specs[k].conversion_model, *ctx.features));
      }
    }
    for (std::size_t k = 0; k < n; ++k) {
      out.test_records.push_back(split.test[k]);
      out.test_delta_c.push_back(contexts[k].delta_c);
    }
  }

  out.suite = RunStage("evaluate/score", [&] {
    return UtilitySuite(records, index, out.test_records, values, out.traces, out.variants,
                        config.bootstrap);
  });
  RunStage("evaluate/uplift", [&] {
    for (const auto& trace : out.traces) {
      if (trace.bidder == out.reference_bidder) continue;
      for (const auto& variant : out.variants) {
        const auto& a = out.suite.contributions.at({trace.bidder, variant.Name()});
        const auto& b = out.suite.contributions.at({out.reference_bidder, variant.Name()});
        out.uplifts[{trace.bidder, variant.Name()}] =
            UpliftSignificance(a, b, out.test_records, config.bootstrap);
      }
    }
    return 0;
  });
  for (const auto& trace : out.traces) {
    out.bid_profiles[trace.bidder] = ComputeBidProfile(out.test_delta_c, trace.bids,
                                                       config.curve_bucket_width,
                                                       config.curve_horizon);
  }
  out.curves = RunStage("evaluate/curves", [&] {
    auto curves = ComputeAttributionRateCurves(records, timelines, config.curve_bucket_width,
                                               config.curve_horizon, config.attribution_window);
    curves.conversion_attribution = ConversionAttributionCurve(
        extraction.samples, config.attribution_curve_bucket_width,
        static_cast<double>(config.attribution_window));
    return curves;
  });
  return out;
}

inline nlohmann::json ReportJson(const ExperimentConfig& config, const EvaluationResult& r) {
  nlohmann::json doc;
  doc["reference_bidder"] = r.reference_bidder;
  doc["n_records"] = r.n_records;
  doc["n_test_records"] = r.test_records.size();
  doc["n_splits"] = r.n_splits;
  doc["attribution_model"] = ToJson(r.evaluation_attribution_model);
  doc["bootstrap"] = {{"n_resamples", config.bootstrap.n_resamples},
                      {"quantile", config.bootstrap.quantile},
                      {"seed", config.bootstrap.seed}};
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& trace : r.traces) {
    for (const auto& v : r.variants) {
      const auto& rep = r.suite.reports.at({trace.bidder, v.Name()});
      rows.push_back({{"bidder", trace.bidder},
                      {"metric", v.function.Name()},
                      {"beta", v.perturbation.Name()},
                      {"value", internal::JsonNumber(rep.value)},
                      {"ci_low", internal::JsonNumber(rep.ci_low)},
                      {"ci_high", internal::JsonNumber(rep.ci_high)},
                      {"win_rate", rep.win_rate},
                      {"n", rep.n_auctions}});
    }
  }
  doc["utilities"] = rows;
  nlohmann::json uplift_rows = nlohmann::json::array();
  for (const auto& trace : r.traces) {
    for (const auto& v : r.variants) {
      const auto it = r.uplifts.find({trace.bidder, v.Name()});
      if (it == r.uplifts.end()) continue;
      uplift_rows.push_back({{"bidder", trace.bidder},
                             {"baseline", r.reference_bidder},
                             {"metric", v.function.Name()},
                             {"beta", v.perturbation.Name()},
                             {"uplift", internal::JsonNumber(it->second.uplift)},
                             {"band_low", internal::JsonNumber(it->second.band.low)},
                             {"band_high", internal::JsonNumber(it->second.band.high)},
                             {"significant", it->second.significant}});
    }
  }
  doc["uplifts"] = uplift_rows;
  return doc;
}

// Writes every evaluation artifact under config.output_dir.
inline EvaluationResult CmdEvaluate(const ExperimentConfig& config) {
  auto result = Evaluate(config);
  RunStage("evaluate/write", [&] {
    const std::filesystem::path dir(config.output_dir);
    internal::WriteTextFile(dir / "report.json", ReportJson(config, result).dump(2) + "\n");

    std::ostringstream table2;
    table2 << "bidder\tmetric\tbeta\tvalue\tci_low\tci_high\twin_rate\tn\n";
    for (const auto& trace : result.traces) {
      for (const auto& v : result.variants) {
        const auto& rep = result.suite.reports.at({trace.bidder, v.Name()});
        table2 << trace.bidder << '\t' << v.function.Name() << '\t' << v.perturbation.Name()
               << '\t' << FormatDouble(rep.value) << '\t' << FormatDouble(rep.ci_low) << '\t'
               << FormatDouble(rep.ci_high) << '\t' << FormatDouble(rep.win_rate) << '\t'
               << rep.n_auctions << '\n';
      }
    }
    internal::WriteTextFile(dir / "utility_table.tsv", table2.str());

    std::ostringstream table1;
    table1 << "bidder\tbaseline\tmetric\tbeta\tuplift\tband_low\tband_high\tsignificant\n";
    for (const auto& [key, u] : result.uplifts) {
      const auto& variant = *std::find_if(result.variants.begin(), result.variants.end(),
                                          [&](const auto& v) { return v.Name() == key.second; });
      table1 << key.first << '\t' << result.reference_bidder << '\t'
             << variant.function.Name() << '\t' << variant.perturbation.Name() << '\t'
             << FormatDouble(u.uplift) << '\t' << FormatDouble(u.band.low) << '\t'
             << FormatDouble(u.band.high) << '\t' << (u.significant ? 1 : 0) << '\n';
    }
    internal::WriteTextFile(dir / "uplift_table.tsv", table1.str());

    internal::WriteTextFile(dir / "curves" / "attribution_given_conversion.csv",
                            internal::CurveCsv(result.curves.conversion_attribution,
                                               "attribution_rate"));
    internal::WriteTextFile(dir / "curves" / "label_rate_last_click.csv",
                            internal::CurveCsv(result.curves.last_click_labels, "positive_rate"));
    internal::WriteTextFile(dir / "curves" / "label_rate_first_click.csv",
                            internal::CurveCsv(result.curves.first_click_labels, "positive_rate"));
    for (const auto& [bidder, profile] : result.bid_profiles) {
      std::ostringstream s;
      s << "bucket_start_seconds,mean_bid,count\n";
      s << "none," << FormatDouble(profile.no_prior_click_mean) << ','
        << profile.no_prior_click_count << '\n';
      for (const auto& b : profile.buckets) {
        s << FormatDouble(b.lower) << ',' << FormatDouble(b.mean_bid) << ',' << b.count << '\n';
      }
      internal::WriteTextFile(dir / "curves" / ("bid_profile_" + bidder + ".csv"), s.str());
    }
    if (config.write_traces) {
      for (const auto& trace : result.traces) {
        std::vector<BidTraceRow> rows;
        rows.reserve(trace.bids.size());
        const auto& preds = result.predictions.at(trace.bidder);
        for (std::size_t k = 0; k < trace.bids.size(); ++k) {
          rows.push_back({result.test_records[k], trace.bidder, result.test_delta_c[k], preds[k],
                          trace.bids[k]});
        }
        std::ostringstream s;
        WriteBidTrace(s, rows);
        internal::WriteTextFile(dir / "traces" / (trace.bidder + ".tsv"), s.str());
      }
    }
    nlohmann::json manifest;
    manifest["version"] = kVersion;
    manifest["config_hash"] = internal::HexU64(ConfigHash(config));
    manifest["config"] = config.source;
    manifest["synthetic_seed"] = config.synthetic.rng_seed;
    manifest["bootstrap_seed"] = config.bootstrap.seed;
    manifest["input"] = config.input ? nlohmann::json(*config.input) : nlohmann::json(nullptr);
    internal::WriteTextFile(dir / "manifest.json", manifest.dump(2) + "\n");
    return 0;
  });
  return result;
}

}  // namespace attrbid

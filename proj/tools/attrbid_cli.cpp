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

// attrbid: synth | fit-attribution | evaluate.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "attrbid/attrbid.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::vector<std::string> betas;
  std::vector<std::string> schemes;  // BIDDER=SCHEME
};

void AddCommon(CLI::App* cmd, Overrides& o, bool config_required) {
  cmd->add_option("--config", o.config_path, "experiment config (JSON)")
      ->required(config_required)
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", o.seed, "synthetic world seed");
  cmd->add_option("--out", o.out, "output path or directory");
  cmd->add_option("--beta", o.betas, "cost perturbation; a number or inf (repeatable)");
  cmd->add_option("--scheme", o.schemes, "labeling override BIDDER=SCHEME (repeatable)");
}

attrbid::ExperimentConfig Resolve(const Overrides& o) {
  using namespace attrbid;
  ExperimentConfig c = o.config_path.empty()
                           ? ExperimentConfigFromJson(nlohmann::json::object())
                           : LoadExperimentConfig(o.config_path);
  if (o.seed) {
    c.synthetic.rng_seed = *o.seed;
    c.source["synthetic"]["rng_seed"] = *o.seed;
  }
  if (!o.betas.empty()) {
    c.betas.clear();
    nlohmann::json list = nlohmann::json::array();
    for (const auto& b : o.betas) {
      c.betas.push_back(BetaFromJson(nlohmann::json(b)));
      list.push_back(b);
    }
    c.source["metrics"]["betas"] = list;
  }
  for (const auto& s : o.schemes) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw Error("--scheme expects BIDDER=SCHEME, got '" + s + "'");
    const auto kind = BidderKindFromString(s.substr(0, eq));
    const auto scheme = SchemeKindFromString(s.substr(eq + 1));
    bool matched = false;
    for (auto& b : c.bidders) {
      if (b.kind == kind) {
        b.scheme = scheme;
        matched = true;
      }
    }
    if (!matched) throw Error("--scheme: bidder '" + s.substr(0, eq) + "' is not configured");
    c.source["scheme_overrides"].push_back(s);
  }
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Attribution-aware bidding: synthetic logs, attribution fits, offline replay"};
  app.require_subcommand(1);
  app.set_version_flag("--version", attrbid::kVersion);

  Overrides synth_o, fit_o, eval_o;
  auto* synth = app.add_subcommand("synth", "generate a synthetic impression log");
  AddCommon(synth, synth_o, false);

  auto* fit = app.add_subcommand("fit-attribution", "fit the attribution decay rate");
  AddCommon(fit, fit_o, false);
  std::string log_path;
  bool per_advertiser = false;
  bool daily = false;
  fit->add_option("--log", log_path, "impression log (TSV); defaults to the config input");
  fit->add_flag("--per-advertiser", per_advertiser, "also fit one rate per campaign");
  fit->add_flag("--daily", daily, "also fit one rate per conversion day");

  auto* evaluate = app.add_subcommand("evaluate", "run the sliding-split replay evaluation");
  AddCommon(evaluate, eval_o, true);

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      const auto c = Resolve(synth_o);
      const std::string out = synth_o.out.value_or(c.output_dir + "/synthetic_log.tsv");
      const auto s = attrbid::CmdSynth(c.synthetic, out, c.schema);
      std::cout << "wrote " << out << "\nrecords\t" << s.records << "\nclicks\t" << s.clicks
                << "\nconversions\t" << s.conversions << "\nattributed\t" << s.attributed
                << "\n";
    } else if (fit->parsed()) {
      const auto c = Resolve(fit_o);
      if (log_path.empty()) {
        if (!c.input) throw attrbid::StageError("fit-attribution", "no --log and no config input");
        log_path = *c.input;
      }
      attrbid::FitAttributionOptions options;
      options.fit = c.lambda_fit;
      options.window = c.attribution_window;
      options.per_advertiser = per_advertiser;
      options.min_samples = c.min_samples_per_advertiser;
      options.daily = daily;
      options.stability_z = c.stability_z;
      const std::string out = fit_o.out.value_or(c.output_dir);
      const auto r = attrbid::CmdFitAttribution(log_path, c.schema, options, out);
      std::cout << "lambda\t" << attrbid::FormatDouble(r.model.lambda) << "\nsamples\t"
                << r.model.n_samples << "\nconverged\t" << (r.model.converged ? 1 : 0)
                << "\nboundary\t" << attrbid::ToString(r.model.boundary) << "\n";
      if (r.per_advertiser) {
        std::cout << "advertisers\t" << r.per_advertiser->models.size() << "\nomitted\t"
                  << r.per_advertiser->omitted_groups << "\n";
      }
      if (r.stability) {
        std::cout << "max_daily_relative_deviation\t"
                  << attrbid::FormatDouble(r.stability->max_relative_deviation)
                  << "\nshift_detected\t" << (r.stability->shift_detected ? 1 : 0) << "\n";
      }
    } else if (evaluate->parsed()) {
      auto c = Resolve(eval_o);
      if (eval_o.out) {
        c.output_dir = *eval_o.out;
        c.source["output_dir"] = *eval_o.out;
      }
      const auto r = attrbid::CmdEvaluate(c);
      std::cout << "wrote " << c.output_dir << "\nrecords\t" << r.n_records << "\nsplits\t"
                << r.n_splits << "\ntest_records\t" << r.test_records.size() << "\n";
      for (const auto& [key, u] : r.uplifts) {
        std::cout << key.first << " vs " << r.reference_bidder << '\t' << key.second << '\t'
                  << attrbid::FormatDouble(u.uplift) << (u.significant ? "\tsignificant" : "")
                  << "\n";
      }
    }
  } catch (const attrbid::StageError& e) {
    std::cerr << "error [" << e.stage() << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error [config]: " << e.what() << "\n";
    return 2;
  }
  return EXIT_SUCCESS;
}

#include "cli.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "countfit/errors.hpp"
#include "countfit/estimation.hpp"
#include "countfit/gof.hpp"
#include "countfit/model_data.hpp"
#include "countfit/report.hpp"
#include "countfit/simulate.hpp"

namespace countfit::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
  std::string input;
  std::string spec;
  std::vector<std::string> fits;
  std::string out_dir;
  std::string family;
  std::string schema;
  std::string scenario = "all";
  std::optional<std::uint64_t> seed;
  GofConfig gof;
  OptimizerConfig optimizer;
  bool force = false;
  bool quiet = false;
  bool verbose = false;
};

class Log {
 public:
  Log(std::ostream& err, const Options& o) : err_(err), o_(o) {}
  void info(const std::string& m) const {
    if (!o_.quiet) err_ << m << "\n";
  }
  void detail(const std::string& m) const {
    if (o_.verbose) err_ << m << "\n";
  }
  void error(const std::string& m) const { err_ << "error: " << m << "\n"; }

 private:
  std::ostream& err_;
  const Options& o_;
};

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw ValidationError(std::string(what) + " path is required");
  if (!fs::is_regular_file(path)) throw ValidationError(std::string(what) + " '" + path + "' does not exist");
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("'" + path + "' is not valid JSON: " + e.what());
  }
}

ColumnSchema schema_of(const Options& o) {
  if (o.schema.empty()) return {};
  require_file(o.schema, "schema");
  return ColumnSchema::load(o.schema);
}

std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv("COUNTFIT_SEED");
  if (v == nullptr || *v == '\0') return std::nullopt;
  try {
    std::size_t used = 0;
    const auto s = std::stoull(v, &used);
    if (used != std::string(v).size()) throw std::invalid_argument(v);
    return s;
  } catch (const std::exception&) {
    throw ValidationError(std::string("COUNTFIT_SEED '") + v + "' is not an unsigned integer");
  }
}

struct LoadedFit {
  FitResult fit;
  DesignMatrix design;
};

// A fit file plus the design rebuilt from the dataset it was fitted on.
LoadedFit load_fit(const std::string& path, const std::vector<SectionRecord>& records) {
  require_file(path, "fit");
  LoadedFit out;
  out.fit = fit_result_from_json(read_json(path));
  out.design = build_design(records, out.fit.model_spec);
  if (!out.fit.data_checksum.empty() && out.fit.data_checksum != out.design.data_checksum) {
    throw ValidationError("fit '" + path + "' was estimated on a different dataset (checksum " +
                          out.fit.data_checksum + ", input " + out.design.data_checksum + ")");
  }
  if (out.fit.n_obs != static_cast<long>(out.design.n())) {
    throw ValidationError("fit '" + path + "' has n_obs " + std::to_string(out.fit.n_obs) +
                          " but the input has " + std::to_string(out.design.n()) + " rows");
  }
  return out;
}

int cmd_simulate(const Options& o, const Log& log) {
  if (o.out_dir.empty()) throw ValidationError("--out-dir is required");
  std::vector<SimScenario> scenarios;
  if (o.scenario == "all") {
    for (const auto& [name, s] : default_scenarios()) scenarios.push_back(s);
  } else if (default_scenarios().contains(o.scenario)) {
    scenarios.push_back(find_scenario(o.scenario));
  } else if (fs::is_regular_file(o.scenario)) {
    scenarios.push_back(scenario_from_json(read_json(o.scenario)));
  } else {
    throw NotFoundError("no scenario named '" + o.scenario + "' and no such scenario file");
  }
  const auto seed = o.seed ? o.seed : env_seed();
  for (auto& s : scenarios) {
    if (seed) s.seed = *seed;
    const auto sim = generate(s);
    write_artifacts(o.out_dir, {{s.name + ".csv", dataset_to_csv(sim.records)},
                                {s.name + "_manifest.json", json_text(sim.manifest)},
                                {s.name + "_spec.json", json_text(to_json(s.suggested_spec()))}});
    log.info("simulated " + s.name + ": " + std::to_string(sim.records.size()) + " sections, seed " +
             std::to_string(s.seed));
  }
  return kSuccess;
}

int cmd_fit(const Options& o, const Log& log) {
  require_file(o.input, "input");
  require_file(o.spec, "spec");
  if (o.out_dir.empty()) throw ValidationError("--out-dir is required");
  auto spec = model_spec_from_json(read_json(o.spec));
  if (!o.family.empty()) spec = spec.with_family(family_from_string(o.family));
  spec.validate();
  const auto records = load_dataset(fs::path(o.input), schema_of(o));
  const auto result = fit_model(records, spec, o.optimizer);

  const std::string family(to_string(result.family));
  write_artifacts(o.out_dir, {{family + "_fit.json", json_text(to_json(result))},
                              {family + "_coefficients.csv", coefficients_csv(result)}});
  for (const auto& d : result.diagnostics) log.detail("diagnostic: " + d);
  if (!result.converged) {
    log.error(family + " fit did not converge");
    for (const auto& d : result.diagnostics) log.error("  " + d);
    return kAnalyticFailure;
  }
  log.info(family + " fit converged: LL " + std::to_string(result.log_likelihood) + ", AIC " +
           std::to_string(result.aic));
  return kSuccess;
}

int cmd_gof(const Options& o, const Log& log) {
  require_file(o.input, "input");
  if (o.fits.size() != 1) throw ValidationError("gof takes exactly one --fit");
  if (o.out_dir.empty()) throw ValidationError("--out-dir is required");
  o.gof.validate();
  const auto records = load_dataset(fs::path(o.input), schema_of(o));
  const auto loaded = load_fit(o.fits.front(), records);
  const auto report = run_gof(loaded.fit, loaded.design, o.gof, o.force);
  write_artifacts(o.out_dir, gof_artifacts(report));
  for (const auto& w : report.warnings) log.info("warning: " + w);
  log.info("gof: " + std::to_string(report.bins.size()) + " bins, overflow " +
           std::to_string(report.overflow.size()));
  return kSuccess;
}

int cmd_report(const Options& o, const Log& log) {
  require_file(o.input, "input");
  if (o.fits.size() != 1) throw ValidationError("report takes exactly one --fit");
  if (o.out_dir.empty()) throw ValidationError("--out-dir is required");
  const auto records = load_dataset(fs::path(o.input), schema_of(o));
  const auto loaded = load_fit(o.fits.front(), records);
  const auto artifacts = residual_artifacts(loaded.fit, loaded.design);
  write_artifacts(o.out_dir, artifacts);
  if (loaded.fit.family == Family::ZINB) {
    log.info("deviance residuals are not defined for zinb fits; wrote the observed vs. predicted chart only");
  }
  log.info("report: wrote " + std::to_string(artifacts.size()) + " files");
  return kSuccess;
}

int cmd_compare(const Options& o, const Log& log) {
  require_file(o.input, "input");
  if (o.fits.size() < 2) throw ValidationError("compare needs at least two --fit files");
  if (o.out_dir.empty()) throw ValidationError("--out-dir is required");
  o.gof.validate();
  const auto records = load_dataset(fs::path(o.input), schema_of(o));
  std::vector<ComparedModel> models;
  std::map<std::string, int> seen;
  for (const auto& path : o.fits) {
    auto loaded = load_fit(path, records);
    auto label = fs::path(path).stem().string();
    if (const int k = ++seen[label]; k > 1) label += "#" + std::to_string(k);
    ComparedModel m{label, std::move(loaded.fit), std::move(loaded.design), std::nullopt};
    try {
      m.gof = run_gof(m.fit, m.design, o.gof, o.force);
    } catch (const Error& e) {
      log.info("warning: no goodness of fit for '" + label + "': " + e.what());
    }
    models.push_back(std::move(m));
  }
  const auto artifacts = comparison_artifacts(models);
  write_artifacts(o.out_dir, artifacts);
  const auto j = nlohmann::json::parse(artifacts[1].content);
  for (const auto& v : j.at("vuong")) {
    if (!v.at("error").is_null()) log.info("warning: " + v.at("error").get<std::string>());
  }
  log.info("compare: " + std::to_string(models.size()) + " models, AIC prefers " +
           j.at("preferred_by_aic").get<std::string>());
  return kSuccess;
}

void add_gof_flags(CLI::App* cmd, Options& o) {
  cmd->add_option("--bin-width", o.gof.bin_width, "Width of predicted-mean bins")->check(CLI::PositiveNumber);
  cmd->add_option("--max-binned-mean", o.gof.max_binned_mean, "Predictions at or above go to overflow")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--min-bin-count", o.gof.min_bin_count, "Smallest bin used in the pseudo-R2")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--k-display", o.gof.k_display, "Largest count bucket shown in charts")
      ->check(CLI::PositiveNumber);
  cmd->add_flag("--force", o.force, "Run on a fit that did not converge");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Count regression fitting and binned goodness of fit", "countfit"};
  app.require_subcommand(1);
  app.add_flag("-q,--quiet", o.quiet, "Only print errors");
  app.add_flag("-v,--verbose", o.verbose, "Print fit diagnostics");

  auto* sim = app.add_subcommand("simulate", "Generate synthetic datasets with known parameters");
  sim->add_option("--scenario", o.scenario, "Scenario name, 'all', or a scenario JSON file");
  sim->add_option("--out-dir", o.out_dir, "Output directory")->required();
  sim->add_option("--seed", o.seed, "Seed override (default: COUNTFIT_SEED, then the scenario seed)");

  auto* fit = app.add_subcommand("fit", "Fit a model to a dataset");
  fit->add_option("--input", o.input, "Dataset CSV")->required();
  fit->add_option("--spec", o.spec, "Model spec JSON")->required();
  fit->add_option("--family", o.family, "Override the spec family (nb, zinb, glmm_nb)");
  fit->add_option("--schema", o.schema, "Column mapping file");
  fit->add_option("--out-dir", o.out_dir, "Output directory")->required();
  fit->add_option("--quadrature-points", o.optimizer.quadrature_points, "Quadrature nodes (odd)");

  auto* gof = app.add_subcommand("gof", "Binned goodness of fit for a fitted model");
  gof->add_option("--input", o.input, "Dataset CSV")->required();
  gof->add_option("--fit", o.fits, "Fit result JSON")->required();
  gof->add_option("--schema", o.schema, "Column mapping file");
  gof->add_option("--out-dir", o.out_dir, "Output directory")->required();
  add_gof_flags(gof, o);

  auto* rep = app.add_subcommand("report", "Residual and observed vs. predicted charts");
  rep->add_option("--input", o.input, "Dataset CSV")->required();
  rep->add_option("--fit", o.fits, "Fit result JSON")->required();
  rep->add_option("--schema", o.schema, "Column mapping file");
  rep->add_option("--out-dir", o.out_dir, "Output directory")->required();

  auto* cmp = app.add_subcommand("compare", "Side-by-side statistics and Vuong tests");
  cmp->add_option("--input", o.input, "Dataset CSV")->required();
  cmp->add_option("--fit", o.fits, "Fit result JSON (two or more)")->required();
  cmp->add_option("--schema", o.schema, "Column mapping file");
  cmp->add_option("--out-dir", o.out_dir, "Output directory")->required();
  add_gof_flags(cmp, o);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kSuccess : kInputError;
  }

  const Log log(err, o);
  try {
    o.optimizer.validate();
    if (sim->parsed()) return cmd_simulate(o, log);
    if (fit->parsed()) return cmd_fit(o, log);
    if (gof->parsed()) return cmd_gof(o, log);
    if (rep->parsed()) return cmd_report(o, log);
    if (cmp->parsed()) return cmd_compare(o, log);
  } catch (const NumericalError& e) {
    log.error(e.what());
    return kAnalyticFailure;
  } catch (const EmptyReportError& e) {
    log.error(e.what());
    return kAnalyticFailure;
  } catch (const Error& e) {
    log.error(e.what());
    return kInputError;
  } catch (const nlohmann::json::exception& e) {
    log.error(std::string("malformed JSON input: ") + e.what());
    return kInputError;
  } catch (const std::filesystem::filesystem_error& e) {
    log.error(e.what());
    return kInputError;
  }
  return kInputError;
}

}  // namespace countfit::cli

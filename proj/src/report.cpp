#include "countfit/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "countfit/csv.hpp"
#include "countfit/errors.hpp"
#include "countfit/svg.hpp"

namespace countfit {

namespace fs = std::filesystem;

namespace {

constexpr const char* kObservedColor = "#4c72b0";
constexpr const char* kPredictedColor = "#dd8452";

std::string num(double v) { return csv::format_double(v); }

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : std::string(); }

std::string fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string csv_text(const std::vector<csv::Row>& rows) {
  std::ostringstream out;
  for (const auto& r : rows) csv::write_row(out, r);
  return out.str();
}

void add_chart(std::vector<Artifact>& out, const std::string& stem, std::string csv,
               const std::string& svg_text) {
  out.push_back({stem + ".csv", std::move(csv)});
  out.push_back({stem + ".svg", svg_text});
}

template <class Chart>
void add_chart(std::vector<Artifact>& out, const std::string& stem, Chart chart) {
  const auto csv = chart.data_csv;
  add_chart(out, stem, csv, svg::render(chart));
}

std::string range_label(const GofBin& b) { return num(b.lower) + "-" + num(b.upper); }

}  // namespace

void write_file_atomic(const fs::path& path, std::string_view content) {
  const auto dir = path.parent_path().empty() ? fs::path(".") : path.parent_path();
  fs::create_directories(dir);
  auto tmp = dir / ("." + path.filename().string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write '" + tmp.string() + "'");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw ValidationError("failed writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

std::string json_text(const nlohmann::json& j) { return j.dump(2) + "\n"; }

void write_artifacts(const fs::path& dir, const std::vector<Artifact>& artifacts) {
  for (const auto& a : artifacts) write_file_atomic(dir / a.name, a.content);
}

std::string coefficients_csv(const FitResult& fit) {
  std::vector<csv::Row> rows = {{"part", "name", "estimate", "std_error", "z", "p_value"}};
  for (const auto& c : fit.count_coefficients) {
    rows.push_back({"count", c.name, num(c.estimate), num(c.std_error), num(c.z), num(c.p_value)});
  }
  for (const auto& c : fit.zero_coefficients) {
    rows.push_back({"zero", c.name, num(c.estimate), num(c.std_error), num(c.z), num(c.p_value)});
  }
  rows.push_back({"dispersion", "theta", num(fit.theta), num(fit.theta_std_error), "", ""});
  if (fit.family == Family::GLMM_NB) {
    rows.push_back({"random", "random_intercept_sd", num(fit.random_intercept_sd),
                    num(fit.random_intercept_sd_std_error), "", ""});
  }
  rows.push_back({"statistic", "log_likelihood", num(fit.log_likelihood), "", "", ""});
  rows.push_back({"statistic", "aic", num(fit.aic), "", "", ""});
  rows.push_back({"statistic", "bic", num(fit.bic), "", "", ""});
  return csv_text(rows);
}

std::vector<Artifact> gof_artifacts(const GofReport& report) {
  std::vector<Artifact> out;
  out.push_back({"gof_report.json", json_text(to_json(report))});
  out.push_back({"gof_bins.csv", bins_csv(report)});

  const auto labels = display_labels(report.config.k_display);
  const std::string family(to_string(report.family));

  for (std::size_t b = 0; b < report.bins.size(); ++b) {
    const auto& bin = report.bins[b];
    const auto obs = display_buckets(bin.observed_pmf, report.config.k_display);
    const auto pred = display_buckets(bin.predicted_pmf, report.config.k_display);
    std::vector<csv::Row> rows = {{"crashes", "observed", "predicted"}};
    for (std::size_t k = 0; k < labels.size(); ++k) rows.push_back({labels[k], num(obs[k]), num(pred[k])});

    svg::BarChart chart;
    chart.title = "Predicted mean " + range_label(bin) + " (" + family + ")";
    chart.x_label = "Crashes per section";
    chart.y_label = "Proportion of sections";
    chart.categories = labels;
    chart.groups = {{"Observed", {}, obs, kObservedColor}, {"Predicted", {}, pred, kPredictedColor}};
    chart.annotations = {"Sections: " + std::to_string(bin.n_sections),
                         "Crashes: " + std::to_string(bin.total_observed_crashes)};
    chart.data_csv = csv_text(rows);
    char stem[96];
    std::snprintf(stem, sizeof stem, "gof_bin_%02zu_%s", b + 1, range_label(bin).c_str());
    add_chart(out, stem, chart);
  }

  {
    const auto obs = display_buckets(report.pooled_observed, report.config.k_display);
    const auto pred = display_buckets(report.pooled_predicted, report.config.k_display);
    std::vector<csv::Row> rows = {{"crashes", "observed", "predicted"}};
    for (std::size_t k = 0; k < labels.size(); ++k) rows.push_back({labels[k], num(obs[k]), num(pred[k])});
    long sections = 0;
    for (const auto& b : report.bins) sections += b.n_sections;
    svg::BarChart chart;
    chart.title = "Pooled distribution over all bins (" + family + ")";
    chart.x_label = "Crashes per section";
    chart.y_label = "Proportion of sections";
    chart.categories = labels;
    chart.groups = {{"Observed", {}, obs, kObservedColor}, {"Predicted", {}, pred, kPredictedColor}};
    chart.annotations = {"Sections: " + std::to_string(sections)};
    chart.data_csv = csv_text(rows);
    add_chart(out, "gof_pooled", chart);
  }

  {
    std::vector<csv::Row> rows = {{"midpoint", "n_sections", "observed_mean", "predicted_mean"}};
    svg::Series s{"Bins", {}, {}, kObservedColor};
    for (const auto& b : report.bins) {
      rows.push_back({num(b.midpoint), std::to_string(b.n_sections), num(b.observed_mean),
                      num(b.predicted_mean)});
      s.x.push_back(b.predicted_mean);
      s.y.push_back(b.observed_mean);
    }
    svg::ScatterChart chart;
    chart.title = "Observed vs. predicted bin means (" + family + ")";
    chart.x_label = "Predicted mean P_i";
    chart.y_label = "Observed mean O_i";
    chart.series = {s};
    chart.identity_line = true;
    chart.annotations = {
        "Weighted R2 = " + (report.pseudo_r2_weighted ? fixed(*report.pseudo_r2_weighted, 3) : "undefined"),
        "Unweighted R2 = " +
            (report.pseudo_r2_unweighted ? fixed(*report.pseudo_r2_unweighted, 3) : "undefined")};
    chart.data_csv = csv_text(rows);
    add_chart(out, "gof_bin_means", chart);
  }
  return out;
}

std::vector<Artifact> residual_artifacts(const FitResult& fit, const DesignMatrix& design) {
  std::vector<Artifact> out;
  const Eigen::VectorXd eta = linear_predictor(fit, design);
  const Eigen::VectorXd mu = predict_mean(fit, design);
  const std::string family(to_string(fit.family));

  if (fit.family != Family::ZINB) {
    const Eigen::VectorXd d = deviance_residuals(fit, design);
    std::vector<csv::Row> rows = {{"index", "linear_predictor", "fitted_mean", "deviance_residual"}};
    svg::Series s{"Sections", {}, {}, kObservedColor};
    for (Eigen::Index i = 0; i < design.n(); ++i) {
      rows.push_back({std::to_string(i), num(eta[i]), num(mu[i]), num(d[i])});
      s.x.push_back(mu[i]);
      s.y.push_back(d[i]);
    }
    svg::ScatterChart chart;
    chart.title = "Deviance residuals (" + family + ")";
    chart.x_label = "Fitted mean";
    chart.y_label = "Deviance residual";
    chart.series = {s};
    chart.data_csv = csv_text(rows);
    add_chart(out, "deviance_residuals", chart);
  }

  std::vector<csv::Row> rows = {{"index", "predicted_mean", "observed"}};
  svg::Series s{"Sections", {}, {}, kObservedColor};
  for (Eigen::Index i = 0; i < design.n(); ++i) {
    const auto y = design.y[static_cast<std::size_t>(i)];
    rows.push_back({std::to_string(i), num(mu[i]), std::to_string(y)});
    s.x.push_back(mu[i]);
    s.y.push_back(static_cast<double>(y));
  }
  svg::ScatterChart chart;
  chart.title = "Observed crashes vs. predicted mean (" + family + ")";
  chart.x_label = "Predicted mean";
  chart.y_label = "Observed crashes";
  chart.series = {s};
  chart.identity_line = true;
  chart.data_csv = csv_text(rows);
  add_chart(out, "observed_vs_predicted", chart);
  return out;
}

std::vector<Artifact> comparison_artifacts(const std::vector<ComparedModel>& models) {
  std::vector<csv::Row> rows = {{"model", "family", "n_obs", "n_params", "log_likelihood", "aic", "bic",
                                 "theta", "random_intercept_sd", "pseudo_r2_weighted",
                                 "pseudo_r2_unweighted", "converged"}};
  nlohmann::json j;
  j["schema_version"] = 1;
  auto jm = nlohmann::json::array();
  std::size_t best = 0;
  for (std::size_t m = 0; m < models.size(); ++m) {
    const auto& f = models[m].fit;
    if (f.aic < models[best].fit.aic) best = m;
    std::optional<double> rw;
    std::optional<double> ru;
    if (models[m].gof) {
      rw = models[m].gof->pseudo_r2_weighted;
      ru = models[m].gof->pseudo_r2_unweighted;
    }
    const bool glmm = f.family == Family::GLMM_NB;
    rows.push_back({models[m].label, std::string(to_string(f.family)), std::to_string(f.n_obs),
                    std::to_string(f.n_params), num(f.log_likelihood), num(f.aic), num(f.bic),
                    num(f.theta), glmm ? num(f.random_intercept_sd) : "", opt_num(rw), opt_num(ru),
                    f.converged ? "true" : "false"});
    auto null_or = [](const std::optional<double>& v) {
      return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
    };
    jm.push_back({{"model", models[m].label},
                  {"family", std::string(to_string(f.family))},
                  {"n_obs", f.n_obs},
                  {"n_params", f.n_params},
                  {"log_likelihood", f.log_likelihood},
                  {"aic", f.aic},
                  {"bic", f.bic},
                  {"theta", f.theta},
                  {"random_intercept_sd", glmm ? nlohmann::json(f.random_intercept_sd) : nlohmann::json(nullptr)},
                  {"pseudo_r2_weighted", null_or(rw)},
                  {"pseudo_r2_unweighted", null_or(ru)},
                  {"converged", f.converged}});
  }
  j["models"] = std::move(jm);
  j["preferred_by_aic"] = models.empty() ? nlohmann::json(nullptr) : nlohmann::json(models[best].label);

  // Pseudo-R² is reported next to AIC without declaring a winner; flag
  // when the two rankings disagree.
  std::optional<std::size_t> best_r2;
  for (std::size_t m = 0; m < models.size(); ++m) {
    const auto& g = models[m].gof;
    if (!g || !g->pseudo_r2_weighted) continue;
    if (!best_r2 || *g->pseudo_r2_weighted > *models[*best_r2].gof->pseudo_r2_weighted) best_r2 = m;
  }
  if (best_r2 && *best_r2 != best) {
    j["notes"].push_back("weighted pseudo-R2 ranks '" + models[*best_r2].label +
                         "' highest while AIC prefers '" + models[best].label + "'");
  }

  auto vuong = nlohmann::json::array();
  for (std::size_t a = 0; a < models.size(); ++a) {
    for (std::size_t b = a + 1; b < models.size(); ++b) {
      const auto fa = models[a].fit.family;
      const auto fb = models[b].fit.family;
      if (fa == Family::GLMM_NB || fb == Family::GLMM_NB) continue;
      nlohmann::json v{{"model_a", models[a].label}, {"model_b", models[b].label}};
      try {
        const auto r = vuong_test(models[a].fit, models[a].design, models[b].fit, models[b].design);
        v["statistic"] = r.statistic;
        v["p_value"] = r.p_value;
        v["favours"] = r.statistic > 0 ? models[a].label : models[b].label;
        v["error"] = nullptr;
      } catch (const DegenerateComparisonError& e) {
        v["statistic"] = nullptr;
        v["p_value"] = nullptr;
        v["favours"] = nullptr;
        v["error"] = e.what();
      }
      vuong.push_back(std::move(v));
    }
  }
  j["vuong"] = std::move(vuong);

  std::vector<csv::Row> vrows = {{"model_a", "model_b", "statistic", "p_value", "favours", "error"}};
  for (const auto& v : j["vuong"]) {
    auto s = [](const nlohmann::json& x) {
      if (x.is_null()) return std::string();
      if (x.is_string()) return x.get<std::string>();
      return csv::format_double(x.get<double>());
    };
    vrows.push_back({s(v["model_a"]), s(v["model_b"]), s(v["statistic"]), s(v["p_value"]),
                     s(v["favours"]), s(v["error"])});
  }

  return {{"comparison.csv", csv_text(rows)},
          {"comparison.json", json_text(j)},
          {"vuong.csv", csv_text(vrows)}};
}

}  // namespace countfit

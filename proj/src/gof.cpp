#include "countfit/gof.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "countfit/csv.hpp"
#include "countfit/distributions.hpp"
#include "countfit/errors.hpp"

namespace countfit {

namespace {

// Tail left out of a bin's predicted pmf; small enough that pooled
// distributions sum to one within 1e-12.
constexpr double kPredictedTailBudget = 1e-14;

double snap(double x) { return std::round(x * 1e12) / 1e12; }

}  // namespace

void GofConfig::validate() const {
  if (!(bin_width > 0.0) || !std::isfinite(bin_width)) {
    throw ValidationError("bin_width must be positive");
  }
  if (!(max_binned_mean > 0.0) || !std::isfinite(max_binned_mean)) {
    throw ValidationError("max_binned_mean must be positive");
  }
  const double ratio = max_binned_mean / bin_width;
  if (std::fabs(ratio - std::round(ratio)) > 1e-9 * std::max(1.0, ratio) || std::round(ratio) < 1) {
    throw ValidationError("max_binned_mean must be a positive multiple of bin_width");
  }
  if (min_bin_count < 0) throw ValidationError("min_bin_count must be non-negative");
  if (k_display < 1) throw ValidationError("k_display must be at least 1");
}

int GofConfig::bin_count() const { return static_cast<int>(std::lround(max_binned_mean / bin_width)); }

double GofConfig::edge(int k) const { return snap(k * bin_width); }

Segmentation segment_by_prediction(const Eigen::VectorXd& predictions, const GofConfig& cfg) {
  cfg.validate();
  const int K = cfg.bin_count();
  Segmentation seg;
  seg.bins.resize(static_cast<std::size_t>(K));
  for (int k = 0; k < K; ++k) {
    auto& b = seg.bins[static_cast<std::size_t>(k)];
    b.lower = cfg.edge(k);
    b.upper = cfg.edge(k + 1);
    b.midpoint = snap(b.lower + 0.5 * cfg.bin_width);
  }
  const double top = cfg.edge(K);
  for (Eigen::Index i = 0; i < predictions.size(); ++i) {
    const double p = predictions[i];
    if (!std::isfinite(p) || p < 0.0) {
      throw DataError("prediction " + std::to_string(i) + " is not a finite non-negative value");
    }
    if (p == 0.0) {
      seg.excluded.push_back(static_cast<long>(i));
      continue;
    }
    if (p >= top) {
      seg.overflow.push_back(static_cast<long>(i));
      continue;
    }
    int k = std::clamp(static_cast<int>(std::floor(p / cfg.bin_width)), 0, K - 1);
    while (k > 0 && p < cfg.edge(k)) --k;
    while (k < K - 1 && p >= cfg.edge(k + 1)) ++k;
    seg.bins[static_cast<std::size_t>(k)].member_indices.push_back(static_cast<long>(i));
  }
  return seg;
}

GofBin fill_bin(const BinSkeleton& skeleton, const std::vector<std::int64_t>& y,
                const FitResult& fit, const GofConfig& cfg, const Eigen::VectorXd* zero_probs) {
  (void)cfg;
  if (skeleton.member_indices.empty()) throw ValidationError("fill_bin needs a non-empty bin");
  GofBin bin;
  bin.lower = skeleton.lower;
  bin.upper = skeleton.upper;
  bin.midpoint = skeleton.midpoint;
  bin.member_indices = skeleton.member_indices;
  bin.n_sections = static_cast<long>(skeleton.member_indices.size());

  std::int64_t y_max = 0;
  for (long i : bin.member_indices) y_max = std::max(y_max, y.at(static_cast<std::size_t>(i)));
  bin.observed_counts.assign(static_cast<std::size_t>(y_max + 1), 0);
  for (long i : bin.member_indices) {
    const auto yi = y[static_cast<std::size_t>(i)];
    ++bin.observed_counts[static_cast<std::size_t>(yi)];
    bin.total_observed_crashes += yi;
  }

  CountDistribution dist = NbParams(bin.midpoint, fit.theta);
  if (fit.family == Family::ZINB) {
    if (zero_probs == nullptr) throw ValidationError("zinb bins need the fitted zero probabilities");
    double w = 0.0;
    for (long i : bin.member_indices) w += (*zero_probs)[i];
    w /= static_cast<double>(bin.n_sections);
    bin.mean_zero_prob = w;
    if (!(w < 1.0)) throw DataError("bin zero probability is 1; the bin has no count component");
    dist = ZinbParams(NbParams(bin.midpoint / (1.0 - w), fit.theta), w);
  }
  const auto k_pred = tail_k_max(dist, kPredictedTailBudget);
  const auto support = std::max<std::int64_t>(k_pred, y_max) + 1;

  bin.observed_counts.resize(static_cast<std::size_t>(support), 0);
  bin.observed_pmf.resize(static_cast<std::size_t>(support));
  const auto n = static_cast<double>(bin.n_sections);
  for (std::size_t k = 0; k < bin.observed_pmf.size(); ++k) {
    bin.observed_pmf[k] = static_cast<double>(bin.observed_counts[k]) / n;
  }
  bin.predicted_pmf = pmf_table(dist, support - 1);
  bin.observed_mean = static_cast<double>(bin.total_observed_crashes) / n;
  bin.predicted_mean = truncated_mean(dist, support - 1, kPredictedTailBudget);
  return bin;
}

std::vector<double> pooled_distribution(const std::vector<GofBin>& bins, Which which) {
  long total = 0;
  std::size_t support = 0;
  for (const auto& b : bins) {
    total += b.n_sections;
    support = std::max(support, which == Which::observed ? b.observed_counts.size()
                                                         : b.predicted_pmf.size());
  }
  if (total == 0) throw EmptyReportError("no binned observations: every bin is empty");
  std::vector<double> pooled(support, 0.0);
  if (which == Which::observed) {
    // Integer counts keep the pooled distribution identical to the raw
    // empirical distribution of the binned sections.
    std::vector<std::int64_t> counts(support, 0);
    for (const auto& b : bins) {
      for (std::size_t k = 0; k < b.observed_counts.size(); ++k) counts[k] += b.observed_counts[k];
    }
    for (std::size_t k = 0; k < support; ++k) {
      pooled[k] = static_cast<double>(counts[k]) / static_cast<double>(total);
    }
    return pooled;
  }
  for (const auto& b : bins) {
    for (std::size_t k = 0; k < b.predicted_pmf.size(); ++k) {
      pooled[k] += static_cast<double>(b.n_sections) * b.predicted_pmf[k];
    }
  }
  for (auto& p : pooled) p /= static_cast<double>(total);
  return pooled;
}

double pseudo_r2(const std::vector<GofBin>& bins, bool weighted, const GofConfig& cfg) {
  std::vector<const GofBin*> used;
  for (const auto& b : bins) {
    if (b.n_sections > 0 && b.n_sections >= cfg.min_bin_count) used.push_back(&b);
  }
  if (used.size() < 2) {
    throw UndefinedStatisticError("pseudo-R2 needs at least two bins with at least " +
                                  std::to_string(cfg.min_bin_count) + " sections");
  }
  auto weight = [&](const GofBin* b) { return weighted ? static_cast<double>(b->n_sections) : 1.0; };
  double wsum = 0.0;
  double osum = 0.0;
  for (const auto* b : used) {
    wsum += weight(b);
    osum += weight(b) * b->observed_mean;
  }
  const double o_bar = osum / wsum;
  double num = 0.0;
  double den = 0.0;
  for (const auto* b : used) {
    num += weight(b) * (b->observed_mean - b->predicted_mean) * (b->observed_mean - b->predicted_mean);
    den += weight(b) * (b->observed_mean - o_bar) * (b->observed_mean - o_bar);
  }
  if (!(den > 0.0)) {
    throw UndefinedStatisticError("pseudo-R2 is undefined: every bin has the same observed mean");
  }
  return 1.0 - num / den;
}

GofReport run_gof(const FitResult& fit, const DesignMatrix& design, const GofConfig& cfg,
                  bool force) {
  cfg.validate();
  if (!fit.converged && !force) {
    throw NumericalError("fit did not converge; goodness of fit needs a converged fit or --force");
  }
  GofReport report;
  report.family = fit.family;
  report.config = cfg;
  report.n_obs = static_cast<long>(design.n());
  report.forced = !fit.converged;
  if (report.forced) report.warnings.emplace_back("goodness of fit forced on a non-converged fit");

  const Eigen::VectorXd predictions = predict_mean(fit, design);
  Eigen::VectorXd w;
  if (fit.family == Family::ZINB) w = zero_probabilities(fit, design);
  auto seg = segment_by_prediction(predictions, cfg);
  report.overflow = std::move(seg.overflow);
  report.excluded = std::move(seg.excluded);
  if (!report.excluded.empty()) {
    report.warnings.push_back(std::to_string(report.excluded.size()) +
                              " section(s) with zero predicted mean excluded from binning");
  }
  for (const auto& s : seg.bins) {
    if (s.member_indices.empty()) continue;
    report.bins.push_back(fill_bin(s, design.y, fit, cfg, fit.family == Family::ZINB ? &w : nullptr));
  }
  report.pooled_observed = pooled_distribution(report.bins, Which::observed);
  report.pooled_predicted = pooled_distribution(report.bins, Which::predicted);
  for (bool weighted : {true, false}) {
    try {
      (weighted ? report.pseudo_r2_weighted : report.pseudo_r2_unweighted) =
          pseudo_r2(report.bins, weighted, cfg);
    } catch (const UndefinedStatisticError& e) {
      report.warnings.push_back(std::string(weighted ? "weighted" : "unweighted") + ": " + e.what());
    }
  }
  return report;
}

std::vector<double> display_buckets(const std::vector<double>& pmf, int k_display) {
  std::vector<double> out(static_cast<std::size_t>(k_display) + 1, 0.0);
  for (std::size_t k = 0; k < pmf.size(); ++k) {
    out[std::min(k, static_cast<std::size_t>(k_display))] += pmf[k];
  }
  return out;
}

std::vector<std::string> display_labels(int k_display) {
  std::vector<std::string> out;
  for (int k = 0; k < k_display; ++k) out.push_back(std::to_string(k));
  out.push_back(std::to_string(k_display) + "+");
  return out;
}

double calibration_envelope(double p, long n) {
  return 3.29 * std::sqrt(p * (1.0 - p) / static_cast<double>(n)) + 0.02;
}

std::vector<EnvelopeBreach> envelope_breaches(const GofReport& report, long min_sections) {
  std::vector<EnvelopeBreach> out;
  for (std::size_t b = 0; b < report.bins.size(); ++b) {
    const auto& bin = report.bins[b];
    if (bin.n_sections < min_sections) continue;
    for (std::size_t k = 0; k < bin.predicted_pmf.size(); ++k) {
      const double p = bin.predicted_pmf[k];
      const double diff = std::fabs(bin.observed_pmf[k] - p);
      const double env = calibration_envelope(p, bin.n_sections);
      if (diff > env) out.push_back({b, static_cast<std::int64_t>(k), diff, env});
    }
  }
  return out;
}

nlohmann::json to_json(const GofReport& r) {
  auto opt = [](const std::optional<double>& v) {
    return v && std::isfinite(*v) ? nlohmann::json(*v) : nlohmann::json(nullptr);
  };
  nlohmann::json j;
  j["schema_version"] = kGofSchemaVersion;
  j["family"] = std::string(to_string(r.family));
  j["config"] = {{"bin_width", r.config.bin_width},
                 {"max_binned_mean", r.config.max_binned_mean},
                 {"min_bin_count", r.config.min_bin_count},
                 {"k_display", r.config.k_display}};
  j["n_obs"] = r.n_obs;
  auto bins = nlohmann::json::array();
  for (const auto& b : r.bins) {
    nlohmann::json e{{"lower", b.lower},
                     {"upper", b.upper},
                     {"midpoint", b.midpoint},
                     {"n_sections", b.n_sections},
                     {"total_observed_crashes", b.total_observed_crashes},
                     {"observed_mean", b.observed_mean},
                     {"predicted_mean", b.predicted_mean},
                     {"observed_pmf", b.observed_pmf},
                     {"predicted_pmf", b.predicted_pmf},
                     {"member_indices", b.member_indices}};
    if (r.family == Family::ZINB) e["mean_zero_prob"] = b.mean_zero_prob;
    bins.push_back(std::move(e));
  }
  j["bins"] = std::move(bins);
  j["overflow"] = {{"count", r.overflow.size()}, {"indices", r.overflow}};
  j["excluded"] = {{"count", r.excluded.size()}, {"indices", r.excluded}};
  j["pooled_observed"] = r.pooled_observed;
  j["pooled_predicted"] = r.pooled_predicted;
  j["pseudo_r2_weighted"] = opt(r.pseudo_r2_weighted);
  j["pseudo_r2_unweighted"] = opt(r.pseudo_r2_unweighted);
  j["forced"] = r.forced;
  j["warnings"] = r.warnings;
  return j;
}

std::string bins_csv(const GofReport& r) {
  std::ostringstream out;
  csv::Row header = {"lower", "upper", "midpoint", "n_sections", "total_crashes", "O_i", "P_i"};
  const auto labels = display_labels(r.config.k_display);
  for (const auto& l : labels) header.push_back("observed_pmf_" + l);
  for (const auto& l : labels) header.push_back("predicted_pmf_" + l);
  csv::write_row(out, header);
  for (const auto& b : r.bins) {
    csv::Row row = {csv::format_double(b.lower),        csv::format_double(b.upper),
                    csv::format_double(b.midpoint),     std::to_string(b.n_sections),
                    std::to_string(b.total_observed_crashes), csv::format_double(b.observed_mean),
                    csv::format_double(b.predicted_mean)};
    for (double v : display_buckets(b.observed_pmf, r.config.k_display)) row.push_back(csv::format_double(v));
    for (double v : display_buckets(b.predicted_pmf, r.config.k_display)) row.push_back(csv::format_double(v));
    csv::write_row(out, row);
  }
  return out.str();
}

}  // namespace countfit

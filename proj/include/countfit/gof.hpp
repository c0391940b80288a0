#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "countfit/estimation.hpp"

namespace countfit {

inline constexpr int kGofSchemaVersion = 1;

struct GofConfig {
  double bin_width = 0.2;
  double max_binned_mean = 2.0;  ///< predictions at or above form the overflow group
  long min_bin_count = 1;        ///< smaller bins are left out of the pseudo-R²
  int k_display = 8;             ///< charts show 0..k_display-1 and "k_display+"

  void validate() const;
  /// Number of bins below max_binned_mean.
  int bin_count() const;
  /// Edge k·bin_width, snapped to 1e-12 so decimal edges compare as written.
  double edge(int k) const;
};

struct BinSkeleton {
  double lower = 0.0;
  double upper = 0.0;
  double midpoint = 0.0;
  std::vector<long> member_indices;
};

struct Segmentation {
  std::vector<BinSkeleton> bins;  ///< every bin below max_binned_mean, possibly empty
  std::vector<long> overflow;
  std::vector<long> excluded;     ///< zero predictions
};

/// Assigns observation i to the bin with lower ≤ λ̂_i < upper. Throws
/// DataError for a non-finite or negative prediction.
Segmentation segment_by_prediction(const Eigen::VectorXd& predictions, const GofConfig& cfg);

struct GofBin {
  double lower = 0.0;
  double upper = 0.0;
  double midpoint = 0.0;
  std::vector<long> member_indices;
  long n_sections = 0;
  std::int64_t total_observed_crashes = 0;
  std::vector<std::int64_t> observed_counts;  ///< sections with k crashes
  std::vector<double> observed_pmf;
  std::vector<double> predicted_pmf;
  double observed_mean = 0.0;   ///< O_i
  double predicted_mean = 0.0;  ///< P_i
  double mean_zero_prob = 0.0;  ///< member-average ŵ (ZINB)
};

/// Observed and predicted distributions of one non-empty bin. The predicted
/// pmf is the fitted family at the bin midpoint; for ZINB, `zero_probs`
/// supplies ŵ_i and the bin uses w̄ with NB mean midpoint / (1 − w̄).
GofBin fill_bin(const BinSkeleton& skeleton, const std::vector<std::int64_t>& y,
                const FitResult& fit, const GofConfig& cfg,
                const Eigen::VectorXd* zero_probs = nullptr);

enum class Which { observed, predicted };

/// Section-count weighted average of the bin distributions. Throws
/// EmptyReportError when no bin has members.
std::vector<double> pooled_distribution(const std::vector<GofBin>& bins, Which which);

/// 1 − Σ N_i(O_i − P_i)² / Σ N_i(O_i − Ō)² over bins with at least
/// cfg.min_bin_count sections; weights are 1 when `weighted` is false.
/// Throws UndefinedStatisticError for fewer than two bins or a zero
/// denominator.
double pseudo_r2(const std::vector<GofBin>& bins, bool weighted, const GofConfig& cfg);

struct GofReport {
  Family family = Family::NB;
  GofConfig config;
  long n_obs = 0;
  std::vector<GofBin> bins;  ///< non-empty bins in ascending order
  std::vector<long> overflow;
  std::vector<long> excluded;
  std::vector<double> pooled_observed;
  std::vector<double> pooled_predicted;
  std::optional<double> pseudo_r2_weighted;
  std::optional<double> pseudo_r2_unweighted;
  bool forced = false;
  std::vector<std::string> warnings;
};

/// predict_mean → segment → fill → pool → pseudo-R². A non-converged fit
/// is refused with NumericalError unless `force` is set.
GofReport run_gof(const FitResult& fit, const DesignMatrix& design, const GofConfig& cfg = {},
                  bool force = false);

/// Display buckets 0..k_display-1 then the remaining mass.
std::vector<double> display_buckets(const std::vector<double>& pmf, int k_display);
std::vector<std::string> display_labels(int k_display);

/// Binomial 99.9% band for a proportion p over n sections plus 0.02 slack
/// for evaluating the pmf at the bin midpoint.
double calibration_envelope(double p, long n);

struct EnvelopeBreach {
  std::size_t bin = 0;
  std::int64_t k = 0;
  double difference = 0.0;
  double envelope = 0.0;
};

/// Counts k where |observed − predicted| exceeds the envelope, over bins
/// with at least `min_sections` members.
std::vector<EnvelopeBreach> envelope_breaches(const GofReport& report, long min_sections = 100);

nlohmann::json to_json(const GofReport& report);
/// Per-bin table: lower, upper, midpoint, n_sections, total_crashes, O_i,
/// P_i, observed display buckets, predicted display buckets.
std::string bins_csv(const GofReport& report);

}  // namespace countfit

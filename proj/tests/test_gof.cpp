#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "countfit/distributions.hpp"
#include "countfit/errors.hpp"
#include "countfit/gof.hpp"
#include "countfit/rng.hpp"

using namespace countfit;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

FitResult intercept_fit(Family family, double theta) {
  FitResult f;
  f.family = family;
  f.count_coefficients = {{"(Intercept)", 0.0, 0.1, 0.0, 1.0}};
  if (family == Family::ZINB) f.zero_coefficients = {{"(Intercept)", 0.0, 0.1, 0.0, 1.0}};
  f.theta = theta;
  f.converged = true;
  f.n_params = 2;
  return f;
}

// Intercept-only design whose offset makes the prediction exactly λ_i
// under a zero intercept.
DesignMatrix offset_design(const std::vector<double>& lambda, const std::vector<std::int64_t>& y) {
  DesignMatrix d;
  d.family = Family::NB;
  const auto n = static_cast<Index>(lambda.size());
  d.X = MatrixXd::Ones(n, 1);
  d.offset.resize(n);
  for (Index i = 0; i < n; ++i) d.offset[i] = std::log(lambda[static_cast<std::size_t>(i)]);
  d.y = y;
  d.count_columns = {"(Intercept)"};
  d.data_checksum = "synthetic";
  return d;
}

struct Synthetic {
  std::vector<double> lambda;
  std::vector<std::int64_t> y;
};

Synthetic nb_data(long n, double theta, std::uint64_t seed, double hi = 2.6) {
  Rng rng(seed);
  Synthetic s;
  for (long i = 0; i < n; ++i) {
    const double l = uniform(rng, 0.02, hi);
    s.lambda.push_back(l);
    s.y.push_back(sample(NbParams(l, theta), rng));
  }
  return s;
}

GofBin manual_bin(long n, double o, double p) {
  GofBin b;
  b.n_sections = n;
  b.observed_mean = o;
  b.predicted_mean = p;
  return b;
}

// Direct evaluation of the binned pseudo-R² for the oracle.
double r2_oracle(const std::vector<GofBin>& bins, bool weighted) {
  double wsum = 0.0, obar = 0.0;
  for (const auto& b : bins) {
    const double w = weighted ? static_cast<double>(b.n_sections) : 1.0;
    wsum += w;
    obar += w * b.observed_mean;
  }
  obar /= wsum;
  double num = 0.0, den = 0.0;
  for (const auto& b : bins) {
    const double w = weighted ? static_cast<double>(b.n_sections) : 1.0;
    num += w * std::pow(b.observed_mean - b.predicted_mean, 2);
    den += w * std::pow(b.observed_mean - obar, 2);
  }
  return 1.0 - num / den;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_CASE("config") {
  GofConfig cfg;
  cfg.validate();
  CHECK(cfg.bin_count() == 10);
  CHECK(cfg.edge(3) == 0.6);
  CHECK(cfg.edge(10) == 2.0);
  cfg.bin_width = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.bin_width = 0.3;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
  cfg.bin_width = 0.5;
  cfg.validate();
  CHECK(cfg.bin_count() == 4);
  cfg.k_display = 0;
  CHECK_THROWS_AS(cfg.validate(), ValidationError);
}

TEST_CASE("segmentation examples") {
  VectorXd p(5);
  p << 0.5, 0.2, 2.7, 0.0, 1.9999999;
  const auto s = segment_by_prediction(p, {});
  REQUIRE(s.bins.size() == 10);
  CHECK(s.bins[2].lower == 0.4);
  CHECK(s.bins[2].upper == 0.6);
  CHECK(s.bins[2].midpoint == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s.bins[2].member_indices == std::vector<long>{0});
  CHECK(s.bins[1].lower == 0.2);
  CHECK(s.bins[1].member_indices == std::vector<long>{1});
  CHECK(s.overflow == std::vector<long>{2});
  CHECK(s.excluded == std::vector<long>{3});
  CHECK(s.bins[9].member_indices == std::vector<long>{4});

  VectorXd bad(3);
  bad << 0.5, NAN, 0.1;
  try {
    segment_by_prediction(bad, {});
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("1") != std::string::npos);
  }
  bad[1] = -0.1;
  CHECK_THROWS_AS(segment_by_prediction(bad, {}), DataError);
}

TEST_CASE("segmentation partitions and respects bin edges") {
  const auto data = nb_data(3000, 1.0, 5);
  VectorXd p = Eigen::Map<const VectorXd>(data.lambda.data(), static_cast<Index>(data.lambda.size()));
  const GofConfig cfg;
  const auto s = segment_by_prediction(p, cfg);
  std::vector<int> seen(data.lambda.size(), 0);
  for (const auto& b : s.bins) {
    for (long i : b.member_indices) {
      ++seen[static_cast<std::size_t>(i)];
      CHECK(b.lower <= p[i]);
      CHECK(p[i] < b.upper);
    }
  }
  for (long i : s.overflow) {
    ++seen[static_cast<std::size_t>(i)];
    CHECK(p[i] >= cfg.max_binned_mean);
  }
  for (int c : seen) CHECK(c == 1);
}

TEST_CASE("fill_bin examples") {
  const std::vector<std::int64_t> y = {0, 0, 1};
  BinSkeleton sk{0.4, 0.6, 0.5, {0, 1, 2}};
  const auto bin = fill_bin(sk, y, intercept_fit(Family::NB, 1.0), {});
  CHECK(bin.n_sections == 3);
  CHECK(bin.total_observed_crashes == 1);
  REQUIRE(bin.observed_pmf.size() >= 2);
  CHECK(bin.observed_pmf[0] == 2.0 / 3.0);
  CHECK(bin.observed_pmf[1] == 1.0 / 3.0);
  for (std::size_t k = 2; k < bin.observed_pmf.size(); ++k) CHECK(bin.observed_pmf[k] == 0.0);
  CHECK(bin.observed_mean == 1.0 / 3.0);
  CHECK(bin.predicted_pmf[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
  CHECK(std::fabs(bin.predicted_mean - 0.5) < 1e-6);
  CHECK(bin.observed_pmf.size() == bin.predicted_pmf.size());
  CHECK(sum(bin.predicted_pmf) >= 1.0 - 1e-9);
  CHECK(sum(bin.observed_pmf) == doctest::Approx(1.0).epsilon(1e-15));

  BinSkeleton empty{0.4, 0.6, 0.5, {}};
  CHECK_THROWS(fill_bin(empty, y, intercept_fit(Family::NB, 1.0), {}));
}

TEST_CASE("zinb bins use the member-average zero probability") {
  const std::vector<std::int64_t> y = {0, 0, 3, 1};
  VectorXd w(4);
  w << 0.1, 0.3, 0.2, 0.4;
  BinSkeleton sk{0.8, 1.0, 0.9, {0, 1, 2, 3}};
  const auto fit = intercept_fit(Family::ZINB, 1.5);
  const auto bin = fill_bin(sk, y, fit, {}, &w);
  CHECK(bin.mean_zero_prob == doctest::Approx(0.25).epsilon(1e-15));
  const NbParams nb(0.9 / 0.75, 1.5);
  CHECK(bin.predicted_pmf[0] == doctest::Approx(0.25 + 0.75 * nb_pmf(0, nb)).epsilon(1e-13));
  CHECK(bin.predicted_pmf[2] == doctest::Approx(0.75 * nb_pmf(2, nb)).epsilon(1e-13));
  CHECK(std::fabs(bin.predicted_mean - 0.9) < 1e-6);
  CHECK_THROWS_AS(fill_bin(sk, y, fit, {}), ValidationError);
}

TEST_CASE("pooled distribution") {
  GofBin a, b;
  a.n_sections = 100;
  a.observed_counts = {80, 20};
  a.observed_pmf = {0.8, 0.2};
  a.predicted_pmf = {0.75, 0.25};
  b.n_sections = 300;
  b.observed_counts = {180, 90, 30};
  b.observed_pmf = {0.6, 0.3, 0.1};
  b.predicted_pmf = {0.6, 0.4};
  const auto single = pooled_distribution({a}, Which::observed);
  CHECK(single == a.observed_pmf);
  const auto pooled = pooled_distribution({a, b}, Which::observed);
  CHECK(pooled[0] == doctest::Approx(0.65).epsilon(1e-15));
  CHECK(pooled[2] == doctest::Approx(300 * 0.1 / 400).epsilon(1e-15));
  CHECK(sum(pooled) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pooled_distribution({a, b}, Which::predicted)[1] ==
        doctest::Approx((100 * 0.25 + 300 * 0.4) / 400).epsilon(1e-15));
  CHECK_THROWS_AS(pooled_distribution({}, Which::observed), EmptyReportError);
}

TEST_CASE("pseudo-R2 examples") {
  const GofConfig cfg;
  const std::vector<GofBin> exact = {manual_bin(5, 0.2, 0.2), manual_bin(7, 0.9, 0.9), manual_bin(2, 1.4, 1.4)};
  CHECK(pseudo_r2(exact, true, cfg) == 1.0);
  CHECK(pseudo_r2(exact, false, cfg) == 1.0);

  const std::vector<GofBin> two = {manual_bin(10, 0.5, 0.4), manual_bin(10, 1.5, 1.6)};
  CHECK(pseudo_r2(two, true, cfg) == doctest::Approx(0.96).epsilon(1e-12));
  CHECK(pseudo_r2(two, false, cfg) == doctest::Approx(0.96).epsilon(1e-12));

  CHECK_THROWS_AS(pseudo_r2({manual_bin(10, 0.5, 0.4)}, true, cfg), UndefinedStatisticError);
  CHECK_THROWS_AS(pseudo_r2({manual_bin(10, 0.5, 0.4), manual_bin(3, 0.5, 0.7)}, true, cfg),
                  UndefinedStatisticError);

  GofConfig strict;
  strict.min_bin_count = 5;
  CHECK_THROWS_AS(pseudo_r2({manual_bin(10, 0.5, 0.4), manual_bin(3, 1.5, 1.6)}, true, strict),
                  UndefinedStatisticError);
}

TEST_CASE("pseudo-R2 agrees with direct evaluation and is order invariant") {
  Rng rng(17);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<GofBin> bins;
    const int nb = 2 + rep % 9;
    for (int i = 0; i < nb; ++i) {
      bins.push_back(manual_bin(1 + static_cast<long>(uniform(rng, 0, 500)), uniform(rng, 0, 2),
                                uniform(rng, 0, 2)));
    }
    for (bool weighted : {true, false}) {
      const double r = pseudo_r2(bins, weighted, {});
      CHECK(r == doctest::Approx(r2_oracle(bins, weighted)).epsilon(1e-10));
      auto shuffled = bins;
      std::reverse(shuffled.begin(), shuffled.end());
      std::rotate(shuffled.begin(), shuffled.begin() + 1, shuffled.end());
      CHECK(pseudo_r2(shuffled, weighted, {}) == doctest::Approx(r).epsilon(1e-12));
      auto doubled = bins;
      for (auto& b : doubled) b.n_sections *= 2;
      CHECK(pseudo_r2(doubled, weighted, {}) == doctest::Approx(r).epsilon(1e-12));
    }
  }
}

TEST_CASE("run_gof conservation and pooled identities") {
  const auto data = nb_data(6000, 1.3, 20240301);
  const auto design = offset_design(data.lambda, data.y);
  const auto fit = intercept_fit(Family::NB, 1.3);
  const auto report = run_gof(fit, design);

  long binned = 0;
  std::map<std::int64_t, long> counts;
  for (const auto& b : report.bins) {
    CHECK(b.n_sections == static_cast<long>(b.member_indices.size()));
    CHECK(b.n_sections > 0);
    CHECK(b.observed_mean == static_cast<double>(b.total_observed_crashes) / static_cast<double>(b.n_sections));
    CHECK(sum(b.predicted_pmf) >= 1.0 - 1e-9);
    binned += b.n_sections;
    for (long i : b.member_indices) ++counts[data.y[static_cast<std::size_t>(i)]];
  }
  CHECK(binned + static_cast<long>(report.overflow.size()) + static_cast<long>(report.excluded.size()) ==
        report.n_obs);
  CHECK(report.n_obs == 6000);
  CHECK(sum(report.pooled_observed) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sum(report.pooled_predicted) == doctest::Approx(1.0).epsilon(1e-12));

  // The pooled observed distribution is the raw distribution of binned counts.
  for (std::size_t k = 0; k < report.pooled_observed.size(); ++k) {
    const double raw = static_cast<double>(counts[static_cast<std::int64_t>(k)]) / static_cast<double>(binned);
    CHECK(report.pooled_observed[k] == raw);
  }

  REQUIRE(report.pseudo_r2_weighted.has_value());
  REQUIRE(report.pseudo_r2_unweighted.has_value());
  CHECK(*report.pseudo_r2_weighted == doctest::Approx(pseudo_r2(report.bins, true, {})).epsilon(1e-15));
  CHECK(*report.pseudo_r2_weighted > 0.9);

  // Determinism.
  const auto again = run_gof(fit, design);
  CHECK(to_json(again) == to_json(report));
}

TEST_CASE("refining the bins keeps the binned set and the pooled observed distribution") {
  const auto data = nb_data(4000, 0.9, 20240302);
  const auto design = offset_design(data.lambda, data.y);
  const auto fit = intercept_fit(Family::NB, 0.9);
  GofConfig coarse, fine;
  fine.bin_width = 0.1;
  const auto a = run_gof(fit, design, coarse);
  const auto b = run_gof(fit, design, fine);
  auto members = [](const GofReport& r) {
    std::vector<long> m;
    for (const auto& bin : r.bins) m.insert(m.end(), bin.member_indices.begin(), bin.member_indices.end());
    std::sort(m.begin(), m.end());
    return m;
  };
  CHECK(members(a) == members(b));
  CHECK(a.overflow == b.overflow);
  // Supports differ by trailing zeros only.
  auto pa = a.pooled_observed, pb = b.pooled_observed;
  INFO("support " << pa.size() << " vs " << pb.size());
  pa.resize(std::max(pa.size(), pb.size()), 0.0);
  pb.resize(pa.size(), 0.0);
  CHECK(pa == pb);
  CHECK(b.bins.size() > a.bins.size());
}

TEST_CASE("pseudo-R2 is unchanged by duplicating the dataset") {
  const auto data = nb_data(3000, 1.1, 20240303);
  auto twice = data;
  twice.lambda.insert(twice.lambda.end(), data.lambda.begin(), data.lambda.end());
  twice.y.insert(twice.y.end(), data.y.begin(), data.y.end());
  const auto fit = intercept_fit(Family::NB, 1.1);
  const auto a = run_gof(fit, offset_design(data.lambda, data.y));
  const auto b = run_gof(fit, offset_design(twice.lambda, twice.y));
  CHECK(*a.pseudo_r2_weighted == doctest::Approx(*b.pseudo_r2_weighted).epsilon(1e-12));
  CHECK(*a.pseudo_r2_unweighted == doctest::Approx(*b.pseudo_r2_unweighted).epsilon(1e-12));
}

TEST_CASE("degenerate reports") {
  const std::vector<double> high = {2.0, 2.5, 3.0};
  const auto fit = intercept_fit(Family::NB, 1.0);
  CHECK_THROWS_AS(run_gof(fit, offset_design(high, {1, 2, 3})), EmptyReportError);

  // One populated bin: pseudo-R² is left empty with a warning.
  const std::vector<double> one = {0.5, 0.51, 0.55};
  const auto r = run_gof(fit, offset_design(one, {0, 1, 0}));
  CHECK_FALSE(r.pseudo_r2_weighted.has_value());
  CHECK_FALSE(r.warnings.empty());
  const auto j = to_json(r);
  CHECK(j["pseudo_r2_weighted"].is_null());

  auto unconverged = fit;
  unconverged.converged = false;
  CHECK_THROWS_AS(run_gof(unconverged, offset_design(one, {0, 1, 0})), NumericalError);
  const auto forced = run_gof(unconverged, offset_design(one, {0, 1, 0}), {}, true);
  CHECK(forced.forced);
  CHECK(to_json(forced)["forced"] == true);
}

TEST_CASE("raising max_binned_mean bins the former overflow") {
  const auto data = nb_data(2000, 1.0, 11, 3.5);
  const auto design = offset_design(data.lambda, data.y);
  const auto fit = intercept_fit(Family::NB, 1.0);
  GofConfig low;
  low.max_binned_mean = 1.0;
  GofConfig high;
  high.max_binned_mean = 4.0;
  const auto a = run_gof(fit, design, low);
  const auto b = run_gof(fit, design, high);
  CHECK(a.overflow.size() > b.overflow.size());
  CHECK(b.overflow.empty());
  CHECK(to_json(a)["overflow"]["count"] == a.overflow.size());
}

TEST_CASE("display buckets, envelope and csv") {
  const std::vector<double> pmf = {0.5, 0.2, 0.1, 0.1, 0.05, 0.05};
  const auto b = display_buckets(pmf, 3);
  REQUIRE(b.size() == 4);
  CHECK(b[3] == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(display_labels(3) == std::vector<std::string>{"0", "1", "2", "3+"});
  CHECK(display_buckets({1.0}, 3) == std::vector<double>{1.0, 0.0, 0.0, 0.0});

  CHECK(calibration_envelope(0.5, 100) == doctest::Approx(3.29 * 0.05 + 0.02).epsilon(1e-15));
  CHECK(calibration_envelope(0.0, 100) == 0.02);

  const auto data = nb_data(1500, 1.0, 12);
  const auto r = run_gof(intercept_fit(Family::NB, 1.0), offset_design(data.lambda, data.y));
  const auto csv = bins_csv(r);
  const auto header = csv.substr(0, csv.find('\n'));
  CHECK(std::count(header.begin(), header.end(), ',') + 1 == 7 + 2 * 9);
  CHECK(header.find("observed_pmf_8+") != std::string::npos);
  CHECK(header.rfind("lower,upper,midpoint,n_sections", 0) == 0);
  CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == r.bins.size() + 1);
}

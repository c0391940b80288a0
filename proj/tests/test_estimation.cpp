#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "countfit/distributions.hpp"
#include "countfit/errors.hpp"
#include "countfit/estimation.hpp"
#include "countfit/likelihood.hpp"
#include "countfit/quadrature.hpp"
#include "countfit/rng.hpp"
#include "countfit/special_functions.hpp"

using namespace countfit;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Design with an intercept plus `k` standard-normal columns named x1..xk.
DesignMatrix normal_design(Family family, Index n, int k, Rng& rng) {
  DesignMatrix d;
  d.family = family;
  d.X = MatrixXd::Ones(n, k + 1);
  d.count_columns = {"(Intercept)"};
  for (int j = 1; j <= k; ++j) {
    d.count_columns.push_back("x" + std::to_string(j));
    for (Index i = 0; i < n; ++i) d.X(i, j) = standard_normal(rng);
  }
  d.offset = VectorXd::Zero(n);
  d.y.assign(static_cast<std::size_t>(n), 0);
  d.data_checksum = "synthetic";
  return d;
}

void add_zero_part(DesignMatrix& d, Rng& rng) {
  d.Z = MatrixXd::Ones(d.n(), 2);
  for (Index i = 0; i < d.n(); ++i) d.Z(i, 1) = standard_normal(rng);
  d.zero_columns = {"(Intercept)", "z"};
}

void add_groups(DesignMatrix& d, int n_groups) {
  d.group_index.resize(static_cast<std::size_t>(d.n()));
  for (Index i = 0; i < d.n(); ++i) d.group_index[static_cast<std::size_t>(i)] = static_cast<int>(i * n_groups / d.n());
  d.group_names.clear();
  for (int g = 0; g < n_groups; ++g) d.group_names.push_back("G" + std::to_string(g));
}

// Draws y from NB(exp(Xβ + offset + u_g), θ) with zero inflation
// logistic(Zγ) when γ is non-empty.
void draw(DesignMatrix& d, const VectorXd& beta, double theta, Rng& rng, const VectorXd& gamma = {},
          double sd = 0.0) {
  std::vector<double> u(d.group_names.size(), 0.0);
  for (auto& v : u) v = sd * standard_normal(rng);
  for (Index i = 0; i < d.n(); ++i) {
    double eta = d.X.row(i).dot(beta) + d.offset[i];
    if (!d.group_index.empty()) eta += u[static_cast<std::size_t>(d.group_index[static_cast<std::size_t>(i)])];
    const NbParams nb(std::exp(eta), theta);
    double w = 0.0;
    if (gamma.size() > 0) w = special::logistic(d.Z.row(i).dot(gamma));
    d.y[static_cast<std::size_t>(i)] = sample(ZinbParams(nb, w), rng);
  }
}

bool within(double estimate, double truth, double se, double k = 3.0) {
  return std::isfinite(se) && std::fabs(estimate - truth) <= k * se;
}

double grad_rel_error(const DesignMatrix& d, const VectorXd& x) {
  const LogLikelihood ll(d, 15);
  VectorXd g(x.size());
  ll(x, g);
  double worst = 0.0;
  for (Index j = 0; j < x.size(); ++j) {
    const double h = 1e-6 * std::max(1.0, std::fabs(x[j]));
    VectorXd a = x, b = x;
    a[j] += h;
    b[j] -= h;
    const double fd = (ll.value(a) - ll.value(b)) / (2.0 * h);
    worst = std::max(worst, std::fabs(g[j] - fd) / std::max(1.0, std::fabs(fd)));
  }
  return worst;
}

}  // namespace

TEST_CASE("intercept-only fit matches the sample mean") {
  Rng rng(11);
  DesignMatrix d = normal_design(Family::NB, 1000, 0, rng);
  draw(d, VectorXd::Constant(1, std::log(2.0)), 1.3, rng);
  // Force the sample mean to exactly 2.
  long total = 0;
  for (std::size_t i = 0; i + 1 < d.y.size(); ++i) total += d.y[i];
  REQUIRE(2000 - total >= 0);
  d.y.back() = 2000 - total;

  const auto fit = fit_nb(d);
  REQUIRE(fit.converged);
  const double lambda = std::exp(fit.count_coefficients[0].estimate);
  CHECK(std::fabs(lambda - 2.0) < 1e-8);

  // Grid search on λ with θ held at its estimate.
  double best = -INFINITY, arg = 0.0;
  for (double l = 1.9; l <= 2.1; l += 1e-4) {
    double s = 0.0;
    for (auto y : d.y) s += nb_log_pmf(y, NbParams(l, fit.theta));
    if (s > best) {
      best = s;
      arg = l;
    }
  }
  CHECK(std::fabs(arg - 2.0) < 1.5e-4);
  CHECK(fit.log_likelihood >= best - 1e-9);
}

TEST_CASE("nb recovers simulated parameters") {
  Rng rng(20240201);
  DesignMatrix d = normal_design(Family::NB, 5000, 1, rng);
  VectorXd beta(2);
  beta << -1.0, 0.5;
  draw(d, beta, 1.2, rng);
  const auto fit = fit_nb(d);
  REQUIRE(fit.converged);
  CHECK(fit.max_gradient_norm < fit.gradient_tolerance);
  for (Index j = 0; j < 2; ++j) {
    const auto& c = fit.count_coefficients[static_cast<std::size_t>(j)];
    CHECK(within(c.estimate, beta[j], c.std_error));
  }
  CHECK(within(fit.theta, 1.2, fit.theta_std_error));
  CHECK(fit.n_params == 3);
  CHECK(fit.n_obs == 5000);

  // Log-link fits with an intercept reproduce the sample mean.
  const VectorXd mu = predict_mean(fit, d);
  double ybar = 0.0;
  for (auto y : d.y) ybar += static_cast<double>(y);
  ybar /= static_cast<double>(d.y.size());
  CHECK(std::fabs(mu.mean() / ybar - 1.0) < 0.005);
}

TEST_CASE("offset and covariate parameterizations agree") {
  Rng rng(5);
  DesignMatrix with_cov = normal_design(Family::NB, 3000, 1, rng);
  with_cov.X.conservativeResize(Eigen::NoChange, 3);
  with_cov.count_columns.push_back("log(aadt)");
  for (Index i = 0; i < with_cov.n(); ++i) with_cov.X(i, 2) = std::log(uniform(rng, 500.0, 20000.0));
  VectorXd beta(3);
  beta << -7.0, 0.3, 0.85;
  draw(with_cov, beta, 1.5, rng);

  DesignMatrix with_offset = with_cov;
  with_offset.offset = with_cov.X.col(2);

  const auto a = fit_nb(with_cov);
  const auto b = fit_nb(with_offset);
  REQUIRE(a.converged);
  REQUIRE(b.converged);
  CHECK(std::fabs((a.count_coefficients[2].estimate - b.count_coefficients[2].estimate) - 1.0) < 1e-6);
  CHECK(std::fabs(a.count_coefficients[0].estimate - b.count_coefficients[0].estimate) < 1e-6);
  CHECK(std::fabs(a.count_coefficients[1].estimate - b.count_coefficients[1].estimate) < 1e-6);
  CHECK(std::fabs(a.theta - b.theta) < 1e-6);
  CHECK(std::fabs(a.log_likelihood - b.log_likelihood) < 1e-6);
}

TEST_CASE("information criteria") {
  CHECK(aic(-100.0, 3) == 206.0);
  CHECK(bic(-100.0, 3, 1000) == 3.0 * std::log(1000.0) + 200.0);
  // 18 free parameters with LL −6835.3 against a published AIC of 13707.0.
  CHECK(aic(-6835.3, 18) == doctest::Approx(13706.6).epsilon(1e-12));
  CHECK(std::fabs(aic(-6835.3, 18) - 13707.0) < 0.5);

  FitResult f;
  f.log_likelihood = -50.0;
  f.n_params = 2;
  f.n_obs = 10;
  f.converged = false;
  f.finalize();
  CHECK(f.aic == 2.0 * 2 - 2.0 * -50.0);
  CHECK(f.bic == 2.0 * std::log(10.0) - 2.0 * -50.0);
  f.check_invariants();
  f.aic += 1e-9;
  CHECK_THROWS_AS(f.check_invariants(), ValidationError);
  f.finalize();
  f.converged = true;
  f.max_gradient_norm = 1.0;
  CHECK_THROWS_AS(f.check_invariants(), ValidationError);
}

TEST_CASE("analytic gradients match central differences") {
  Rng rng(99);
  DesignMatrix nb = normal_design(Family::NB, 300, 2, rng);
  VectorXd b(3);
  b << 0.3, 0.4, -0.2;
  draw(nb, b, 1.0, rng);

  DesignMatrix zi = normal_design(Family::ZINB, 300, 2, rng);
  add_zero_part(zi, rng);
  VectorXd g(2);
  g << -0.5, 0.8;
  draw(zi, b, 1.0, rng, g);

  DesignMatrix gl = normal_design(Family::GLMM_NB, 300, 2, rng);
  add_groups(gl, 12);
  draw(gl, b, 1.0, rng, {}, 0.5);

  for (const DesignMatrix* d : {&nb, &zi, &gl}) {
    const auto size = ParameterLayout::for_design(*d).size();
    double worst = 0.0;
    for (int r = 0; r < 20; ++r) {
      VectorXd x(size);
      for (Index j = 0; j < size; ++j) x[j] = uniform(rng, -1.0, 1.0);
      worst = std::max(worst, grad_rel_error(*d, x));
    }
    INFO("family " << to_string(d->family));
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("zinb nests nb") {
  Rng rng(3);
  for (int rep = 0; rep < 3; ++rep) {
    DesignMatrix d = normal_design(Family::ZINB, 5000, 1, rng);
    add_zero_part(d, rng);
    VectorXd beta(2);
    beta << 0.1, 0.5;
    draw(d, beta, 1.0, rng);  // pure NB
    DesignMatrix as_nb = d;
    as_nb.family = Family::NB;
    const auto n = fit_nb(as_nb);
    const auto z = fit_zinb(d);
    CHECK(z.log_likelihood >= n.log_likelihood - 1e-6);
    bool flagged = false;
    for (const auto& m : z.diagnostics) flagged |= m.find("zero-inflation unidentified") != std::string::npos;
    // Strongly negative: a baseline zero probability under 10%.
    INFO("zero part " << z.zero_coefficients[0].estimate << " se " << z.zero_coefficients[0].std_error << " slope " << z.zero_coefficients[1].estimate);
    CHECK((flagged || special::logistic(z.zero_coefficients[0].estimate) < 0.1));
    for (std::size_t j = 0; j < 2; ++j) {
      const auto& c = z.count_coefficients[j];
      CHECK(within(c.estimate, beta[static_cast<Index>(j)], c.std_error));
    }
  }
}

TEST_CASE("zinb recovers simulated parameters") {
  Rng rng(20240202);
  DesignMatrix d = normal_design(Family::ZINB, 8000, 1, rng);
  add_zero_part(d, rng);
  VectorXd beta(2), gamma(2);
  beta << 0.2, 0.6;
  gamma << -1.0, 1.0;
  draw(d, beta, 1.5, rng, gamma);
  const auto fit = fit_zinb(d);
  REQUIRE(fit.converged);
  for (Index j = 0; j < 2; ++j) {
    const auto& c = fit.count_coefficients[static_cast<std::size_t>(j)];
    CHECK(within(c.estimate, beta[j], c.std_error));
    const auto& z = fit.zero_coefficients[static_cast<std::size_t>(j)];
    CHECK(within(z.estimate, gamma[j], z.std_error));
  }
  CHECK(within(fit.theta, 1.5, fit.theta_std_error));
  CHECK(fit.n_params == 5);

  const VectorXd w = zero_probabilities(fit, d);
  const VectorXd mu = predict_mean(fit, d);
  const VectorXd eta = linear_predictor(fit, d);
  for (Index i = 0; i < 10; ++i) CHECK(mu[i] == doctest::Approx((1.0 - w[i]) * std::exp(eta[i])).epsilon(1e-14));
}

TEST_CASE("glmm without group variation") {
  Rng rng(20240203);
  DesignMatrix d = normal_design(Family::GLMM_NB, 20000, 1, rng);
  add_groups(d, 40);
  VectorXd beta(2);
  beta << -0.5, 0.4;
  draw(d, beta, 1.4, rng);
  const auto glmm = fit_glmm_nb(d);
  DesignMatrix as_nb = d;
  as_nb.family = Family::NB;
  const auto nb = fit_nb(as_nb);
  CHECK(glmm.random_intercept_sd < 0.05);
  for (std::size_t j = 0; j < 2; ++j) {
    CHECK(within(glmm.count_coefficients[j].estimate, nb.count_coefficients[j].estimate,
                 nb.count_coefficients[j].std_error));
  }
}

TEST_CASE("glmm recovers the group standard deviation") {
  Rng rng(20240204);
  DesignMatrix d = normal_design(Family::GLMM_NB, 6000, 1, rng);
  add_groups(d, 40);
  VectorXd beta(2);
  beta << -0.3, 0.5;
  draw(d, beta, 1.43, rng, {}, 0.5575);
  const auto fit = fit_glmm_nb(d);
  REQUIRE(fit.converged);
  CHECK(fit.quadrature_points == 15);
  CHECK(within(fit.random_intercept_sd, 0.5575, fit.random_intercept_sd_std_error));
  CHECK(within(fit.theta, 1.43, fit.theta_std_error));
  CHECK(within(fit.count_coefficients[1].estimate, 0.5, fit.count_coefficients[1].std_error));
  CHECK(fit.n_params == 4);

  OptimizerConfig cfg;
  cfg.quadrature_points = 25;
  const auto fine = fit_glmm_nb(d, cfg);
  CHECK(std::fabs(fine.log_likelihood - fit.log_likelihood) < 1e-4);

  // Fixed effects only.
  const VectorXd mu = predict_mean(fit, d);
  CHECK(mu[0] == doctest::Approx(std::exp(fit.count_coefficients[0].estimate +
                                          fit.count_coefficients[1].estimate * d.X(0, 1)))
                     .epsilon(1e-14));
}

TEST_CASE("glmm needs two groups") {
  Rng rng(1);
  DesignMatrix d = normal_design(Family::GLMM_NB, 100, 1, rng);
  add_groups(d, 1);
  draw(d, VectorXd::Zero(2), 1.0, rng);
  CHECK_THROWS_AS(fit_glmm_nb(d), ValidationError);
}

TEST_CASE("predict_mean with zero coefficients") {
  Rng rng(2);
  DesignMatrix d = normal_design(Family::NB, 20, 2, rng);
  FitResult f;
  f.family = Family::NB;
  for (const auto& c : d.count_columns) f.count_coefficients.push_back({c, 0.0, 0.1, 0.0, 1.0});
  f.theta = 1.0;
  const VectorXd mu = predict_mean(f, d);
  for (Index i = 0; i < mu.size(); ++i) CHECK(mu[i] == 1.0);

  f.count_coefficients[1].name = "other";
  CHECK_THROWS_AS(predict_mean(f, d), SchemaError);
}

TEST_CASE("deviance residuals") {
  DesignMatrix d;
  d.family = Family::NB;
  d.X = MatrixXd::Ones(2, 1);
  d.offset = VectorXd::Zero(2);
  d.offset[1] = std::log(3.0);
  d.y = {0, 3};
  d.count_columns = {"(Intercept)"};
  FitResult f;
  f.family = Family::NB;
  f.count_coefficients = {{"(Intercept)", 0.0, 0.1, 0.0, 1.0}};
  f.theta = 1.0;
  const VectorXd r = deviance_residuals(f, d);
  CHECK(r[0] == doctest::Approx(-std::sqrt(2.0 * std::log(2.0))).epsilon(1e-14));
  CHECK(std::fabs(r[0] + 1.1774) < 1e-4);
  CHECK(r[1] == 0.0);

  Rng rng(8);
  DesignMatrix big = normal_design(Family::NB, 2000, 1, rng);
  VectorXd beta(2);
  beta << 0.0, 0.7;
  draw(big, beta, 0.9, rng);
  const auto fit = fit_nb(big);
  const VectorXd res = deviance_residuals(fit, big);
  CHECK(res.allFinite());
  CHECK(std::fabs(res.squaredNorm() - nb_deviance(fit, big)) < 1e-6);
}

TEST_CASE("vuong test") {
  Rng rng(20240205);
  DesignMatrix d = normal_design(Family::ZINB, 5000, 1, rng);
  add_zero_part(d, rng);
  VectorXd beta(2), gamma(2);
  beta << 0.5, 0.5;
  gamma << std::log(0.4 / 0.6), 0.0;  // w = 0.4
  draw(d, beta, 1.2, rng, gamma);
  DesignMatrix as_nb = d;
  as_nb.family = Family::NB;
  const auto z = fit_zinb(d);
  const auto n = fit_nb(as_nb);

  CHECK_THROWS_AS(vuong_test(n, as_nb, n, as_nb), DegenerateComparisonError);
  const auto v = vuong_test(z, d, n, as_nb);
  CHECK(v.statistic > 0.0);
  CHECK(v.p_value < 0.05);
  const auto flipped = vuong_test(n, as_nb, z, d);
  CHECK(flipped.statistic == doctest::Approx(-v.statistic).epsilon(1e-12));

  // Oracle for the statistic from the pointwise contributions.
  const VectorXd m = pointwise_log_likelihood(z, d) - pointwise_log_likelihood(n, as_nb);
  const double mean = m.mean();
  const double sd = std::sqrt((m.array() - mean).square().sum() / static_cast<double>(m.size() - 1));
  CHECK(v.statistic == doctest::Approx(std::sqrt(static_cast<double>(m.size())) * mean / sd).epsilon(1e-12));
  CHECK(std::fabs(m.sum() - (z.log_likelihood - n.log_likelihood)) < 1e-6);
}

TEST_CASE("vuong test on pure nb data is rarely significant") {
  Rng rng(20240206);
  int significant = 0;
  const int reps = 50;
  for (int rep = 0; rep < reps; ++rep) {
    DesignMatrix d = normal_design(Family::ZINB, 5000, 1, rng);
    add_zero_part(d, rng);
    VectorXd beta(2);
    beta << 0.3, 0.5;
    draw(d, beta, 1.2, rng);
    DesignMatrix as_nb = d;
    as_nb.family = Family::NB;
    const auto z = fit_zinb(d);
    const auto n = fit_nb(as_nb);
    try {
      if (vuong_test(z, d, n, as_nb).p_value < 0.05) ++significant;
    } catch (const DegenerateComparisonError&) {
      // Identical fits: not significant.
    }
  }
  CHECK(significant <= reps / 10);
}

TEST_CASE("fit result json round trip and determinism") {
  Rng rng(4);
  DesignMatrix d = normal_design(Family::ZINB, 1500, 1, rng);
  add_zero_part(d, rng);
  VectorXd beta(2), gamma(2);
  beta << 0.2, 0.6;
  gamma << -1.0, 1.0;
  draw(d, beta, 1.5, rng, gamma);
  const auto a = fit_zinb(d);
  const auto b = fit_zinb(d);
  CHECK(a == b);
  const auto back = fit_result_from_json(nlohmann::json::parse(to_json(a).dump()));
  CHECK(back == a);

  auto j = to_json(a);
  j["schema_version"] = 99;
  CHECK_THROWS_AS(fit_result_from_json(j), ValidationError);
  j = to_json(a);
  j["aic"] = a.aic + 1.0;
  CHECK_THROWS_AS(fit_result_from_json(j), ValidationError);
}

TEST_CASE("design problems are reported by column") {
  Rng rng(6);
  DesignMatrix d = normal_design(Family::NB, 200, 2, rng);
  draw(d, VectorXd::Zero(3), 1.0, rng);
  d.X.col(2) = 2.0 * d.X.col(1);
  try {
    fit_nb(d);
    FAIL("expected NumericalError");
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    CHECK((msg.find("x1") != std::string::npos || msg.find("x2") != std::string::npos));
  }
  d.X.col(2).setConstant(4.0);
  CHECK_THROWS_AS(fit_nb(d), ValidationError);

  DesignMatrix tiny = normal_design(Family::NB, 2, 2, rng);
  CHECK_THROWS_AS(fit_nb(tiny), ValidationError);
}

TEST_CASE("non-convergence is reported, not hidden") {
  Rng rng(7);
  DesignMatrix d = normal_design(Family::NB, 500, 1, rng);
  VectorXd beta(2);
  beta << 0.5, 0.5;
  draw(d, beta, 1.0, rng);
  OptimizerConfig cfg;
  cfg.max_iterations = 1;
  cfg.gradient_tolerance = 1e-14;
  const auto fit = fit_nb(d, cfg);
  CHECK_FALSE(fit.converged);
  CHECK_FALSE(fit.diagnostics.empty());
}

TEST_CASE("gauss-hermite rules integrate polynomials exactly") {
  for (int n : {1, 5, 15, 25}) {
    const auto rule = gauss_hermite(n);
    REQUIRE(rule.nodes.size() == static_cast<std::size_t>(n));
    if (n % 2 == 1) CHECK(rule.nodes[static_cast<std::size_t>(n / 2)] == 0.0);
    for (int k = 0; 2 * k <= 2 * n - 1; ++k) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += rule.weights[static_cast<std::size_t>(i)] * std::pow(rule.nodes[static_cast<std::size_t>(i)], 2 * k);
      // ∫ x^{2k} e^{-x²} dx = Γ(k + 1/2); node round-off grows with the power.
      CHECK(s == doctest::Approx(std::tgamma(k + 0.5)).epsilon(1e-8));
    }
  }
}

TEST_CASE("estimates tighten as the sample grows") {
  auto rmse = [](Family family, Index n, std::uint64_t seed) {
    Rng rng(seed);
    double sq = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
      DesignMatrix d = normal_design(family, n, 1, rng);
      VectorXd beta(2);
      beta << 0.2, 0.5;
      VectorXd gamma;
      double sd = 0.0;
      if (family == Family::ZINB) {
        add_zero_part(d, rng);
        gamma = VectorXd(2);
        gamma << -1.0, 1.0;
      }
      if (family == Family::GLMM_NB) {
        add_groups(d, 20);
        sd = 0.4;
      }
      draw(d, beta, 1.2, rng, gamma, sd);
      const auto r = countfit::fit(d);
      sq += std::pow(r.count_coefficients[1].estimate - 0.5, 2);
    }
    return std::sqrt(sq / 20.0);
  };
  for (Family f : {Family::NB, Family::ZINB, Family::GLMM_NB}) {
    INFO("family " << to_string(f));
    CHECK(rmse(f, 16000, 77) < rmse(f, 1000, 78));
  }
}

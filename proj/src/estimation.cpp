#include "countfit/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "countfit/errors.hpp"
#include "countfit/likelihood.hpp"
#include "countfit/special_functions.hpp"

namespace countfit {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kZeroInflationUnidentified = 1e-4;  // max ŵ below this flags the zero part
constexpr double kSigmaBoundary = 1e-3;

double max_abs(const Eigen::VectorXd& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

void validate_columns(const Eigen::MatrixXd& M, const std::vector<std::string>& names,
                      std::string_view part) {
  const auto n = M.rows();
  if (n <= M.cols()) {
    throw ValidationError("need more observations than " + std::string(part) +
                          " parameters (n = " + std::to_string(n) + ")");
  }
  for (Eigen::Index c = 1; c < M.cols(); ++c) {
    const auto col = M.col(c);
    const double mean = col.mean();
    if ((col.array() - mean).abs().maxCoeff() == 0.0) {
      throw ValidationError(std::string(part) + " column '" + names[static_cast<std::size_t>(c)] +
                            "' has zero variance");
    }
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(M);
  qr.setThreshold(1e-10);
  if (qr.rank() < M.cols()) {
    std::string cols;
    for (Eigen::Index k = qr.rank(); k < M.cols(); ++k) {
      if (!cols.empty()) cols += ", ";
      cols += "'" + names[static_cast<std::size_t>(qr.colsPermutation().indices()[k])] + "'";
    }
    throw NumericalError("singular information matrix: " + std::string(part) +
                         " design is rank deficient; collinear column(s) " + cols);
  }
}

// Two Poisson IRLS passes from μ = y + 0.1.
Eigen::VectorXd poisson_start(const DesignMatrix& d) {
  const auto n = d.n();
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) y[i] = static_cast<double>(d.y[static_cast<std::size_t>(i)]);
  Eigen::VectorXd mu = y.array() + 0.1;
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(d.X.cols());
  for (int pass = 0; pass < 2; ++pass) {
    const Eigen::VectorXd eta = mu.array().log();
    const Eigen::VectorXd z = eta - d.offset + ((y - mu).array() / mu.array()).matrix();
    const Eigen::MatrixXd XtW = d.X.transpose() * mu.asDiagonal();
    const Eigen::VectorXd b = (XtW * d.X).ldlt().solve(XtW * z);
    if (!b.allFinite()) break;
    beta = b;
    mu = (d.X * beta + d.offset).array().exp();
  }
  if (!beta.allFinite() || beta.isZero()) {
    beta.setZero();
    const double ybar = std::max(y.mean(), 1e-3);
    beta[0] = std::log(ybar) - std::log(d.offset.array().exp().mean());
  }
  return beta;
}

DesignMatrix as_family(const DesignMatrix& d, Family f) {
  DesignMatrix out = d;
  out.family = f;
  if (f != Family::ZINB) {
    out.Z.resize(d.n(), 0);
    out.zero_columns.clear();
  }
  return out;
}

Coefficient make_coefficient(std::string name, double estimate, double se) {
  Coefficient c;
  c.name = std::move(name);
  c.estimate = estimate;
  c.std_error = se;
  if (std::isfinite(se) && se > 0.0) {
    c.z = estimate / se;
    c.p_value = special::two_sided_normal_p(c.z);
  } else {
    c.z = kNaN;
    c.p_value = kNaN;
  }
  return c;
}

std::string offending_parameters(const Eigen::MatrixXd& info, const std::vector<std::string>& names) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
  const Eigen::VectorXd v = eig.eigenvectors().col(0);
  std::string out;
  for (Eigen::Index j = 0; j < v.size(); ++j) {
    if (std::fabs(v[j]) > 0.3) {
      if (!out.empty()) out += ", ";
      out += "'" + names[static_cast<std::size_t>(j)] + "'";
    }
  }
  return out;
}

// Covariance from the observed information; parameters listed in
// `boundary` are dropped (NaN standard errors) when the full matrix is
// not positive definite.
std::optional<Eigen::MatrixXd> covariance(const Eigen::MatrixXd& info,
                                          const std::vector<Eigen::Index>& boundary,
                                          std::vector<std::string>& notes) {
  const auto P = info.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  if (llt.info() == Eigen::Success && info.allFinite()) {
    return llt.solve(Eigen::MatrixXd::Identity(P, P));
  }
  if (boundary.empty()) return std::nullopt;
  std::vector<Eigen::Index> keep;
  for (Eigen::Index j = 0; j < P; ++j) {
    if (std::find(boundary.begin(), boundary.end(), j) == boundary.end()) keep.push_back(j);
  }
  Eigen::MatrixXd sub(keep.size(), keep.size());
  for (std::size_t a = 0; a < keep.size(); ++a) {
    for (std::size_t b = 0; b < keep.size(); ++b) sub(a, b) = info(keep[a], keep[b]);
  }
  Eigen::LLT<Eigen::MatrixXd> sub_llt(sub);
  if (sub_llt.info() != Eigen::Success || !sub.allFinite()) return std::nullopt;
  const Eigen::MatrixXd sub_cov =
      sub_llt.solve(Eigen::MatrixXd::Identity(sub.rows(), sub.cols()));
  Eigen::MatrixXd cov = Eigen::MatrixXd::Constant(P, P, kNaN);
  for (std::size_t a = 0; a < keep.size(); ++a) {
    for (std::size_t b = 0; b < keep.size(); ++b) cov(keep[a], keep[b]) = sub_cov(a, b);
  }
  notes.emplace_back("standard errors of boundary parameters are not identified");
  return cov;
}

struct FitContext {
  const DesignMatrix& design;
  const OptimizerConfig& cfg;
  ParameterLayout layout;
  const LogLikelihood& ll;
};

FitResult assemble(const FitContext& ctx, const OptimizationResult& res,
                   std::vector<Eigen::Index> boundary, std::vector<std::string> notes) {
  const auto& layout = ctx.layout;
  const auto& d = ctx.design;
  const auto names = layout.names(d);
  const ObjectiveFn f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) { return ctx.ll(x, g); };

  FitResult out;
  out.family = d.family;
  out.log_likelihood = res.value;
  out.n_obs = static_cast<long>(d.n());
  out.n_params = static_cast<long>(layout.size());
  out.iterations = res.iterations;
  out.max_gradient_norm = max_abs(res.gradient);
  out.gradient_tolerance = ctx.cfg.gradient_tolerance;
  out.quadrature_points = d.family == Family::GLMM_NB ? ctx.cfg.quadrature_points : 0;
  out.data_checksum = d.data_checksum;
  out.converged = res.converged;
  out.diagnostics = std::move(notes);
  if (!res.converged) out.diagnostics.push_back("optimizer: " + res.message);

  const Eigen::MatrixXd H = numerical_hessian(f, res.x);
  const Eigen::MatrixXd info = -H;
  auto cov = covariance(info, boundary, out.diagnostics);
  if (!cov && d.family == Family::ZINB && boundary.empty()) {
    // A zero part that has drifted to a flat ridge is reported, not fatal.
    std::vector<Eigen::Index> zero_part;
    for (Eigen::Index j = 0; j < layout.n_zero; ++j) zero_part.push_back(layout.zero_begin() + j);
    cov = covariance(info, zero_part, out.diagnostics);
    if (cov) {
      out.diagnostics.push_back("zero-inflation weakly identified: information matrix singular in " +
                                offending_parameters(info, names));
    }
  }
  if (!cov) {
    const auto who = info.allFinite() ? offending_parameters(info, names) : std::string("(non-finite)");
    if (d.family != Family::GLMM_NB) {
      throw NumericalError("singular information matrix at the optimum; check parameter(s) " +
                           who);
    }
    out.converged = false;
    out.diagnostics.push_back("information matrix not positive definite; weakly identified: " +
                              who);
    cov = Eigen::MatrixXd::Constant(layout.size(), layout.size(), kNaN);
  }
  const Eigen::VectorXd se = cov->diagonal().array().sqrt();

  for (Eigen::Index j = 0; j < layout.n_count; ++j) {
    out.count_coefficients.push_back(
        make_coefficient(d.count_columns[static_cast<std::size_t>(j)], res.x[j], se[j]));
  }
  for (Eigen::Index j = 0; j < layout.n_zero; ++j) {
    const auto k = layout.zero_begin() + j;
    out.zero_coefficients.push_back(
        make_coefficient(d.zero_columns[static_cast<std::size_t>(j)], res.x[k], se[k]));
  }
  out.theta = std::exp(res.x[layout.log_theta()]);
  out.theta_std_error = out.theta * se[layout.log_theta()];
  if (layout.has_sigma()) {
    out.random_intercept_sd = std::exp(res.x[layout.log_sigma()]);
    out.random_intercept_sd_std_error = out.random_intercept_sd * se[layout.log_sigma()];
  }
  out.finalize();
  return out;
}

OptimizationResult optimize(const LogLikelihood& ll, const Eigen::VectorXd& x0,
                            const OptimizerConfig& cfg) {
  const ObjectiveFn f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) { return ll(x, g); };
  auto res = maximize_bfgs(f, x0, cfg);
  if (!res.converged && std::isfinite(res.value)) res = newton_polish(f, std::move(res), cfg);
  return res;
}

}  // namespace

// ---------------------------------------------------------------------------

double aic(double log_likelihood, long n_params) {
  return 2.0 * static_cast<double>(n_params) - 2.0 * log_likelihood;
}

double bic(double log_likelihood, long n_params, long n_obs) {
  return static_cast<double>(n_params) * std::log(static_cast<double>(n_obs)) -
         2.0 * log_likelihood;
}

void FitResult::finalize() {
  aic = countfit::aic(log_likelihood, n_params);
  bic = countfit::bic(log_likelihood, n_params, n_obs);
}

void FitResult::check_invariants() const {
  if (aic != countfit::aic(log_likelihood, n_params)) {
    throw ValidationError("fit result: aic != 2k - 2LL");
  }
  if (bic != countfit::bic(log_likelihood, n_params, n_obs)) {
    throw ValidationError("fit result: bic != k ln n - 2LL");
  }
  if (converged && !(max_gradient_norm < gradient_tolerance)) {
    throw ValidationError("fit result: converged but gradient norm exceeds tolerance");
  }
}

Eigen::VectorXd FitResult::count_estimates() const {
  Eigen::VectorXd b(static_cast<Eigen::Index>(count_coefficients.size()));
  for (std::size_t j = 0; j < count_coefficients.size(); ++j) {
    b[static_cast<Eigen::Index>(j)] = count_coefficients[j].estimate;
  }
  return b;
}

Eigen::VectorXd FitResult::zero_estimates() const {
  Eigen::VectorXd g(static_cast<Eigen::Index>(zero_coefficients.size()));
  for (std::size_t j = 0; j < zero_coefficients.size(); ++j) {
    g[static_cast<Eigen::Index>(j)] = zero_coefficients[j].estimate;
  }
  return g;
}

FitResult fit_nb(const DesignMatrix& design, const OptimizerConfig& cfg) {
  cfg.validate();
  const DesignMatrix d = design.family == Family::NB ? design : as_family(design, Family::NB);
  validate_columns(d.X, d.count_columns, "count");

  const LogLikelihood ll(d);
  const auto layout = ll.layout();
  Eigen::VectorXd x0(layout.size());
  x0.head(layout.n_count) = poisson_start(d);
  x0[layout.log_theta()] = 0.0;

  const auto res = optimize(ll, x0, cfg);
  auto out = assemble({d, cfg, layout, ll}, res, {}, {});
  return out;
}

FitResult fit_zinb(const DesignMatrix& design, const OptimizerConfig& cfg) {
  cfg.validate();
  if (design.family != Family::ZINB || design.Z.cols() == 0) {
    throw ValidationError("fit_zinb needs a design built for the zinb family");
  }
  validate_columns(design.Z, design.zero_columns, "zero");

  const auto nb = fit_nb(design, cfg);
  const LogLikelihood ll(design);
  const auto layout = ll.layout();

  // Excess zeros over what the NB fit predicts.
  const Eigen::VectorXd eta = design.X * nb.count_estimates() + design.offset;
  double expected_zeros = 0.0;
  long observed_zeros = 0;
  for (Eigen::Index i = 0; i < design.n(); ++i) {
    expected_zeros += std::exp(nb_point(0, eta[i], nb.theta).log_p);
    if (design.y[static_cast<std::size_t>(i)] == 0) ++observed_zeros;
  }
  const double excess =
      (static_cast<double>(observed_zeros) - expected_zeros) / static_cast<double>(design.n());
  const double start_w = std::max(0.05, excess);

  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(layout.size());
  x0.head(layout.n_count) = nb.count_estimates();
  x0[layout.zero_begin()] = std::log(start_w / (1.0 - start_w));
  x0[layout.log_theta()] = std::log(nb.theta);

  auto res = optimize(ll, x0, cfg);

  // NB is nested at w ≡ 0: never return less than the NB likelihood.
  Eigen::VectorXd nested = x0;
  nested[layout.zero_begin()] = -30.0;
  const double nested_ll = ll.value(nested);
  std::vector<std::string> notes;
  if (!(res.value >= nested_ll - 1e-9)) {
    auto retry = optimize(ll, nested, cfg);
    if (retry.value > res.value || !std::isfinite(res.value)) {
      res = std::move(retry);
      notes.emplace_back("restarted from the nested NB solution");
    }
  }

  const Eigen::VectorXd w =
      (design.Z * res.x.segment(layout.zero_begin(), layout.n_zero)).unaryExpr(
          [](double z) { return special::logistic(z); });
  std::vector<Eigen::Index> boundary;
  if (w.maxCoeff() < kZeroInflationUnidentified) {
    notes.emplace_back("zero-inflation unidentified: fitted zero probability ~0 everywhere");
    for (Eigen::Index j = 0; j < layout.n_zero; ++j) boundary.push_back(layout.zero_begin() + j);
  }
  auto out = assemble({design, cfg, layout, ll}, res, boundary, std::move(notes));
  return out;
}

FitResult fit_glmm_nb(const DesignMatrix& design, const OptimizerConfig& cfg) {
  cfg.validate();
  if (design.family != Family::GLMM_NB) {
    throw ValidationError("fit_glmm_nb needs a design built for the glmm_nb family");
  }
  if (design.group_names.size() < 2) {
    throw ValidationError("glmm_nb needs at least two groups");
  }
  const auto nb = fit_nb(design, cfg);
  const LogLikelihood ll(design, cfg.quadrature_points);
  const auto layout = ll.layout();

  Eigen::VectorXd x0(layout.size());
  x0.head(layout.n_count) = nb.count_estimates();
  x0[layout.log_theta()] = std::log(nb.theta);
  x0[layout.log_sigma()] = std::log(0.3);

  const auto res = optimize(ll, x0, cfg);
  std::vector<Eigen::Index> boundary;
  std::vector<std::string> notes;
  if (std::exp(res.x[layout.log_sigma()]) < kSigmaBoundary) {
    notes.emplace_back("random-intercept standard deviation at the zero boundary");
    boundary.push_back(layout.log_sigma());
  }
  try {
    return assemble({design, cfg, layout, ll}, res, boundary, std::move(notes));
  } catch (const NumericalError& e) {
    // Unreachable for GLMM (assemble degrades instead), kept for safety of the contract.
    FitResult out;
    out.family = Family::GLMM_NB;
    out.converged = false;
    out.diagnostics.emplace_back(e.what());
    out.finalize();
    return out;
  }
}

FitResult fit(const DesignMatrix& design, const OptimizerConfig& cfg) {
  switch (design.family) {
    case Family::NB: return fit_nb(design, cfg);
    case Family::ZINB: return fit_zinb(design, cfg);
    case Family::GLMM_NB: return fit_glmm_nb(design, cfg);
  }
  throw ValidationError("unknown family");
}

FitResult fit_model(const std::vector<SectionRecord>& records, const ModelSpec& spec,
                    const OptimizerConfig& cfg) {
  auto result = fit(build_design(records, spec), cfg);
  result.model_spec = spec;
  return result;
}

// ---------------------------------------------------------------------------
// Post-fit quantities

Eigen::VectorXd parameter_vector(const FitResult& fit) {
  const auto p = static_cast<Eigen::Index>(fit.count_coefficients.size());
  const auto q = static_cast<Eigen::Index>(fit.zero_coefficients.size());
  const bool sigma = fit.family == Family::GLMM_NB;
  Eigen::VectorXd x(p + q + 1 + (sigma ? 1 : 0));
  x.head(p) = fit.count_estimates();
  x.segment(p, q) = fit.zero_estimates();
  x[p + q] = std::log(fit.theta);
  if (sigma) x[p + q + 1] = std::log(fit.random_intercept_sd);
  return x;
}

namespace {

void check_columns(const std::vector<Coefficient>& coefs, const std::vector<std::string>& columns,
                   std::string_view part) {
  bool ok = coefs.size() == columns.size();
  for (std::size_t j = 0; ok && j < coefs.size(); ++j) ok = coefs[j].name == columns[j];
  if (!ok) {
    throw SchemaError(std::string(part) +
                      " design columns do not match the fitted coefficient names");
  }
}

}  // namespace

Eigen::VectorXd linear_predictor(const FitResult& fit, const DesignMatrix& design) {
  check_columns(fit.count_coefficients, design.count_columns, "count");
  return design.X * fit.count_estimates() + design.offset;
}

Eigen::VectorXd zero_probabilities(const FitResult& fit, const DesignMatrix& design) {
  if (fit.family != Family::ZINB) return Eigen::VectorXd::Zero(design.n());
  check_columns(fit.zero_coefficients, design.zero_columns, "zero");
  return (design.Z * fit.zero_estimates()).unaryExpr([](double z) { return special::logistic(z); });
}

Eigen::VectorXd predict_mean(const FitResult& fit, const DesignMatrix& design) {
  Eigen::VectorXd mu = linear_predictor(fit, design).array().exp();
  if (fit.family == Family::ZINB) {
    const Eigen::VectorXd w = zero_probabilities(fit, design);
    mu = mu.cwiseProduct((1.0 - w.array()).matrix());
  }
  return mu;
}

Eigen::VectorXd deviance_residuals(const FitResult& fit, const DesignMatrix& design) {
  if (fit.family == Family::ZINB) {
    throw ValidationError("deviance residuals are defined for NB-family fits only");
  }
  const Eigen::VectorXd mu = predict_mean(fit, design);
  const double theta = fit.theta;
  Eigen::VectorXd d(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    const double y = static_cast<double>(design.y[static_cast<std::size_t>(i)]);
    const double m = mu[i];
    const double first = y > 0.0 ? y * std::log(y / m) : 0.0;
    const double dev = std::max(0.0, 2.0 * (first - (y + theta) * std::log((y + theta) / (m + theta))));
    const double sign = y > m ? 1.0 : (y < m ? -1.0 : 0.0);
    d[i] = sign * std::sqrt(dev);
  }
  return d;
}

double nb_deviance(const FitResult& fit, const DesignMatrix& design) {
  const Eigen::VectorXd eta = linear_predictor(fit, design);
  double total = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const auto y = design.y[static_cast<std::size_t>(i)];
    const double saturated_mu = std::max(static_cast<double>(y), 1e-10);
    total += nb_point(y, std::log(saturated_mu), fit.theta).log_p -
             nb_point(y, eta[i], fit.theta).log_p;
  }
  return 2.0 * total;
}

Eigen::VectorXd pointwise_log_likelihood(const FitResult& fit, const DesignMatrix& design) {
  if (fit.family == Family::GLMM_NB) {
    throw ValidationError("pointwise log-likelihood is not defined for glmm_nb fits");
  }
  if (design.family != fit.family) {
    throw ValidationError("design family does not match the fit family");
  }
  check_columns(fit.count_coefficients, design.count_columns, "count");
  if (fit.family == Family::ZINB) check_columns(fit.zero_coefficients, design.zero_columns, "zero");
  const LogLikelihood ll(design);
  return ll.pointwise(parameter_vector(fit));
}

VuongResult vuong_test(const FitResult& a, const DesignMatrix& design_a, const FitResult& b,
                       const DesignMatrix& design_b) {
  if (design_a.y != design_b.y || design_a.data_checksum != design_b.data_checksum) {
    throw ValidationError("Vuong test needs both fits on the identical dataset");
  }
  const Eigen::VectorXd m =
      pointwise_log_likelihood(a, design_a) - pointwise_log_likelihood(b, design_b);
  const auto n = static_cast<double>(m.size());
  const double mean = m.mean();
  const double sd = std::sqrt((m.array() - mean).square().sum() / (n - 1.0));
  if (!(sd > 0.0) || !std::isfinite(sd)) {
    throw DegenerateComparisonError(
        "Vuong test is degenerate: pointwise log-likelihoods of the two models are identical");
  }
  VuongResult r;
  r.statistic = std::sqrt(n) * mean / sd;
  r.p_value = special::two_sided_normal_p(r.statistic);
  return r;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double num_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return kNaN;
  return j.at(key).get<double>();
}

nlohmann::json coefs_to_json(const std::vector<Coefficient>& coefs) {
  auto arr = nlohmann::json::array();
  for (const auto& c : coefs) {
    arr.push_back({{"name", c.name},
                   {"estimate", num(c.estimate)},
                   {"std_error", num(c.std_error)},
                   {"z", num(c.z)},
                   {"p_value", num(c.p_value)}});
  }
  return arr;
}

std::vector<Coefficient> coefs_from_json(const nlohmann::json& arr) {
  std::vector<Coefficient> out;
  for (const auto& c : arr) {
    Coefficient k;
    k.name = c.at("name").get<std::string>();
    k.estimate = num_from(c, "estimate");
    k.std_error = num_from(c, "std_error");
    k.z = num_from(c, "z");
    k.p_value = num_from(c, "p_value");
    out.push_back(std::move(k));
  }
  return out;
}

}  // namespace

nlohmann::json to_json(const FitResult& fit) {
  nlohmann::json j;
  j["schema_version"] = kFitSchemaVersion;
  j["family"] = std::string(to_string(fit.family));
  j["count_coefficients"] = coefs_to_json(fit.count_coefficients);
  j["zero_coefficients"] = coefs_to_json(fit.zero_coefficients);
  j["theta"] = num(fit.theta);
  j["theta_std_error"] = num(fit.theta_std_error);
  j["random_intercept_sd"] = num(fit.random_intercept_sd);
  j["random_intercept_sd_std_error"] = num(fit.random_intercept_sd_std_error);
  j["log_likelihood"] = num(fit.log_likelihood);
  j["aic"] = num(fit.aic);
  j["bic"] = num(fit.bic);
  j["n_obs"] = fit.n_obs;
  j["n_params"] = fit.n_params;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  j["max_gradient_norm"] = num(fit.max_gradient_norm);
  j["gradient_tolerance"] = fit.gradient_tolerance;
  j["quadrature_points"] = fit.quadrature_points;
  j["diagnostics"] = fit.diagnostics;
  j["model_spec"] = to_json(fit.model_spec);
  j["data_checksum"] = fit.data_checksum;
  return j;
}

FitResult fit_result_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("fit result must be a JSON object");
  const int version = j.value("schema_version", 0);
  if (version != kFitSchemaVersion) {
    throw ValidationError("unsupported fit result schema_version " + std::to_string(version));
  }
  FitResult fit;
  fit.family = family_from_string(j.at("family").get<std::string>());
  fit.count_coefficients = coefs_from_json(j.at("count_coefficients"));
  fit.zero_coefficients = coefs_from_json(j.value("zero_coefficients", nlohmann::json::array()));
  fit.theta = num_from(j, "theta");
  fit.theta_std_error = num_from(j, "theta_std_error");
  fit.random_intercept_sd = num_from(j, "random_intercept_sd");
  fit.random_intercept_sd_std_error = num_from(j, "random_intercept_sd_std_error");
  fit.log_likelihood = num_from(j, "log_likelihood");
  fit.aic = num_from(j, "aic");
  fit.bic = num_from(j, "bic");
  fit.n_obs = j.at("n_obs").get<long>();
  fit.n_params = j.at("n_params").get<long>();
  fit.converged = j.at("converged").get<bool>();
  fit.iterations = j.value("iterations", 0);
  fit.max_gradient_norm = num_from(j, "max_gradient_norm");
  fit.gradient_tolerance = j.value("gradient_tolerance", 1e-6);
  fit.quadrature_points = j.value("quadrature_points", 0);
  fit.diagnostics = j.value("diagnostics", std::vector<std::string>{});
  fit.model_spec = model_spec_from_json(j.at("model_spec"));
  fit.data_checksum = j.value("data_checksum", std::string());
  if (!(fit.theta > 0.0)) throw ValidationError("fit result has no positive theta");
  if (std::isfinite(fit.log_likelihood)) fit.check_invariants();
  return fit;
}

}  // namespace countfit

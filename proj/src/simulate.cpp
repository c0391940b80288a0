#include "countfit/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "countfit/distributions.hpp"
#include "countfit/errors.hpp"
#include "countfit/rng.hpp"
#include "countfit/special_functions.hpp"

namespace countfit {

namespace {

constexpr double kMaxSuperelevation = 0.08;
constexpr double kMaxFrictionDemand = 0.24;

std::string_view kind_name(CovariateGenerator::Kind k) {
  switch (k) {
    case CovariateGenerator::Kind::normal: return "normal";
    case CovariateGenerator::Kind::lognormal: return "lognormal";
    case CovariateGenerator::Kind::bernoulli: return "bernoulli";
    case CovariateGenerator::Kind::uniform: return "uniform";
    case CovariateGenerator::Kind::side_friction: return "side_friction";
  }
  return "normal";
}

CovariateGenerator::Kind kind_from_name(const std::string& s) {
  for (auto k : {CovariateGenerator::Kind::normal, CovariateGenerator::Kind::lognormal,
                 CovariateGenerator::Kind::bernoulli, CovariateGenerator::Kind::uniform,
                 CovariateGenerator::Kind::side_friction}) {
    if (kind_name(k) == s) return k;
  }
  throw ValidationError("unknown covariate generator '" + s + "'");
}

double draw(const CovariateGenerator& g, Rng& rng, Rng& speed_rng,
            const std::map<std::string, double>& so_far) {
  if (g.zero_prob > 0.0 && bernoulli(rng, g.zero_prob)) return 0.0;
  double v = 0.0;
  switch (g.kind) {
    case CovariateGenerator::Kind::normal: v = normal(rng, g.a, g.b); break;
    case CovariateGenerator::Kind::lognormal: v = std::exp(normal(rng, g.a, g.b)); break;
    case CovariateGenerator::Kind::bernoulli: v = bernoulli(rng, g.a) ? 1.0 : 0.0; break;
    case CovariateGenerator::Kind::uniform: v = uniform(rng, g.a, g.b); break;
    case CovariateGenerator::Kind::side_friction: {
      const double speed = mph_to_fps(uniform(speed_rng, g.a, g.b));
      const auto radius = curvature_to_radius(so_far.at(g.source));
      if (!radius) return 0.0;
      double v2 = speed * speed;
      const double gr = kGravityFtPerS2 * *radius;
      double e = std::min(kMaxSuperelevation, v2 / (2.0 * gr));
      if (v2 / gr - e > kMaxFrictionDemand) {
        e = kMaxSuperelevation;
        v2 = (kMaxFrictionDemand + e) * gr;
      }
      v = side_friction_demand(std::sqrt(v2), *radius, e);
      break;
    }
  }
  return std::min(v, g.upper);
}

double evaluate(const NamedValues& coefs, const SectionRecord& r) {
  double eta = 0.0;
  for (const auto& [name, beta] : coefs) {
    if (name == kInterceptName) {
      eta += beta;
    } else {
      const auto term = Term::parse(name);
      eta += beta * term.apply(field_value(r, term.covariate));
    }
  }
  return eta;
}

std::string group_label(int g) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "R%02d", g + 1);
  return buf;
}

nlohmann::json named_to_json(const NamedValues& v) {
  auto arr = nlohmann::json::array();
  for (const auto& [name, value] : v) arr.push_back({{"name", name}, {"value", value}});
  return arr;
}

NamedValues named_from_json(const nlohmann::json& j) {
  NamedValues out;
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) out.emplace_back(k, v.get<double>());
    return out;
  }
  for (const auto& e : j) out.emplace_back(e.at("name").get<std::string>(), e.at("value").get<double>());
  return out;
}

}  // namespace

void SimScenario::validate() const {
  if (n_sections <= 0) throw ValidationError("scenario n_sections must be positive");
  if (!(true_theta > 0.0) || !std::isfinite(true_theta)) {
    throw ValidationError("scenario true_theta must be positive");
  }
  if (true_random_sd < 0.0) throw ValidationError("scenario true_random_sd must be non-negative");
  if (n_groups < 1) throw ValidationError("scenario n_groups must be at least 1");
  if (family == Family::GLMM_NB && n_groups < 2) {
    throw ValidationError("glmm_nb scenario needs at least two groups");
  }
  if (family == Family::ZINB && true_zero_coefficients.empty()) {
    throw ValidationError("zinb scenario needs zero-part coefficients");
  }
  std::set<std::string> known = {"aadt", "length_miles", "years_observed"};
  for (const auto& [name, gen] : covariate_generators) {
    if (gen.kind == CovariateGenerator::Kind::side_friction && !known.contains(gen.source)) {
      throw ValidationError("side_friction covariate '" + name +
                            "' must follow its curvature source '" + gen.source + "'");
    }
    if (!known.insert(name).second) throw ValidationError("duplicate covariate '" + name + "'");
  }
  auto check = [&](const NamedValues& coefs, std::string_view part) {
    if (coefs.empty() || coefs.front().first != kInterceptName) {
      throw ValidationError(std::string(part) + " coefficients must start with " +
                            std::string(kInterceptName));
    }
    for (std::size_t j = 1; j < coefs.size(); ++j) {
      const auto term = Term::parse(coefs[j].first);
      if (!known.contains(term.covariate)) {
        throw ValidationError(std::string(part) + " coefficient '" + coefs[j].first +
                              "' names no generated covariate");
      }
    }
  };
  check(true_count_coefficients, "count");
  if (family == Family::ZINB) check(true_zero_coefficients, "zero");
  for (const auto& o : offset_terms) {
    if (!known.contains(o)) throw ValidationError("offset '" + o + "' names no field");
  }
}

ModelSpec SimScenario::suggested_spec() const {
  ModelSpec spec;
  spec.family = family;
  if (!fit_count_terms.empty()) {
    spec.count_terms = fit_count_terms;
  } else {
    for (std::size_t j = 1; j < true_count_coefficients.size(); ++j) {
      spec.count_terms.push_back(Term::parse(true_count_coefficients[j].first));
    }
  }
  if (family == Family::ZINB) {
    for (std::size_t j = 1; j < true_zero_coefficients.size(); ++j) {
      spec.zero_terms.push_back(Term::parse(true_zero_coefficients[j].first));
    }
  }
  spec.offset_terms = offset_terms;
  if (family == Family::GLMM_NB) spec.group_by = "route_id";
  return spec;
}

SimOutput generate(const SimScenario& s) {
  s.validate();
  SimOutput out;
  const auto n = s.n_sections;

  Rng exposure_rng(s.seed, stream_id("exposure"));
  Rng group_rng(s.seed, stream_id("group_effects"));
  Rng count_rng(s.seed, stream_id("counts"));
  std::vector<Rng> cov_rng;
  std::vector<Rng> speed_rng;
  for (const auto& [name, gen] : s.covariate_generators) {
    cov_rng.emplace_back(s.seed, stream_id("covariate:" + name));
    speed_rng.emplace_back(s.seed, stream_id("speed:" + name));
  }

  out.group_effects.assign(static_cast<std::size_t>(s.n_groups), 0.0);
  if (s.family == Family::GLMM_NB) {
    for (auto& u : out.group_effects) u = normal(group_rng, 0.0, s.true_random_sd);
  }

  out.records.reserve(static_cast<std::size_t>(n));
  long zeros = 0;
  double total = 0.0;
  for (long i = 0; i < n; ++i) {
    SectionRecord r;
    char id[24];
    std::snprintf(id, sizeof id, "S%06ld", i + 1);
    r.section_id = id;
    const int g = static_cast<int>((static_cast<long long>(i) * s.n_groups) / n);
    r.route_id = group_label(g);
    r.direction = Direction::both;
    r.aadt = std::exp(normal(exposure_rng, s.exposure.aadt_log_mean, s.exposure.aadt_log_sd));
    r.length_miles = s.exposure.length_miles;
    r.years_observed = s.exposure.years_observed;
    for (std::size_t c = 0; c < s.covariate_generators.size(); ++c) {
      const auto& [name, gen] = s.covariate_generators[c];
      r.covariates[name] = draw(gen, cov_rng[c], speed_rng[c], r.covariates);
    }

    double eta = evaluate(s.true_count_coefficients, r);
    for (const auto& o : s.offset_terms) eta += std::log(field_value(r, o));
    if (s.family == Family::GLMM_NB) eta += out.group_effects[static_cast<std::size_t>(g)];
    const NbParams nb(std::exp(eta), s.true_theta);
    if (s.family == Family::ZINB) {
      const double w = special::logistic(evaluate(s.true_zero_coefficients, r));
      r.crash_count = sample(ZinbParams(nb, w), count_rng);
    } else {
      r.crash_count = sample(nb, count_rng);
    }
    if (r.crash_count == 0) ++zeros;
    total += static_cast<double>(r.crash_count);
    out.records.push_back(std::move(r));
  }

  double u_mean = 0.0;
  for (double u : out.group_effects) u_mean += u;
  u_mean /= static_cast<double>(out.group_effects.size());
  double u_ss = 0.0;
  for (double u : out.group_effects) u_ss += (u - u_mean) * (u - u_mean);
  const double u_sd =
      out.group_effects.size() > 1 ? std::sqrt(u_ss / static_cast<double>(out.group_effects.size() - 1)) : 0.0;

  auto& m = out.manifest;
  m["schema_version"] = 1;
  m["scenario"] = to_json(s);
  m["seed"] = s.seed;
  m["n_sections"] = n;
  m["data_checksum"] = dataset_checksum(out.records);
  m["mean_count"] = total / static_cast<double>(n);
  m["zero_fraction"] = static_cast<double>(zeros) / static_cast<double>(n);
  if (s.family == Family::GLMM_NB) {
    m["group_effects"] = out.group_effects;
    m["empirical_group_sd"] = u_sd;
  }
  return out;
}

std::vector<std::int64_t> simulate_from_fit(const FitResult& fit, const DesignMatrix& design,
                                            std::uint64_t seed) {
  if (fit.family == Family::GLMM_NB) {
    throw ValidationError("simulate_from_fit supports nb and zinb fits");
  }
  const Eigen::VectorXd mu = linear_predictor(fit, design).array().exp();
  const Eigen::VectorXd w = zero_probabilities(fit, design);
  Rng rng(seed, stream_id("bootstrap"));
  std::vector<std::int64_t> y(static_cast<std::size_t>(design.n()));
  for (Eigen::Index i = 0; i < design.n(); ++i) {
    const NbParams nb(mu[i], fit.theta);
    y[static_cast<std::size_t>(i)] =
        fit.family == Family::ZINB ? sample(ZinbParams(nb, w[i]), rng) : sample(nb, rng);
  }
  return y;
}

// ---------------------------------------------------------------------------
// Shipped scenarios

namespace {

using Kind = CovariateGenerator::Kind;

CovariateGenerator gen(Kind k, double a, double b, double zero_prob = 0.0,
                       double upper = std::numeric_limits<double>::infinity(),
                       std::string source = {}) {
  return CovariateGenerator{k, a, b, zero_prob, upper, std::move(source)};
}

// Roadway covariates on Table-2-like scales: curvature in degrees (0-52),
// side friction demand, grade in percent, shoulder width in feet (0-18).
std::vector<std::pair<std::string, CovariateGenerator>> roadway_covariates() {
  return {
      {"curvature", gen(Kind::lognormal, 1.3, 1.0, 0.45, 52.0)},
      {"side_friction", gen(Kind::side_friction, 25.0, 60.0, 0.0,
                            std::numeric_limits<double>::infinity(), "curvature")},
      {"grade", gen(Kind::normal, 0.0, 2.0)},
      {"shoulder_width", gen(Kind::uniform, 0.0, 18.0)},
  };
}

std::map<std::string, SimScenario> build_defaults() {
  std::map<std::string, SimScenario> out;

  SimScenario nb;
  nb.name = "nb_basic";
  nb.n_sections = 6000;
  nb.family = Family::NB;
  nb.true_count_coefficients = {{"(Intercept)", -9.1},
                                {"log(aadt)", 0.9},
                                {"curvature", 0.02},
                                {"side_friction", 2.0},
                                {"grade", 0.05},
                                {"shoulder_width", -0.03}};
  nb.true_theta = 1.25;
  nb.covariate_generators = roadway_covariates();
  nb.offset_terms = {"length_miles", "years_observed"};
  nb.seed = 20240101;
  out.emplace(nb.name, nb);

  SimScenario mis = nb;
  mis.name = "nb_misspecified";
  mis.covariate_generators.emplace_back("x", gen(Kind::normal, 0.0, 1.0));
  mis.true_count_coefficients = {{"(Intercept)", -9.3},
                                 {"log(aadt)", 0.9},
                                 {"curvature", 0.02},
                                 {"side_friction", 2.0},
                                 {"grade", 0.05},
                                 {"shoulder_width", -0.03},
                                 {"x", 0.4},
                                 {"x^2", 0.35}};
  // The fitted model omits x^2.
  for (const auto* t : {"log(aadt)", "curvature", "side_friction", "grade", "shoulder_width", "x"}) {
    mis.fit_count_terms.push_back(Term::parse(t));
  }
  mis.seed = 20240104;
  out.emplace(mis.name, mis);

  SimScenario zi;
  zi.name = "zinb_basic";
  zi.n_sections = 8000;
  zi.family = Family::ZINB;
  zi.true_count_coefficients = {{"(Intercept)", 0.2}, {"x", 0.6}};
  zi.true_zero_coefficients = {{"(Intercept)", -1.0}, {"z", 1.0}};
  zi.true_theta = 1.5;
  zi.covariate_generators = {{"x", gen(Kind::normal, 0.0, 1.0)}, {"z", gen(Kind::normal, 0.0, 1.0)}};
  zi.seed = 20240102;
  out.emplace(zi.name, zi);

  SimScenario gl;
  gl.name = "glmm_basic";
  gl.n_sections = 6000;
  gl.family = Family::GLMM_NB;
  gl.n_groups = 40;
  gl.true_random_sd = 0.5575;
  gl.true_theta = 1.43;
  gl.true_count_coefficients = {{"(Intercept)", -8.6}, {"log(aadt)", 0.85}, {"shoulder_width", -0.03}};
  gl.covariate_generators = {{"shoulder_width", gen(Kind::uniform, 0.0, 18.0)}};
  gl.offset_terms = {"length_miles", "years_observed"};
  gl.seed = 20240103;
  out.emplace(gl.name, gl);

  return out;
}

}  // namespace

const std::map<std::string, SimScenario>& default_scenarios() {
  static const auto scenarios = build_defaults();
  return scenarios;
}

const SimScenario& find_scenario(const std::string& name) {
  const auto& all = default_scenarios();
  const auto it = all.find(name);
  if (it == all.end()) throw NotFoundError("no scenario named '" + name + "'");
  return it->second;
}

// ---------------------------------------------------------------------------
// JSON

nlohmann::json to_json(const SimScenario& s) {
  nlohmann::json j;
  j["name"] = s.name;
  j["n_sections"] = s.n_sections;
  j["family"] = std::string(to_string(s.family));
  j["true_count_coefficients"] = named_to_json(s.true_count_coefficients);
  j["true_zero_coefficients"] = named_to_json(s.true_zero_coefficients);
  j["true_theta"] = s.true_theta;
  j["true_random_sd"] = s.true_random_sd;
  j["n_groups"] = s.n_groups;
  auto gens = nlohmann::json::array();
  for (const auto& [name, g] : s.covariate_generators) {
    nlohmann::json e{{"name", name}, {"kind", std::string(kind_name(g.kind))}, {"a", g.a}, {"b", g.b}};
    if (g.zero_prob > 0.0) e["zero_prob"] = g.zero_prob;
    if (std::isfinite(g.upper)) e["upper"] = g.upper;
    if (!g.source.empty()) e["source"] = g.source;
    gens.push_back(std::move(e));
  }
  j["covariate_generators"] = std::move(gens);
  j["exposure"] = {{"aadt_log_mean", s.exposure.aadt_log_mean},
                   {"aadt_log_sd", s.exposure.aadt_log_sd},
                   {"length_miles", s.exposure.length_miles},
                   {"years_observed", s.exposure.years_observed}};
  j["offset_terms"] = s.offset_terms;
  auto terms = nlohmann::json::array();
  for (const auto& t : s.fit_count_terms) terms.push_back(t.column_name());
  j["fit_count_terms"] = std::move(terms);
  j["seed"] = s.seed;
  return j;
}

SimScenario scenario_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("scenario must be a JSON object");
  SimScenario s;
  try {
    s.name = j.value("name", std::string("custom"));
    s.n_sections = j.at("n_sections").get<long>();
    s.family = family_from_string(j.at("family").get<std::string>());
    s.true_count_coefficients = named_from_json(j.at("true_count_coefficients"));
    if (j.contains("true_zero_coefficients")) {
      s.true_zero_coefficients = named_from_json(j.at("true_zero_coefficients"));
    }
    s.true_theta = j.at("true_theta").get<double>();
    s.true_random_sd = j.value("true_random_sd", 0.0);
    s.n_groups = j.value("n_groups", 1);
    for (const auto& e : j.value("covariate_generators", nlohmann::json::array())) {
      CovariateGenerator g;
      g.kind = kind_from_name(e.at("kind").get<std::string>());
      g.a = e.value("a", 0.0);
      g.b = e.value("b", 1.0);
      g.zero_prob = e.value("zero_prob", 0.0);
      if (e.contains("upper")) g.upper = e.at("upper").get<double>();
      g.source = e.value("source", std::string());
      s.covariate_generators.emplace_back(e.at("name").get<std::string>(), std::move(g));
    }
    if (j.contains("exposure")) {
      const auto& e = j.at("exposure");
      s.exposure.aadt_log_mean = e.value("aadt_log_mean", s.exposure.aadt_log_mean);
      s.exposure.aadt_log_sd = e.value("aadt_log_sd", s.exposure.aadt_log_sd);
      s.exposure.length_miles = e.value("length_miles", s.exposure.length_miles);
      s.exposure.years_observed = e.value("years_observed", s.exposure.years_observed);
    }
    s.offset_terms = j.value("offset_terms", std::vector<std::string>{});
    for (const auto& t : j.value("fit_count_terms", nlohmann::json::array())) {
      s.fit_count_terms.push_back(Term::parse(t.get<std::string>()));
    }
    s.seed = j.value("seed", std::uint64_t{1});
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("scenario JSON: ") + e.what());
  }
  s.validate();
  return s;
}

}  // namespace countfit

#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "countfit/estimation.hpp"
#include "countfit/model_data.hpp"

namespace countfit {

/// How one covariate column is drawn.
///
///   normal(a = μ, b = σ)       lognormal(a = μ, b = σ) of the log
///   bernoulli(a = p)           uniform(a, b)
///   side_friction(a, b)        speed ~ U(a, b) mph on the curve given by
///                              `source` (degrees); superelevation is
///                              min(0.08, v²/2gR) and speed is capped so the
///                              demand stays at or below 0.24. Tangents give 0.
///
/// `zero_prob` adds a point mass at 0 before the draw; `upper` clips.
struct CovariateGenerator {
  enum class Kind { normal, lognormal, bernoulli, uniform, side_friction };
  Kind kind = Kind::normal;
  double a = 0.0;
  double b = 1.0;
  double zero_prob = 0.0;
  double upper = std::numeric_limits<double>::infinity();
  std::string source;

  bool operator==(const CovariateGenerator&) const = default;
};

struct ExposureSpec {
  double aadt_log_mean = 8.541;  // exp(μ + σ²/2) ≈ 6785
  double aadt_log_sd = 0.75;
  double length_miles = 0.2;
  double years_observed = 10.0;

  bool operator==(const ExposureSpec&) const = default;
};

using NamedValues = std::vector<std::pair<std::string, double>>;

/// A data-generating process with known parameters. Coefficient names are
/// design column labels: "(Intercept)", "x", "log(x)", "x^2".
struct SimScenario {
  std::string name;
  long n_sections = 1000;
  Family family = Family::NB;
  NamedValues true_count_coefficients;
  NamedValues true_zero_coefficients;
  double true_theta = 1.0;
  double true_random_sd = 0.0;
  int n_groups = 1;
  std::vector<std::pair<std::string, CovariateGenerator>> covariate_generators;
  ExposureSpec exposure;
  std::vector<std::string> offset_terms;
  /// Count terms of the model to fit; empty means the generating terms.
  std::vector<Term> fit_count_terms;
  std::uint64_t seed = 1;

  /// Throws ValidationError when names or parameters are inconsistent.
  void validate() const;

  /// Model spec of the generating family; uses fit_count_terms when set.
  ModelSpec suggested_spec() const;

  bool operator==(const SimScenario&) const = default;
};

struct SimOutput {
  std::vector<SectionRecord> records;
  std::vector<double> group_effects;  ///< GLMM draws, one per group
  nlohmann::json manifest;
};

/// Deterministic in scenario.seed.
SimOutput generate(const SimScenario& scenario);

/// Scenarios used by the acceptance suite, by name.
const std::map<std::string, SimScenario>& default_scenarios();
/// Throws NotFoundError for an unknown name.
const SimScenario& find_scenario(const std::string& name);

/// Counts drawn from a fitted NB or ZINB model on a fixed design.
std::vector<std::int64_t> simulate_from_fit(const FitResult& fit, const DesignMatrix& design,
                                            std::uint64_t seed);

nlohmann::json to_json(const SimScenario& s);
SimScenario scenario_from_json(const nlohmann::json& j);

}  // namespace countfit

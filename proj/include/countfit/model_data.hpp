#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace countfit {

enum class Direction { increasing, decreasing, both };

std::string_view to_string(Direction d);
Direction direction_from_string(std::string_view s);

/// One observed road section aggregated over its observation period.
struct SectionRecord {
  std::string section_id;
  std::string route_id;
  Direction direction = Direction::both;
  std::int64_t crash_count = 0;
  double aadt = 0.0;            ///< vehicles/day, period average
  double length_miles = 0.0;
  double years_observed = 0.0;
  std::map<std::string, double> covariates;

  bool operator==(const SectionRecord&) const = default;
};

/// Mapping from logical fields to CSV column names. Columns not mapped to a
/// logical field become covariates.
struct ColumnSchema {
  std::string section_id = "section_id";
  std::string route_id = "route_id";
  std::string direction = "direction";
  std::string crash_count = "crash_count";
  std::string aadt = "aadt";
  std::string length_miles = "length_miles";
  std::string years_observed = "years_observed";
  /// Optional fields the user mapped explicitly; those must then be present.
  bool section_id_required = false;
  bool route_id_required = false;
  bool direction_required = false;

  /// Reads `key = value` lines ('#' starts a comment). Keys: section_id,
  /// group (alias route_id), direction, crash_count, aadt, length_miles,
  /// years_observed.
  static ColumnSchema parse(std::string_view text);
  static ColumnSchema load(const std::filesystem::path& path);
};

std::vector<SectionRecord> load_dataset(std::istream& in, const ColumnSchema& schema = {});
std::vector<SectionRecord> load_dataset(const std::filesystem::path& path,
                                        const ColumnSchema& schema = {});

/// Writes the canonical column layout read back by the default schema:
/// section_id, route_id, direction, crash_count, aadt, length_miles,
/// years_observed, then covariates in name order.
void write_dataset(std::ostream& out, const std::vector<SectionRecord>& records);
std::string dataset_to_csv(const std::vector<SectionRecord>& records);

/// FNV-1a hash of the canonical CSV serialization, as 16 hex digits.
std::string dataset_checksum(const std::vector<SectionRecord>& records);

/// Value of a logical exposure field (aadt, length_miles, years_observed)
/// or a covariate. Throws SchemaError for an unknown name.
double field_value(const SectionRecord& record, std::string_view name);

// ---------------------------------------------------------------------------
// Geometry helpers

inline constexpr double kGravityFtPerS2 = 32.174;
inline constexpr double kArcDefinitionConstant = 5729.58;

/// f_s = v² / (g R) − e with v in ft/s, R in ft, e in ft/ft.
double side_friction_demand(double speed_fps, double radius_ft, double superelevation);

/// Radius (ft) of a curve with degree of curvature `degrees` (arc
/// definition). Returns nullopt for a tangent (0 degrees).
std::optional<double> curvature_to_radius(double degrees);

/// Side friction demand from degree of curvature; tangents yield 0.
double side_friction_demand_from_curvature(double speed_fps, double curvature_degrees,
                                           double superelevation);

constexpr double mph_to_fps(double mph) { return mph * 5280.0 / 3600.0; }

// ---------------------------------------------------------------------------
// Model specification and design

enum class Family { NB, ZINB, GLMM_NB };

std::string_view to_string(Family f);
Family family_from_string(std::string_view s);

enum class Transform { identity, log, square };

struct Term {
  std::string covariate;
  Transform transform = Transform::identity;

  /// Column label: "x", "log(x)" or "x^2".
  std::string column_name() const;
  double apply(double value) const;
  /// Inverse of column_name().
  static Term parse(std::string_view label);

  bool operator==(const Term&) const = default;
};

inline constexpr std::string_view kInterceptName = "(Intercept)";

/// Declarative model definition. The intercept is implicit in both the count
/// and zero parts.
struct ModelSpec {
  Family family = Family::NB;
  std::vector<Term> count_terms;
  std::vector<Term> zero_terms;
  std::vector<std::string> offset_terms;
  std::optional<std::string> group_by;

  /// Throws ValidationError when the family-dependent invariants fail.
  void validate() const;

  /// Returns a copy refit as `family`, dropping parts the family ignores.
  ModelSpec with_family(Family family) const;

  bool operator==(const ModelSpec&) const = default;
};

nlohmann::json to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j);

struct DesignMatrix {
  Family family = Family::NB;
  Eigen::MatrixXd X;  ///< count part, column 0 is the intercept
  Eigen::MatrixXd Z;  ///< zero part (ZINB), column 0 is the intercept
  Eigen::VectorXd offset;
  std::vector<std::int64_t> y;
  std::vector<int> group_index;
  std::vector<std::string> group_names;
  std::vector<std::string> count_columns;
  std::vector<std::string> zero_columns;
  std::string data_checksum;

  Eigen::Index n() const { return X.rows(); }
};

DesignMatrix build_design(const std::vector<SectionRecord>& records, const ModelSpec& spec);

}  // namespace countfit

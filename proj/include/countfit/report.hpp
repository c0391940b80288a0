#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "countfit/estimation.hpp"
#include "countfit/gof.hpp"

namespace countfit {

/// Writes through a temporary file in the same directory and renames it
/// into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Pretty-printed JSON with a trailing newline.
std::string json_text(const nlohmann::json& j);

/// A file to emit: name relative to the output directory plus its bytes.
struct Artifact {
  std::string name;
  std::string content;
};

void write_artifacts(const std::filesystem::path& dir, const std::vector<Artifact>& artifacts);

/// name, estimate, std_error, z, p_value for every count and zero-part
/// coefficient, then theta and the random-intercept SD where present.
std::string coefficients_csv(const FitResult& fit);

/// gof_report.json, gof_bins.csv and, for each chart, an SVG and its CSV:
/// one bar chart per bin, the pooled distributions and the bin means.
std::vector<Artifact> gof_artifacts(const GofReport& report);

/// Deviance residuals against the fitted mean (NB-family fits only) and
/// observed counts against the fitted mean with the identity line.
std::vector<Artifact> residual_artifacts(const FitResult& fit, const DesignMatrix& design);

struct ComparedModel {
  std::string label;
  FitResult fit;
  DesignMatrix design;
  std::optional<GofReport> gof;
};

/// comparison.csv (one row per model) and comparison.json (rows, Vuong
/// tests for each NB/ZINB pair, AIC preference).
std::vector<Artifact> comparison_artifacts(const std::vector<ComparedModel>& models);

}  // namespace countfit

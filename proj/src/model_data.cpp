#include "countfit/model_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "countfit/csv.hpp"
#include "countfit/errors.hpp"

namespace countfit {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

double parse_real(std::string_view cell, std::size_t row, const std::string& column) {
  const auto t = trim(cell);
  if (t.empty()) throw ParseError(row, column, "missing value");
  double value = 0.0;
  const char* first = t.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size()) {
    throw ParseError(row, column, "cannot parse '" + std::string(t) + "' as a number");
  }
  if (!std::isfinite(value)) {
    throw ParseError(row, column, "non-finite value '" + std::string(t) + "'");
  }
  return value;
}

std::int64_t parse_integer(std::string_view cell, std::size_t row, const std::string& column) {
  const auto t = trim(cell);
  if (t.empty()) throw ParseError(row, column, "missing value");
  std::int64_t value = 0;
  const char* first = t.data();
  if (*first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size()) {
    throw ParseError(row, column, "cannot parse '" + std::string(t) + "' as an integer");
  }
  return value;
}

}  // namespace

std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::increasing: return "increasing";
    case Direction::decreasing: return "decreasing";
    case Direction::both: return "both";
  }
  return "both";
}

Direction direction_from_string(std::string_view s) {
  const auto v = lower(trim(s));
  if (v == "increasing") return Direction::increasing;
  if (v == "decreasing") return Direction::decreasing;
  if (v == "both") return Direction::both;
  throw ValidationError("unknown direction '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Schema and CSV ingestion

ColumnSchema ColumnSchema::parse(std::string_view text) {
  ColumnSchema schema;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    auto sep = body.find('=');
    if (sep == std::string_view::npos) sep = body.find(':');
    if (sep == std::string_view::npos) {
      throw ValidationError("schema line " + std::to_string(line_no) + ": expected key = value");
    }
    const auto key = lower(trim(body.substr(0, sep)));
    const std::string value(trim(body.substr(sep + 1)));
    if (value.empty()) {
      throw ValidationError("schema line " + std::to_string(line_no) + ": empty column name");
    }
    if (key == "section_id") {
      schema.section_id = value;
      schema.section_id_required = true;
    } else if (key == "group" || key == "route_id") {
      schema.route_id = value;
      schema.route_id_required = true;
    } else if (key == "direction") {
      schema.direction = value;
      schema.direction_required = true;
    } else if (key == "crash_count") {
      schema.crash_count = value;
    } else if (key == "aadt") {
      schema.aadt = value;
    } else if (key == "length_miles") {
      schema.length_miles = value;
    } else if (key == "years_observed") {
      schema.years_observed = value;
    } else {
      throw ValidationError("schema line " + std::to_string(line_no) + ": unknown field '" + key +
                            "'");
    }
  }
  return schema;
}

ColumnSchema ColumnSchema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError("cannot open schema file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::vector<SectionRecord> load_dataset(std::istream& in, const ColumnSchema& schema) {
  auto rows = csv::parse(in);
  std::erase_if(rows, [](const csv::Row& r) { return r.size() == 1 && trim(r[0]).empty(); });
  if (rows.empty()) throw SchemaError("dataset has no header row");

  const csv::Row header = rows.front();
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t c = 0; c < header.size(); ++c) {
    const std::string name(trim(header[c]));
    if (!index.emplace(name, c).second) {
      throw SchemaError("duplicate column '" + name + "' in header");
    }
  }
  auto find_column = [&](const std::string& column, bool required) -> std::optional<std::size_t> {
    if (auto it = index.find(column); it != index.end()) return it->second;
    if (required) throw SchemaError("missing column '" + column + "'");
    return std::nullopt;
  };

  const auto crash_col = *find_column(schema.crash_count, true);
  const auto aadt_col = *find_column(schema.aadt, true);
  const auto length_col = *find_column(schema.length_miles, true);
  const auto years_col = *find_column(schema.years_observed, true);
  const auto id_col = find_column(schema.section_id, schema.section_id_required);
  const auto route_col = find_column(schema.route_id, schema.route_id_required);
  const auto dir_col = find_column(schema.direction, schema.direction_required);

  std::vector<bool> mapped(header.size(), false);
  for (auto c : {std::optional<std::size_t>(crash_col), std::optional<std::size_t>(aadt_col),
                 std::optional<std::size_t>(length_col), std::optional<std::size_t>(years_col),
                 id_col, route_col, dir_col}) {
    if (c) mapped[*c] = true;
  }

  std::vector<SectionRecord> records;
  records.reserve(rows.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size()) {
      throw ParseError(r, "", "expected " + std::to_string(header.size()) + " fields, found " +
                                  std::to_string(row.size()));
    }
    SectionRecord rec;
    rec.section_id = id_col ? std::string(trim(row[*id_col])) : std::to_string(r);
    if (route_col) rec.route_id = std::string(trim(row[*route_col]));
    if (dir_col) {
      try {
        rec.direction = direction_from_string(row[*dir_col]);
      } catch (const ValidationError& e) {
        throw ParseError(r, header[*dir_col], e.what());
      }
    }
    rec.crash_count = parse_integer(row[crash_col], r, header[crash_col]);
    rec.aadt = parse_real(row[aadt_col], r, header[aadt_col]);
    rec.length_miles = parse_real(row[length_col], r, header[length_col]);
    rec.years_observed = parse_real(row[years_col], r, header[years_col]);
    if (rec.crash_count < 0) {
      throw DomainError("row " + std::to_string(r) + ": crash count " +
                        std::to_string(rec.crash_count) + " is negative");
    }
    if (rec.aadt <= 0.0) throw DomainError("row " + std::to_string(r) + ": aadt must be positive");
    if (rec.length_miles <= 0.0) {
      throw DomainError("row " + std::to_string(r) + ": length_miles must be positive");
    }
    if (rec.years_observed <= 0.0) {
      throw DomainError("row " + std::to_string(r) + ": years_observed must be positive");
    }
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (mapped[c]) continue;
      const std::string name(trim(header[c]));
      rec.covariates.emplace(name, parse_real(row[c], r, name));
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<SectionRecord> load_dataset(const std::filesystem::path& path,
                                        const ColumnSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError("cannot open dataset " + path.string());
  return load_dataset(in, schema);
}

void write_dataset(std::ostream& out, const std::vector<SectionRecord>& records) {
  std::vector<std::string> covariate_names;
  if (!records.empty()) {
    for (const auto& [name, _] : records.front().covariates) covariate_names.push_back(name);
  }
  csv::Row header{"section_id", "route_id",     "direction",     "crash_count",
                  "aadt",       "length_miles", "years_observed"};
  header.insert(header.end(), covariate_names.begin(), covariate_names.end());
  csv::write_row(out, header);

  for (const auto& rec : records) {
    if (rec.covariates.size() != covariate_names.size()) {
      throw SchemaError("section '" + rec.section_id + "' has a different covariate set");
    }
    csv::Row row{rec.section_id,
                 rec.route_id,
                 std::string(to_string(rec.direction)),
                 std::to_string(rec.crash_count),
                 csv::format_double(rec.aadt),
                 csv::format_double(rec.length_miles),
                 csv::format_double(rec.years_observed)};
    for (const auto& name : covariate_names) {
      const auto it = rec.covariates.find(name);
      if (it == rec.covariates.end()) {
        throw SchemaError("section '" + rec.section_id + "' lacks covariate '" + name + "'");
      }
      row.push_back(csv::format_double(it->second));
    }
    csv::write_row(out, row);
  }
}

std::string dataset_to_csv(const std::vector<SectionRecord>& records) {
  std::ostringstream out;
  write_dataset(out, records);
  return out.str();
}

std::string dataset_checksum(const std::vector<SectionRecord>& records) {
  const auto text = dataset_to_csv(records);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

double field_value(const SectionRecord& record, std::string_view name) {
  if (name == "aadt") return record.aadt;
  if (name == "length_miles") return record.length_miles;
  if (name == "years_observed") return record.years_observed;
  const auto it = record.covariates.find(std::string(name));
  if (it == record.covariates.end()) {
    throw SchemaError("unknown covariate '" + std::string(name) + "'");
  }
  return it->second;
}

// ---------------------------------------------------------------------------
// Geometry

double side_friction_demand(double speed_fps, double radius_ft, double superelevation) {
  if (!(radius_ft > 0.0)) throw DomainError("curve radius must be positive");
  if (speed_fps < 0.0) throw DomainError("speed must be non-negative");
  return speed_fps * speed_fps / (kGravityFtPerS2 * radius_ft) - superelevation;
}

std::optional<double> curvature_to_radius(double degrees) {
  if (degrees < 0.0) throw DomainError("degree of curvature must be non-negative");
  if (degrees == 0.0) return std::nullopt;
  return kArcDefinitionConstant / degrees;
}

double side_friction_demand_from_curvature(double speed_fps, double curvature_degrees,
                                           double superelevation) {
  const auto radius = curvature_to_radius(curvature_degrees);
  if (!radius) return 0.0;
  return side_friction_demand(speed_fps, *radius, superelevation);
}

// ---------------------------------------------------------------------------
// Model specification

std::string_view to_string(Family f) {
  switch (f) {
    case Family::NB: return "nb";
    case Family::ZINB: return "zinb";
    case Family::GLMM_NB: return "glmm_nb";
  }
  return "nb";
}

Family family_from_string(std::string_view s) {
  const auto v = lower(trim(s));
  if (v == "nb") return Family::NB;
  if (v == "zinb") return Family::ZINB;
  if (v == "glmm_nb" || v == "glmm-nb" || v == "glmm") return Family::GLMM_NB;
  throw ValidationError("unknown family '" + std::string(s) + "' (expected nb, zinb, glmm_nb)");
}

std::string Term::column_name() const {
  switch (transform) {
    case Transform::identity: return covariate;
    case Transform::log: return "log(" + covariate + ")";
    case Transform::square: return covariate + "^2";
  }
  return covariate;
}

double Term::apply(double value) const {
  switch (transform) {
    case Transform::identity: return value;
    case Transform::log: return std::log(value);
    case Transform::square: return value * value;
  }
  return value;
}

Term Term::parse(std::string_view label) {
  const auto t = trim(label);
  if (t.size() > 5 && t.substr(0, 4) == "log(" && t.back() == ')') {
    return {std::string(t.substr(4, t.size() - 5)), Transform::log};
  }
  if (t.size() > 2 && t.substr(t.size() - 2) == "^2") {
    return {std::string(t.substr(0, t.size() - 2)), Transform::square};
  }
  if (t.empty()) throw ValidationError("empty term");
  return {std::string(t), Transform::identity};
}

void ModelSpec::validate() const {
  auto check_terms = [](const std::vector<Term>& terms, std::string_view part) {
    std::set<std::string> seen;
    for (const auto& term : terms) {
      if (term.covariate.empty()) {
        throw ValidationError(std::string(part) + " term with empty covariate name");
      }
      if (!seen.insert(term.column_name()).second) {
        throw ValidationError("duplicate " + std::string(part) + " term '" + term.column_name() +
                              "'");
      }
    }
  };
  check_terms(count_terms, "count");
  check_terms(zero_terms, "zero");
  if (family == Family::ZINB) {
    if (zero_terms.empty()) {
      throw ValidationError("family zinb requires zero_terms (the zero part always has an "
                            "intercept; list at least one covariate)");
    }
  } else if (!zero_terms.empty()) {
    throw ValidationError("zero_terms given for family " + std::string(to_string(family)));
  }
  if (family == Family::GLMM_NB) {
    if (!group_by || group_by->empty()) {
      throw ValidationError("family glmm_nb requires group_by");
    }
  } else if (group_by) {
    throw ValidationError("group_by given for family " + std::string(to_string(family)));
  }
  std::set<std::string> offsets;
  for (const auto& name : offset_terms) {
    if (name.empty()) throw ValidationError("empty offset name");
    if (!offsets.insert(name).second) throw ValidationError("duplicate offset '" + name + "'");
  }
}

ModelSpec ModelSpec::with_family(Family f) const {
  ModelSpec out = *this;
  out.family = f;
  if (f != Family::ZINB) out.zero_terms.clear();
  if (f != Family::GLMM_NB) out.group_by.reset();
  return out;
}

namespace {

nlohmann::json terms_to_json(const std::vector<Term>& terms) {
  auto arr = nlohmann::json::array();
  for (const auto& t : terms) arr.push_back(t.column_name());
  return arr;
}

std::vector<Term> terms_from_json(const nlohmann::json& j, std::string_view key) {
  std::vector<Term> out;
  if (!j.contains(key) || j.at(key).is_null()) return out;
  const auto& arr = j.at(key);
  if (!arr.is_array()) throw ValidationError(std::string(key) + " must be an array");
  for (const auto& item : arr) {
    if (item.is_string()) {
      out.push_back(Term::parse(item.get<std::string>()));
    } else if (item.is_object()) {
      Term t;
      t.covariate = item.at("covariate").get<std::string>();
      const auto tr = lower(item.value("transform", std::string("identity")));
      if (tr == "identity") t.transform = Transform::identity;
      else if (tr == "log") t.transform = Transform::log;
      else if (tr == "square") t.transform = Transform::square;
      else throw ValidationError("unknown transform '" + tr + "'");
      out.push_back(std::move(t));
    } else {
      throw ValidationError(std::string(key) + " entries must be strings or objects");
    }
  }
  return out;
}

}  // namespace

nlohmann::json to_json(const ModelSpec& spec) {
  nlohmann::json j;
  j["family"] = std::string(to_string(spec.family));
  j["count_terms"] = terms_to_json(spec.count_terms);
  j["zero_terms"] = terms_to_json(spec.zero_terms);
  j["offset_terms"] = spec.offset_terms;
  j["group_by"] = spec.group_by ? nlohmann::json(*spec.group_by) : nlohmann::json(nullptr);
  return j;
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("model spec must be a JSON object");
  ModelSpec spec;
  spec.family = family_from_string(j.value("family", std::string("nb")));
  spec.count_terms = terms_from_json(j, "count_terms");
  spec.zero_terms = terms_from_json(j, "zero_terms");
  if (j.contains("offset_terms") && !j.at("offset_terms").is_null()) {
    spec.offset_terms = j.at("offset_terms").get<std::vector<std::string>>();
  }
  if (j.contains("group_by") && !j.at("group_by").is_null()) {
    spec.group_by = j.at("group_by").get<std::string>();
  }
  return spec;
}

// ---------------------------------------------------------------------------
// Design construction

namespace {

Eigen::MatrixXd term_matrix(const std::vector<SectionRecord>& records,
                            const std::vector<Term>& terms, std::vector<std::string>& names) {
  const auto n = static_cast<Eigen::Index>(records.size());
  Eigen::MatrixXd M(n, static_cast<Eigen::Index>(terms.size()) + 1);
  names.assign(1, std::string(kInterceptName));
  M.col(0).setOnes();
  for (std::size_t t = 0; t < terms.size(); ++t) {
    const auto& term = terms[t];
    names.push_back(term.column_name());
    for (Eigen::Index i = 0; i < n; ++i) {
      const double raw = field_value(records[static_cast<std::size_t>(i)], term.covariate);
      if (term.transform == Transform::log && raw <= 0.0) {
        throw DomainError("log of non-positive value " + csv::format_double(raw) + " for '" +
                          term.covariate + "' at section '" +
                          records[static_cast<std::size_t>(i)].section_id + "'");
      }
      const double v = term.apply(raw);
      if (!std::isfinite(v)) {
        throw DomainError("non-finite design entry for '" + term.column_name() + "' at section '" +
                          records[static_cast<std::size_t>(i)].section_id + "'");
      }
      M(i, static_cast<Eigen::Index>(t) + 1) = v;
    }
  }
  return M;
}

std::string group_label(const SectionRecord& rec, const std::string& field) {
  if (field == "route_id" || field == "group") return rec.route_id;
  if (field == "section_id") return rec.section_id;
  if (field == "direction") return std::string(to_string(rec.direction));
  return csv::format_double(field_value(rec, field));
}

}  // namespace

DesignMatrix build_design(const std::vector<SectionRecord>& records, const ModelSpec& spec) {
  spec.validate();
  if (records.empty()) throw ValidationError("dataset is empty");

  const auto& first = records.front().covariates;
  for (const auto& rec : records) {
    if (rec.covariates.size() != first.size() ||
        !std::equal(rec.covariates.begin(), rec.covariates.end(), first.begin(),
                    [](const auto& a, const auto& b) { return a.first == b.first; })) {
      throw SchemaError("section '" + rec.section_id +
                        "' exposes a different covariate set from the first record");
    }
  }

  DesignMatrix d;
  d.family = spec.family;
  const auto n = static_cast<Eigen::Index>(records.size());
  d.X = term_matrix(records, spec.count_terms, d.count_columns);
  if (spec.family == Family::ZINB) {
    d.Z = term_matrix(records, spec.zero_terms, d.zero_columns);
  } else {
    d.Z.resize(n, 0);
  }

  d.offset = Eigen::VectorXd::Zero(n);
  for (const auto& name : spec.offset_terms) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& rec = records[static_cast<std::size_t>(i)];
      const double v = field_value(rec, name);
      if (!(v > 0.0)) {
        throw DomainError("offset '" + name + "' must be positive (section '" + rec.section_id +
                          "' has " + csv::format_double(v) + ")");
      }
      d.offset[i] += std::log(v);
    }
  }

  d.y.reserve(records.size());
  for (const auto& rec : records) d.y.push_back(rec.crash_count);

  if (spec.family == Family::GLMM_NB) {
    std::vector<std::string> labels;
    labels.reserve(records.size());
    for (const auto& rec : records) labels.push_back(group_label(rec, *spec.group_by));
    std::set<std::string> unique(labels.begin(), labels.end());
    d.group_names.assign(unique.begin(), unique.end());
    d.group_index.reserve(labels.size());
    for (const auto& label : labels) {
      const auto it = std::lower_bound(d.group_names.begin(), d.group_names.end(), label);
      d.group_index.push_back(static_cast<int>(it - d.group_names.begin()));
    }
  }

  d.data_checksum = dataset_checksum(records);
  return d;
}

}  // namespace countfit

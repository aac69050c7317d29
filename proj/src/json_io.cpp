#include "netmeta/json_io.hpp"

#include "netmeta/errors.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace netmeta {

using nlohmann::json;

namespace {

const json& require(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(where + ": missing field '" + key + "'");
  return *it;
}

std::vector<std::string> string_array(const json& j, const std::string& where) {
  if (!j.is_array()) throw ValidationError(where + ": expected an array of strings");
  std::vector<std::string> out;
  for (const auto& e : j) {
    if (!e.is_string()) throw ValidationError(where + ": expected an array of strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

double number_or_nan(const json& e, const std::string& where) {
  if (e.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!e.is_number()) throw ValidationError(where + ": expected a number or null");
  return e.get<double>();
}

// Accepts nested rows or a flat row-major array.
MatrixXd matrix_with_nulls(const json& j, Eigen::Index rows, Eigen::Index cols,
                           const std::string& where) {
  MatrixXd m(rows, cols);
  if (!j.is_array()) throw ValidationError(where + ": expected an array");
  if (!j.empty() && j.front().is_array()) {
    if (static_cast<Eigen::Index>(j.size()) != rows)
      throw ValidationError(where + ": expected " + std::to_string(rows) + " rows");
    for (Eigen::Index r = 0; r < rows; ++r) {
      const auto& row = j[r];
      if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
        throw ValidationError(where + ": row " + std::to_string(r) + " must have " +
                              std::to_string(cols) + " entries");
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = number_or_nan(row[c], where);
    }
    return m;
  }
  if (static_cast<Eigen::Index>(j.size()) != rows * cols)
    throw ValidationError(where + ": expected " + std::to_string(rows * cols) + " entries");
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = number_or_nan(j[r * cols + c], where);
  return m;
}

MatrixXd dense_matrix(const json& j, Eigen::Index rows, Eigen::Index cols,
                      const std::string& where) {
  MatrixXd m = matrix_with_nulls(j, rows, cols, where);
  if (!m.allFinite()) throw ValidationError(where + ": null entries are not allowed here");
  return m;
}

}  // namespace

NetworkDataset dataset_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("dataset: expected a JSON object");
  NetworkDataset ds;
  ds.treatments = string_array(require(j, "treatments", "dataset"), "dataset.treatments");
  ds.outcomes = string_array(require(j, "outcomes", "dataset"), "dataset.outcomes");
  const int p = ds.num_outcomes();

  const json& studies = require(j, "studies", "dataset");
  if (!studies.is_array()) throw ValidationError("dataset.studies: expected an array");

  for (const auto& sj : studies) {
    Study st;
    const std::string id_hint =
        sj.is_object() && sj.contains("id") && sj["id"].is_string()
            ? sj["id"].get<std::string>()
            : ("#" + std::to_string(ds.studies.size()));
    const std::string where = "study '" + id_hint + "'";
    if (!sj.is_object()) throw ValidationError(where + ": expected an object");

    st.id = require(sj, "id", where).get<std::string>();
    st.design.treatments = string_array(require(sj, "design", where), where + ".design");
    const int c = st.design.contrast_count();
    if (c < 1) throw ValidationError(where + ": design needs at least two treatments");

    st.missing = BoolMask::Constant(c, p, false);
    if (sj.contains("y")) {
      MatrixXd y = matrix_with_nulls(sj["y"], c, p, where + ".y");
      st.effects = MatrixXd::Zero(c, p);
      for (int a = 0; a < c; ++a)
        for (int k = 0; k < p; ++k) {
          if (std::isnan(y(a, k))) {
            st.missing(a, k) = true;
          } else {
            st.effects(a, k) = y(a, k);
          }
        }
    } else {
      st.effects = MatrixXd::Zero(c, p);
    }

    if (sj.contains("missing")) {
      const json& mj = sj["missing"];
      if (!mj.is_array() || static_cast<int>(mj.size()) != c)
        throw ValidationError(where + ".missing: expected " + std::to_string(c) + " rows");
      for (int a = 0; a < c; ++a) {
        const auto& row = mj[a];
        if (!row.is_array() || static_cast<int>(row.size()) != p)
          throw ValidationError(where + ".missing: row " + std::to_string(a) + " must have " +
                                std::to_string(p) + " entries");
        for (int k = 0; k < p; ++k) {
          if (!row[k].is_boolean())
            throw ValidationError(where + ".missing: expected booleans");
          if (row[k].get<bool>()) st.missing(a, k) = true;
        }
      }
    }

    MatrixXd s = matrix_with_nulls(require(sj, "S", where), c * p, c * p, where + ".S");
    // Null entries are only meaningful at missing positions; observed
    // positions must carry numbers. Validation reports any leak.
    for (int a = 0; a < c * p; ++a)
      for (int b = 0; b < c * p; ++b)
        if (std::isnan(s(a, b)) &&
            (st.missing(a / p, a % p) || st.missing(b / p, b % p)))
          s(a, b) = 0.0;
    st.within_cov = s;

    // Zero the effects at missing positions so the raw study is already in
    // storage convention; validation re-asserts this.
    for (int a = 0; a < c; ++a)
      for (int k = 0; k < p; ++k)
        if (st.missing(a, k)) st.effects(a, k) = 0.0;

    ds.studies.push_back(std::move(st));
  }
  return ds;
}

json dataset_to_json(const NetworkDataset& ds) {
  json j;
  j["treatments"] = ds.treatments;
  j["outcomes"] = ds.outcomes;
  j["studies"] = json::array();
  const int p = ds.num_outcomes();
  for (const Study& st : ds.studies) {
    json sj;
    sj["id"] = st.id;
    sj["design"] = st.design.treatments;
    const int c = st.contrast_count();
    json y = json::array();
    for (int a = 0; a < c; ++a) {
      json row = json::array();
      for (int k = 0; k < p; ++k)
        row.push_back(st.missing(a, k) ? json() : json(st.effects(a, k)));
      y.push_back(std::move(row));
    }
    sj["y"] = std::move(y);
    json s = json::array();
    for (int a = 0; a < c * p; ++a) {
      json row = json::array();
      for (int b = 0; b < c * p; ++b) {
        const bool miss = st.missing(a / p, a % p) || st.missing(b / p, b % p);
        row.push_back(miss ? json() : json(st.within_cov(a, b)));
      }
      s.push_back(std::move(row));
    }
    sj["S"] = std::move(s);
    j["studies"].push_back(std::move(sj));
  }
  return j;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ValidationError("'" + path + "' is not valid JSON: " + e.what());
  }
  return j;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << content;
  if (!out) throw IoError("failed while writing '" + path + "'");
}

NetworkDataset load_dataset_file(const std::string& path) {
  NetworkDataset raw = dataset_from_json(read_json_file(path));
  ValidationResult vr = validate_dataset(raw);
  if (!vr.ok()) {
    std::ostringstream os;
    os << "'" << path << "' failed validation:";
    for (const auto& e : vr.errors) os << "\n  - " << e;
    throw ValidationError(os.str());
  }
  return std::move(*vr.dataset);
}

SimulationScenario scenario_from_json(const json& j) {
  SimulationScenario sc;
  NetworkDataset raw = dataset_from_json(j);
  ValidationResult vr = validate_dataset(raw);
  if (!vr.ok()) {
    std::ostringstream os;
    os << "scenario skeleton failed validation:";
    for (const auto& e : vr.errors) os << "\n  - " << e;
    throw ValidationError(os.str());
  }
  sc.skeleton = std::move(*vr.dataset);

  const int p = sc.skeleton.num_outcomes();
  const int c = sc.skeleton.basic_parameters();
  const json& truth = require(j, "truth", "scenario");
  VectorXd delta(p * c);
  {
    const json& dj = require(truth, "delta", "scenario.truth");
    if (!dj.is_array() || static_cast<int>(dj.size()) != p * c)
      throw ValidationError("scenario.truth.delta: expected " + std::to_string(p * c) +
                            " entries (outcome-major)");
    for (int i = 0; i < p * c; ++i) delta(i) = number_or_nan(dj[i], "scenario.truth.delta");
    if (!delta.allFinite()) throw ValidationError("scenario.truth.delta: null is not allowed");
  }
  sc.truth.delta = delta;
  sc.truth.sigma_beta =
      dense_matrix(require(truth, "sigma_beta", "scenario.truth"), p, p, "scenario.truth.sigma_beta");
  sc.truth.sigma_omega = dense_matrix(require(truth, "sigma_omega", "scenario.truth"), p, p,
                                      "scenario.truth.sigma_omega");

  sc.seed = j.value("seed", 0ULL);
  sc.replications = j.value("replications", 1000);
  sc.missing_prob = j.value("missing_prob", 0.0);
  if (sc.replications < 1) throw ValidationError("scenario: replications must be positive");
  if (sc.missing_prob < 0.0 || sc.missing_prob >= 1.0)
    throw ValidationError("scenario: missing_prob must lie in [0, 1)");
  return sc;
}

SimulationScenario load_scenario_file(const std::string& path) {
  return scenario_from_json(read_json_file(path));
}

}  // namespace netmeta

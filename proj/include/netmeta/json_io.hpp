#pragma once

#include "netmeta/oracles.hpp"
#include "netmeta/types.hpp"

#include <json.hpp>

#include <string>

namespace netmeta {

// Raw parse of the dataset schema; run validate_dataset afterwards.
//
// {
//   "treatments": ["A", "B", ...],        first entry is the reference
//   "outcomes":   ["y1", ...],
//   "studies": [
//     { "id": "s1",
//       "design": ["A", "B"],             baseline first
//       "y": [[0.12, null], ...],         c_d rows of p entries, null = missing
//       "missing": [[false, true], ...],  optional, OR-ed with nulls in y
//       "S": [[...], ...] }               (p*c_d)^2, nested rows or flat,
//                                         null allowed at missing positions
//   ]
// }
NetworkDataset dataset_from_json(const nlohmann::json& j);
nlohmann::json dataset_to_json(const NetworkDataset& ds);

// Parses and validates; throws ValidationError with every message joined.
NetworkDataset load_dataset_file(const std::string& path);

// Scenario files reuse the dataset schema (studies may omit "y") and add:
//   "truth": { "delta": [...], "sigma_beta": [[...]], "sigma_omega": [[...]] },
//   "seed": 42, "replications": 2000, "missing_prob": 0.0
SimulationScenario scenario_from_json(const nlohmann::json& j);
SimulationScenario load_scenario_file(const std::string& path);

nlohmann::json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

}  // namespace netmeta

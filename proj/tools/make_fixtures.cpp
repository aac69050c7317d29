// Regenerates the committed fixtures under data/ from the builders in
// tests/helpers.hpp. Run after changing a builder; test_report_cli pins the
// files to the builders, so a stale fixture fails the suite.
#include "helpers.hpp"
#include "netmeta/json_io.hpp"

#include <iostream>
#include <string>

using namespace netmeta;

int main(int argc, char** argv) {
  const std::string dir = argc > 1 ? argv[1] : "data";

  const NetworkDataset ds = testutil::ms_network();
  write_text_file(dir + "/ms_network.json", dataset_to_json(ds).dump(2) + "\n");

  nlohmann::json sj = dataset_to_json(ds);
  sj["truth"] = {
      {"delta", {-0.35, -0.5, -0.2, -0.6, -0.45,
                 -0.15, -0.25, -0.1, -0.3, -0.2,
                 -0.55, -0.7, -0.4, -0.8, -0.6}},
      {"sigma_beta", {{0.40, 0.12, 0.06}, {0.12, 0.30, 0.09}, {0.06, 0.09, 0.25}}},
      {"sigma_omega", {{0.20, 0.06, 0.03}, {0.06, 0.16, 0.05}, {0.03, 0.05, 0.12}}},
  };
  sj["seed"] = 20260822;
  sj["replications"] = 2000;
  write_text_file(dir + "/ms_scenario.json", sj.dump(2) + "\n");

  std::cout << "wrote " << dir << "/ms_network.json and " << dir << "/ms_scenario.json\n";
  return 0;
}

#include "netmeta/errors.hpp"
#include "netmeta/report.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace {

using namespace netmeta;

struct FitArgs {
  std::string input;
  std::string model = "full";
  std::string sigma_beta = "eq7";
  std::string subst = "truncated";
  double ci = 0.95;
  std::vector<std::string> contrasts;
  std::string format = "text";
  std::string output;
  double placeholder = 0.0;
  bool serial = false;
  bool sigma_beta_given = false;
  bool subst_given = false;
};

struct SimulateArgs {
  std::string scenario;
  long long reps = -1;
  long long seed = -1;
  std::string model = "full";
  std::string subst = "truncated";
  std::string output;
  bool serial = false;
};

struct InspectArgs {
  std::string input;
  std::string dump_dir;
};

int cmd_fit(const FitArgs& args) {
  // Options that belong to one model variant are rejected elsewhere rather
  // than silently ignored.
  if (args.sigma_beta_given && args.model != "consistent")
    throw ValidationError("--sigma-beta selects the consistent model's between-study source "
                          "and needs --model consistent");
  if (args.subst_given && args.model != "full")
    throw ValidationError("--subst selects the full model's substitution and needs "
                          "--model full");

  const NetworkDataset ds = load_dataset_file(args.input);

  FitConfig cfg;
  cfg.model = model_kind_from_name(args.model);
  cfg.beta_source =
      args.sigma_beta == "eq8" ? BetaSource::full_model : BetaSource::consistent_model;
  cfg.substitution =
      args.subst == "raw" ? BetaSubstitution::raw : BetaSubstitution::truncated;
  cfg.ci_level = args.ci;
  cfg.contrasts = args.contrasts;
  cfg.placeholder = args.placeholder;
  cfg.policy = args.serial ? ExecPolicy::serial : ExecPolicy::automatic;

  const FitReport rep = run_fit(ds, cfg);
  std::string text;
  if (args.format == "json") {
    text = report_to_json(rep).dump(2);
    text += "\n";
  } else if (args.format == "csv") {
    text = report_to_csv(rep);
  } else {
    text = report_to_text(rep);
  }
  if (args.output.empty())
    std::cout << text;
  else
    write_text_file(args.output, text);
  return 0;
}

int cmd_simulate(const SimulateArgs& args) {
  SimulationScenario sc = load_scenario_file(args.scenario);
  if (args.reps > 0) sc.replications = static_cast<int>(args.reps);
  if (args.seed >= 0) sc.seed = static_cast<std::uint64_t>(args.seed);

  const ModelKind model = model_kind_from_name(args.model);
  const BetaSubstitution subst =
      args.subst == "raw" ? BetaSubstitution::raw : BetaSubstitution::truncated;
  const SimulationSummary sum = run_simulation(sc, model, subst, 0.95, !args.serial);
  const std::string csv = simulation_summary_csv(sum, sc);
  if (args.output.empty())
    std::cout << csv;
  else
    write_text_file(args.output, csv);
  if (sum.failures > 0)
    std::cerr << "note: " << sum.failures << " of " << sum.replications
              << " replications failed to fit and were skipped\n";
  return 0;
}

void write_matrix_csv(const std::filesystem::path& path, const MatrixXd& m) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  char buf[64];
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
      out << (c > 0 ? "," : "") << buf;
    }
    out << "\n";
  }
}

int cmd_inspect(const InspectArgs& args) {
  const NetworkDataset ds = load_dataset_file(args.input);
  std::filesystem::path dir(args.dump_dir);
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + args.dump_dir + "': " + ec.message());

  const StructuralMatrices sm = build_structural(ds);
  write_matrix_csv(dir / "y.csv", sm.Y);
  write_matrix_csv(dir / "s.csv", sm.S);
  write_matrix_csv(dir / "r.csv", sm.R);
  write_matrix_csv(dir / "w.csv", sm.W);
  write_matrix_csv(dir / "m1.csv", sm.M1);
  write_matrix_csv(dir / "m2.csv", sm.M2);
  write_matrix_csv(dir / "z.csv", sm.Z);
  write_matrix_csv(dir / "x.csv", sm.X);

  const IdentifiabilityReport ident = check_identifiability(ds);
  nlohmann::json summary;
  summary["studies"] = ds.num_studies();
  summary["designs"] = nlohmann::json::array();
  for (size_t d = 0; d < ds.designs.size(); ++d)
    summary["designs"].push_back({{"label", ds.designs[d].label()},
                                  {"studies", ds.design_studies[d].size()},
                                  {"contrasts", ds.designs[d].contrast_count()}});

  const ComparisonCounts counts = comparison_counts(ds);
  int total_comparisons = 0;
  nlohmann::json comps = nlohmann::json::array();
  std::cout << "direct comparisons:";
  for (const auto& [pair, count] : counts) {
    total_comparisons += count;
    comps.push_back({{"pair", pair.first + "-" + pair.second}, {"studies", count}});
    std::cout << " " << pair.first << "-" << pair.second << ":" << count;
  }
  std::cout << " (total " << total_comparisons << ")\n";
  summary["comparisons"] = std::move(comps);
  summary["total_comparisons"] = total_comparisons;
  summary["identifiability"] = {{"common_effect", ident.common_effect_ok},
                                {"sigma_beta", ident.sigma_beta_ok},
                                {"sigma_omega", ident.sigma_omega_ok},
                                {"notes", ident.notes}};

  int dumped = 8;
  if (ident.common_effect_ok) {
    const HatSystem hs = build_hat_system(sm);
    const EstimatingEquations eqs = assemble_equations(sm, hs);
    write_matrix_csv(dir / "h.csv", hs.H);
    write_matrix_csv(dir / "q.csv", global_q(sm, hs));
    write_matrix_csv(dir / "btr_q.csv", eqs.btr_q);
    write_matrix_csv(dir / "c_full.csv", eqs.c_full);
    write_matrix_csv(dir / "d_full.csv", eqs.d_full);
    write_matrix_csv(dir / "e_full.csv", eqs.e_full);
    write_matrix_csv(dir / "c_designs.csv", eqs.c_designs);
    write_matrix_csv(dir / "e_designs.csv", eqs.e_designs);
    dumped += 8;
    for (size_t d = 0; d < sm.per_design.size(); ++d) {
      write_matrix_csv(dir / ("q_design_" + std::to_string(d) + ".csv"),
                       design_q(sm, hs, static_cast<int>(d)));
      ++dumped;
    }
  } else {
    summary["note"] = "hat system skipped: the common-effect fit is not identified";
  }

  write_text_file((dir / "summary.json").string(), summary.dump(2) + "\n");
  std::cout << "wrote " << dumped + 1 << " files to " << args.dump_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multivariate network meta-analysis with random inconsistency effects"};
  app.require_subcommand(1);

  FitArgs fit_args;
  auto* fit = app.add_subcommand("fit", "fit a model to a dataset");
  fit->add_option("--input", fit_args.input, "dataset JSON file")->required();
  fit->add_option("--model", fit_args.model, "full, consistent or common")
      ->check(CLI::IsMember({"full", "consistent", "common"}));
  fit->add_option("--sigma-beta", fit_args.sigma_beta,
                  "consistent model only: eq7 estimates the between-study covariance within "
                  "the consistent model, eq8 carries over the full-model estimate")
      ->check(CLI::IsMember({"eq7", "eq8"}));
  fit->add_option("--subst", fit_args.subst,
                  "full model only: substitute the truncated or the raw between-study "
                  "solution into the inconsistency equation")
      ->check(CLI::IsMember({"truncated", "raw"}));
  fit->add_option("--ci", fit_args.ci, "confidence level, default 0.95");
  fit->add_option("--contrast", fit_args.contrasts,
                  "extra contrast such as C-E@2 or C-E@outcome_name (repeatable)");
  fit->add_option("--format", fit_args.format, "json, csv or text")
      ->check(CLI::IsMember({"json", "csv", "text"}));
  fit->add_option("--output", fit_args.output, "write to a file instead of stdout");
  fit->add_option("--placeholder", fit_args.placeholder,
                  "value standing in for missing responses; results must not depend on it");
  fit->add_flag("--serial", fit_args.serial, "disable parallel assembly");

  SimulateArgs sim_args;
  auto* sim = app.add_subcommand("simulate",
                                 "replicate datasets from a scenario and summarize the fits");
  sim->add_option("--scenario", sim_args.scenario, "scenario JSON file")->required();
  sim->add_option("--reps", sim_args.reps, "override the scenario replication count");
  sim->add_option("--seed", sim_args.seed, "override the scenario seed");
  sim->add_option("--model", sim_args.model, "full, consistent or common")
      ->check(CLI::IsMember({"full", "consistent", "common"}));
  sim->add_option("--subst", sim_args.subst, "truncated or raw substitution")
      ->check(CLI::IsMember({"truncated", "raw"}));
  sim->add_option("--output", sim_args.output, "write the summary CSV to a file");
  sim->add_flag("--serial", sim_args.serial, "run replications on a single thread");

  InspectArgs ins_args;
  auto* ins = app.add_subcommand("inspect",
                                 "dump assembled matrices and the identifiability report");
  ins->add_option("--input", ins_args.input, "dataset JSON file")->required();
  ins->add_option("--dump-dir", ins_args.dump_dir, "directory for the matrix dumps")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    app.exit(e);
    return 2;
  }

  fit_args.sigma_beta_given = fit->count("--sigma-beta") > 0;
  fit_args.subst_given = fit->count("--subst") > 0;

  try {
    if (fit->parsed()) return cmd_fit(fit_args);
    if (sim->parsed()) return cmd_simulate(sim_args);
    if (ins->parsed()) return cmd_inspect(ins_args);
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const IdentifiabilityError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

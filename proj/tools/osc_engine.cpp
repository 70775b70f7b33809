// osc_engine: measurement-fueled two-oscillator engine simulator.
//
//   osc_engine simulate     --config run.json --out dir
//   osc_engine cycles       --config run.json --out dir [--cycles N] [--tau-measure T] [--seed S]
//   osc_engine elements     --config run.json --index 0,0,0,0 [--index ...] [--oracle]
//   osc_engine figure-data  --config run.json --out dir

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>

#include "oscengine/cli.hpp"
#include "oscengine/oracle.hpp"

namespace {

using oscengine::cli::ValidatedConfig;

struct CommonArgs {
  std::string config_path;
  std::string out_dir = "osc_engine_out";
  std::optional<std::uint64_t> seed;
  std::optional<double> tau_measure;
  std::optional<std::uint64_t> cycles;
  bool no_cache = false;
  bool convergence_check = false;
};

ValidatedConfig resolve(const CommonArgs& args) {
  ValidatedConfig vc = args.config_path.empty() ? oscengine::cli::validate_config(nlohmann::json::object())
                                                : oscengine::cli::load_config(args.config_path);
  if (args.seed) vc.config.seed = *args.seed;
  if (args.tau_measure) {
    if (!(*args.tau_measure >= 0.0)) throw oscengine::ConfigError("--tau-measure", "must be >= 0");
    vc.options.tau_measure = *args.tau_measure;
  }
  if (args.cycles) {
    if (*args.cycles < 1) throw oscengine::ConfigError("--cycles", "must be >= 1");
    vc.options.cycles = *args.cycles;
  }
  vc.options.use_cache = !args.no_cache;
  vc.options.convergence_check = args.convergence_check;
  for (const auto& w : vc.warnings) std::cerr << "warning: " << w << '\n';
  return vc;
}

void add_common(CLI::App* cmd, CommonArgs& args, bool with_out) {
  cmd->add_option("--config", args.config_path, "JSON config (flat keys; missing keys take canonical defaults)");
  if (with_out) cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--seed", args.seed, "RNG seed (overrides config)");
  cmd->add_flag("--no-cache", args.no_cache, "always reassemble the interaction matrix");
}

void print_manifest_summary(const oscengine::cli::RunManifest& m) {
  const auto& doc = m.doc();
  std::cout << "matrix cache: " << (doc["matrix_cache"]["hit"].get<bool>() ? "hit" : "miss") << " ("
            << doc["matrix_cache"]["hash"].get<std::string>() << ")\n";
  for (const auto& [stage, secs] : doc["timings_s"].items()) std::cout << "  " << stage << ": " << secs << " s\n";
  std::cout << "wrote " << doc["outputs"].size() << " files\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-oscillator measurement-fueled engine simulator"};
  app.require_subcommand(1);

  CommonArgs args;
  std::vector<std::string> indices;
  bool with_oracle = false;

  auto* simulate = app.add_subcommand("simulate", "energy series, Fock snapshots, real-space densities");
  add_common(simulate, args, true);
  simulate->add_flag("--convergence-check", args.convergence_check, "compare p00 against a run at n_max-10");

  auto* cycles = app.add_subcommand("cycles", "Monte Carlo engine cycles");
  add_common(cycles, args, true);
  cycles->add_option("--tau-measure", args.tau_measure, "measurement time (default: grid argmin of p00)");
  cycles->add_option("--cycles", args.cycles, "number of cycles");

  auto* elements = app.add_subcommand("elements", "print selected interaction matrix elements");
  add_common(elements, args, false);
  elements->add_option("--index", indices, "u,v,j,k (repeatable)")->required();
  elements->add_flag("--oracle", with_oracle, "also evaluate the 2D grid oracle");

  auto* figure = app.add_subcommand("figure-data", "file set consumed by the figure renderer");
  add_common(figure, args, true);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto vc = resolve(args);
    if (simulate->parsed()) {
      print_manifest_summary(oscengine::cli::run_simulate(vc, args.out_dir));
    } else if (cycles->parsed()) {
      const auto m = oscengine::cli::run_cycle_batch(vc, args.out_dir);
      print_manifest_summary(m);
      std::cout << "tau_measure = " << m.doc()["tau_measure"]["tau"] << " ("
                << m.doc()["tau_measure"]["source"].get<std::string>() << ")\n";
    } else if (figure->parsed()) {
      print_manifest_summary(oscengine::cli::run_figure_data(vc, args.out_dir));
    } else if (elements->parsed()) {
      std::cout << "u,v,j,k,value" << (with_oracle ? ",oracle_2d" : "") << '\n';
      for (const auto& spec : indices) {
        std::array<int, 4> l{};
        char sep;
        std::istringstream in(spec);
        if (!(in >> l[0] >> sep >> l[1] >> sep >> l[2] >> sep >> l[3])) {
          throw oscengine::ConfigError("--index", "expected u,v,j,k, got \"" + spec + "\"");
        }
        const double value = oscengine::cli::element(vc.config, l[0], l[1], l[2], l[3]);
        std::cout << l[0] << ',' << l[1] << ',' << l[2] << ',' << l[3] << ',' << oscengine::cli::fmt(value);
        if (with_oracle) {
          std::cout << ','
                    << oscengine::cli::fmt(oscengine::oracle::element_oracle_2d(l[0], l[1], l[2], l[3],
                                                                                vc.config.coupling, vc.config.lambda));
        }
        std::cout << '\n';
      }
    }
  } catch (const oscengine::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

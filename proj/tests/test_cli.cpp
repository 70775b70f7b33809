#include <gtest/gtest.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "oscengine/cli.hpp"

using namespace oscengine;
using namespace oscengine::cli;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("osc_engine_test_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

ValidatedConfig small_run(const fs::path& cache, json extra = json::object()) {
  json doc = {{"n_max", 6}, {"tau_end", 0.05}, {"density_points", 21}, {"tracked", {{0, 0}, {1, 1}}}};
  doc.update(extra);
  auto vc = validate_config(doc);
  vc.options.cache_dir = cache;
  return vc;
}

std::string config_field(const json& doc) {
  try {
    validate_config(doc);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

}  // namespace

TEST(ValidateConfig, EmptyDocumentIsCanonical) {
  const auto vc = validate_config(json::object());
  EXPECT_EQ(vc.config.coupling.geometry, Geometry::parallel);
  EXPECT_DOUBLE_EQ(vc.config.coupling.phi0, -10.0);
  EXPECT_DOUBLE_EQ(vc.config.coupling.sigma, 0.5);
  EXPECT_EQ(vc.config.truncation.n_max(), 50);
  EXPECT_DOUBLE_EQ(vc.config.dtau, 1e-3);
  EXPECT_DOUBLE_EQ(vc.config.tau_end, 1.0);
  EXPECT_EQ(vc.options.cycles, 10000u);
  EXPECT_FALSE(vc.options.tau_measure.has_value());
  EXPECT_TRUE(vc.warnings.empty());
}

TEST(ValidateConfig, RejectsBadFieldsByName) {
  EXPECT_EQ(config_field(json::array()), "<document>");
  EXPECT_EQ(config_field({{"sigmaa", 0.5}}), "sigmaa");
  EXPECT_EQ(config_field({{"sigma", -0.5}}), "sigma");
  EXPECT_EQ(config_field({{"sigma", "wide"}}), "sigma");
  EXPECT_EQ(config_field({{"n_max", 0}}), "n_max");
  EXPECT_EQ(config_field({{"n_max", 101}}), "n_max");
  EXPECT_EQ(config_field({{"n_max", 2.5}}), "n_max");
  EXPECT_EQ(config_field({{"geometry", "diagonal"}}), "geometry");
  EXPECT_EQ(config_field({{"dtau", 0}}), "dtau");
  EXPECT_EQ(config_field({{"omega", -1}}), "omega");
  EXPECT_EQ(config_field({{"seed", -3}}), "seed");
  EXPECT_EQ(config_field({{"tracked", {{0, 60}}}}), "tracked");
  EXPECT_EQ(config_field({{"tracked", {{0}}}}), "tracked");
  EXPECT_EQ(config_field({{"cycles", 0}}), "cycles");
  EXPECT_EQ(config_field({{"tau_measure", -0.1}}), "tau_measure");
  EXPECT_EQ(config_field({{"density_points", 1}}), "density_points");
}

TEST(ValidateConfig, RepulsiveCouplingWarns) {
  const auto vc = validate_config({{"phi0", 4.0}});
  ASSERT_EQ(vc.warnings.size(), 1u);
  EXPECT_NE(vc.warnings[0].find("phi0"), std::string::npos);
}

TEST(ValidateConfig, LoadReportsParseErrors) {
  TempDir tmp;
  const auto p = tmp.path() / "bad.json";
  std::ofstream(p) << "{\"n_max\": ";
  try {
    load_config(p);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "--config");
  }
  EXPECT_THROW(load_config(tmp.path() / "missing.json"), ConfigError);
}

TEST(SnapshotTimes, DefaultsAndSnapping) {
  auto c = canonical_config();
  c.tau_end = 0.9;
  const auto t = snapshot_times(c, {});
  ASSERT_EQ(t.size(), 4u);
  EXPECT_NEAR(t[1], 0.3, 1e-12);
  EXPECT_NEAR(t[3], 0.9, 1e-12);
  RunOptions o;
  o.snapshot_taus = {0.12345};
  EXPECT_NEAR(snapshot_times(c, o)[0], 0.123, 1e-12);
}

TEST(Simulate, WritesExpectedFileSet) {
  TempDir tmp;
  const auto vc = small_run(tmp.path() / "cache");
  const auto m = run_simulate(vc, tmp.path() / "out");
  for (const char* name : {"energy_series.csv", "density_x1.csv", "density_x2.csv", "snapshots.csv", "manifest.json",
                           "fock_snapshot_0.csv", "fock_snapshot_3.csv", "density_0.csv", "density_3.csv"}) {
    EXPECT_TRUE(fs::exists(tmp.path() / "out" / name)) << name;
  }
  const auto rows = read_csv(tmp.path() / "out" / "energy_series.csv");
  ASSERT_EQ(rows.size(), 52u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"tau", "e_total", "e_free", "e_int", "e_int_post", "e_total_post", "p00",
                                               "p_0_0", "p_1_1"}));
  EXPECT_NEAR(std::stod(rows[1][1]), 1.0 - 2.0 * std::sqrt(5.0), 1e-12);
  EXPECT_EQ(read_csv(tmp.path() / "out" / "fock_snapshot_0.csv").size(), 7u);
  const auto dens = read_csv(tmp.path() / "out" / "density_2.csv");
  ASSERT_EQ(dens.size(), 21u);
  EXPECT_EQ(dens[0].size(), 21u);

  const auto manifest = json::parse(slurp(tmp.path() / "out" / "manifest.json"));
  EXPECT_EQ(manifest["command"], "simulate");
  EXPECT_FALSE(manifest["matrix_cache"]["hit"].get<bool>());
  EXPECT_EQ(manifest["spectrum"]["blocks"], 2);
  EXPECT_TRUE(manifest["timings_s"].contains("eigensolve"));
  EXPECT_EQ(manifest["outputs"].size(), m.outputs().size());
}

TEST(Simulate, RerunHitsCacheAndIsByteIdentical) {
  TempDir tmp;
  const auto vc = small_run(tmp.path() / "cache");
  run_simulate(vc, tmp.path() / "a");
  const auto second = run_simulate(vc, tmp.path() / "b");
  EXPECT_TRUE(second.doc()["matrix_cache"]["hit"].get<bool>());
  for (const char* name : {"energy_series.csv", "fock_snapshot_2.csv", "density_1.csv", "snapshots.csv"}) {
    EXPECT_EQ(slurp(tmp.path() / "a" / name), slurp(tmp.path() / "b" / name)) << name;
  }
}

TEST(Simulate, ZeroCouplingKeepsGroundState) {
  TempDir tmp;
  auto vc = small_run(tmp.path() / "cache", {{"phi0", 0.0}});
  vc.options.use_cache = false;
  run_simulate(vc, tmp.path() / "out");
  EXPECT_FALSE(fs::exists(tmp.path() / "cache"));
  const auto rows = read_csv(tmp.path() / "out" / "energy_series.csv");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    ASSERT_EQ(rows[i][6], "1");
    ASSERT_EQ(rows[i][1], "1");
  }
}

TEST(Simulate, ConvergenceCheckInManifest) {
  TempDir tmp;
  auto vc = small_run(tmp.path() / "cache", {{"n_max", 14}});
  vc.options.convergence_check = true;
  const auto m = run_simulate(vc, tmp.path() / "out");
  EXPECT_EQ(m.doc()["convergence"]["reduced_n_max"], 4);
  EXPECT_TRUE(m.doc()["convergence"].contains("max_abs_delta_p00"));
}

TEST(MatrixCache, BinaryLayoutAndSidecar) {
  TempDir tmp;
  const auto vc = small_run(tmp.path());
  const auto cached = cache::load_or_assemble(vc.config, tmp.path());
  const std::string bytes = slurp(cached.path);
  const std::size_t n = vc.config.truncation.total_dim();
  ASSERT_EQ(bytes.size(), cache::kHeaderBytes + n * (n + 1) / 2 * sizeof(double));
  EXPECT_EQ(bytes.substr(0, 4), "PHIM");
  std::uint32_t version = 0, n_max = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&n_max, bytes.data() + 8, 4);
  EXPECT_EQ(version, 1u);
  EXPECT_EQ(n_max, 6u);
  EXPECT_EQ(static_cast<int>(bytes[12]), 0);
  double phi0 = 0, first = 0;
  std::memcpy(&phi0, bytes.data() + 13, 8);
  std::memcpy(&first, bytes.data() + cache::kHeaderBytes, 8);
  EXPECT_EQ(phi0, -10.0);
  EXPECT_NEAR(first, -2.0 * std::sqrt(5.0), 1e-13);
  EXPECT_EQ(cached.path.filename(), "phim_" + cached.hash + ".bin");

  const auto side = json::parse(slurp(fs::path(cached.path).replace_extension(".json")));
  EXPECT_EQ(side["hash"], cached.hash);
  EXPECT_EQ(side["geometry"], "parallel");
  EXPECT_EQ(side["entries"], n * (n + 1) / 2);
}

TEST(MatrixCache, KeyDependsOnEveryMatrixParameter) {
  const auto base = cache::content_hash(cache::MatrixKey::from(canonical_config()));
  auto c = canonical_config();
  c.coupling.sigma = 0.51;
  EXPECT_NE(cache::content_hash(cache::MatrixKey::from(c)), base);
  c = canonical_config(Geometry::perpendicular);
  EXPECT_NE(cache::content_hash(cache::MatrixKey::from(c)), base);
  c = canonical_config();
  c.omega = 2.0;  // omega does not enter Phi
  EXPECT_EQ(cache::content_hash(cache::MatrixKey::from(c)), base);
}

TEST(MatrixCache, CorruptFileIsRecomputed) {
  TempDir tmp;
  const auto vc = small_run(tmp.path());
  const auto first = cache::load_or_assemble(vc.config, tmp.path());
  fs::resize_file(first.path, 100);
  const auto second = cache::load_or_assemble(vc.config, tmp.path());
  EXPECT_FALSE(second.hit);
  EXPECT_TRUE(second.recovered_from_corruption);
  EXPECT_EQ((second.matrix.values - first.matrix.values).cwiseAbs().maxCoeff(), 0.0);
  const auto third = cache::load_or_assemble(vc.config, tmp.path());
  EXPECT_TRUE(third.hit);
  EXPECT_EQ((third.matrix.values - first.matrix.values).cwiseAbs().maxCoeff(), 0.0);
}

TEST(MatrixCache, DefaultDirectoryFromEnvironment) {
  const char* old = std::getenv("OSC_ENGINE_CACHE_DIR");
  const std::string saved = old ? old : "";
  ::setenv("OSC_ENGINE_CACHE_DIR", "/tmp/osc_cache_probe", 1);
  EXPECT_EQ(cache::default_cache_dir(), fs::path("/tmp/osc_cache_probe"));
  if (old) ::setenv("OSC_ENGINE_CACHE_DIR", saved.c_str(), 1);
  else ::unsetenv("OSC_ENGINE_CACHE_DIR");
}

TEST(Cycles, SingleDeterministicRow) {
  TempDir tmp;
  auto vc = small_run(tmp.path() / "cache", {{"cycles", 1}, {"tau_measure", 0.0}, {"seed", 5}});
  const auto m = run_cycle_batch(vc, tmp.path() / "out");
  const auto rows = read_csv(tmp.path() / "out" / "cycles.csv");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"cycle", "tau_measure", "j", "k", "e_switch_on", "e_decouple_cost",
                                               "w_extract", "e_measure_input", "w_net"}));
  EXPECT_EQ(rows[1][2], "0");
  EXPECT_EQ(rows[1][3], "0");
  EXPECT_EQ(rows[1][6], "0");
  EXPECT_EQ(m.doc()["tau_measure"]["source"], "user");
  const auto summary = json::parse(slurp(tmp.path() / "out" / "cycles_summary.json"));
  EXPECT_EQ(summary["n_cycles"], 1);
  EXPECT_NEAR(summary["p00_at_tau"].get<double>(), 1.0, 1e-13);
}

TEST(Cycles, SeedReproducesLedger) {
  TempDir tmp;
  auto vc = small_run(tmp.path() / "cache", {{"cycles", 300}, {"seed", 8}});
  run_cycle_batch(vc, tmp.path() / "a");
  run_cycle_batch(vc, tmp.path() / "b");
  EXPECT_EQ(slurp(tmp.path() / "a" / "cycles.csv"), slurp(tmp.path() / "b" / "cycles.csv"));
  vc.config.seed = 9;
  run_cycle_batch(vc, tmp.path() / "c");
  EXPECT_NE(slurp(tmp.path() / "a" / "cycles.csv"), slurp(tmp.path() / "c" / "cycles.csv"));
}

TEST(FigureData, BundleDescribesFiles) {
  TempDir tmp;
  const auto vc = small_run(tmp.path() / "cache", {{"geometry", "perpendicular"}});
  run_figure_data(vc, tmp.path() / "out");
  const auto bundle = json::parse(slurp(tmp.path() / "out" / "bundle.json"));
  EXPECT_EQ(bundle["geometry"], "perpendicular");
  EXPECT_EQ(bundle["tracked"].size(), 2u);
  ASSERT_EQ(bundle["snapshots"].size(), 4u);
  for (const auto& s : bundle["snapshots"]) {
    EXPECT_TRUE(fs::exists(tmp.path() / "out" / s["fock"].get<std::string>()));
    EXPECT_TRUE(fs::exists(tmp.path() / "out" / s["density"].get<std::string>()));
  }
  const auto manifest = json::parse(slurp(tmp.path() / "out" / "manifest.json"));
  EXPECT_EQ(manifest["command"], "figure-data");
}

TEST(Element, MatchesAssembledMatrix) {
  auto c = canonical_config();
  c.truncation = ModeTruncation(8);
  const auto phi = assemble_matrix(c);
  EXPECT_NEAR(element(c, 3, 1, 2, 4), phi(3, 1, 2, 4), 1e-13);
  EXPECT_THROW(element(c, 9, 0, 0, 0), IndexError);
}

TEST(Canonical, InitialEnergyAtFullTruncation) {
  TempDir tmp;
  auto vc = validate_config({{"tau_end", 0.003}, {"density_points", 5}, {"snapshot_taus", {0.0}}});
  vc.options.cache_dir = tmp.path() / "cache";
  run_simulate(vc, tmp.path() / "out");
  const auto rows = read_csv(tmp.path() / "out" / "energy_series.csv");
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_NEAR(std::stod(rows[i][1]), 1.0 - 2.0 * std::sqrt(5.0), 1e-9);
}

TEST(Canonical, ParallelExcitedFractionNearFourFifths) {
  TempDir tmp;
  auto vc = validate_config({{"cycles", 10000}, {"seed", 1}});
  vc.options.cache_dir = tmp.path() / "cache";
  run_cycle_batch(vc, tmp.path() / "out");
  const auto summary = json::parse(slurp(tmp.path() / "out" / "cycles_summary.json"));
  const double f = summary["excited_fraction"]["mean"].get<double>();
  EXPECT_GE(f, 0.75);
  EXPECT_LE(f, 0.85);
}

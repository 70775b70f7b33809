#pragma once

// Run orchestration behind the osc_engine command line: config validation,
// cached matrix assembly, and the CSV/JSON data products.

#include <nlohmann/json.hpp>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "oscengine/basis.hpp"
#include "oscengine/config.hpp"
#include "oscengine/coupling.hpp"
#include "oscengine/dynamics.hpp"
#include "oscengine/matrix_cache.hpp"
#include "oscengine/measurement.hpp"

namespace oscengine::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

struct RunOptions {
  std::vector<LevelPair> tracked;     // empty: default_tracked_states
  std::vector<double> snapshot_taus;  // empty: 0, tau_end/3, 2 tau_end/3, tau_end
  double density_half_width = 6.0;
  int density_points = 201;
  std::optional<double> tau_measure;
  std::uint64_t cycles = 10000;
  bool use_cache = true;
  fs::path cache_dir;  // empty: cache::default_cache_dir()
  bool convergence_check = false;
};

struct ValidatedConfig {
  EngineConfig config;
  RunOptions options;
  std::vector<std::string> warnings;
};

namespace detail {

inline double number_field(const json& doc, const char* key, double fallback) {
  if (!doc.contains(key)) return fallback;
  const auto& v = doc.at(key);
  if (!v.is_number()) throw ConfigError(key, "must be a number");
  return v.get<double>();
}

inline std::int64_t integer_field(const json& doc, const char* key, std::int64_t fallback) {
  if (!doc.contains(key)) return fallback;
  const auto& v = doc.at(key);
  if (!v.is_number_integer()) throw ConfigError(key, "must be an integer");
  return v.get<std::int64_t>();
}

inline const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "geometry", "phi0",        "sigma",        "omega",         "lambda",
      "n_max",    "dtau",        "tau_end",      "seed",          "tracked",
      "snapshot_taus", "density_half_width", "density_points", "tau_measure", "cycles"};
  return keys;
}

}  // namespace detail

/// Fills defaults (the canonical parallel run) and rejects out-of-range values.
/// Unknown keys are rejected so that typos cannot silently fall back to defaults.
inline ValidatedConfig validate_config(const json& doc) {
  if (!doc.is_object()) throw ConfigError("<document>", "must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (!detail::known_keys().contains(key)) throw ConfigError(key, "unknown key");
  }

  ValidatedConfig out;
  EngineConfig& c = out.config;
  if (doc.contains("geometry")) {
    if (!doc.at("geometry").is_string()) throw ConfigError("geometry", "must be a string");
    c.coupling.geometry = geometry_from_string(doc.at("geometry").get<std::string>());
  }
  c.coupling.phi0 = detail::number_field(doc, "phi0", c.coupling.phi0);
  c.coupling.sigma = detail::number_field(doc, "sigma", c.coupling.sigma);
  c.omega = detail::number_field(doc, "omega", c.omega);
  c.lambda = detail::number_field(doc, "lambda", c.lambda);
  c.dtau = detail::number_field(doc, "dtau", c.dtau);
  c.tau_end = detail::number_field(doc, "tau_end", c.tau_end);

  const auto n_max = detail::integer_field(doc, "n_max", ModeTruncation::kDefaultMaxLevel);
  if (n_max < 1) throw ConfigError("n_max", "must be >= 1");
  if (n_max > 100) throw ConfigError("n_max", "must be <= 100 (dense (n_max+1)^2 matrices)");
  c.truncation = ModeTruncation(static_cast<int>(n_max));

  const auto seed = detail::integer_field(doc, "seed", 0);
  if (seed < 0) throw ConfigError("seed", "must be >= 0");
  c.seed = static_cast<std::uint64_t>(seed);

  c.validate();
  if (c.coupling.phi0 > 0.0) {
    out.warnings.push_back("phi0 > 0: repulsive coupling; the engine cycle assumes attraction");
  }

  RunOptions& o = out.options;
  if (doc.contains("tracked")) {
    const auto& t = doc.at("tracked");
    if (!t.is_array()) throw ConfigError("tracked", "must be an array of [j, k] pairs");
    for (const auto& p : t) {
      if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() || !p[1].is_number_integer()) {
        throw ConfigError("tracked", "must be an array of [j, k] pairs");
      }
      const int j = p[0].get<int>(), k = p[1].get<int>();
      if (!c.truncation.contains(j) || !c.truncation.contains(k)) {
        throw ConfigError("tracked", "level outside 0..n_max");
      }
      o.tracked.emplace_back(j, k);
    }
  }
  if (doc.contains("snapshot_taus")) {
    const auto& s = doc.at("snapshot_taus");
    if (!s.is_array()) throw ConfigError("snapshot_taus", "must be an array of numbers");
    for (const auto& v : s) {
      if (!v.is_number() || v.get<double>() < 0.0) throw ConfigError("snapshot_taus", "entries must be >= 0");
      o.snapshot_taus.push_back(v.get<double>());
    }
  }
  o.density_half_width = detail::number_field(doc, "density_half_width", o.density_half_width);
  if (!(o.density_half_width > 0.0)) throw ConfigError("density_half_width", "must be > 0");
  const auto points = detail::integer_field(doc, "density_points", o.density_points);
  if (points < 2) throw ConfigError("density_points", "must be >= 2");
  o.density_points = static_cast<int>(points);
  if (doc.contains("tau_measure")) {
    const double t = detail::number_field(doc, "tau_measure", 0.0);
    if (!(t >= 0.0)) throw ConfigError("tau_measure", "must be >= 0");
    o.tau_measure = t;
  }
  const auto cycles = detail::integer_field(doc, "cycles", static_cast<std::int64_t>(o.cycles));
  if (cycles < 1) throw ConfigError("cycles", "must be >= 1");
  o.cycles = static_cast<std::uint64_t>(cycles);
  return out;
}

inline ValidatedConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("--config", "cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("--config", std::string("parse error: ") + e.what());
  }
  return validate_config(doc);
}

inline json config_to_json(const EngineConfig& c) {
  return {{"geometry", to_string(c.coupling.geometry)},
          {"phi0", c.coupling.phi0},
          {"sigma", c.coupling.sigma},
          {"omega", c.omega},
          {"lambda", c.lambda},
          {"n_max", c.truncation.n_max()},
          {"dtau", c.dtau},
          {"tau_end", c.tau_end},
          {"seed", c.seed}};
}

/// 15 significant digits, locale independent.
inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.15g", v);
  return buf;
}

/// Snapshot times snapped to the config grid.
inline std::vector<double> snapshot_times(const EngineConfig& c, const RunOptions& o) {
  std::vector<double> raw = o.snapshot_taus;
  if (raw.empty()) raw = {0.0, c.tau_end / 3.0, 2.0 * c.tau_end / 3.0, c.tau_end};
  std::vector<double> out;
  for (double t : raw) out.push_back(c.grid_tau(static_cast<std::size_t>(std::llround(t / c.dtau))));
  return out;
}

/// Accumulates outputs and per-stage wall-clock timings; written as manifest.json.
class RunManifest {
 public:
  RunManifest(std::string command, const EngineConfig& config) {
    doc_ = {{"command", std::move(command)}, {"version", kVersion}, {"config", config_to_json(config)}};
    doc_["outputs"] = json::array();
    doc_["timings_s"] = json::object();
  }

  template <typename F>
  auto stage(const std::string& name, F&& body) {
    const auto t0 = std::chrono::steady_clock::now();
    auto record = [&] {
      doc_["timings_s"][name] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    try {
      if constexpr (std::is_void_v<decltype(body())>) {
        body();
        record();
      } else {
        auto result = body();
        record();
        return result;
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw std::runtime_error("stage '" + name + "' failed: " + e.what());
    }
  }

  void add_output(const fs::path& p) { doc_["outputs"].push_back(p.string()); }
  json& doc() { return doc_; }
  const json& doc() const { return doc_; }

  std::vector<fs::path> outputs() const {
    std::vector<fs::path> out;
    for (const auto& p : doc_["outputs"]) out.emplace_back(p.get<std::string>());
    return out;
  }

  void write(const fs::path& dir) {
    const fs::path path = dir / "manifest.json";
    add_output(path);
    std::ofstream out(path);
    out << doc_.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write " + path.string());
  }

 private:
  json doc_;
};

namespace detail {

inline std::ofstream open_output(const fs::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return out;
}

inline void check_written(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline void write_matrix_csv(const fs::path& path, const Eigen::MatrixXd& m) {
  auto out = open_output(path);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << fmt(m(r, c));
    out << '\n';
  }
  check_written(out, path);
}

inline void write_vector_csv(const fs::path& path, const char* header, const std::vector<double>& xs) {
  auto out = open_output(path);
  out << header << '\n';
  for (double x : xs) out << fmt(x) << '\n';
  check_written(out, path);
}

}  // namespace detail

inline void write_energy_series_csv(const fs::path& path, const std::vector<EnergyRecord>& rows,
                                    const std::vector<LevelPair>& tracked) {
  auto out = detail::open_output(path);
  out << "tau,e_total,e_free,e_int,e_int_post,e_total_post,p00";
  for (const auto& [j, k] : tracked) out << ",p_" << j << "_" << k;
  out << '\n';
  for (const auto& r : rows) {
    out << fmt(r.tau) << ',' << fmt(r.e_total) << ',' << fmt(r.e_free) << ',' << fmt(r.e_int) << ','
        << fmt(r.e_int_post) << ',' << fmt(r.e_total_post) << ',' << fmt(r.p00);
    for (double p : r.tracked_probs) out << ',' << fmt(p);
    out << '\n';
  }
  detail::check_written(out, path);
}

inline void write_cycles_csv(const fs::path& path, const std::vector<CycleLedger>& ledgers) {
  auto out = detail::open_output(path);
  out << "cycle,tau_measure,j,k,e_switch_on,e_decouple_cost,w_extract,e_measure_input,w_net\n";
  for (const auto& l : ledgers) {
    out << l.cycle << ',' << fmt(l.tau_measure) << ',' << l.j << ',' << l.k << ',' << fmt(l.e_switch_on) << ','
        << fmt(l.e_decouple_cost) << ',' << fmt(l.w_extract) << ',' << fmt(l.e_measure_input) << ','
        << fmt(l.w_net) << '\n';
  }
  detail::check_written(out, path);
}

/// Matrix, Hamiltonian and spectrum for a validated config.
struct PreparedSystem {
  InteractionMatrix phi;
  SpectralHamiltonian spectrum;
};

inline PreparedSystem prepare(const ValidatedConfig& vc, RunManifest& manifest) {
  const fs::path cache_dir = vc.options.cache_dir.empty() ? cache::default_cache_dir() : vc.options.cache_dir;
  auto cached = manifest.stage("matrix", [&] { return cache::load_or_assemble(vc.config, cache_dir, vc.options.use_cache); });
  manifest.doc()["matrix_cache"] = {{"hash", cached.hash},
                                    {"path", vc.options.use_cache ? cached.path.string() : ""},
                                    {"enabled", vc.options.use_cache},
                                    {"hit", cached.hit},
                                    {"recomputed_after_corruption", cached.recovered_from_corruption}};
  if (cached.recovered_from_corruption) {
    manifest.doc()["warnings"].push_back("matrix cache file was unreadable; recomputed");
  }
  auto spectrum = manifest.stage("eigensolve", [&] {
    return spectral_decompose(assemble_hamiltonian(vc.config, cached.matrix));
  });
  manifest.doc()["spectrum"] = {{"ground_energy", spectrum.eigenvalues[0]}, {"blocks", spectrum.block_count}};
  return {std::move(cached.matrix), std::move(spectrum)};
}

/// Energy series, Fock snapshots and real-space densities.
inline RunManifest run_simulate(const ValidatedConfig& vc, const fs::path& out_dir,
                                const std::string& command = "simulate") {
  const EngineConfig& c = vc.config;
  RunManifest manifest(command, c);
  for (const auto& w : vc.warnings) manifest.doc()["warnings"].push_back(w);
  fs::create_directories(out_dir);

  const auto sys = prepare(vc, manifest);
  const auto tracked = vc.options.tracked.empty() ? default_tracked_states(c) : vc.options.tracked;
  const auto psi0 = basis_state(0, 0, c.truncation);

  manifest.stage("energy_series", [&] {
    const auto rows = energy_series(c, sys.phi, sys.spectrum, psi0, tracked);
    const fs::path p = out_dir / "energy_series.csv";
    write_energy_series_csv(p, rows, tracked);
    manifest.add_output(p);
    double min_p00 = 1.0, tau_min = 0.0;
    for (const auto& r : rows) {
      if (r.p00 < min_p00) {
        min_p00 = r.p00;
        tau_min = r.tau;
      }
    }
    manifest.doc()["min_p00"] = {{"tau", tau_min}, {"p00", min_p00}};
  });

  manifest.stage("snapshots", [&] {
    const auto taus = snapshot_times(c, vc.options);
    const auto xs = linspace(-vc.options.density_half_width, vc.options.density_half_width, vc.options.density_points);
    const auto x2s = linspace(-vc.options.density_half_width * c.lambda, vc.options.density_half_width * c.lambda,
                              vc.options.density_points);
    const fs::path ax1 = out_dir / "density_x1.csv", ax2 = out_dir / "density_x2.csv";
    detail::write_vector_csv(ax1, "x1", xs);
    detail::write_vector_csv(ax2, "x2", x2s);
    manifest.add_output(ax1);
    manifest.add_output(ax2);

    const fs::path index_path = out_dir / "snapshots.csv";
    auto index = detail::open_output(index_path);
    index << "index,tau,fock_file,density_file\n";
    const auto dim = static_cast<Eigen::Index>(c.truncation.dim());
    for (std::size_t i = 0; i < taus.size(); ++i) {
      const auto psi = propagate(sys.spectrum, psi0, taus[i]);
      Eigen::MatrixXd fock(dim, dim);
      for (Eigen::Index j = 0; j < dim; ++j)
        for (Eigen::Index k = 0; k < dim; ++k) fock(j, k) = std::norm(psi.amplitudes[j * dim + k]);
      const std::string fock_name = "fock_snapshot_" + std::to_string(i) + ".csv";
      const std::string dens_name = "density_" + std::to_string(i) + ".csv";
      detail::write_matrix_csv(out_dir / fock_name, fock);
      detail::write_matrix_csv(out_dir / dens_name, realspace_density(psi, c.truncation, xs, x2s, c.lambda).rho);
      manifest.add_output(out_dir / fock_name);
      manifest.add_output(out_dir / dens_name);
      index << i << ',' << fmt(taus[i]) << ',' << fock_name << ',' << dens_name << '\n';
    }
    detail::check_written(index, index_path);
    manifest.add_output(index_path);
  });

  if (vc.options.convergence_check) {
    manifest.stage("convergence_check", [&] {
      const auto rep = truncation_convergence(c, sys.spectrum);
      manifest.doc()["convergence"] = {{"n_max", rep.n_max},
                                       {"reduced_n_max", rep.reduced_n_max},
                                       {"max_abs_delta_p00", rep.max_p00_difference},
                                       {"warn", rep.warn}};
      if (rep.warn) manifest.doc()["warnings"].push_back("truncation convergence: max |dp00| above 1e-4");
    });
  }

  manifest.write(out_dir);
  return manifest;
}

/// `figure-data`: the simulate file set plus bundle.json describing it for the renderer.
inline RunManifest run_figure_data(const ValidatedConfig& vc, const fs::path& out_dir) {
  RunManifest manifest = run_simulate(vc, out_dir, "figure-data");
  const auto taus = snapshot_times(vc.config, vc.options);
  json snaps = json::array();
  for (std::size_t i = 0; i < taus.size(); ++i) {
    snaps.push_back({{"tau", taus[i]},
                     {"fock", "fock_snapshot_" + std::to_string(i) + ".csv"},
                     {"density", "density_" + std::to_string(i) + ".csv"}});
  }
  const auto tracked = vc.options.tracked.empty() ? default_tracked_states(vc.config) : vc.options.tracked;
  json tracked_json = json::array();
  for (const auto& [j, k] : tracked) tracked_json.push_back({j, k});
  const json bundle = {{"geometry", to_string(vc.config.coupling.geometry)},
                       {"config", config_to_json(vc.config)},
                       {"energy_series", "energy_series.csv"},
                       {"density_x1", "density_x1.csv"},
                       {"density_x2", "density_x2.csv"},
                       {"tracked", tracked_json},
                       {"snapshots", snaps}};
  const fs::path p = out_dir / "bundle.json";
  std::ofstream out(p);
  out << bundle.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write " + p.string());
  manifest.add_output(p);
  manifest.write(out_dir);
  return manifest;
}

/// Monte Carlo engine cycles; tau_measure defaults to the ground-minimizing grid point.
inline RunManifest run_cycle_batch(const ValidatedConfig& vc, const fs::path& out_dir) {
  const EngineConfig& c = vc.config;
  RunManifest manifest("cycles", c);
  for (const auto& w : vc.warnings) manifest.doc()["warnings"].push_back(w);
  fs::create_directories(out_dir);
  const auto sys = prepare(vc, manifest);

  const auto best = ground_minimizing_time(c, sys.spectrum);
  const double tau = vc.options.tau_measure.value_or(best.tau);
  manifest.doc()["tau_measure"] = {{"tau", tau},
                                   {"source", vc.options.tau_measure ? "user" : "auto"},
                                   {"grid_min_p00", best.p00},
                                   {"grid_min_tau", best.tau}};

  const auto ledgers = manifest.stage("cycles", [&] {
    return run_cycles(c, sys.phi, sys.spectrum, tau, vc.options.cycles, c.seed);
  });

  manifest.stage("write", [&] {
    const fs::path csv = out_dir / "cycles.csv";
    write_cycles_csv(csv, ledgers);
    manifest.add_output(csv);

    const auto s = summarize(ledgers);
    const auto psi = propagate(sys.spectrum, basis_state(0, 0, c.truncation), tau);
    const auto dist = outcome_distribution(psi, c.truncation);
    const auto post = post_measurement_energies(dist, sys.phi.diagonal(), c.omega);
    auto stat = [](const MeanWithError& m) { return json{{"mean", m.mean}, {"stderr", m.stderr_}}; };
    json hist = json::array();
    for (const auto& [jk, n] : s.histogram) hist.push_back({{"j", jk.first}, {"k", jk.second}, {"count", n}});
    const json summary = {{"n_cycles", s.n_cycles},
                          {"seed", c.seed},
                          {"tau_measure", tau},
                          {"p00_at_tau", dist(0, 0)},
                          {"expected_excited_fraction", 1.0 - dist(0, 0)},
                          {"expected_w_extract", post.e_free_post - free_energy(0, 0, c.omega)},
                          {"e_switch_on", s.e_switch_on},
                          {"excited_fraction", stat(s.excited_fraction)},
                          {"e_decouple_cost", stat(s.e_decouple_cost)},
                          {"w_extract", stat(s.w_extract)},
                          {"e_measure_input", stat(s.e_measure_input)},
                          {"w_net", stat(s.w_net)},
                          {"histogram", hist}};
    const fs::path js = out_dir / "cycles_summary.json";
    std::ofstream out(js);
    out << summary.dump(2) << '\n';
    if (!out) throw std::runtime_error("cannot write " + js.string());
    manifest.add_output(js);
  });

  manifest.write(out_dir);
  return manifest;
}

struct ElementRow {
  int u, v, j, k;
  double value;
  std::optional<double> oracle;
};

/// Individual elements without assembling the full matrix.
inline double element(const EngineConfig& c, int u, int v, int j, int k) {
  for (int level : {u, v, j, k}) {
    if (!c.truncation.contains(level)) throw IndexError("element: level " + std::to_string(level) + " outside truncation");
  }
  if (c.coupling.geometry == Geometry::parallel) {
    return element_parallel(u, v, j, k, c.coupling, c.lambda,
                            specfun::gauss_hermite_rule(default_gamma_nodes(c.truncation)));
  }
  return element_perpendicular(u, v, j, k, c.coupling, c.lambda);
}

}  // namespace oscengine::cli

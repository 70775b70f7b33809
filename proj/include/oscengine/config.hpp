#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>

#include "oscengine/basis.hpp"
#include "oscengine/errors.hpp"

namespace oscengine {

enum class Geometry : std::uint8_t {
  parallel = 0,       // Phi(x1 - x2)
  perpendicular = 1,  // Phi(x1^2 + x2^2)
};

inline std::string_view to_string(Geometry g) {
  return g == Geometry::parallel ? "parallel" : "perpendicular";
}

inline Geometry geometry_from_string(std::string_view name) {
  if (name == "parallel") return Geometry::parallel;
  if (name == "perpendicular") return Geometry::perpendicular;
  throw ConfigError("geometry", "must be \"parallel\" or \"perpendicular\", got \"" +
                                    std::string(name) + "\"");
}

/// Gaussian coupling Phi0 * exp(-r^2 / 2 sigma^2); r = x1 - x2 (parallel) or
/// r^2 = x1^2 + x2^2 (perpendicular).
struct CouplingSpec {
  Geometry geometry = Geometry::parallel;
  double phi0 = -10.0;
  double sigma = 0.5;

  void validate() const {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) throw ConfigError("sigma", "must be > 0");
    if (!std::isfinite(phi0)) throw ConfigError("phi0", "must be finite");
  }

  friend bool operator==(const CouplingSpec&, const CouplingSpec&) = default;
};

/// All physical parameters of a run. Energies in hbar*Omega_1, lengths in l_1,
/// times in oscillator-1 periods.
struct EngineConfig {
  double omega = 1.0;   // Omega_2 / Omega_1
  double lambda = 1.0;  // l_2 / l_1
  ModeTruncation truncation{};
  CouplingSpec coupling{};
  double dtau = 1e-3;
  double tau_end = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(omega > 0.0) || !std::isfinite(omega)) throw ConfigError("omega", "must be > 0");
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda", "must be > 0");
    coupling.validate();
    if (!(dtau > 0.0) || !std::isfinite(dtau)) throw ConfigError("dtau", "must be > 0");
    if (!(tau_end >= dtau) || !std::isfinite(tau_end)) throw ConfigError("tau_end", "must be >= dtau");
  }

  /// Number of grid intervals; the grid is {0, dtau, ..., steps*dtau}.
  std::size_t steps() const { return static_cast<std::size_t>(std::llround(tau_end / dtau)); }
  double grid_tau(std::size_t i) const { return static_cast<double>(i) * dtau; }

  friend bool operator==(const EngineConfig&, const EngineConfig&) = default;
};

/// Phi0=-10, sigma=1/2, omega=lambda=1, n_max=50, dtau=0.001.
inline EngineConfig canonical_config(Geometry geometry = Geometry::parallel) {
  EngineConfig cfg;
  cfg.coupling.geometry = geometry;
  return cfg;
}

}  // namespace oscengine

#pragma once

// Interaction matrix elements <u,v|Phi|j,k> for the Gaussian coupling.
//
// Parallel geometry, Phi(x1 - x2): the coupling is written as a Fourier integral
// over gamma, which separates the x1 and x2 overlaps into two Xi kernels
//   <u,v|Phi|j,k> = int dgamma Phi_gamma Xi(gamma, u, j) Xi(-gamma*lambda, v, k).
// Every factor carries a Gaussian in gamma, so after pulling out the combined
// weight exp(-c gamma^2), c = sigma^2/2 + 1/4 + lambda^2/4, the rest is a
// polynomial of degree u+j+v+k and Gauss-Hermite quadrature is exact.
//
// Perpendicular geometry, Phi(x1^2 + x2^2): the Gaussian factorizes directly,
//   <u,v|Phi|j,k> = Phi0 * Sigma(1/2sigma^2, u, j) * Sigma(lambda^2/2sigma^2, v, k).

#include <Eigen/Dense>

#include <cmath>
#include <complex>
#include <numbers>
#include <string>
#include <vector>

#include "oscengine/basis.hpp"
#include "oscengine/config.hpp"
#include "oscengine/errors.hpp"
#include "oscengine/specfun.hpp"

namespace oscengine {

/// Orders above this use quadrature for Sigma; the alternating 2F1 sum loses digits.
inline constexpr int kSigmaClosedFormMaxOrder = 20;

/// Default gamma-quadrature size for a truncation: 2*n_max + 8 nodes.
inline int default_gamma_nodes(const ModeTruncation& trunc) { return 2 * trunc.n_max() + 8; }

/// Fourier amplitude of the parallel coupling, Phi_gamma = Phi0 sigma e^{-gamma^2 sigma^2/2} / sqrt(2 pi).
inline double phi_gamma_gaussian(double gamma, const CouplingSpec& spec) {
  if (spec.geometry != Geometry::parallel) {
    throw UsageError("phi_gamma_gaussian: only defined for the parallel geometry");
  }
  const double s = spec.sigma;
  return spec.phi0 * s * std::exp(-0.5 * gamma * gamma * s * s) / std::sqrt(2.0 * std::numbers::pi);
}

/// Real factor R of Xi = (-i)^{|u-j|} R. For u >= j,
///   R = e^{-g^2/4} sqrt(j!/u!) (g/sqrt2)^{u-j} L_j^{u-j}(g^2/2),
/// evaluated in log space; u < j uses the u <-> j symmetry of the overlap.
inline double xi_reduced(double g, int u, int j) {
  if (u < 0 || j < 0) throw DomainError("xi: negative level");
  if (u < j) std::swap(u, j);
  const int m = u - j;
  const double lag = specfun::laguerre(j, m, 0.5 * g * g);
  if (m == 0) return std::exp(-0.25 * g * g) * lag;
  if (g == 0.0) return 0.0;
  const double log_mag = -0.25 * g * g +
                         0.5 * (specfun::log_factorial(j) - specfun::log_factorial(u)) +
                         m * std::log(std::abs(g) / std::numbers::sqrt2);
  const double sign = (g < 0.0 && (m % 2 == 1)) ? -1.0 : 1.0;
  return sign * std::exp(log_mag) * lag;
}

/// Xi(g, u, j) = int dx psi_u(x) psi_j(x) e^{-i g x} for an oscillator of unit length (g = gamma*l).
inline std::complex<double> xi(double g, int u, int j) {
  static constexpr std::complex<double> kMinusIPowers[4] = {{1, 0}, {0, -1}, {-1, 0}, {0, 1}};
  const int m = u > j ? u - j : j - u;
  return kMinusIPowers[m % 4] * xi_reduced(g, u, j);
}

/// Closed form for Sigma(a, u, j) = int dx psi_u psi_j e^{-a x^2}, a = alpha*l^2.
inline double sigma_kernel_closed_form(double al2, int u, int j) {
  if (!(al2 > 0.0)) throw DomainError("sigma_kernel: alpha*l^2 must be > 0");
  if (u < 0 || j < 0) throw DomainError("sigma_kernel: negative level");
  const int s = u + j;
  if (s % 2 != 0) return 0.0;
  const int half = s / 2;
  const double log_mag = specfun::log_factorial(s) - specfun::log_factorial(half) -
                         0.5 * (specfun::log_factorial(u) + specfun::log_factorial(j)) -
                         0.5 * (s + 1) * std::log1p(al2) + half * std::log(0.5 * al2);
  const double sign = (half % 2 == 0) ? 1.0 : -1.0;
  const double f = specfun::hyp2f1_terminating(u, j, 0.5 * (1 - s), (1.0 + al2) / (2.0 * al2));
  return sign * std::exp(log_mag) * f;
}

/// Sigma(a, u, j) by Gauss-Hermite after rescaling y = t / sqrt(1 + a); exact once
/// the rule integrates degree u + j.
inline double sigma_kernel_quadrature(double al2, int u, int j, const specfun::QuadratureRule& rule) {
  if (!(al2 > 0.0)) throw DomainError("sigma_kernel: alpha*l^2 must be > 0");
  if (u < 0 || j < 0) throw DomainError("sigma_kernel: negative level");
  if ((u + j) % 2 != 0) return 0.0;
  if (rule.exact_degree() < u + j) {
    throw UsageError("sigma_kernel_quadrature: rule with " + std::to_string(rule.size()) +
                     " nodes cannot integrate degree " + std::to_string(u + j));
  }
  const double scale = 1.0 / std::sqrt(1.0 + al2);
  const int top = std::max(u, j);
  double sum = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const double y = rule.nodes[i] * scale;
    const auto psi = specfun::hermite_functions(top, y);
    sum += rule.scaled_weights[i] * psi[u] * psi[j] * std::exp(-al2 * y * y);
  }
  return scale * sum;
}

inline double sigma_kernel_quadrature(double al2, int u, int j) {
  return sigma_kernel_quadrature(al2, u, j, specfun::gauss_hermite_rule((u + j) / 2 + 1));
}

/// Sigma kernel with exact parity zeros; closed form up to order 20, quadrature above.
inline double sigma_kernel(double al2, int u, int j) {
  if (!(al2 > 0.0)) throw DomainError("sigma_kernel: alpha*l^2 must be > 0, got " + std::to_string(al2));
  if ((u + j) % 2 != 0) return 0.0;
  if (u <= kSigmaClosedFormMaxOrder && j <= kSigmaClosedFormMaxOrder) {
    return sigma_kernel_closed_form(al2, u, j);
  }
  return sigma_kernel_quadrature(al2, u, j);
}

namespace detail {

inline double gamma_weight_exponent(const CouplingSpec& spec, double lambda) {
  return 0.5 * spec.sigma * spec.sigma + 0.25 + 0.25 * lambda * lambda;
}

// (-i)^{m1+m2} for even m1+m2.
inline double parallel_phase(int u, int v, int j, int k) {
  const int m = std::abs(u - j) + std::abs(v - k);
  return (m / 2) % 2 == 0 ? 1.0 : -1.0;
}

inline bool parallel_allowed(int u, int v, int j, int k) { return ((u - j) + (v - k)) % 2 == 0; }
inline bool perpendicular_allowed(int u, int v, int j, int k) {
  return (u + j) % 2 == 0 && (v + k) % 2 == 0;
}

}  // namespace detail

/// Parallel-geometry element via gamma quadrature. The rule must integrate degree u+j+v+k.
inline double element_parallel(int u, int v, int j, int k, const CouplingSpec& spec, double lambda,
                               const specfun::QuadratureRule& rule) {
  if (spec.geometry != Geometry::parallel) throw UsageError("element_parallel: geometry must be parallel");
  if (u < 0 || v < 0 || j < 0 || k < 0) throw IndexError("element_parallel: negative level");
  if (rule.exact_degree() < u + v + j + k) {
    throw ConfigError("gamma_nodes", std::to_string(rule.size()) + " nodes integrate degree " +
                                         std::to_string(rule.exact_degree()) + " < " +
                                         std::to_string(u + v + j + k));
  }
  if (!detail::parallel_allowed(u, v, j, k) || spec.phi0 == 0.0) return 0.0;

  const double c = detail::gamma_weight_exponent(spec, lambda);
  const double inv_sqrt_c = 1.0 / std::sqrt(c);
  double sum = 0.0;
  for (std::size_t i = 0; i < rule.size(); ++i) {
    const double gamma = rule.nodes[i] * inv_sqrt_c;
    sum += rule.scaled_weights[i] * phi_gamma_gaussian(gamma, spec) * xi_reduced(gamma, u, j) *
           xi_reduced(-gamma * lambda, v, k);
  }
  return detail::parallel_phase(u, v, j, k) * inv_sqrt_c * sum;
}

inline double element_parallel(int u, int v, int j, int k, const CouplingSpec& spec, double lambda) {
  return element_parallel(u, v, j, k, spec, lambda, specfun::gauss_hermite_rule((u + v + j + k) / 2 + 2));
}

inline double element_perpendicular(int u, int v, int j, int k, const CouplingSpec& spec, double lambda) {
  if (spec.geometry != Geometry::perpendicular) {
    throw UsageError("element_perpendicular: geometry must be perpendicular");
  }
  if (u < 0 || v < 0 || j < 0 || k < 0) throw IndexError("element_perpendicular: negative level");
  if (!detail::perpendicular_allowed(u, v, j, k)) return 0.0;
  const double a1 = 1.0 / (2.0 * spec.sigma * spec.sigma);
  const double a2 = lambda * lambda * a1;
  return spec.phi0 * sigma_kernel(a1, u, j) * sigma_kernel(a2, v, k);
}

/// Phi over the composite basis. Row/column index = flat_index(j, k).
struct InteractionMatrix {
  Eigen::MatrixXd values;
  CouplingSpec spec;
  ModeTruncation trunc;
  double lambda = 1.0;
  double omega = 1.0;

  double operator()(int u, int v, int j, int k) const {
    return values(static_cast<Eigen::Index>(flat_index(u, v, trunc)),
                  static_cast<Eigen::Index>(flat_index(j, k, trunc)));
  }
  double diag(int j, int k) const { return (*this)(j, k, j, k); }
  Eigen::VectorXd diagonal() const { return values.diagonal(); }
};

namespace detail {

// table[(u*dim + j)*nq + i] = xi_reduced(scale * gamma_i, u, j)
inline std::vector<double> xi_table(const std::vector<double>& gammas, double scale, int n_max) {
  const std::size_t dim = static_cast<std::size_t>(n_max) + 1;
  const std::size_t nq = gammas.size();
  std::vector<double> table(dim * dim * nq);
  for (int u = 0; u <= n_max; ++u) {
    for (int j = 0; j <= u; ++j) {
      for (std::size_t i = 0; i < nq; ++i) {
        const double r = xi_reduced(scale * gammas[i], u, j);
        table[(u * dim + j) * nq + i] = r;
        table[(j * dim + u) * nq + i] = r;
      }
    }
  }
  return table;
}

inline void assemble_parallel(InteractionMatrix& phi, int gamma_nodes) {
  const int n_max = phi.trunc.n_max();
  const auto rule = specfun::gauss_hermite_rule(gamma_nodes);
  if (rule.exact_degree() < 4 * n_max) {
    throw ConfigError("gamma_nodes", std::to_string(gamma_nodes) + " nodes cannot integrate degree " +
                                         std::to_string(4 * n_max));
  }
  const double c = gamma_weight_exponent(phi.spec, phi.lambda);
  const double inv_sqrt_c = 1.0 / std::sqrt(c);
  std::vector<double> gammas(rule.size());
  std::vector<double> w(rule.size());
  for (std::size_t i = 0; i < rule.size(); ++i) {
    gammas[i] = rule.nodes[i] * inv_sqrt_c;
    w[i] = rule.scaled_weights[i] * phi_gamma_gaussian(gammas[i], phi.spec) * inv_sqrt_c;
  }
  const auto x1 = xi_table(gammas, 1.0, n_max);
  const auto x2 = xi_table(gammas, -phi.lambda, n_max);

  const std::size_t dim = phi.trunc.dim();
  const std::size_t nq = rule.size();
  std::vector<double> wx1(nq);
  for (int u = 0; u <= n_max; ++u) {
    for (int v = 0; v <= n_max; ++v) {
      const auto row = static_cast<Eigen::Index>(u * dim + v);
      for (int j = u; j <= n_max; ++j) {
        const double* r1 = &x1[(u * dim + j) * nq];
        for (std::size_t i = 0; i < nq; ++i) wx1[i] = w[i] * r1[i];
        for (int k = (j == u ? v : 0); k <= n_max; ++k) {
          if (!parallel_allowed(u, v, j, k)) continue;
          const double* r2 = &x2[(v * dim + k) * nq];
          double sum = 0.0;
          for (std::size_t i = 0; i < nq; ++i) sum += wx1[i] * r2[i];
          const auto col = static_cast<Eigen::Index>(j * dim + k);
          const double value = parallel_phase(u, v, j, k) * sum;
          phi.values(row, col) = value;
          phi.values(col, row) = value;
        }
      }
    }
  }
}

inline void assemble_perpendicular(InteractionMatrix& phi) {
  const int n_max = phi.trunc.n_max();
  const std::size_t dim = phi.trunc.dim();
  const double a1 = 1.0 / (2.0 * phi.spec.sigma * phi.spec.sigma);
  const double a2 = phi.lambda * phi.lambda * a1;
  const auto rule = specfun::gauss_hermite_rule(n_max + 1);

  auto table = [&](double al2) {
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for (int u = 0; u <= n_max; ++u) {
      for (int j = u % 2; j <= u; j += 2) {
        const double value = (u <= kSigmaClosedFormMaxOrder && j <= kSigmaClosedFormMaxOrder)
                                 ? sigma_kernel_closed_form(al2, u, j)
                                 : sigma_kernel_quadrature(al2, u, j, rule);
        s(u, j) = value;
        s(j, u) = value;
      }
    }
    return s;
  };
  const Eigen::MatrixXd s1 = table(a1);
  const Eigen::MatrixXd s2 = table(a2);

  for (int u = 0; u <= n_max; ++u) {
    for (int v = 0; v <= n_max; ++v) {
      const auto row = static_cast<Eigen::Index>(u * dim + v);
      for (int j = u; j <= n_max; ++j) {
        if ((u + j) % 2 != 0) continue;
        for (int k = (j == u ? v : 0); k <= n_max; ++k) {
          if ((v + k) % 2 != 0) continue;
          const auto col = static_cast<Eigen::Index>(j * dim + k);
          const double value = phi.spec.phi0 * s1(u, j) * s2(v, k);
          phi.values(row, col) = value;
          phi.values(col, row) = value;
        }
      }
    }
  }
}

}  // namespace detail

/// Dense Phi for the whole truncated basis. Only the upper triangle is computed and
/// mirrored; parity-forbidden entries are left at exact zero.
inline InteractionMatrix assemble_matrix(const EngineConfig& config, int gamma_nodes = 0) {
  config.validate();
  InteractionMatrix phi;
  phi.spec = config.coupling;
  phi.trunc = config.truncation;
  phi.lambda = config.lambda;
  phi.omega = config.omega;
  const auto n = static_cast<Eigen::Index>(config.truncation.total_dim());
  phi.values = Eigen::MatrixXd::Zero(n, n);
  if (config.coupling.phi0 == 0.0) return phi;

  if (config.coupling.geometry == Geometry::parallel) {
    detail::assemble_parallel(phi, gamma_nodes > 0 ? gamma_nodes : default_gamma_nodes(config.truncation));
  } else {
    detail::assemble_perpendicular(phi);
  }
  return phi;
}

}  // namespace oscengine

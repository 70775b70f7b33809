#pragma once

// Special functions behind the oscillator overlap kernels: normalized Hermite
// functions, generalized Laguerre polynomials, the terminating 2F1 series and
// Gauss-Hermite rules.

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "oscengine/errors.hpp"

namespace oscengine::specfun {

inline constexpr int kMaxLogFactorial = 200;

namespace detail {

inline const std::array<double, kMaxLogFactorial + 1>& log_factorial_table() {
  static const auto table = [] {
    std::array<double, kMaxLogFactorial + 1> t{};
    t[0] = 0.0;
    for (int n = 1; n <= kMaxLogFactorial; ++n) t[n] = t[n - 1] + std::log(static_cast<double>(n));
    return t;
  }();
  return table;
}

}  // namespace detail

/// ln(n!) for 0 <= n <= 200.
inline double log_factorial(int n) {
  if (n < 0 || n > kMaxLogFactorial) {
    throw DomainError("log_factorial: n=" + std::to_string(n) + " outside [0, 200]");
  }
  return detail::log_factorial_table()[static_cast<std::size_t>(n)];
}

/// psi_0 ... psi_{n_max} at y, where psi_n(y) = H_n(y) e^{-y^2/2} / sqrt(2^n n! sqrt(pi)).
/// Normalized recurrence; raw H_n would overflow near n = 50.
inline std::vector<double> hermite_functions(int n_max, double y) {
  if (n_max < 0) throw DomainError("hermite_functions: negative level");
  std::vector<double> psi(static_cast<std::size_t>(n_max) + 1);
  psi[0] = std::exp(-0.5 * y * y) / std::sqrt(std::sqrt(std::numbers::pi));
  if (n_max >= 1) psi[1] = std::numbers::sqrt2 * y * psi[0];
  for (int n = 2; n <= n_max; ++n) {
    const double dn = n;
    psi[n] = y * std::sqrt(2.0 / dn) * psi[n - 1] - std::sqrt((dn - 1.0) / dn) * psi[n - 2];
  }
  return psi;
}

inline double hermite_function(int n, double y) {
  if (n < 0) throw DomainError("hermite_function: negative level " + std::to_string(n));
  return hermite_functions(n, y).back();
}

/// Generalized Laguerre polynomial L_m^a(x), three-term recurrence in m.
inline double laguerre(int m, int a, double x) {
  if (m < 0) throw DomainError("laguerre: negative degree " + std::to_string(m));
  if (m + a < 0) {
    throw DomainError("laguerre: m + a < 0 (m=" + std::to_string(m) + ", a=" + std::to_string(a) + ")");
  }
  double prev = 1.0;
  if (m == 0) return prev;
  double cur = 1.0 + a - x;
  for (int n = 1; n < m; ++n) {
    const double next = ((2.0 * n + 1.0 + a - x) * cur - (n + a) * prev) / (n + 1.0);
    prev = cur;
    cur = next;
  }
  return cur;
}

/// F(-u, -j; c; z) as the finite sum over n <= min(u, j), built from Pochhammer ratios.
inline double hyp2f1_terminating(int u, int j, double c, double z) {
  if (u < 0 || j < 0) throw DomainError("hyp2f1_terminating: u and j must be >= 0");
  const int terms = std::min(u, j);
  double sum = 1.0;
  double term = 1.0;
  for (int n = 0; n < terms; ++n) {
    const double cn = c + n;
    if (cn == 0.0) {
      throw DomainError("hyp2f1_terminating: c = " + std::to_string(c) +
                        " hits a non-positive integer inside the sum");
    }
    term *= (static_cast<double>(n - u) * static_cast<double>(n - j)) / (cn * (n + 1.0)) * z;
    sum += term;
  }
  return sum;
}

/// Gauss-Hermite rule for the weight e^{-y^2}. `scaled_weights[i]` = weights[i] * e^{nodes[i]^2},
/// which stays O(1) at the outer nodes where `weights` underflows towards 1e-100.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::vector<double> scaled_weights;

  std::size_t size() const noexcept { return nodes.size(); }
  /// Highest polynomial degree integrated exactly.
  int exact_degree() const noexcept { return 2 * static_cast<int>(nodes.size()) - 1; }
};

/// Golub-Welsch nodes, polished by Newton on psi_n; weights from the Christoffel
/// sum 1 / sum_k psi_k(y)^2 so the tiny outer weights keep full relative accuracy.
inline QuadratureRule gauss_hermite_rule(int n_nodes) {
  if (n_nodes < 1) throw DomainError("gauss_hermite_rule: need at least one node");
  const auto n = static_cast<Eigen::Index>(n_nodes);

  Eigen::VectorXd diag = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sub(std::max<Eigen::Index>(n - 1, 0));
  for (Eigen::Index k = 1; k < n; ++k) sub[k - 1] = std::sqrt(0.5 * static_cast<double>(k));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
  solver.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericError("gauss_hermite_rule: tridiagonal eigensolve failed");

  QuadratureRule rule;
  rule.nodes.assign(solver.eigenvalues().data(), solver.eigenvalues().data() + n);
  std::sort(rule.nodes.begin(), rule.nodes.end());

  const double dn = n_nodes;
  for (double& y : rule.nodes) {
    for (int iter = 0; iter < 8; ++iter) {
      const auto psi = hermite_functions(n_nodes, y);
      const double f = psi[n_nodes];
      const double df = std::sqrt(2.0 * dn) * psi[n_nodes - 1] - y * f;
      if (df == 0.0) break;
      const double step = f / df;
      y -= step;
      if (std::abs(step) < 1e-16 * std::max(1.0, std::abs(y))) break;
    }
  }
  // Exact mirror symmetry keeps odd moments at zero.
  for (int i = 0; i < n_nodes / 2; ++i) {
    const double mag = 0.5 * (rule.nodes[n_nodes - 1 - i] - rule.nodes[i]);
    rule.nodes[i] = -mag;
    rule.nodes[n_nodes - 1 - i] = mag;
  }
  if (n_nodes % 2 == 1) rule.nodes[n_nodes / 2] = 0.0;

  rule.weights.resize(rule.nodes.size());
  rule.scaled_weights.resize(rule.nodes.size());
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    const double y = rule.nodes[i];
    const auto psi = hermite_functions(n_nodes - 1, y);
    double christoffel = 0.0;
    for (double p : psi) christoffel += p * p;
    rule.scaled_weights[i] = 1.0 / christoffel;
    rule.weights[i] = rule.scaled_weights[i] * std::exp(-y * y);
  }
  for (int i = 0; i < n_nodes / 2; ++i) {
    const int mirror = n_nodes - 1 - i;
    rule.weights[mirror] = rule.weights[i];
    rule.scaled_weights[mirror] = rule.scaled_weights[i];
  }
  return rule;
}

}  // namespace oscengine::specfun

#pragma once

// Brute-force reference for interaction elements: trapezoid rule on a tensor
// grid in (x1, x2), straight from the position-space double integral. Shares
// nothing with the Xi/Sigma route except the Hermite-function recurrence.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "oscengine/config.hpp"
#include "oscengine/specfun.hpp"

namespace oscengine::oracle {

struct Grid2D {
  int points = 801;        // per axis
  double half_width = 10;  // in units of each oscillator's own length
};

namespace detail {

// Columns: psi_n(x/l)/sqrt(l) on the grid, n = 0..n_max. Also returns abscissae and spacing.
inline Eigen::MatrixXd scaled_hermite(int n_max, double length, const Grid2D& grid, std::vector<double>& xs,
                                      double& h) {
  const double half = grid.half_width * length;
  h = 2.0 * half / (grid.points - 1);
  xs.resize(static_cast<std::size_t>(grid.points));
  Eigen::MatrixXd table(grid.points, n_max + 1);
  for (int a = 0; a < grid.points; ++a) {
    xs[static_cast<std::size_t>(a)] = -half + a * h;
    const auto psi = specfun::hermite_functions(n_max, xs[static_cast<std::size_t>(a)] / length);
    for (int n = 0; n <= n_max; ++n) table(a, n) = psi[static_cast<std::size_t>(n)] / std::sqrt(length);
  }
  return table;
}

inline double coupling_value(const CouplingSpec& spec, double x1, double x2) {
  const double r2 = spec.geometry == Geometry::parallel ? (x1 - x2) * (x1 - x2) : x1 * x1 + x2 * x2;
  return spec.phi0 * std::exp(-r2 / (2.0 * spec.sigma * spec.sigma));
}

}  // namespace detail

/// All elements <u,v|Phi|j,k> with every level <= max_level, as a dense
/// (max_level+1)^2 square matrix indexed like InteractionMatrix.
inline Eigen::MatrixXd element_block_2d(int max_level, const CouplingSpec& spec, double lambda,
                                        const Grid2D& grid = {}) {
  std::vector<double> x1s, x2s;
  double h1 = 0, h2 = 0;
  const Eigen::MatrixXd p1 = detail::scaled_hermite(max_level, 1.0, grid, x1s, h1);
  const Eigen::MatrixXd p2 = detail::scaled_hermite(max_level, lambda, grid, x2s, h2);

  Eigen::MatrixXd kernel(grid.points, grid.points);
  for (int a = 0; a < grid.points; ++a) {
    for (int b = 0; b < grid.points; ++b) {
      const double wa = (a == 0 || a == grid.points - 1) ? 0.5 : 1.0;
      const double wb = (b == 0 || b == grid.points - 1) ? 0.5 : 1.0;
      kernel(a, b) = wa * wb * h1 * h2 * detail::coupling_value(spec, x1s[a], x2s[b]);
    }
  }

  const int dim = max_level + 1;
  // f(a, u*dim+j) = psi_u(x1_a) psi_j(x1_a); g likewise on the x2 axis.
  Eigen::MatrixXd f(grid.points, dim * dim), g(grid.points, dim * dim);
  for (int u = 0; u < dim; ++u) {
    for (int j = 0; j < dim; ++j) {
      f.col(u * dim + j) = p1.col(u).cwiseProduct(p1.col(j));
      g.col(u * dim + j) = p2.col(u).cwiseProduct(p2.col(j));
    }
  }
  const Eigen::MatrixXd pairs = f.transpose() * kernel * g;  // pairs(u*dim+j, v*dim+k)

  Eigen::MatrixXd out(dim * dim, dim * dim);
  for (int u = 0; u < dim; ++u)
    for (int v = 0; v < dim; ++v)
      for (int j = 0; j < dim; ++j)
        for (int k = 0; k < dim; ++k) out(u * dim + v, j * dim + k) = pairs(u * dim + j, v * dim + k);
  return out;
}

/// Single element by direct double sum over the tensor grid.
inline double element_oracle_2d(int u, int v, int j, int k, const CouplingSpec& spec, double lambda,
                                const Grid2D& grid = {}) {
  std::vector<double> x1s, x2s;
  double h1 = 0, h2 = 0;
  const Eigen::MatrixXd p1 = detail::scaled_hermite(std::max(u, j), 1.0, grid, x1s, h1);
  const Eigen::MatrixXd p2 = detail::scaled_hermite(std::max(v, k), lambda, grid, x2s, h2);
  double sum = 0.0;
  for (int a = 0; a < grid.points; ++a) {
    const double wa = (a == 0 || a == grid.points - 1) ? 0.5 : 1.0;
    const double fa = wa * p1(a, u) * p1(a, j);
    if (fa == 0.0) continue;
    for (int b = 0; b < grid.points; ++b) {
      const double wb = (b == 0 || b == grid.points - 1) ? 0.5 : 1.0;
      sum += fa * wb * p2(b, v) * p2(b, k) * detail::coupling_value(spec, x1s[a], x2s[b]);
    }
  }
  return sum * h1 * h2;
}

}  // namespace oscengine::oracle

#pragma once

// Coupled Hamiltonian, its spectral decomposition, and unitary propagation
// U(tau) = exp(-2 pi i H tau) with tau in oscillator-1 periods.

#include <Eigen/Dense>
#include <lapacke.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "oscengine/basis.hpp"
#include "oscengine/config.hpp"
#include "oscengine/coupling.hpp"
#include "oscengine/errors.hpp"

namespace oscengine {

struct HamiltonianMatrix {
  Eigen::MatrixXd values;
  ModeTruncation trunc;
  double omega = 1.0;
};

/// Diagonal (j + 1/2) + omega (k + 1/2) over the flattened basis.
inline Eigen::VectorXd free_energies(const ModeTruncation& trunc, double omega) {
  Eigen::VectorXd e(static_cast<Eigen::Index>(trunc.total_dim()));
  for (std::size_t f = 0; f < trunc.total_dim(); ++f) {
    const auto idx = unflatten(f, trunc);
    e[static_cast<Eigen::Index>(f)] = free_energy(idx.j, idx.k, omega);
  }
  return e;
}

inline HamiltonianMatrix assemble_hamiltonian(const EngineConfig& config, const InteractionMatrix& phi) {
  const auto n = static_cast<Eigen::Index>(config.truncation.total_dim());
  if (phi.trunc != config.truncation || phi.values.rows() != n || phi.values.cols() != n) {
    throw UsageError("assemble_hamiltonian: interaction matrix is " + std::to_string(phi.values.rows()) + "x" +
                     std::to_string(phi.values.cols()) + ", config expects " + std::to_string(n));
  }
  HamiltonianMatrix h{phi.values, config.truncation, config.omega};
  h.values.diagonal() += free_energies(config.truncation, config.omega);
  return h;
}

/// Eigenpairs of H: ascending eigenvalues, orthonormal eigenvectors as columns.
struct SpectralHamiltonian {
  Eigen::VectorXd eigenvalues;
  Eigen::MatrixXd eigenvectors;
  ModeTruncation trunc;
  std::size_t block_count = 0;  // decoupled symmetry sectors found in H

  Eigen::Index size() const noexcept { return eigenvalues.size(); }
};

namespace detail {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), 0); }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent_[std::max(a, b)] = std::min(a, b);
  }

 private:
  std::vector<std::size_t> parent_;
};

// Index sets of the connected components of the nonzero pattern, each sorted.
inline std::vector<std::vector<Eigen::Index>> coupled_blocks(const Eigen::MatrixXd& m) {
  const auto n = m.rows();
  DisjointSets sets(static_cast<std::size_t>(n));
  for (Eigen::Index c = 0; c < n; ++c)
    for (Eigen::Index r = 0; r < c; ++r)
      if (m(r, c) != 0.0) sets.unite(static_cast<std::size_t>(r), static_cast<std::size_t>(c));

  std::vector<std::vector<Eigen::Index>> blocks;
  std::vector<std::ptrdiff_t> slot(static_cast<std::size_t>(n), -1);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto root = sets.find(static_cast<std::size_t>(i));
    if (slot[root] < 0) {
      slot[root] = static_cast<std::ptrdiff_t>(blocks.size());
      blocks.emplace_back();
    }
    blocks[static_cast<std::size_t>(slot[root])].push_back(i);
  }
  return blocks;
}

}  // namespace detail

/// Dense symmetric eigensolve (LAPACK dsyevd), one call per decoupled block so
/// that amplitudes never leak between symmetry sectors.
inline SpectralHamiltonian spectral_decompose(const HamiltonianMatrix& h) {
  const auto n = h.values.rows();
  if (h.values.cols() != n) throw UsageError("spectral_decompose: matrix is not square");

  const auto blocks = detail::coupled_blocks(h.values);
  struct Pair {
    double value;
    std::size_t block;
    Eigen::Index column;
  };
  std::vector<Pair> pairs;
  pairs.reserve(static_cast<std::size_t>(n));
  std::vector<Eigen::MatrixXd> vectors(blocks.size());

  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const auto& idx = blocks[b];
    const auto m = static_cast<Eigen::Index>(idx.size());
    Eigen::MatrixXd a(m, m);
    for (Eigen::Index c = 0; c < m; ++c)
      for (Eigen::Index r = 0; r < m; ++r) a(r, c) = h.values(idx[r], idx[c]);
    Eigen::VectorXd w(m);
    const lapack_int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'U', static_cast<lapack_int>(m), a.data(),
                                           static_cast<lapack_int>(m), w.data());
    if (info != 0) {
      const Eigen::MatrixXd sub = h.values(idx, idx);
      throw NumericError("spectral_decompose: dsyevd info=" + std::to_string(info) + " on block " +
                         std::to_string(b) + " of size " + std::to_string(m) +
                         "; |H|_F=" + std::to_string(sub.norm()) +
                         ", max|H-H^T|=" + std::to_string((sub - sub.transpose()).cwiseAbs().maxCoeff()) +
                         ", finite=" + (sub.allFinite() ? "yes" : "no"));
    }
    for (Eigen::Index c = 0; c < m; ++c) pairs.push_back({w[c], b, c});
    vectors[b] = std::move(a);
  }

  std::stable_sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) { return x.value < y.value; });

  SpectralHamiltonian out;
  out.trunc = h.trunc;
  out.block_count = blocks.size();
  out.eigenvalues.resize(n);
  out.eigenvectors = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index col = 0; col < n; ++col) {
    const auto& p = pairs[static_cast<std::size_t>(col)];
    out.eigenvalues[col] = p.value;
    const auto& idx = blocks[p.block];
    for (std::size_t r = 0; r < idx.size(); ++r) {
      out.eigenvectors(idx[r], col) = vectors[p.block](static_cast<Eigen::Index>(r), p.column);
    }
  }
  return out;
}

enum class StateBasis { fock, eigen };

/// Complex amplitudes over the composite basis.
struct StateVector {
  Eigen::VectorXcd amplitudes;
  StateBasis basis = StateBasis::fock;

  double norm() const { return amplitudes.norm(); }
  double probability(std::size_t flat) const { return std::norm(amplitudes[static_cast<Eigen::Index>(flat)]); }
};

inline StateVector basis_state(int j, int k, const ModeTruncation& trunc) {
  StateVector s;
  s.amplitudes = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(trunc.total_dim()));
  s.amplitudes[static_cast<Eigen::Index>(flat_index(j, k, trunc))] = 1.0;
  return s;
}

inline StateVector to_eigenbasis(const SpectralHamiltonian& spec, const StateVector& psi) {
  if (psi.basis == StateBasis::eigen) return psi;
  return {spec.eigenvectors.transpose() * psi.amplitudes, StateBasis::eigen};
}

inline StateVector to_fock(const SpectralHamiltonian& spec, const StateVector& psi) {
  if (psi.basis == StateBasis::fock) return psi;
  return {spec.eigenvectors * psi.amplitudes, StateBasis::fock};
}

/// psi(tau) = V exp(-2 pi i E tau) V^T psi0, returned in the basis of psi0.
inline StateVector propagate(const SpectralHamiltonian& spec, const StateVector& psi0, double tau) {
  if (psi0.amplitudes.size() != spec.size()) throw UsageError("propagate: state dimension mismatch");
  StateVector c = to_eigenbasis(spec, psi0);
  for (Eigen::Index i = 0; i < c.amplitudes.size(); ++i) {
    c.amplitudes[i] *= std::polar(1.0, -2.0 * std::numbers::pi * spec.eigenvalues[i] * tau);
  }
  return psi0.basis == StateBasis::fock ? to_fock(spec, c) : c;
}

/// Dense U(dtau) in the Fock basis.
inline Eigen::MatrixXcd step_operator(const SpectralHamiltonian& spec, double dtau) {
  if (!(dtau > 0.0)) throw DomainError("step_operator: dtau must be > 0");
  const Eigen::ArrayXd theta = -2.0 * std::numbers::pi * dtau * spec.eigenvalues.array();
  const Eigen::MatrixXd& v = spec.eigenvectors;
  const Eigen::MatrixXd re = v * theta.cos().matrix().asDiagonal() * v.transpose();
  const Eigen::MatrixXd im = v * theta.sin().matrix().asDiagonal() * v.transpose();
  Eigen::MatrixXcd u(v.rows(), v.cols());
  u.real() = re;
  u.imag() = im;
  return u;
}

/// A batch of Fock-basis states at consecutive times; column t is psi(taus[t]).
struct StateBatch {
  std::span<const double> taus;
  Eigen::MatrixXd re;
  Eigen::MatrixXd im;

  Eigen::Index count() const noexcept { return re.cols(); }
  StateVector state(Eigen::Index t) const {
    StateVector s;
    s.amplitudes.resize(re.rows());
    s.amplitudes.real() = re.col(t);
    s.amplitudes.imag() = im.col(t);
    return s;
  }
  Eigen::MatrixXd probabilities() const { return re.cwiseAbs2() + im.cwiseAbs2(); }
};

/// Evolves psi0 to every tau and hands out Fock-basis states in batches; two
/// real GEMMs per batch.
template <typename Visitor>
void for_each_state_batch(const SpectralHamiltonian& spec, const StateVector& psi0, std::span<const double> taus,
                          Visitor&& visit, std::size_t batch_size = 128) {
  const StateVector c = to_eigenbasis(spec, psi0);
  const Eigen::VectorXd c_re = c.amplitudes.real();
  const Eigen::VectorXd c_im = c.amplitudes.imag();
  const auto n = spec.size();
  for (std::size_t start = 0; start < taus.size(); start += batch_size) {
    const std::size_t count = std::min(batch_size, taus.size() - start);
    Eigen::MatrixXd coef_re(n, static_cast<Eigen::Index>(count));
    Eigen::MatrixXd coef_im(n, static_cast<Eigen::Index>(count));
    for (std::size_t t = 0; t < count; ++t) {
      const Eigen::ArrayXd theta = 2.0 * std::numbers::pi * taus[start + t] * spec.eigenvalues.array();
      const Eigen::ArrayXd cs = theta.cos();
      const Eigen::ArrayXd sn = theta.sin();
      // e^{-i theta} (c_re + i c_im)
      coef_re.col(static_cast<Eigen::Index>(t)) = (cs * c_re.array() + sn * c_im.array()).matrix();
      coef_im.col(static_cast<Eigen::Index>(t)) = (cs * c_im.array() - sn * c_re.array()).matrix();
    }
    StateBatch b{taus.subspan(start, count), spec.eigenvectors * coef_re, spec.eigenvectors * coef_im};
    visit(static_cast<const StateBatch&>(b));
  }
}

inline std::vector<double> time_grid(const EngineConfig& config) {
  std::vector<double> taus(config.steps() + 1);
  for (std::size_t i = 0; i < taus.size(); ++i) taus[i] = config.grid_tau(i);
  return taus;
}

struct EnergyRecord {
  double tau = 0;
  double e_total = 0;       // <H>
  double e_free = 0;        // <H0>
  double e_int = 0;         // <Phi>
  double e_int_post = 0;    // sum_jk P_jk Phi_diag(j,k)
  double e_total_post = 0;  // e_free + e_int_post
  double p00 = 0;
  std::vector<double> tracked_probs;
};

using LevelPair = std::pair<int, int>;

/// All |j,k> with free energy <= 5, ordered by energy then j.
inline std::vector<LevelPair> default_tracked_states(const EngineConfig& config) {
  std::vector<LevelPair> out;
  const int n_max = config.truncation.n_max();
  for (int j = 0; j <= n_max; ++j)
    for (int k = 0; k <= n_max; ++k)
      if (free_energy(j, k, config.omega) <= 5.0 + 1e-12) out.emplace_back(j, k);
  std::stable_sort(out.begin(), out.end(), [&](const LevelPair& a, const LevelPair& b) {
    return free_energy(a.first, a.second, config.omega) < free_energy(b.first, b.second, config.omega);
  });
  return out;
}

/// Observables on an explicit tau list.
inline std::vector<EnergyRecord> energy_series(const EngineConfig& config, const InteractionMatrix& phi,
                                               const SpectralHamiltonian& spec, const StateVector& psi0,
                                               const std::vector<LevelPair>& tracked,
                                               std::span<const double> taus) {
  std::vector<Eigen::Index> tracked_flat;
  for (const auto& [j, k] : tracked) {
    tracked_flat.push_back(static_cast<Eigen::Index>(flat_index(j, k, config.truncation)));
  }
  const Eigen::VectorXd e0 = free_energies(config.truncation, config.omega);
  const Eigen::VectorXd phi_diag = phi.diagonal();

  std::vector<EnergyRecord> out;
  out.reserve(taus.size());
  for_each_state_batch(spec, psi0, taus, [&](const StateBatch& b) {
    const Eigen::MatrixXd p = b.probabilities();
    const Eigen::RowVectorXd e_free = e0.transpose() * p;
    const Eigen::RowVectorXd e_post = phi_diag.transpose() * p;
    const Eigen::MatrixXd phi_re = phi.values * b.re;
    const Eigen::MatrixXd phi_im = phi.values * b.im;
    const Eigen::RowVectorXd e_int =
        (b.re.cwiseProduct(phi_re) + b.im.cwiseProduct(phi_im)).colwise().sum();
    for (Eigen::Index t = 0; t < b.count(); ++t) {
      EnergyRecord r;
      r.tau = b.taus[static_cast<std::size_t>(t)];
      r.e_free = e_free[t];
      r.e_int = e_int[t];
      r.e_total = r.e_int + r.e_free;
      r.e_int_post = e_post[t];
      r.e_total_post = r.e_free + r.e_int_post;
      r.p00 = p(0, t);
      r.tracked_probs.reserve(tracked_flat.size());
      for (auto f : tracked_flat) r.tracked_probs.push_back(p(f, t));
      out.push_back(std::move(r));
    }
  });
  return out;
}

/// Observables on the config's grid {0, dtau, ..., tau_end}.
inline std::vector<EnergyRecord> energy_series(const EngineConfig& config, const InteractionMatrix& phi,
                                               const SpectralHamiltonian& spec, const StateVector& psi0,
                                               const std::vector<LevelPair>& tracked) {
  const auto taus = time_grid(config);
  return energy_series(config, phi, spec, psi0, tracked, taus);
}

/// Ground-state probability |<0,0|psi(tau)>|^2 on the config grid; cheaper than a full series.
inline std::vector<double> ground_probability_series(const EngineConfig& config, const SpectralHamiltonian& spec) {
  const auto taus = time_grid(config);
  const Eigen::VectorXd row0 = spec.eigenvectors.row(0).transpose();
  const Eigen::ArrayXd weight = row0.array().square();  // <0,0|v_n> <v_n|0,0>
  std::vector<double> out(taus.size());
  for (std::size_t t = 0; t < taus.size(); ++t) {
    const Eigen::ArrayXd theta = 2.0 * std::numbers::pi * taus[t] * spec.eigenvalues.array();
    const double re = (weight * theta.cos()).sum();
    const double im = (weight * theta.sin()).sum();
    out[t] = re * re + im * im;
  }
  return out;
}

struct ConvergenceReport {
  int n_max = 0;
  int reduced_n_max = 0;
  double max_p00_difference = 0;
  bool warn = false;  // difference above 1e-4
};

/// Reruns the ground-probability series at n_max - 10 and compares.
inline ConvergenceReport truncation_convergence(const EngineConfig& config, const SpectralHamiltonian& full) {
  ConvergenceReport rep;
  rep.n_max = config.truncation.n_max();
  rep.reduced_n_max = std::max(1, rep.n_max - 10);
  EngineConfig reduced = config;
  reduced.truncation = ModeTruncation(rep.reduced_n_max);
  const auto phi = assemble_matrix(reduced);
  const auto spec = spectral_decompose(assemble_hamiltonian(reduced, phi));
  const auto a = ground_probability_series(config, full);
  const auto b = ground_probability_series(reduced, spec);
  for (std::size_t i = 0; i < a.size(); ++i) rep.max_p00_difference = std::max(rep.max_p00_difference, std::abs(a[i] - b[i]));
  rep.warn = rep.max_p00_difference > 1e-4;
  return rep;
}

}  // namespace oscengine

#pragma once

// Truncated two-mode Fock basis |j,k>. Row-major flattening: j is the outer
// (oscillator 1) index, so each oscillator-1 level owns a contiguous block of
// `dim` entries.

#include <cstddef>
#include <string>

#include "oscengine/errors.hpp"

namespace oscengine {

class ModeTruncation {
 public:
  static constexpr int kDefaultMaxLevel = 50;

  constexpr ModeTruncation() = default;
  explicit ModeTruncation(int n_max) : n_max_(n_max) {
    if (n_max < 1) throw DomainError("n_max must be >= 1, got " + std::to_string(n_max));
  }

  constexpr int n_max() const noexcept { return n_max_; }
  constexpr std::size_t dim() const noexcept { return static_cast<std::size_t>(n_max_) + 1; }
  constexpr std::size_t total_dim() const noexcept { return dim() * dim(); }

  constexpr bool contains(int level) const noexcept { return level >= 0 && level <= n_max_; }

  friend constexpr bool operator==(const ModeTruncation&, const ModeTruncation&) = default;

 private:
  int n_max_ = kDefaultMaxLevel;
};

struct CompositeIndex {
  int j = 0;
  int k = 0;
  std::size_t flat = 0;

  friend constexpr bool operator==(const CompositeIndex&, const CompositeIndex&) = default;
};

inline std::size_t flat_index(int j, int k, const ModeTruncation& trunc) {
  if (!trunc.contains(j) || !trunc.contains(k)) {
    throw IndexError("level (" + std::to_string(j) + "," + std::to_string(k) +
                     ") outside truncation n_max=" + std::to_string(trunc.n_max()));
  }
  return static_cast<std::size_t>(j) * trunc.dim() + static_cast<std::size_t>(k);
}

inline CompositeIndex unflatten(std::size_t flat, const ModeTruncation& trunc) {
  if (flat >= trunc.total_dim()) {
    throw IndexError("flat index " + std::to_string(flat) + " >= total_dim " +
                     std::to_string(trunc.total_dim()));
  }
  return {static_cast<int>(flat / trunc.dim()), static_cast<int>(flat % trunc.dim()), flat};
}

/// Uncoupled energy (j + 1/2) + omega (k + 1/2), in units of hbar*Omega_1.
constexpr double free_energy(int j, int k, double omega) noexcept {
  return (j + 0.5) + omega * (k + 0.5);
}

}  // namespace oscengine

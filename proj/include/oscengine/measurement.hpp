#pragma once

// Projective measurement in the product Fock basis and the engine cycle
//   switch coupling on -> evolve -> measure |j,k> -> switch coupling off -> extract j + omega k.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <vector>

#include "oscengine/basis.hpp"
#include "oscengine/coupling.hpp"
#include "oscengine/dynamics.hpp"
#include "oscengine/errors.hpp"
#include "oscengine/rng.hpp"
#include "oscengine/specfun.hpp"

namespace oscengine {

/// Born probabilities P_jk = |Psi_jk|^2, indexed by flat_index.
struct OutcomeDistribution {
  std::vector<double> probs;
  ModeTruncation trunc;

  double operator()(int j, int k) const { return probs[flat_index(j, k, trunc)]; }
  double total() const { return std::accumulate(probs.begin(), probs.end(), 0.0); }
};

inline OutcomeDistribution outcome_distribution(const StateVector& psi, const ModeTruncation& trunc) {
  if (psi.basis != StateBasis::fock) throw UsageError("outcome_distribution: state must be in the Fock basis");
  if (static_cast<std::size_t>(psi.amplitudes.size()) != trunc.total_dim()) {
    throw UsageError("outcome_distribution: state dimension does not match truncation");
  }
  OutcomeDistribution d;
  d.trunc = trunc;
  d.probs.resize(trunc.total_dim());
  for (std::size_t f = 0; f < d.probs.size(); ++f) d.probs[f] = psi.probability(f);
  return d;
}

/// Inverse-CDF sampler over the flattened distribution; the cumulative table is built once.
class OutcomeSampler {
 public:
  explicit OutcomeSampler(const OutcomeDistribution& dist) : trunc_(dist.trunc), cdf_(dist.probs.size()) {
    std::partial_sum(dist.probs.begin(), dist.probs.end(), cdf_.begin());
    if (cdf_.empty() || !(cdf_.back() > 0.0) || !std::isfinite(cdf_.back())) {
      throw NumericError("sample_outcome: distribution has non-positive total");
    }
  }

  CompositeIndex operator()(CounterRng& rng) const {
    const double u = rng.uniform() * cdf_.back();
    auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
    if (it == cdf_.end()) --it;
    return unflatten(static_cast<std::size_t>(it - cdf_.begin()), trunc_);
  }

 private:
  ModeTruncation trunc_;
  std::vector<double> cdf_;
};

inline CompositeIndex sample_outcome(const OutcomeDistribution& dist, CounterRng& rng) {
  return OutcomeSampler(dist)(rng);
}

struct PostMeasurementEnergies {
  double e_int_post = 0;
  double e_free_post = 0;
  double e_total_post = 0;
};

inline PostMeasurementEnergies post_measurement_energies(const OutcomeDistribution& dist,
                                                         const Eigen::VectorXd& phi_diag, double omega) {
  if (static_cast<std::size_t>(phi_diag.size()) != dist.probs.size()) {
    throw UsageError("post_measurement_energies: dimension mismatch");
  }
  PostMeasurementEnergies e;
  for (std::size_t f = 0; f < dist.probs.size(); ++f) {
    const auto idx = unflatten(f, dist.trunc);
    e.e_int_post += dist.probs[f] * phi_diag[static_cast<Eigen::Index>(f)];
    e.e_free_post += dist.probs[f] * free_energy(idx.j, idx.k, omega);
  }
  e.e_total_post = e.e_int_post + e.e_free_post;
  return e;
}

struct DensityField {
  std::vector<double> x1;
  std::vector<double> x2;
  Eigen::MatrixXd rho;  // rho(a, b) at (x1[a], x2[b])
};

inline std::vector<double> linspace(double lo, double hi, int points) {
  std::vector<double> xs(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) xs[static_cast<std::size_t>(i)] = points == 1 ? lo : lo + (hi - lo) * i / (points - 1);
  return xs;
}

/// rho(x1, x2) = |sum_jk Psi_jk psi_j(x1) psi_k(x2/lambda)/sqrt(lambda)|^2.
inline DensityField realspace_density(const StateVector& psi, const ModeTruncation& trunc, std::vector<double> x1,
                                      std::vector<double> x2, double lambda) {
  if (psi.basis != StateBasis::fock) throw UsageError("realspace_density: state must be in the Fock basis");
  const auto dim = static_cast<Eigen::Index>(trunc.dim());
  const int n_max = trunc.n_max();
  auto table = [&](const std::vector<double>& xs, double length) {
    Eigen::MatrixXd t(static_cast<Eigen::Index>(xs.size()), dim);
    for (std::size_t a = 0; a < xs.size(); ++a) {
      const auto p = specfun::hermite_functions(n_max, xs[a] / length);
      for (Eigen::Index n = 0; n < dim; ++n) t(static_cast<Eigen::Index>(a), n) = p[static_cast<std::size_t>(n)] / std::sqrt(length);
    }
    return t;
  };
  const Eigen::MatrixXd h1 = table(x1, 1.0);
  const Eigen::MatrixXd h2 = table(x2, lambda);
  // Row-major flattening: amplitude (j, k) sits at j*dim + k.
  const Eigen::Map<const Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> amp(
      psi.amplitudes.data(), dim, dim);
  const Eigen::MatrixXd re = h1 * amp.real() * h2.transpose();
  const Eigen::MatrixXd im = h1 * amp.imag() * h2.transpose();
  return {std::move(x1), std::move(x2), re.cwiseAbs2() + im.cwiseAbs2()};
}

/// One engine cycle. Energies in hbar*Omega_1.
struct CycleLedger {
  std::uint64_t cycle = 0;
  double tau_measure = 0;
  int j = 0;
  int k = 0;
  double e_switch_on = 0;      // <0,0|Phi|0,0>, released when the coupling is switched on
  double e_decouple_cost = 0;  // |<j,k|Phi|j,k>|, spent switching it off
  double w_extract = 0;        // j + omega k
  double e_measure_input = 0;  // E(j,k) - <H>, fuel delivered by the measurement
  double w_net = 0;            // w_extract + |e_switch_on| - e_decouple_cost
};

struct MeasurementTime {
  double tau = 0;
  double p00 = 1;
};

/// Grid point where the ground-state probability is smallest (first one on ties).
inline MeasurementTime ground_minimizing_time(const EngineConfig& config, const SpectralHamiltonian& spec) {
  const auto p00 = ground_probability_series(config, spec);
  const auto it = std::min_element(p00.begin(), p00.end());
  const auto i = static_cast<std::size_t>(it - p00.begin());
  return {config.grid_tau(i), *it};
}

/// Every cycle restarts from |0,0>, so the pre-measurement state is shared and
/// cycles differ only in their outcome draw from stream (seed, cycle).
inline std::vector<CycleLedger> run_cycles(const EngineConfig& config, const InteractionMatrix& phi,
                                           const SpectralHamiltonian& spec, double tau_measure,
                                           std::uint64_t n_cycles, std::uint64_t seed) {
  if (n_cycles < 1) throw DomainError("run_cycles: n_cycles must be >= 1");
  if (!(tau_measure >= 0.0) || !std::isfinite(tau_measure)) throw DomainError("run_cycles: tau_measure must be >= 0");

  const auto psi = propagate(spec, basis_state(0, 0, config.truncation), tau_measure);
  const auto dist = outcome_distribution(psi, config.truncation);
  const OutcomeSampler sampler(dist);

  // <H> is conserved, so its value at the measurement time equals <0,0|H|0,0>.
  const double e_switch_on = phi.diag(0, 0);
  const double e_total_pre = free_energy(0, 0, config.omega) + e_switch_on;

  std::vector<CycleLedger> out(static_cast<std::size_t>(n_cycles));
  for (std::uint64_t c = 0; c < n_cycles; ++c) {
    CounterRng rng(seed, c);
    const auto o = sampler(rng);
    CycleLedger& l = out[static_cast<std::size_t>(c)];
    l.cycle = c;
    l.tau_measure = tau_measure;
    l.j = o.j;
    l.k = o.k;
    l.e_switch_on = e_switch_on;
    const double diag = phi.diag(o.j, o.k);
    l.e_decouple_cost = std::abs(diag);
    l.w_extract = o.j + config.omega * o.k;
    l.e_measure_input = free_energy(o.j, o.k, config.omega) + diag - e_total_pre;
    l.w_net = l.w_extract + std::abs(l.e_switch_on) - l.e_decouple_cost;
  }
  return out;
}

struct MeanWithError {
  double mean = 0;
  double stderr_ = 0;
};

inline MeanWithError mean_and_stderr(const std::vector<double>& xs) {
  MeanWithError r;
  if (xs.empty()) return r;
  const double n = static_cast<double>(xs.size());
  r.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (xs.size() > 1) {
    double ss = 0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.stderr_ = std::sqrt(ss / (n - 1.0) / n);
  }
  return r;
}

struct CycleSummary {
  std::uint64_t n_cycles = 0;
  double tau_measure = 0;
  MeanWithError excited_fraction;
  MeanWithError e_decouple_cost;
  MeanWithError w_extract;
  MeanWithError e_measure_input;
  MeanWithError w_net;
  double e_switch_on = 0;
  std::map<std::pair<int, int>, std::uint64_t> histogram;
};

inline CycleSummary summarize(const std::vector<CycleLedger>& ledgers) {
  CycleSummary s;
  s.n_cycles = ledgers.size();
  if (ledgers.empty()) return s;
  s.tau_measure = ledgers.front().tau_measure;
  s.e_switch_on = ledgers.front().e_switch_on;
  std::vector<double> excited, cost, work, input, net;
  for (const auto& l : ledgers) {
    excited.push_back((l.j != 0 || l.k != 0) ? 1.0 : 0.0);
    cost.push_back(l.e_decouple_cost);
    work.push_back(l.w_extract);
    input.push_back(l.e_measure_input);
    net.push_back(l.w_net);
    ++s.histogram[{l.j, l.k}];
  }
  s.excited_fraction = mean_and_stderr(excited);
  s.e_decouple_cost = mean_and_stderr(cost);
  s.w_extract = mean_and_stderr(work);
  s.e_measure_input = mean_and_stderr(input);
  s.w_net = mean_and_stderr(net);
  return s;
}

struct ChiSquare {
  double statistic = 0;
  int dof = 0;
};

/// Pearson statistic over the `top` most probable outcomes plus one pooled bin for
/// the rest (dropped when its expected count is below 5).
inline ChiSquare chi_square_top_states(const OutcomeDistribution& dist,
                                       const std::map<std::pair<int, int>, std::uint64_t>& histogram,
                                       std::uint64_t samples, std::size_t top = 20) {
  std::vector<std::size_t> order(dist.probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dist.probs[a] > dist.probs[b]; });
  order.resize(std::min(top, order.size()));

  const double n = static_cast<double>(samples);
  ChiSquare cs;
  double p_top = 0;
  std::uint64_t count_top = 0;
  int bins = 0;
  for (auto f : order) {
    const double expected = n * dist.probs[f];
    if (expected <= 0.0) continue;
    const auto idx = unflatten(f, dist.trunc);
    const auto it = histogram.find({idx.j, idx.k});
    const double observed = it == histogram.end() ? 0.0 : static_cast<double>(it->second);
    cs.statistic += (observed - expected) * (observed - expected) / expected;
    p_top += dist.probs[f];
    count_top += static_cast<std::uint64_t>(observed);
    ++bins;
  }
  const double expected_rest = n * std::max(0.0, dist.total() - p_top);
  if (expected_rest >= 5.0) {
    const double observed_rest = static_cast<double>(samples - count_top);
    cs.statistic += (observed_rest - expected_rest) * (observed_rest - expected_rest) / expected_rest;
    ++bins;
  }
  cs.dof = bins - 1;
  return cs;
}

}  // namespace oscengine

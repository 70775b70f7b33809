#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <numbers>
#include <set>

#include "oscengine/measurement.hpp"
#include "oscengine/oracle.hpp"

using namespace oscengine;

namespace {

EngineConfig small_config(Geometry g, int n_max) {
  auto c = canonical_config(g);
  c.truncation = ModeTruncation(n_max);
  return c;
}

StateVector mixed_state(const ModeTruncation& t) {
  auto s = basis_state(0, 0, t);
  s.amplitudes[static_cast<Eigen::Index>(flat_index(1, 1, t))] = {0.0, 1.0};
  s.amplitudes /= std::sqrt(2.0);
  return s;
}

double trapezoid_2d(const DensityField& d) {
  const double h1 = d.x1[1] - d.x1[0];
  const double h2 = d.x2[1] - d.x2[0];
  double s = 0;
  for (Eigen::Index a = 0; a < d.rho.rows(); ++a)
    for (Eigen::Index b = 0; b < d.rho.cols(); ++b) {
      const double wa = (a == 0 || a == d.rho.rows() - 1) ? 0.5 : 1.0;
      const double wb = (b == 0 || b == d.rho.cols() - 1) ? 0.5 : 1.0;
      s += wa * wb * d.rho(a, b);
    }
  return s * h1 * h2;
}

}  // namespace

TEST(OutcomeDistribution, BornProbabilities) {
  const ModeTruncation t(3);
  const auto d = outcome_distribution(mixed_state(t), t);
  EXPECT_NEAR(d(0, 0), 0.5, 1e-15);
  EXPECT_NEAR(d(1, 1), 0.5, 1e-15);
  EXPECT_EQ(d(1, 0), 0.0);
  EXPECT_NEAR(d.total(), 1.0, 1e-15);
}

TEST(OutcomeDistribution, RejectsWrongBasisOrSize) {
  const ModeTruncation t(3);
  auto s = basis_state(0, 0, t);
  s.basis = StateBasis::eigen;
  EXPECT_THROW(outcome_distribution(s, t), UsageError);
  EXPECT_THROW(outcome_distribution(basis_state(0, 0, ModeTruncation(4)), t), UsageError);
}

TEST(Sampler, PureStateAlwaysReturnsIt) {
  const ModeTruncation t(4);
  const auto d = outcome_distribution(basis_state(2, 3, t), t);
  CounterRng rng(1, 0);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(sample_outcome(d, rng), (CompositeIndex{2, 3, flat_index(2, 3, t)}));
}

TEST(Sampler, DeterministicPerSeed) {
  const ModeTruncation t(3);
  const auto d = outcome_distribution(mixed_state(t), t);
  const OutcomeSampler sampler(d);
  for (std::uint64_t c = 0; c < 50; ++c) {
    CounterRng a(9, c), b(9, c);
    EXPECT_EQ(sampler(a), sampler(b));
  }
  std::set<int> seen;
  for (std::uint64_t c = 0; c < 64; ++c) {
    CounterRng r(9, c);
    seen.insert(sampler(r).j);
  }
  EXPECT_EQ(seen, (std::set<int>{0, 1}));
}

TEST(Sampler, ZeroDistributionIsNumericError) {
  OutcomeDistribution d{std::vector<double>(16, 0.0), ModeTruncation(3)};
  CounterRng rng(0, 0);
  EXPECT_THROW(sample_outcome(d, rng), NumericError);
}

TEST(Sampler, FrequenciesPassChiSquare) {
  const ModeTruncation t(4);
  OutcomeDistribution d{std::vector<double>(t.total_dim()), t};
  for (std::size_t f = 0; f < d.probs.size(); ++f) d.probs[f] = std::exp(-0.3 * static_cast<double>(f));
  const double z = d.total();
  for (auto& p : d.probs) p /= z;
  const OutcomeSampler sampler(d);
  std::map<std::pair<int, int>, std::uint64_t> hist;
  const std::uint64_t n = 50000;
  for (std::uint64_t c = 0; c < n; ++c) {
    CounterRng rng(123, c);
    const auto o = sampler(rng);
    ++hist[{o.j, o.k}];
  }
  const auto cs = chi_square_top_states(d, hist, n, 20);
  EXPECT_EQ(cs.dof, 20);
  const boost::math::chi_squared dist(cs.dof);
  EXPECT_GE(boost::math::cdf(boost::math::complement(dist, cs.statistic)), 0.001) << cs.statistic;
}

TEST(CounterRng, UniformRangeAndMoments) {
  CounterRng rng(5, 17);
  double sum = 0;
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform();
    ASSERT_GE(u, 0.0);
    ASSERT_LT(u, 1.0);
    sum += u;
  }
  EXPECT_NEAR(sum / 1e5, 0.5, 0.005);
  EXPECT_EQ(rng.counter(), 100000u);
  CounterRng a(5, 17), b(5, 18), c(6, 17);
  const auto x = a.next_u64();
  EXPECT_NE(x, b.next_u64());
  EXPECT_NE(x, c.next_u64());
}

TEST(PostMeasurement, MixedStateUsesDiagonalOnly) {
  const auto cfg = small_config(Geometry::parallel, 3);
  const auto phi = assemble_matrix(cfg);
  const auto d = outcome_distribution(mixed_state(cfg.truncation), cfg.truncation);
  const auto e = post_measurement_energies(d, phi.diagonal(), cfg.omega);
  const double ref00 = oracle::element_oracle_2d(0, 0, 0, 0, cfg.coupling, cfg.lambda);
  const double ref11 = oracle::element_oracle_2d(1, 1, 1, 1, cfg.coupling, cfg.lambda);
  EXPECT_NEAR(e.e_int_post, 0.5 * (ref00 + ref11), 1e-10);
  EXPECT_NEAR(e.e_free_post, 2.0, 1e-14);
  EXPECT_NEAR(e.e_total_post, e.e_free_post + e.e_int_post, 1e-14);
  EXPECT_THROW(post_measurement_energies(d, Eigen::VectorXd::Zero(3), 1.0), UsageError);
}

TEST(Density, GroundStatePeakAndNormalization) {
  const ModeTruncation t(6);
  const auto d = realspace_density(basis_state(0, 0, t), t, linspace(-6, 6, 201), linspace(-6, 6, 201), 1.0);
  EXPECT_NEAR(d.rho(100, 100), 1.0 / std::numbers::pi, 1e-14);
  EXPECT_NEAR(trapezoid_2d(d), 1.0, 1e-6);
}

TEST(Density, NormalizedForEvolvedState) {
  const auto cfg = small_config(Geometry::parallel, 20);
  const auto phi = assemble_matrix(cfg);
  const auto spec = spectral_decompose(assemble_hamiltonian(cfg, phi));
  const auto psi = propagate(spec, basis_state(0, 0, cfg.truncation), 0.95);
  // the excited components reach past |x| = 6, so this grid is wider
  const auto d = realspace_density(psi, cfg.truncation, linspace(-8, 8, 321), linspace(-8, 8, 321), 1.0);
  EXPECT_NEAR(trapezoid_2d(d), 1.0, 1e-6);
  // equal masses and lambda = 1: the state is symmetric under x1 <-> x2
  EXPECT_LE((d.rho - d.rho.transpose()).cwiseAbs().maxCoeff(), 1e-10);
  // attraction piles density up along x1 = x2
  EXPECT_GT(d.rho(200, 200), d.rho(200, 120));
}

TEST(Density, RespectsLengthScale) {
  const ModeTruncation t(2);
  const auto d = realspace_density(basis_state(0, 0, t), t, linspace(-8, 8, 321), linspace(-8, 8, 321), 2.0);
  EXPECT_NEAR(d.rho(160, 160), 1.0 / (2.0 * std::numbers::pi), 1e-14);
  EXPECT_NEAR(trapezoid_2d(d), 1.0, 1e-6);
}

TEST(Cycles, ZeroCouplingNeverExcites) {
  auto cfg = small_config(Geometry::parallel, 4);
  cfg.coupling.phi0 = 0.0;
  const auto phi = assemble_matrix(cfg);
  const auto spec = spectral_decompose(assemble_hamiltonian(cfg, phi));
  for (const auto& l : run_cycles(cfg, phi, spec, 0.7, 200, 3)) {
    ASSERT_EQ(l.j, 0);
    ASSERT_EQ(l.k, 0);
    ASSERT_EQ(l.w_extract, 0.0);
    ASSERT_EQ(l.e_decouple_cost, 0.0);
  }
}

TEST(Cycles, LedgerIdentities) {
  const auto cfg = small_config(Geometry::parallel, 16);
  const auto phi = assemble_matrix(cfg);
  const auto spec = spectral_decompose(assemble_hamiltonian(cfg, phi));
  const auto ledgers = run_cycles(cfg, phi, spec, 0.5, 500, 11);
  ASSERT_EQ(ledgers.size(), 500u);
  for (const auto& l : ledgers) {
    ASSERT_NEAR(l.e_switch_on, phi.diag(0, 0), 1e-15);
    ASSERT_NEAR(l.e_decouple_cost, std::abs(phi.diag(l.j, l.k)), 1e-15);
    ASSERT_NEAR(l.w_extract, l.j + cfg.omega * l.k, 1e-15);
    ASSERT_NEAR(l.w_net, l.w_extract + std::abs(l.e_switch_on) - l.e_decouple_cost, 1e-13);
    ASSERT_NEAR(l.e_measure_input, free_energy(l.j, l.k, cfg.omega) + phi.diag(l.j, l.k) - (1.0 + phi.diag(0, 0)), 1e-13);
    ASSERT_EQ((l.j + l.k) % 2, 0);
  }
  const auto again = run_cycles(cfg, phi, spec, 0.5, 500, 11);
  for (std::size_t i = 0; i < ledgers.size(); ++i) ASSERT_EQ(ledgers[i].j, again[i].j);
  EXPECT_THROW(run_cycles(cfg, phi, spec, 0.5, 0, 11), DomainError);
  EXPECT_THROW(run_cycles(cfg, phi, spec, -1.0, 10, 11), DomainError);
}

TEST(Cycles, MeansMatchExactExpectations) {
  const auto cfg = small_config(Geometry::perpendicular, 20);
  const auto phi = assemble_matrix(cfg);
  const auto spec = spectral_decompose(assemble_hamiltonian(cfg, phi));
  const double tau = 0.6;
  const auto s = summarize(run_cycles(cfg, phi, spec, tau, 20000, 2024));
  const auto d = outcome_distribution(propagate(spec, basis_state(0, 0, cfg.truncation), tau), cfg.truncation);
  const auto e = post_measurement_energies(d, phi.diagonal(), cfg.omega);
  EXPECT_EQ(s.n_cycles, 20000u);
  EXPECT_NEAR(s.excited_fraction.mean, 1.0 - d(0, 0), 3.0 * s.excited_fraction.stderr_);
  EXPECT_NEAR(s.w_extract.mean, e.e_free_post - 1.0, 3.0 * s.w_extract.stderr_);
  EXPECT_NEAR(s.e_decouple_cost.mean, -e.e_int_post, 3.0 * s.e_decouple_cost.stderr_);
  std::uint64_t total = 0;
  for (const auto& [key, count] : s.histogram) total += count;
  EXPECT_EQ(total, 20000u);
}

TEST(Statistics, MeanAndStandardError) {
  const auto r = mean_and_stderr({1.0, 2.0, 3.0, 4.0});
  EXPECT_DOUBLE_EQ(r.mean, 2.5);
  EXPECT_NEAR(r.stderr_, std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
  EXPECT_EQ(mean_and_stderr({7.0}).stderr_, 0.0);
}

TEST(MeasurementTime, FindsGridMinimum) {
  auto cfg = small_config(Geometry::parallel, 16);
  const auto phi = assemble_matrix(cfg);
  const auto spec = spectral_decompose(assemble_hamiltonian(cfg, phi));
  const auto m = ground_minimizing_time(cfg, spec);
  for (double p : ground_probability_series(cfg, spec)) ASSERT_GE(p, m.p00);
  EXPECT_GT(m.tau, 0.0);
}

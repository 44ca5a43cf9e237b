#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "slowdrive/errors.hpp"
#include "slowdrive/kato.hpp"

using namespace slowdrive;

namespace {

// ½(I − ĥ·σ) for the field (B, 0, s).
Matrix spin_projector(double B, double s) {
  const double r = std::hypot(B, s);
  return 0.5 * (Matrix::Identity(2, 2) - (B * pauli(1) + s * pauli(3)) / r);
}

Matrix spin_projector_derivative(double B, double s) {
  const double r3 = std::pow(B * B + s * s, 1.5);
  return -0.5 * (-B * s * pauli(1) + B * B * pauli(3)) / r3;
}

LatticeModel deepening_well(Index sites) {
  LatticeModel m;
  m.sites = sites;
  m.potential = [](double x, double s) { return -(1.0 + s) * std::exp(-x * x / 4.0); };
  return m;
}

}  // namespace

TEST(SpectralTrack, GridValidation) {
  const auto f = lz_family(1.0);
  EXPECT_THROW(SpectralTrack(f, {0.0, 0.25, 0.5, 0.75}), InvalidArgument);
  EXPECT_THROW(SpectralTrack(f, {0.0, 0.1, 0.3, 0.4, 0.5}), InvalidArgument);
  TrackOptions bad;
  bad.target = 1;
  bad.rank = 2;
  EXPECT_THROW(SpectralTrack(f, uniform_grid(0, 1, 5), bad), InvalidArgument);
}

TEST(SpectralTrack, ConstantFamily) {
  std::mt19937_64 rng(3);
  const HermitianOperator h(oracle::random_hermitian(4, rng));
  const SpectralTrack tr(constant_family(h), uniform_grid(0, 1, 11));
  for (std::size_t k = 0; k < tr.size(); ++k) {
    EXPECT_LE((tr.projection(k) - tr.projection(0)).norm(), 1e-12);
    EXPECT_LE(tr.derivative(k).value.matrix().norm(), 1e-10);
  }
  EXPECT_LE(projection_derivative(tr, 0.37).value.matrix().norm(), 1e-10);
}

TEST(SpectralTrack, SpinProjectorClosedForm) {
  const double B = 0.8;
  const SpectralTrack tr(lz_family(B), uniform_grid(-1, 1, 41));
  for (std::size_t k = 0; k < tr.size(); ++k) {
    EXPECT_LE((tr.projection(k) - spin_projector(B, tr.grid()[k])).norm(), 1e-12);
    EXPECT_NEAR(tr.eigenvalue(k), -std::hypot(B, tr.grid()[k]), 1e-12);
  }
  for (double s : {-0.83, -0.01, 0.333, 0.97}) {
    EXPECT_LE((tr.projection_at(s) - spin_projector(B, s)).norm(), 1e-5);
    EXPECT_LE((tr.projection_exact(s) - spin_projector(B, s)).norm(), 1e-12);
  }
}

TEST(SpectralTrack, DerivativeMatchesAnalytic) {
  const double B = 0.8;
  const SpectralTrack tr(lz_family(B), uniform_grid(-1, 1, 201));
  for (std::size_t k = 2; k + 2 < tr.size(); ++k) {
    const auto d = tr.derivative(k);
    EXPECT_EQ(d.order, 4);
    EXPECT_FALSE(d.one_sided);
    EXPECT_LE((d.value.matrix() - spin_projector_derivative(B, tr.grid()[k])).norm(), 1e-6);
  }
  for (double s : {-0.555, 0.0123, 0.7}) {
    EXPECT_LE((projection_derivative(tr, s).value.matrix() - spin_projector_derivative(B, s)).norm(), 1e-6);
  }
  const auto edge = projection_derivative(tr, -1.0);
  EXPECT_TRUE(edge.one_sided);
  EXPECT_EQ(edge.order, 2);
}

TEST(SpectralTrack, ProjectionDerivativeAlgebra) {
  const SpectralTrack tr(gapped_sweep_family(1.0, 2.0), uniform_grid(0, 1, 801));
  for (std::size_t k = 2; k + 2 < tr.size(); ++k) {
    const Matrix p = tr.projection(k);
    const Matrix d = tr.derivative(k).value.matrix();
    EXPECT_LE(operator_norm(p * d * p), 1e-8);
    EXPECT_LE(operator_norm(d * p + p * d - d), 1e-8);
  }
}

TEST(SpectralTrack, LatticeBoundStateDeepens) {
  const auto m = deepening_well(32);
  TrackOptions opt;
  opt.continuum_threshold = 0.0;
  const SpectralTrack tr(lattice_family(m), uniform_grid(0, 1, 21), opt);
  for (std::size_t k = 0; k < tr.size(); ++k) {
    const double s = tr.grid()[k];
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(32, 32);
    for (Index j = 0; j < 32; ++j) {
      h(j, j) = 2.0 + m.W(j, s);
      if (j + 1 < 32) h(j, j + 1) = h(j + 1, j) = -1.0;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
    EXPECT_NEAR(tr.eigenvalue(k), es.eigenvalues()(0), 1e-11);
    if (k > 0) EXPECT_LT(tr.eigenvalue(k), tr.eigenvalue(k - 1));
    EXPECT_NEAR(tr.projection(k).trace().real(), 1.0, 1e-12);

    const auto sp = tr.split(k);
    Matrix sum = sp.target + sp.continuum;
    for (const auto& pj : sp.bound) sum += pj;
    EXPECT_LE((sum - Matrix::Identity(32, 32)).norm(), 1e-10);
    EXPECT_LE((sp.target * sp.target - sp.target).norm(), 1e-10);
    EXPECT_LE((sp.continuum * sp.continuum - sp.continuum).norm(), 1e-10);
    for (const auto& pj : sp.bound) EXPECT_LE((pj * pj - pj).norm(), 1e-10);
  }
}

TEST(SpectralTrack, TrackingLossAndMultiplicity) {
  // Six points straddle a near crossing at s = 0 without sampling it.
  EXPECT_THROW(SpectralTrack(lz_family(1e-3), uniform_grid(-1, 1, 6)), TrackingLoss);
  EXPECT_THROW(SpectralTrack(lz_family(0.0), uniform_grid(-1, 1, 5)), MultiplicityError);
}

TEST(SpectralTrack, RangeChecks) {
  const SpectralTrack tr(lz_family(1.0), uniform_grid(0, 1, 9));
  EXPECT_THROW(tr.projection_at(1.5), RangeError);
  EXPECT_THROW(tr.derivative(9), RangeError);
}

TEST(KatoPropagate, ConstantFamily) {
  std::mt19937_64 rng(8);
  const Matrix h = oracle::random_hermitian(3, rng);
  const SpectralTrack tr(constant_family(HermitianOperator(h)), uniform_grid(0, 1, 9));
  IntegratorConfig cfg;
  cfg.tolerance = 1e-10;
  const auto r = kato_propagate(tr, 0.1, 7.0, cfg);
  EXPECT_LE((r.u.matrix() - oracle::propagator(h, 7.0)).norm(), 1e-8);
  EXPECT_LE(r.intertwining_defect, 1e-8);
  EXPECT_TRUE(r.within_budget);
}

TEST(KatoPropagate, FrozenAtZeroEps) {
  const auto f = gapped_sweep_family(1.0, 2.0);
  const SpectralTrack tr(f, uniform_grid(0, 1, 41));
  const auto k = kato_generator(tr, 0.0);
  EXPECT_EQ((k(123.0).matrix() - f.at(0.0).matrix()).norm(), 0.0);
  IntegratorConfig cfg;
  cfg.tolerance = 1e-10;
  const auto r = kato_propagate(tr, 0.0, 5.0, cfg);
  EXPECT_LE((r.u.matrix() - oracle::propagator(f.at(0.0).matrix(), 5.0)).norm(), 1e-8);
  EXPECT_LE(r.intertwining_defect, 1e-8);
}

TEST(KatoPropagate, GapppedIntertwining) {
  const SpectralTrack tr(gapped_sweep_family(1.0, 2.0), uniform_grid(0, 1, 201));
  IntegratorConfig cfg;
  cfg.tolerance = 1e-9;
  for (double t : {3.0, 10.0, 20.0}) {
    const auto r = kato_propagate(tr, 0.05, t, cfg);
    EXPECT_TRUE(r.within_budget) << t;
    EXPECT_LE(r.intertwining_defect, 1e-5) << t;
    EXPECT_LE((r.u.matrix().adjoint() * r.u.matrix() - Matrix::Identity(2, 2)).norm(), 1e-9);
  }
  EXPECT_THROW(kato_propagate(tr, 0.05, 21.0, cfg), RangeError);
}

TEST(KatoGenerator, MatchesDefinition) {
  const double B = 0.8, eps = 0.02;
  const SpectralTrack tr(lz_family(B), uniform_grid(-1, 1, 401));
  const auto k = kato_generator(tr, eps);
  for (double t : {-40.0, 0.0, 13.0}) {
    const double s = eps * t;
    const Matrix p = spin_projector(B, s), d = spin_projector_derivative(B, s);
    const Matrix want = lz_family(B).at(s).matrix() + Complex(0.0, eps) * (d * p - p * d);
    EXPECT_LE((k(t).matrix() - want).norm(), 1e-8);
  }
}

TEST(AdiabaticError, ConstantFamilyFidelity) {
  std::mt19937_64 rng(12);
  const SpectralTrack tr(constant_family(HermitianOperator(oracle::random_hermitian(4, rng))),
                         uniform_grid(0, 1, 9));
  const std::vector<double> ts{1.0, 4.0, 10.0};
  const auto run = adiabatic_error(tr, 0.1, ts);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    EXPECT_NEAR(run.fidelity[i], 1.0, 1e-10);
    EXPECT_LE(run.defect[i], 1e-8);
  }
  EXPECT_LE(run.isometry_defect, 1e-9);
}

TEST(AdiabaticError, GappedSweepOrderEps) {
  const SpectralTrack tr(gapped_sweep_family(1.0, 2.0), uniform_grid(0, 1, 201));
  IntegratorConfig cfg;
  cfg.tolerance = 1e-9;
  std::vector<double> eps{2e-2, 1e-2, 5e-3}, def;
  for (double e : eps) {
    const std::vector<double> ts{0.5 / e, 1.0 / e};
    const auto run = adiabatic_error(tr, e, ts, cfg);
    for (double f : run.fidelity) EXPECT_LE(f, 1.0 + 1e-10);
    EXPECT_LE(run.isometry_defect, 1e-8);
    for (double x : run.intertwining) EXPECT_LE(x, run.budget);
    def.push_back(run.defect.back());
  }
  EXPECT_GT(def[0], def[1]);
  EXPECT_GT(def[1], def[2]);
  const double slope = std::log(def[0] / def[2]) / std::log(eps[0] / eps[2]);
  EXPECT_GT(slope, 0.7);
  EXPECT_LT(slope, 1.3);
}

TEST(AdiabaticError, GaugeInvariantFidelity) {
  const SpectralTrack tr(lz_family(1.0), uniform_grid(-1, 1, 101));
  const SpectralTrack other = tr.regauged(99);
  EXPECT_GT((other.basis(10) - tr.basis(10)).norm(), 1e-3);
  const std::vector<double> ts{10.0, 50.0, 100.0};
  IntegratorConfig cfg;
  cfg.tolerance = 1e-10;
  // Slow time runs over [0, 1]; the track covers it.
  const auto a = adiabatic_error(tr, 0.01, ts, cfg);
  const auto b = adiabatic_error(other, 0.01, ts, cfg);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    EXPECT_NEAR(a.fidelity[i], b.fidelity[i], 1e-10);
    EXPECT_NEAR(a.defect[i], b.defect[i], 1e-10);
  }
}

TEST(AdiabaticError, SubtractedEigenvalueKeepsDefects) {
  const SpectralTrack tr(gapped_sweep_family(1.0, 2.0), uniform_grid(0, 1, 101));
  const std::vector<double> ts{10.0, 20.0};
  IntegratorConfig cfg;
  cfg.tolerance = 1e-10;
  const auto a = adiabatic_error(tr, 0.05, ts, cfg);
  const auto b = adiabatic_error(tr, 0.05, ts, cfg, {true});
  for (std::size_t i = 0; i < ts.size(); ++i) {
    EXPECT_NEAR(a.fidelity[i], b.fidelity[i], 1e-8);
    EXPECT_NEAR(a.defect[i], b.defect[i], 1e-8);
  }
}

TEST(AdiabaticError, WaveOperatorRateBound) {
  const double eps = 0.05;
  const SpectralTrack tr(gapped_sweep_family(1.0, 2.0), uniform_grid(0, 1, 401));
  IntegratorConfig cfg;
  cfg.tolerance = 1e-11;
  const Matrix v0 = tr.basis(0);
  auto y = [&](double t) -> Matrix {
    const Matrix u = time_ordered_exp_detailed(driven_generator(tr, eps), 0.0, t, cfg).u.matrix();
    const Matrix uk = time_ordered_exp_detailed(kato_generator(tr, eps), 0.0, t, cfg).u.matrix();
    return u.adjoint() * uk * v0;
  };
  const double dt = 1e-3;
  for (double t : {4.0, 10.0, 15.0}) {
    const double rate = operator_norm((y(t + dt) - y(t - dt)) / (2.0 * dt));
    const Matrix p = tr.projection_exact(eps * t);
    const Matrix d = projection_derivative(tr, eps * t).value.matrix();
    EXPECT_LE(rate, eps * operator_norm(d * p - p * d) + 1e-6) << t;
  }
}

TEST(IntegrationByParts, ZeroA) {
  const auto r = integration_by_parts_bound([](double) { return Matrix::Zero(2, 2).eval(); },
                                            [](double t) { return Matrix(std::cos(t) * pauli(1)); }, 0.01, 2000);
  EXPECT_EQ(r.lhs, 0.0);
  EXPECT_EQ(r.budget, 0.0);
}

TEST(IntegrationByParts, ConstantB) {
  const Matrix b = 0.5 * pauli(3) + 0.2 * pauli(1);
  const auto r = integration_by_parts_bound([](double t) { return Matrix(std::cos(3.0 * t) * pauli(1)); },
                                            [b](double) { return b; }, 0.01, 20000);
  EXPECT_NEAR(r.lhs, r.mean_integral * operator_norm(b), 1e-12);
  EXPECT_EQ(r.head, 0.0);
  EXPECT_EQ(r.tail, 0.0);
  // ε∫₀^{1/ε}cos 3t = ε sin(3/ε)/3.
  EXPECT_NEAR(r.mean_integral, 0.01 * std::abs(std::sin(300.0)) / 3.0, 1e-6);
  EXPECT_LE(r.lhs, r.budget + 1e-15);
}

TEST(IntegrationByParts, LatticeHeisenbergAgainstRotation) {
  LatticeModel m;
  m.sites = 12;
  m.potential = [](double x, double) { return -0.5 * std::exp(-x * x / 2.0); };
  const auto es = eigensystem(lattice_hamiltonian(m, 0.0));
  const Index n = m.sites;
  RealVector c(n);
  for (Index j = 0; j < n; ++j) c(j) = std::exp(-m.position(j) * m.position(j));
  const Matrix cb = es.vectors.adjoint() * c.cast<Complex>().asDiagonal() * es.vectors;
  // Off-diagonal Heisenberg part: e^{iHt}Ce^{-iHt} minus its time average.
  auto A = [&](double t) {
    Matrix a(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index k = 0; k < n; ++k)
        a(i, k) = i == k ? Complex(0.0) : cb(i, k) * std::exp(Complex(0.0, (es.values(i) - es.values(k)) * t));
    return Matrix(es.vectors * a * es.vectors.adjoint());
  };
  const double eps = 0.02;
  Matrix g = Matrix(momentum_operator(m).matrix());
  const Matrix c2 = Matrix(c.cast<Complex>().asDiagonal());
  auto B = [&](double t) {
    const Matrix r = oracle::propagator(g, eps * t);
    return Matrix(r * c2 * r.adjoint());
  };
  const auto res = integration_by_parts_bound(A, B, eps, 4000);
  EXPECT_GT(res.lhs, 0.0);
  EXPECT_LE(res.lhs, res.budget);
  EXPECT_LE(res.max_derivative, 4.0 * eps);
}

TEST(PerturbedAverage, IdenticalAndCommuting) {
  std::mt19937_64 rng(5);
  const HermitianOperator h(oracle::random_hermitian(5, rng));
  const HermitianOperator a(oracle::random_hermitian(5, rng));
  const auto same = perturbed_time_average(h, h, a, 50.0);
  EXPECT_LE(same.d, 1e-13);
  EXPECT_EQ(same.delta, 0.0);

  RealVector d1(3), d2(3), da(3);
  d1 << 0.1, 0.5, 1.0;
  d2 << 0.2, 0.4, 1.3;
  da << 1.0, -2.0, 0.5;
  const auto comm = perturbed_time_average(HermitianOperator::diagonal(d1), HermitianOperator::diagonal(d2),
                                           HermitianOperator::diagonal(da), 30.0);
  EXPECT_LE(comm.d, 1e-14);
  EXPECT_NEAR(comm.average1, 2.0, 1e-14);
}

TEST(PerturbedAverage, LatticeBumpAgainstQuadrature) {
  LatticeModel m;
  m.sites = 24;
  const Matrix h1 = lattice_hamiltonian(m, 0.0).matrix();
  RealVector bump(m.sites);
  for (Index j = 0; j < m.sites; ++j) bump(j) = 1e-3 * std::exp(-m.position(j) * m.position(j));
  const Matrix h2 = h1 + Matrix(bump.cast<Complex>().asDiagonal());
  const auto wd = weight_and_dilation(m);
  const double T = 200.0;
  const auto r = perturbed_time_average(HermitianOperator(h1), HermitianOperator(h2), wd.weight, T);
  // Even site count: the nearest sites sit at x = ±½.
  EXPECT_NEAR(r.delta, 1e-3 * std::exp(-0.25), 1e-12);
  EXPECT_LE(r.d, r.budget);
  EXPECT_LE(r.average2, r.average1 + r.d + 1e-14);

  Eigen::SelfAdjointEigenSolver<Matrix> e1(h1), e2(h2);
  const Matrix w = wd.weight.matrix();
  auto conj = [&](const Eigen::SelfAdjointEigenSolver<Matrix>& e, double t) {
    const Eigen::VectorXcd ph = (e.eigenvalues().cast<Complex>() * Complex(0.0, t)).array().exp();
    const Matrix u = e.eigenvectors() * ph.asDiagonal() * e.eigenvectors().adjoint();
    return Matrix(u * w * u.adjoint());
  };
  const Matrix diff = oracle::riemann_midpoint([&](double t) { return Matrix(conj(e1, t) - conj(e2, t)); }, 0.0, T,
                                               40000) /
                      T;
  EXPECT_NEAR(r.d, oracle::spectral_norm(diff), 1e-3 * r.d);
}

TEST(HbarTaylor, LinearFamiliesVanish) {
  EXPECT_LE(hbar_taylor_check(lz_family(0.7), 0.01, 3), 1e-12);
  std::mt19937_64 rng(21);
  const Matrix a = oracle::random_hermitian(3, rng), b = oracle::random_hermitian(3, rng);
  DrivenHamiltonian f;
  f.dim = 3;
  f.at = [a, b](double s) { return HermitianOperator(a + s * b); };
  for (std::int64_t j : {0, 5, 17}) EXPECT_LE(hbar_taylor_check(f, 0.004, j), 1e-12);
}

TEST(HbarTaylor, QuadraticFamilyResidual) {
  std::mt19937_64 rng(22);
  const Matrix m = oracle::random_hermitian(3, rng);
  DrivenHamiltonian f;
  f.dim = 3;
  f.at = [m](double s) { return HermitianOperator(s * s * m); };
  f.derivative_fn = [m](double s) { return HermitianOperator(2.0 * s * m); };
  // Mean of s² over [y, y+w] minus y² + wy is w²/3.
  for (double eps : {0.01, 0.0025})
    for (std::int64_t j : {0, 4, 9}) EXPECT_NEAR(hbar_taylor_check(f, eps, j), eps / 3.0 * operator_norm(m), 1e-9);
}

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "slowdrive/averaging.hpp"
#include "slowdrive/errors.hpp"
#include "slowdrive/quadrature.hpp"

using namespace slowdrive;

TEST(GaussLegendre, ExactForDegree15) {
  const auto& r = gauss_legendre(8);
  double wsum = 0.0, m14 = 0.0, m15 = 0.0;
  for (std::size_t k = 0; k < 8; ++k) {
    wsum += r.weights[k];
    m14 += r.weights[k] * std::pow(r.nodes[k], 14);
    m15 += r.weights[k] * std::pow(r.nodes[k], 15);
  }
  EXPECT_NEAR(wsum, 2.0, 1e-14);
  EXPECT_NEAR(m14, 2.0 / 15.0, 1e-14);
  EXPECT_NEAR(m15, 0.0, 1e-14);
}

TEST(Integrate, OscillatoryWithSplit) {
  auto f = [](double t) { return Matrix::Constant(1, 1, Complex(std::cos(3.0 * t), std::abs(t - 1.0))); };
  const double split[] = {1.0};
  const auto q = integrate(f, 0.0, 10.0, split);
  EXPECT_NEAR(q.integral(0, 0).real(), std::sin(30.0) / 3.0, 1e-10);
  EXPECT_NEAR(q.integral(0, 0).imag(), 0.5 + 40.5, 1e-10);
}

TEST(Integrate, NonConvergenceIsReported) {
  auto f = [](double t) { return Matrix::Constant(1, 1, Complex(std::sin(1e4 * t))); };
  EXPECT_THROW(integrate(f, 0.0, 10.0, {}, 1e-12, 4), NumericalError);
}

TEST(AveragingSchedule, Invariants) {
  const auto s = AveragingSchedule::from_eps(1e-2, 100.0);
  EXPECT_NEAR(s.beta * s.beta, s.eps, 1e-15);
  EXPECT_NEAR(s.t0_outer, 10.0, 1e-12);
  EXPECT_NEAR(s.t0_inner, 1.0 / std::sqrt(s.beta), 1e-12);
  EXPECT_THROW(AveragingSchedule::from_eps(-1e-3, 1.0), ValidationError);
  EXPECT_THROW(AveragingSchedule::from_eps(1e-3, 0.0), ValidationError);
}

TEST(UniformBreakpoints, PartialFinalSegment) {
  const auto bp = uniform_breakpoints(10.0, 3.0);
  ASSERT_EQ(bp.size(), 5u);
  EXPECT_EQ(bp.back(), 10.0);
  EXPECT_EQ(bp[3], 9.0);
  EXPECT_EQ(uniform_breakpoints(10.0, 0.1).size(), 101u);
}

TEST(SegmentAverage, ConstantFamily) {
  std::mt19937_64 rng(3);
  const HermitianOperator h(oracle::random_hermitian(3, rng));
  const auto gen = segment_average(constant_family(h), AveragingSchedule::from_eps(1e-2, 35.0), 10.0);
  ASSERT_EQ(gen.segments(), 4u);
  for (std::size_t n = 0; n < 4; ++n) EXPECT_LE((gen.op(n).matrix() - h.matrix()).norm(), 1e-14);
}

TEST(SegmentAverage, LandauZenerMidpoint) {
  const double eps = 1e-2, B = 1.0;
  const auto s = AveragingSchedule::from_eps(eps, 1.0 / eps);
  const auto gen = segment_average(lz_family(B), s, s.t0_outer);
  ASSERT_EQ(gen.segments(), 10u);
  for (std::size_t n = 0; n < gen.segments(); ++n) {
    const Matrix want = eps * s.t0_outer * (n + 0.5) * pauli(3) + B * pauli(1);
    EXPECT_LE((gen.op(n).matrix() - want).norm(), 1e-13);
  }
}

TEST(SegmentAverage, LatticeMatchesRiemannOracle) {
  LatticeModel m;
  m.sites = 16;
  m.potential = [](double x, double s) { return 0.5 * std::sin(3.0 * s) * std::exp(-x * x / 8.0); };
  const auto fam = lattice_family(m);
  const auto s = AveragingSchedule::from_eps(0.04, 25.0);
  const auto gen = segment_average(fam, s, s.t0_outer);
  for (std::size_t n = 0; n < gen.segments(); ++n) {
    const double lo = gen.breakpoints()[n], hi = gen.breakpoints()[n + 1];
    const Matrix want =
        oracle::riemann_midpoint([&](double t) { return fam.at(s.eps * t).matrix(); }, lo, hi, 10000) / (hi - lo);
    EXPECT_LE((gen.op(n).matrix() - want).norm(), 1e-8);
  }
}

TEST(PiecewisePropagator, IdentityAndSingleFactor) {
  std::mt19937_64 rng(5);
  const HermitianOperator h(oracle::random_hermitian(4, rng));
  const PiecewiseGenerator gen({0.0, 2.5}, {h});
  EXPECT_EQ((piecewise_propagator(gen, 0.0).matrix() - Matrix::Identity(4, 4)).norm(), 0.0);
  EXPECT_LE((piecewise_propagator(gen, 2.5).matrix() - oracle::propagator(h.matrix(), 2.5)).norm(), 1e-12);
  EXPECT_THROW(piecewise_propagator(gen, 2.6), RangeError);
  EXPECT_THROW(piecewise_propagator(gen, -0.1), RangeError);
}

TEST(PiecewisePropagator, LandauZenerAgainstOrderedExp) {
  const auto s = AveragingSchedule::from_eps(1e-2, 100.0);
  const auto gen = segment_average(lz_family(1.0), s, s.t0_outer);
  const double t = 3.0 * s.t0_outer;
  IntegratorConfig cfg;
  cfg.tolerance = 1e-11;
  const auto want = time_ordered_exp([&](double x) { return gen.at(x); }, 0.0, t, cfg,
                                     std::span<const double>(gen.breakpoints()));
  EXPECT_LE((piecewise_propagator(gen, t).matrix() - want.matrix()).norm(), 1e-10);
  // Interior point and unitarity.
  const Matrix mid = PiecewisePropagator(gen).matrix_at(2.5 * s.t0_outer);
  EXPECT_LE(unitarity_defect(mid), 1e-13);
}

TEST(InteractionResidual, ConstantFamilyVanishes) {
  std::mt19937_64 rng(7);
  const auto fam = constant_family(HermitianOperator(oracle::random_hermitian(3, rng)));
  const auto s = AveragingSchedule::from_eps(1e-2, 50.0);
  const auto gen = segment_average(fam, s, s.t0_outer);
  for (double t : {0.0, 7.3, 33.0}) EXPECT_LE(interaction_residual(fam, gen, s, t).matrix().norm(), 1e-12);
}

TEST(InteractionResidual, LandauZenerSegmentProfile) {
  const double eps = 1e-2;
  const auto s = AveragingSchedule::from_eps(eps, 1.0 / eps);
  const InteractionPicture pic(lz_family(1.0), segment_average(lz_family(1.0), s, s.t0_outer), s);
  // a_N vanishes at the segment midpoint.
  EXPECT_LE(pic.tilde(3.5 * s.t0_outer).matrix().norm(), 1e-12);
  double sup = 0.0;
  for (int k = 0; k <= 2000; ++k) sup = std::max(sup, oracle::spectral_norm(pic.tilde(s.t0_outer * (2.0 + k / 2000.0 * 0.999999999999)).matrix()));
  EXPECT_NEAR(sup, 0.5, 1e-10);
  EXPECT_NEAR(s.beta * sup, std::sqrt(eps) / 2.0, 1e-10);
  const HermitianOperator a = pic.residual(23.7);
  EXPECT_NEAR(oracle::spectral_norm(a.matrix()), oracle::spectral_norm(pic.tilde(23.7).matrix()), 1e-12);
}

TEST(NestedLevels, ZeroGenerator) {
  const auto s = AveragingSchedule::from_eps(1e-2, 30.0);
  const NestedLevels lv([](double) { return HermitianOperator::zero(2); }, s);
  for (double t : {0.0, 4.0, 30.0}) {
    EXPECT_LE((lv.U0(t) - Matrix::Identity(2, 2)).norm(), 1e-15);
    EXPECT_LE((lv.U1(t) - Matrix::Identity(2, 2)).norm(), 1e-15);
    EXPECT_LE((lv.U2(t) - Matrix::Identity(2, 2)).norm(), 1e-15);
  }
}

TEST(NestedLevels, ConstantGenerator) {
  std::mt19937_64 rng(11);
  const HermitianOperator a(oracle::random_hermitian(3, rng));
  const auto s = AveragingSchedule::from_eps(1e-2, 20.0);
  const NestedLevels lv([a](double) { return a; }, s);
  for (std::size_t n = 0; n < lv.average(0).segments(); ++n) {
    EXPECT_LE((lv.average(0).op(n).matrix() - a.matrix()).norm(), 1e-13);
    EXPECT_LE(lv.average(1).op(n).matrix().norm(), 1e-13);
  }
  for (double t : {1.3, 20.0}) {
    EXPECT_LE((lv.U0(t) - oracle::propagator(s.beta * a.matrix(), t)).norm(), 1e-12);
    EXPECT_LE((lv.U2(t) - Matrix::Identity(3, 3)).norm(), 1e-12);
  }
}

TEST(NestedLevels, LandauZenerWindowAveragesAndCorrectorGrowth) {
  const double eps = 1e-2;
  const auto s = AveragingSchedule::from_eps(eps, 1.0 / eps);
  const auto fam = lz_family(1.0);
  InteractionPicture pic(fam, segment_average(fam, s, s.t0_outer), s);
  const auto& bp = pic.propagator().generator().breakpoints();
  const NestedLevels lv([&pic](double t) { return pic.residual(t); }, s, bp);
  const auto& g0 = lv.average(0);
  for (std::size_t n : {std::size_t{0}, std::size_t{9}, g0.segments() - 1}) {
    const double lo = g0.breakpoints()[n], hi = g0.breakpoints()[n + 1];
    // A jumps at outer breakpoints; the oracle sums midpoint rules between them.
    std::vector<double> cuts{lo};
    for (double b : bp)
      if (b > lo && b < hi) cuts.push_back(b);
    cuts.push_back(hi);
    Matrix want = Matrix::Zero(2, 2);
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k)
      want += oracle::riemann_midpoint([&](double t) { return pic.residual(t).matrix(); }, cuts[k], cuts[k + 1], 20000);
    want /= hi - lo;
    EXPECT_LE((g0.op(n).matrix() - want).norm(), 1e-7);
  }
  // ‖U₂ − I‖ ≤ C·β·t on t ≤ 1/√ε.
  double c = 0.0;
  for (int k = 1; k <= 20; ++k) {
    const double t = s.t0_outer * k / 20.0;
    c = std::max(c, (lv.U2(t) - Matrix::Identity(2, 2)).norm() / (s.beta * t));
  }
  EXPECT_GT(c, 0.0);
  EXPECT_LT(c, 1.0);
  EXPECT_LE(unitarity_defect(lv.U1(77.0)), 1e-12);
}

TEST(NestedLevels, DepthHook) {
  const auto s = AveragingSchedule::from_eps(1e-2, 20.0);
  auto a = [](double t) { return HermitianOperator(std::cos(2.0 * t) * pauli(1) + 0.3 * pauli(3)); };
  const NestedLevels d1(a, s, {}, 1), d3(a, s, {}, 3);
  EXPECT_EQ(d1.depth(), 1);
  EXPECT_EQ(d3.depth(), 3);
  EXPECT_LE((d1.U1(5.0) - d1.U0(5.0)).norm(), 0.0);
  EXPECT_LE(unitarity_defect(d3.U(2, 13.0)), 1e-12);
  EXPECT_THROW(NestedLevels(a, s, {}, 0), InvalidArgument);
}

TEST(ReconstructSolution, ConstantFamilyIsExact) {
  std::mt19937_64 rng(13);
  const auto fam = constant_family(HermitianOperator(oracle::random_hermitian(3, rng)));
  const auto s = AveragingSchedule::from_eps(1e-2, 40.0);
  IntegratorConfig cfg;
  const AveragedDynamics dyn(fam, s);
  for (double t : {0.0, 11.0, 40.0}) {
    const auto r = dyn.evaluate(StateVector::basis(3, 1), t, cfg);
    EXPECT_LE(r.defect, 10 * cfg.tolerance);
    EXPECT_NEAR(r.psi.norm(), 1.0, 1e-10);
  }
}

TEST(ReconstructSolution, FrozenLandauZener) {
  const auto s = AveragingSchedule::from_eps(0.0, 25.0);
  IntegratorConfig cfg;
  const auto r = reconstruct_solution(lz_family(1.0), s, StateVector::basis(2, 0), 25.0, cfg);
  EXPECT_LE(r.defect, 10 * cfg.tolerance);
  EXPECT_LE(r.u2_defect, 1e-14);
}

TEST(ReconstructSolution, LandauZenerBothOrderings) {
  const double eps = 1e-2;
  const auto s = AveragingSchedule::from_eps(eps, 1.0 / eps);
  IntegratorConfig cfg;
  const auto r = reconstruct_solution(lz_family(1.0), s, StateVector::basis(2, 0), 1.0 / eps, cfg);
  EXPECT_NEAR(r.psi.norm(), 1.0, 1e-10);
  EXPECT_NEAR(r.psi_alt.norm(), 1.0, 1e-10);
  EXPECT_LT(r.defect, 0.1);
  EXPECT_LT(r.alt_defect, 0.1);
  // The corrector vanishes at window boundaries, including the horizon.
  EXPECT_LE(r.u2_defect, 1e-12);
  const auto mid = AveragedDynamics(lz_family(1.0), s).evaluate(StateVector::basis(2, 0), 50.0, cfg);
  EXPECT_GT(mid.u2_defect, 0.0);
  EXPECT_LT(mid.defect, 0.1);
}

TEST(InteractionPicture, ReproducesOracleAtCheckpoints) {
  const double eps = 1e-2;
  const auto s = AveragingSchedule::from_eps(eps, 40.0);
  IntegratorConfig cfg;
  std::vector<double> cps;
  for (int k = 1; k <= 20; ++k) cps.push_back(2.0 * k);
  const auto d = interaction_picture_defects(lz_family(1.0), s, StateVector::basis(2, 0), cps, cfg);
  ASSERT_EQ(d.size(), 20u);
  for (double x : d) EXPECT_LE(x, 10 * cfg.tolerance);
}

TEST(AveragingDeviation, ConstantAndLandauZener) {
  std::mt19937_64 rng(17);
  const auto fam = constant_family(HermitianOperator(oracle::random_hermitian(2, rng)));
  EXPECT_LE(averaging_deviation_sup(fam, AveragingSchedule::from_eps(1e-2, 10.0)), 1e-14);
  for (double eps : {1e-2, 1e-4}) {
    const auto s = AveragingSchedule::from_eps(eps, 1.0 / std::sqrt(eps));
    EXPECT_NEAR(averaging_deviation_sup(lz_family(1.0), s), std::sqrt(eps) / 2.0, 1e-10);
  }
}

TEST(AveragingDeviation, WeightedLatticeBound) {
  LatticeModel m;
  m.sites = 64;
  m.sigma = 2.0;
  m.potential = [](double x, double s) { return 0.5 * std::sin(s) * std::exp(-x * x / 8.0); };
  const double c1 = 0.5 * 8.0 * std::exp(-7.0 / 8.0);
  const double eps = 1e-2;
  const auto s = AveragingSchedule::from_eps(eps, 50.0);
  RealVector w(m.sites);
  for (Index j = 0; j < m.sites; ++j) w(j) = std::pow(m.bracket(j), m.sigma);
  for (std::size_t seg : {std::size_t{0}, std::size_t{4}}) {
    const double sup = averaging_deviation_sup(lattice_family(m), s, w, seg, 401);
    EXPECT_GT(sup, 0.0);
    EXPECT_LE(sup, c1 * std::sqrt(eps));
  }
}

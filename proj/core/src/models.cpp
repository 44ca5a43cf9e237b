#include "slowdrive/models.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "slowdrive/errors.hpp"

namespace slowdrive {

HermitianOperator DrivenHamiltonian::derivative(double s, double h) const {
  if (derivative_fn) return derivative_fn(s);
  const Matrix d = (-at(s + 2 * h).matrix() + 8.0 * at(s + h).matrix() - 8.0 * at(s - h).matrix() +
                    at(s - 2 * h).matrix()) /
                   (12.0 * h);
  return HermitianOperator::symmetrized(d);
}

SparseMatrix DrivenHamiltonian::sparse(double s) const {
  if (sparse_at) return sparse_at(s);
  return at(s).matrix().sparseView();
}

DrivenHamiltonian constant_family(const HermitianOperator& h) {
  DrivenHamiltonian f;
  f.dim = h.dim();
  f.at = [h](double) { return h; };
  f.derivative_fn = [d = h.dim()](double) { return HermitianOperator::zero(d); };
  f.name = "constant";
  return f;
}

void LZModel::validate() const {
  std::ostringstream os;
  if (!(B >= 0.0) || !std::isfinite(B)) os << " B must be finite and >= 0;";
  if (!(eps > 0.0 && eps < 1.0)) os << " eps must lie in (0, 1);";
  if (!os.str().empty()) throw ValidationError("LZModel:" + os.str());
}

void LZModel::validate_sweep() const {
  std::ostringstream os;
  if (!(B >= 0.0) || !std::isfinite(B)) os << " B must be finite and >= 0;";
  if (!(eps > 0.0) || !std::isfinite(eps)) os << " eps must be finite and > 0;";
  if (!os.str().empty()) throw ValidationError("LZModel:" + os.str());
}

double LZModel::t0() const { return 1.0 / std::sqrt(eps); }

HermitianOperator lz_hamiltonian(const LZModel& m, double t) {
  Matrix h(2, 2);
  h << m.eps * t, m.B, m.B, -m.eps * t;
  return HermitianOperator(h);
}

DrivenHamiltonian lz_family(double B) {
  DrivenHamiltonian f;
  f.dim = 2;
  f.at = [B](double s) { return HermitianOperator(s * pauli(3) + B * pauli(1)); };
  f.derivative_fn = [](double) { return HermitianOperator(pauli(3)); };
  f.name = "landau-zener";
  return f;
}

DrivenHamiltonian gapped_sweep_family(double B, double v) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  DrivenHamiltonian f;
  f.dim = 2;
  f.at = [=](double s) {
    const double g = s - std::sin(two_pi * s) / two_pi;
    return HermitianOperator(B * pauli(1) + v * g * pauli(3));
  };
  f.derivative_fn = [=](double s) {
    return HermitianOperator(v * (1.0 - std::cos(two_pi * s)) * pauli(3));
  };
  f.name = "gapped-sweep";
  return f;
}

void LatticeModel::validate() const {
  std::ostringstream os;
  if (sites < 2) os << " sites must be >= 2;";
  if (!(spacing > 0.0) || !std::isfinite(spacing)) os << " spacing must be > 0;";
  if (!(sigma > 0.0) || !std::isfinite(sigma)) os << " sigma must be > 0;";
  if (!os.str().empty()) throw ValidationError("LatticeModel:" + os.str());
}

double LatticeModel::position(Index j) const {
  return (static_cast<double>(j) - 0.5 * static_cast<double>(sites - 1)) * spacing;
}

double LatticeModel::bracket(Index j) const {
  const double x = position(j);
  return std::sqrt(1.0 + x * x);
}

double LatticeModel::W(Index j, double s) const { return potential ? potential(position(j), s) : 0.0; }

LatticeModel LatticeModel::resized(Index n) const {
  LatticeModel m = *this;
  m.sites = n;
  return m;
}

SparseMatrix free_laplacian_sparse(Index sites, double spacing) {
  const double c = 1.0 / (spacing * spacing);
  std::vector<Eigen::Triplet<Complex>> trips;
  trips.reserve(static_cast<std::size_t>(3 * sites));
  for (Index j = 0; j < sites; ++j) {
    trips.emplace_back(j, j, 2.0 * c);
    if (j + 1 < sites) {
      trips.emplace_back(j, j + 1, -c);
      trips.emplace_back(j + 1, j, -c);
    }
  }
  SparseMatrix m(sites, sites);
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

SparseMatrix lattice_hamiltonian_sparse(const LatticeModel& m, double s) {
  m.validate();
  SparseMatrix h = free_laplacian_sparse(m.sites, m.spacing);
  if (m.potential) {
    for (Index j = 0; j < m.sites; ++j) h.coeffRef(j, j) += m.W(j, s);
  }
  return h;
}

HermitianOperator lattice_hamiltonian(const LatticeModel& m, double s) {
  return HermitianOperator(Matrix(lattice_hamiltonian_sparse(m, s)));
}

DrivenHamiltonian lattice_family(const LatticeModel& m) {
  m.validate();
  DrivenHamiltonian f;
  f.dim = m.sites;
  f.at = [m](double s) { return lattice_hamiltonian(m, s); };
  f.sparse_at = [m](double s) { return lattice_hamiltonian_sparse(m, s); };
  f.name = "lattice";
  return f;
}

SparseMatrix momentum_sparse(const LatticeModel& m) {
  m.validate();
  const Complex c(0.0, -0.5 / m.spacing);
  std::vector<Eigen::Triplet<Complex>> trips;
  for (Index j = 0; j + 1 < m.sites; ++j) {
    trips.emplace_back(j, j + 1, c);
    trips.emplace_back(j + 1, j, -c);
  }
  SparseMatrix p(m.sites, m.sites);
  p.setFromTriplets(trips.begin(), trips.end());
  return p;
}

HermitianOperator momentum_operator(const LatticeModel& m) {
  return HermitianOperator(Matrix(momentum_sparse(m)), 1e-14);
}

WeightAndDilation weight_and_dilation(const LatticeModel& m) {
  m.validate();
  RealVector w(m.sites);
  for (Index j = 0; j < m.sites; ++j) w(j) = std::pow(m.bracket(j), -m.sigma);
  const Matrix p(momentum_sparse(m));
  Matrix a = Matrix::Zero(m.sites, m.sites);
  for (Index j = 0; j < m.sites; ++j)
    for (Index k = 0; k < m.sites; ++k)
      if (p(j, k) != Complex(0.0)) a(j, k) = 0.5 * p(j, k) * (m.position(j) + m.position(k));
  return {HermitianOperator::diagonal(w), HermitianOperator(a, 1e-14)};
}

DecayBounds check_decay_bounds(const LatticeModel& m, std::span<const double> s_samples, double rel_tol) {
  m.validate();
  DecayBounds out;
  const double h = 1e-5;
  for (double s : s_samples) {
    for (Index j = 0; j < m.sites; ++j) {
      const double wgt = std::pow(m.bracket(j), m.sigma);
      out.weighted_potential = std::max(out.weighted_potential, std::abs(wgt * m.W(j, s)));
      const double lo = std::max(0.0, s - h);
      const double d = (m.W(j, s + h) - m.W(j, lo)) / (s + h - lo);
      out.weighted_derivative = std::max(out.weighted_derivative, std::abs(wgt * d));
    }
  }
  out.within = out.weighted_potential <= m.C0 * (1.0 + rel_tol) &&
               out.weighted_derivative <= m.C1 * (1.0 + rel_tol);
  return out;
}

void SwitchingProfile::validate() const {
  std::ostringstream os;
  if (!W0) os << " W0 missing;";
  if (!W1) os << " W1 missing;";
  if (!(a > 0.0) || !std::isfinite(a)) os << " a must be > 0;";
  if (!os.str().empty()) throw ValidationError("SwitchingProfile:" + os.str());
}

double SwitchingProfile::value(double x, double s) const {
  return W0(x, std::min(s, 1.0)) + std::pow(1.0 + s, -a) * W1(x, s);
}

HermitianOperator switching_potential(const SwitchingProfile& p, const LatticeModel& m, double s) {
  p.validate();
  if (!(s >= 0.0)) throw RangeError("switching_potential: s must be >= 0");
  RealVector d(m.sites);
  for (Index j = 0; j < m.sites; ++j) d(j) = p.value(m.position(j), s);
  return HermitianOperator::diagonal(d);
}

LatticeModel with_switching(LatticeModel base, const SwitchingProfile& p) {
  p.validate();
  base.potential = [p](double x, double s) { return p.value(x, std::max(s, 0.0)); };
  return base;
}

double smooth_indicator(double v, double cut) {
  return 0.5 * (1.0 - std::tanh((std::abs(v) - cut) / (0.1 * cut)));
}

Matrix spectral_function(const Eigensystem& es, const std::function<double(double)>& f) {
  RealVector fv(es.values.size());
  for (Index k = 0; k < fv.size(); ++k) fv(k) = f(es.values(k));
  return es.vectors * fv.cast<Complex>().asDiagonal() * es.vectors.adjoint();
}

Matrix smooth_spectral_cutoff(const Eigensystem& es, double cut) {
  return spectral_function(es, [cut](double l) { return smooth_indicator(l, cut); });
}

StateVector gaussian_packet(const LatticeModel& m, double x0, double k0, double width) {
  m.validate();
  if (!(width > 0.0)) throw InvalidArgument("gaussian_packet: width must be > 0");
  Vector v(m.sites);
  for (Index j = 0; j < m.sites; ++j) {
    const double x = m.position(j);
    v(j) = std::exp(Complex(-(x - x0) * (x - x0) / (4.0 * width * width), k0 * x));
  }
  return StateVector::normalized(v);
}

double edge_mass(const Vector& psi, double fraction) {
  const Index n = psi.size();
  const Index k = std::max<Index>(1, static_cast<Index>(std::ceil(fraction * static_cast<double>(n))));
  return psi.head(k).squaredNorm() + psi.tail(k).squaredNorm();
}

}  // namespace slowdrive

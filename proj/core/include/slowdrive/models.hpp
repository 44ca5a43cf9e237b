#pragma once

#include <functional>
#include <limits>
#include <span>
#include <string>

#include "slowdrive/hermitian.hpp"

namespace slowdrive {

// s ↦ H(s); the physical generator at time t is H(εt).
struct DrivenHamiltonian {
  Index dim = 0;
  std::function<HermitianOperator(double)> at;
  std::function<HermitianOperator(double)> derivative_fn;  // optional, d/ds
  std::function<SparseMatrix(double)> sparse_at;           // optional
  std::string name;

  HermitianOperator operator()(double s) const { return at(s); }
  // Analytic derivative when supplied, otherwise a fourth-order central difference.
  HermitianOperator derivative(double s, double h = 1e-3) const;
  SparseMatrix sparse(double s) const;
};

DrivenHamiltonian constant_family(const HermitianOperator& h);

struct LZModel {
  double B = 1.0;
  double eps = 0.01;

  void validate() const;
  // Plain sweeps only need ε > 0; the sudden regime ε ≥ 1 is allowed.
  void validate_sweep() const;
  double t0() const;
};

// εtσ_z + Bσ_x
HermitianOperator lz_hamiltonian(const LZModel& m, double t);
// s σ_z + Bσ_x, so that H(εt) is the LZ generator.
DrivenHamiltonian lz_family(double B);

// Bσ_x + v·g(s)σ_z with g(s) = s − sin(2πs)/(2π); minimal gap 2B, ramp flat at both ends.
DrivenHamiltonian gapped_sweep_family(double B, double v);

using PotentialFn = std::function<double(double x, double s)>;

struct LatticeModel {
  Index sites = 64;
  double spacing = 1.0;
  double sigma = 2.0;
  PotentialFn potential;  // empty means W ≡ 0
  double C0 = std::numeric_limits<double>::infinity();
  double C1 = std::numeric_limits<double>::infinity();

  void validate() const;
  double position(Index j) const;  // measured from the lattice centre
  double bracket(Index j) const;   // ⟨x⟩ = √(1+x²)
  double W(Index j, double s) const;
  // Same physics on a different number of sites, centred identically.
  LatticeModel resized(Index sites) const;
};

HermitianOperator lattice_hamiltonian(const LatticeModel& m, double s);
SparseMatrix lattice_hamiltonian_sparse(const LatticeModel& m, double s);
SparseMatrix free_laplacian_sparse(Index sites, double spacing);
DrivenHamiltonian lattice_family(const LatticeModel& m);

// −i times the centred first difference.
HermitianOperator momentum_operator(const LatticeModel& m);
SparseMatrix momentum_sparse(const LatticeModel& m);

struct WeightAndDilation {
  HermitianOperator weight;    // ⟨x⟩^{-σ}
  HermitianOperator dilation;  // ½(xp + px)
};
WeightAndDilation weight_and_dilation(const LatticeModel& m);

struct DecayBounds {
  double weighted_potential = 0.0;   // sup |⟨x⟩^σ W|
  double weighted_derivative = 0.0;  // sup |⟨x⟩^σ ∂_s W|
  bool within = true;
};
DecayBounds check_decay_bounds(const LatticeModel& m, std::span<const double> s_samples, double rel_tol = 1e-9);

struct SwitchingProfile {
  PotentialFn W0;
  PotentialFn W1;
  double a = 2.0;

  void validate() const;
  double value(double x, double s) const;  // W₀(x, min(s,1)) + (1+s)^{-a} W₁(x, s)
};

HermitianOperator switching_potential(const SwitchingProfile& p, const LatticeModel& m, double s);
LatticeModel with_switching(LatticeModel base, const SwitchingProfile& p);

// ½(1 − tanh((|v| − cut)/(0.1·cut))), a smoothed indicator of |v| ≤ cut.
double smooth_indicator(double v, double cut);
// F(|h| ≤ cut) via the spectral theorem.
Matrix smooth_spectral_cutoff(const Eigensystem& es, double cut);
Matrix spectral_function(const Eigensystem& es, const std::function<double(double)>& f);

StateVector gaussian_packet(const LatticeModel& m, double x0, double k0, double width);

// Fraction of |ψ|² on the outer `fraction` of sites at either end.
double edge_mass(const Vector& psi, double fraction = 0.05);

}  // namespace slowdrive

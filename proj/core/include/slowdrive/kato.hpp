#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "slowdrive/hermitian.hpp"
#include "slowdrive/models.hpp"

namespace slowdrive {

std::vector<double> uniform_grid(double a, double b, std::size_t points);

struct TrackOptions {
  Index target = 0;  // index of the lowest tracked eigenvalue, ascending order
  Index rank = 1;
  // Eigenvalues at or above the threshold form the continuum block P_c.
  double continuum_threshold = std::numeric_limits<double>::infinity();
  double min_overlap = 0.9;
  double degeneracy_tolerance = 1e-9;
};

struct SpectralSplit {
  Matrix target;               // P₀
  std::vector<Matrix> bound;   // P_j, j ≠ 0
  Matrix continuum;            // P_c
};

struct DerivativeEstimate {
  HermitianOperator value;
  int order = 4;
  bool one_sided = false;
};

// Eigenvector(s) of a driven family followed along a uniform s-grid with
// maximal-overlap gauge continuation.
class SpectralTrack {
 public:
  SpectralTrack(DrivenHamiltonian family, std::vector<double> s_grid, TrackOptions opt = {});

  const std::vector<double>& grid() const { return s_; }
  double spacing() const { return h_; }
  std::size_t size() const { return s_.size(); }
  Index rank() const { return opt_.rank; }
  Index dim() const { return family_.dim; }
  const DrivenHamiltonian& family() const { return family_; }
  const TrackOptions& options() const { return opt_; }

  double eigenvalue(std::size_t k) const { return lambda_.at(k); }
  const std::vector<double>& eigenvalues() const { return lambda_; }
  const Matrix& basis(std::size_t k) const { return v_.at(k); }
  Matrix projection(std::size_t k) const;
  SpectralSplit split(std::size_t k) const;
  // Smallest distance from the tracked group to the rest of the spectrum.
  double min_gap() const { return min_gap_; }
  double min_neighbour_overlap() const { return min_overlap_; }

  // Richardson-extrapolated central difference at grid point k; lower order
  // and one-sided near the ends.
  DerivativeEstimate derivative(std::size_t k) const;
  // max_k ‖D_R − D_h‖ over interior points, a conservative error scale for Ṗ.
  double finite_difference_error() const;

  // Four-point Lagrange interpolation of grid values.
  Matrix projection_at(double s) const;
  Matrix derivative_at(double s) const;
  // derivative_at(s)·projection_at(s) from the rank-r factors.
  Matrix derivative_times_projection(double s) const;
  double eigenvalue_at(double s) const;
  // Direct eigensolve at s; the vector is phase-aligned with the nearest grid point.
  Matrix state_at(double s) const;
  Matrix projection_exact(double s) const;

  // Same track with every stored vector multiplied by a random phase.
  SpectralTrack regauged(std::uint64_t seed) const;

 private:
  Matrix target_vectors(const Eigensystem& es) const;
  std::size_t locate(double s) const;
  Matrix raw_projection(std::size_t k) const;
  Matrix raw_derivative(std::size_t k, int* order, bool* one_sided) const;

  DrivenHamiltonian family_;
  std::vector<double> s_;
  TrackOptions opt_;
  double h_ = 0.0;
  std::vector<double> lambda_;
  std::vector<Matrix> v_;
  double min_gap_ = std::numeric_limits<double>::infinity();
  double min_overlap_ = 1.0;
  // Filled for small dimensions only.
  std::vector<Matrix> p_cache_;
  std::vector<Matrix> dp_cache_;
};

SpectralTrack tracked_spectral_projection(const DrivenHamiltonian& family, std::vector<double> s_grid,
                                          const TrackOptions& opt = {});

DerivativeEstimate projection_derivative(const SpectralTrack& track, double s);

// H(εt) (minus λ₀(εt)·I when subtract_eigenvalue)
Generator driven_generator(const SpectralTrack& track, double eps, bool subtract_eigenvalue = false);
// K(t) = H(εt) + iε[Ṗ₀(εt), P₀(εt)]
Generator kato_generator(const SpectralTrack& track, double eps, bool subtract_eigenvalue = false);

struct KatoPropagation {
  UnitaryMatrix u;
  double intertwining_defect = 0.0;  // ‖P₀(εt)U_K − U_K P₀(0)‖
  double budget = 0.0;               // 10·(tolerance + 2εt·finite-difference error)
  bool within_budget = true;
  std::int64_t steps = 0;
};

KatoPropagation kato_propagate(const SpectralTrack& track, double eps, double t, const IntegratorConfig& cfg = {});

struct AdiabaticOptions {
  bool subtract_eigenvalue = false;
};

// Images of range P₀(0) under the true and the Kato dynamics, kept instead of
// full unitaries.
struct KatoRun {
  double eps = 0.0;
  std::vector<double> t;
  std::vector<Matrix> image;       // U(t)·basis(0)
  std::vector<Matrix> kato_image;  // U_K(t)·basis(0)
  std::vector<double> fidelity;    // |⟨ψ₀(εt), ψ_ε(t)⟩| (σ_min for rank > 1)
  std::vector<double> theta;       // arg⟨ψ₀(εt), ψ_ε(t)⟩, rank 1
  std::vector<double> defect;      // ‖U*U_K P₀(0) − P₀(0)‖
  std::vector<double> intertwining;  // ‖P₀(εt)U_K − U_K P₀(0)‖
  double isometry_defect = 0.0;
  double budget = 0.0;
  std::int64_t steps = 0;
};

KatoRun adiabatic_error(const SpectralTrack& track, double eps, std::span<const double> t_grid,
                        const IntegratorConfig& cfg = {}, const AdiabaticOptions& opt = {});

using OperatorFunction = std::function<Matrix(double)>;

struct IntegrationByParts {
  double lhs = 0.0;           // ‖ε∫₀^{1/ε} A B‖
  double boundary = 0.0;      // ‖ε∫₀^{1/ε}A‖·‖B(1/ε)‖
  double head = 0.0;          // ε∫‖∫₀^{1/√ε}A‖·‖B′‖
  double tail = 0.0;          // ε∫‖∫_{1/√ε}^{s}A‖·‖B′‖
  double budget = 0.0;        // boundary + head + tail
  double mean_integral = 0.0; // ‖ε∫₀^{1/ε}A‖
  double max_derivative = 0.0;
};

// Trapezoid quadrature on `intervals` uniform steps of [0, 1/ε]. B′ by
// central differences unless dB is given.
IntegrationByParts integration_by_parts_bound(const OperatorFunction& A, const OperatorFunction& B, double eps,
                                              std::size_t intervals = 20000, const OperatorFunction& dB = {});

struct PerturbedAverage {
  double d = 0.0;         // ‖(1/T)∫(A₁ − A₂)‖
  double delta = 0.0;     // ‖H₁ − H₂‖
  double average1 = 0.0;  // ‖(1/T)∫A₁‖
  double average2 = 0.0;
  double budget = 0.0;    // δ·Σ_j(‖F_j(T)‖ + (1/T)∫‖F_j‖), F_j(t) = ∫₀ᵗA_j
};

// A_j(t) = e^{iH_jt}Ae^{-iH_jt}; time averages in closed form in each eigenbasis.
PerturbedAverage perturbed_time_average(const HermitianOperator& H1, const HermitianOperator& H2,
                                        const HermitianOperator& A, double T, std::size_t samples = 400);

// ‖H̄_j − H(y_j) − (√ε/2)H′(y_j)‖ with y_j = √ε·j and H̄_j the mean of H over [y_j, y_j + √ε].
double hbar_taylor_check(const DrivenHamiltonian& family, double eps, std::int64_t j);

}  // namespace slowdrive

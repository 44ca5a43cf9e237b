#pragma once

#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "slowdrive/averaging.hpp"
#include "slowdrive/hermitian.hpp"
#include "slowdrive/models.hpp"

namespace slowdrive {

enum class NormMethod { Dense, PowerIteration };
const char* norm_method_name(NormMethod m);

// Dense up to this dimension, power iteration above.
inline constexpr Index kDenseNormLimit = 256;

struct TimeAverageResult {
  double T = 0.0;
  double value = 0.0;  // ‖(1/T)∫₀ᵀU*AP_cU‖
  NormMethod method = NormMethod::Dense;
  double power_value = 0.0;  // power-iteration norm of the same average
  std::vector<double> block_values;
  double block_spread = 1.0;      // max/min of block_values
  double resolution_change = 0.0; // relative change under node doubling
  std::size_t samples = 0;
  std::vector<std::string> warnings;
};

// P_c for segment n given the eigensystem of its operator.
using ProjectorRule = std::function<Matrix(std::size_t segment, const Eigensystem& es)>;

ProjectorRule identity_projector();
// Projector onto eigenvectors with eigenvalues outside [lo, hi].
ProjectorRule continuum_projector(double lo, double hi);

// U(t) is the piecewise propagator of `dynamics`; trapezoid rule on `samples`
// uniform nodes of [0, T], and on each block of length block_length.
TimeAverageResult uniform_time_average(const PiecewiseGenerator& dynamics, const HermitianOperator& A,
                                       const ProjectorRule& pc, double T, std::size_t samples,
                                       double block_length);

struct RageOptions {
  std::size_t samples = 2001;
  double block_length = std::numeric_limits<double>::infinity();
  // Eigenvalues in the window are treated as discrete spectrum.
  std::optional<std::pair<double, double>> discrete_window;
};

// Recurrence horizon 2π/Δλ_min over the continuum levels of h.
double recurrence_horizon(const Eigensystem& es, const Matrix& pc);

TimeAverageResult rage_fixed_hamiltonian(const HermitianOperator& H, const HermitianOperator& A, double T,
                                         const RageOptions& opt = {});

// Checkpointed states of iψ' = H(εt)ψ; times must increase from 0.
std::vector<Vector> evolve_states(const DrivenHamiltonian& family, double eps, const Vector& psi0,
                                  std::span<const double> times, const IntegratorConfig& cfg);

struct EnergyDrift {
  double drift = 0.0;  // max_t |E(t) − E(0)|
  std::vector<double> t;
  std::vector<double> energy;
};

EnergyDrift energy_drift(const DrivenHamiltonian& family, double eps, const Vector& psi0, double t_max,
                         std::size_t checkpoints, const IntegratorConfig& cfg);

struct DecaySeries {
  std::vector<double> t;
  std::vector<double> base;       // ‖⟨x⟩^{-σ}e^{-iH₀t}ψ₀‖
  std::vector<double> perturbed;  // ‖⟨x⟩^{-σ}ψ(t)‖ with W added
  double alpha = 0.0;             // fitted base decay exponent
  double base_constant = 0.0;     // sup ⟨t⟩^α·base
  double operator_constant = 0.0; // sup ⟨τ⟩^α‖⟨x⟩^{-σ}e^{-iH₀τ}⟨x⟩^{-σ}‖
  double convolution_constant = 0.0;
  double weighted_perturbation = 0.0;  // sup |⟨x⟩^{2σ}W|
  double contraction = 0.0;
  bool within_bound = true;       // perturbed ≤ base_constant/(1−contraction)·⟨t⟩^{-α}
};

struct DecayOptions {
  double fit_from = 5.0;  // α is fitted on t ≥ fit_from
  bool require_contraction = true;
};

// H₀ is the static lattice Hamiltonian of `base` at s = 0; the perturbation
// W(x, t) is added in physical time.
DecaySeries small_perturbation_decay(const LatticeModel& base, const PotentialFn& W, const Vector& psi0,
                                     std::span<const double> t_grid, const IntegratorConfig& cfg,
                                     const DecayOptions& opt = {});

struct CookOptions {
  IntegratorConfig integrator;
  // H₀ = free Laplacian, or H(terminal_s) when set.
  std::optional<double> terminal_s;
  bool boundary_check = true;
  double boundary_tolerance = 0.1;  // relative, against a run on twice the lattice
};

struct CookSeries {
  std::vector<double> T;           // T_1 … T_n
  std::vector<double> difference;  // ‖Ω(T_k) − Ω(T_{k−1})‖
  std::vector<double> boundary_deviation;
  std::size_t peak = 0;            // index of the largest difference
  bool decreasing_tail = true;     // strictly decreasing after the peak
};

// Ω(T) = e^{iH₀T}U(T)ψ₀ with U generated by lattice_hamiltonian(model, εt).
CookSeries cook_wave_operator(const LatticeModel& model, double eps, const Vector& psi0,
                              std::span<const double> T_grid, const CookOptions& opt = {});

struct PropagationConfig {
  double R = 10.0;
  double X0 = 10.0;
  double sigma = 2.0;
  double k = 1.0;
  double delta = 0.1;
  double C = 1.0;
  std::size_t samples = 201;
  double edge_fraction = 0.05;
  double edge_tolerance = 1e-3;

  void validate() const;
};

struct PropagationEstimate {
  double lhs = 0.0;         // (1/R)∫⟨pψ, F(|A| ≤ R)pψ⟩
  double local_term = 0.0;  // (1/R)∫⟨pψ, ⟨x⟩^{-σ}F(|x| ≤ X₀)pψ⟩
  double rhs = 0.0;         // C·local_term + 2‖ψ‖²
  double max_edge_mass = 0.0;
  bool holds = true;
};

PropagationEstimate propagation_estimate(const LatticeModel& model, double eps, const PropagationConfig& cfg,
                                         const Vector& psi0, double T, const IntegratorConfig& icfg);

struct AcOptions {
  double T = 1000.0;
  double horizon_cap = 1e4;
  double R = 0.0;  // 0 means T/ln²T
  std::size_t window_samples = 21;
  std::size_t log_samples = 201;
  PropagationConfig cutoffs;
};

struct AcReport {
  double horizon = 0.0;  // min(e^{ε^{-1/4}}, cap); the drive is frozen afterwards
  bool horizon_truncated = false;
  double window_length = 0.0;
  std::vector<double> window_values;
  double window_sup = 0.0;
  bool windows_bounded = true;  // no growth from the first to the second half
  double R = 0.0;
  double weighted_lhs = 0.0;    // ∫₁ᵀ⟨pψ, F(|A| ≤ R)pψ⟩dt/t
  double norm2 = 0.0;
  double localized_mass = 0.0;  // ⟨ψ, F(|p|≥δ)F(|A|≤R)F(|p|≥δ)ψ⟩ at T
  double low_momentum_mass = 0.0;
  double max_edge_mass = 0.0;
};

AcReport ac_long_time_check(const LatticeModel& model, double eps, const Vector& psi0, const AcOptions& opt,
                            const IntegratorConfig& cfg);

}  // namespace slowdrive

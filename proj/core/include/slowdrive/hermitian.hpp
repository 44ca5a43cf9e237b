#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <array>
#include <complex>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace slowdrive {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<Complex>;
using Index = Eigen::Index;

inline constexpr double kHermitianTolerance = 1e-12;
inline constexpr double kUnitarityTolerance = 1e-9;
inline constexpr double kNormTolerance = 1e-10;

class HermitianOperator {
 public:
  // Throws InvalidOperator when entries deviate from their adjoint by more
  // than `tolerance` in any entry. Stored entries are exactly symmetrized.
  explicit HermitianOperator(const Matrix& entries, double tolerance = kHermitianTolerance);

  static HermitianOperator zero(Index dim);
  static HermitianOperator identity(Index dim);
  static HermitianOperator diagonal(const RealVector& d);
  // (m + m†)/2 without a tolerance check.
  static HermitianOperator symmetrized(const Matrix& m);

  Index dim() const { return m_.rows(); }
  const Matrix& matrix() const { return m_; }

  HermitianOperator operator+(const HermitianOperator& o) const;
  HermitianOperator operator-(const HermitianOperator& o) const;
  HermitianOperator operator*(double s) const;
  HermitianOperator& operator+=(const HermitianOperator& o);
  // U† H U
  HermitianOperator conjugated(const Matrix& u) const;

 private:
  struct Trusted {};
  HermitianOperator(Matrix m, Trusted) : m_(std::move(m)) {}
  Matrix m_;
};

inline HermitianOperator operator*(double s, const HermitianOperator& h) { return h * s; }

class UnitaryMatrix {
 public:
  explicit UnitaryMatrix(Matrix entries, double tolerance = kUnitarityTolerance);

  static UnitaryMatrix identity(Index dim);
  // For products and exponentials whose unitarity holds by construction;
  // the defect is left to unitarity_defect.
  static UnitaryMatrix assume_unitary(Matrix entries);

  Index dim() const { return m_.rows(); }
  const Matrix& matrix() const { return m_; }
  UnitaryMatrix adjoint() const;

  UnitaryMatrix operator*(const UnitaryMatrix& o) const;
  Vector operator*(const Vector& v) const { return m_ * v; }

 private:
  struct Trusted {};
  UnitaryMatrix(Matrix m, Trusted) : m_(std::move(m)) {}
  Matrix m_;
};

class StateVector {
 public:
  explicit StateVector(Vector amplitudes, double tolerance = kNormTolerance);
  static StateVector normalized(const Vector& v);
  static StateVector basis(Index dim, Index k);

  Index dim() const { return v_.size(); }
  const Vector& amplitudes() const { return v_; }
  double norm() const { return v_.norm(); }

 private:
  Vector v_;
};

StateVector operator*(const UnitaryMatrix& u, const StateVector& psi);

// a + b·σ
struct PauliVector {
  double a = 0.0;
  std::array<double, 3> b{0.0, 0.0, 0.0};

  HermitianOperator to_operator() const;
  static PauliVector from_operator(const HermitianOperator& h);
};

const Matrix& pauli(int k);  // k = 0..3, σ_0 = I

struct IntegratorConfig {
  double step = 1e-2;
  double tolerance = 1e-9;
  std::int64_t max_steps = std::int64_t{1} << 26;

  void validate() const;
};

using Generator = std::function<HermitianOperator(double)>;
using SparseGenerator = std::function<SparseMatrix(double)>;

struct Eigensystem {
  RealVector values;  // ascending
  Matrix vectors;
};

Eigensystem eigensystem(const HermitianOperator& h);

// e^{-iHt}
UnitaryMatrix expm_hermitian(const HermitianOperator& h, double t);

// α + β·σ for f(x) = e^{-ix}
UnitaryMatrix pauli_exp(double a, const std::array<double, 3>& b);

struct OrderedExp {
  UnitaryMatrix u;
  std::int64_t steps = 0;  // steps of the accepted pass
  double refinement_defect = 0.0;
};

// 𝒯exp(−i∫gen) by midpoint exponential steps with global step halving.
// Interior breakpoints are honoured as step boundaries.
OrderedExp time_ordered_exp_detailed(const Generator& gen, double t0, double t1,
                                     const IntegratorConfig& cfg,
                                     std::span<const double> breakpoints = {});

UnitaryMatrix time_ordered_exp(const Generator& gen, double t0, double t1,
                               const IntegratorConfig& cfg,
                               std::span<const double> breakpoints = {});

// Fourth-order two-point Magnus stepping with the same halving criterion.
OrderedExp time_ordered_exp_magnus4(const Generator& gen, double t0, double t1,
                                    const IntegratorConfig& cfg,
                                    std::span<const double> breakpoints = {});

// C(t) = A(t) + W(t) B(t) W(t)†, W(t) = 𝒯e^{i∫₀ᵗA}. Valid for t ≥ 0.
Generator merge_generators(Generator a, Generator b, const IntegratorConfig& cfg);

double unitarity_defect(const Matrix& u);
inline double unitarity_defect(const UnitaryMatrix& u) { return unitarity_defect(u.matrix()); }

double frobenius_norm(const Matrix& m);
// Largest singular value, dense.
double operator_norm(const Matrix& m);
// Largest singular value by power iteration on m†m.
double operator_norm_power(const Matrix& m, int max_iterations = 50, double tolerance = 1e-6);

// Taylor application of e^{-iHh} to the columns of x.
Matrix expm_apply(const SparseMatrix& h, double dt, const Matrix& x);
Matrix expm_apply(const Matrix& h, double dt, const Matrix& x);

struct BlockPropagation {
  Matrix block;
  std::int64_t steps = 0;
  double refinement_defect = 0.0;
};

// Same midpoint rule and halving criterion as time_ordered_exp, applied to
// a block of column vectors only.
BlockPropagation propagate_block(const SparseGenerator& gen, double t0, double t1, const Matrix& x,
                                 const IntegratorConfig& cfg,
                                 std::span<const double> breakpoints = {});
BlockPropagation propagate_block(const Generator& gen, double t0, double t1, const Matrix& x,
                                 const IntegratorConfig& cfg,
                                 std::span<const double> breakpoints = {});

}  // namespace slowdrive

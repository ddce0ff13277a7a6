#pragma once

#include <initializer_list>
#include <span>
#include <vector>

namespace ruio {

/// Dense row-major matrix of doubles. Sized for observer-design problems
/// (state dimensions up to a few tens), so every kernel favors simplicity
/// and verifiability over asymptotic speed.
class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols);  // zero-initialized
  Matrix(int rows, int cols, std::vector<double> entries);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(int n);
  static Matrix column(std::span<const double> values);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool empty() const { return rows_ == 0 || cols_ == 0; }

  double& operator()(int i, int j) {
    return entries_[static_cast<std::size_t>(i) * cols_ + j];
  }
  double operator()(int i, int j) const {
    return entries_[static_cast<std::size_t>(i) * cols_ + j];
  }

  std::span<double> data() { return entries_; }
  std::span<const double> data() const { return entries_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> entries_;
};

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);
Matrix transpose(const Matrix& a);
Matrix kron(const Matrix& a, const Matrix& b);

double trace(const Matrix& a);
double max_abs(const Matrix& a);  // entrywise max norm
double frobenius_norm(const Matrix& a);
bool all_finite(const Matrix& a);

/// y = A x for flat vectors.
std::vector<double> mul(const Matrix& a, std::span<const double> x);
void mul_into(const Matrix& a, std::span<const double> x, std::span<double> y);

struct SymEig {
  std::vector<double> values;  // ascending
  Matrix vectors;              // orthonormal columns, aligned with values
};

struct HurwitzResult {
  bool stable = false;
  /// The Lyapunov operator was singular (two eigenvalues of the tested
  /// matrix sum to zero), so the spectrum touches the imaginary axis.
  bool marginal = false;
};

// Numerical thresholds used by the kernels below.
inline constexpr double kPivotRelTol = 1e-12;
inline constexpr double kPinvRankRelTol = 1e-10;
inline constexpr double kJacobiOffdiagRelTol = 1e-12;
inline constexpr int kJacobiMaxSweeps = 100;
inline constexpr double kLyapunovMinEig = 1e-9;
inline constexpr double kGramRankRelTol = 1e-9;

/// Solves a X = b by Gaussian elimination with partial pivoting.
/// Throws SingularMatrix when a pivot drops below kPivotRelTol * max|a|.
Matrix solve_linear(const Matrix& a, const Matrix& b);

/// Left pseudoinverse (m^T m)^{-1} m^T of a full-column-rank matrix.
/// Throws RankDeficient when the Gram spectrum signals a rank drop.
Matrix pinv_full_column_rank(const Matrix& m);

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. The input is
/// symmetrized internally; sweeps stop once the off-diagonal Frobenius
/// norm falls below kJacobiOffdiagRelTol times the input norm.
SymEig sym_eig(const Matrix& s);

/// Stability test via the Lyapunov equation n^T P + P n = -I, solved as a
/// vectorized linear system. P positive definite certifies that every
/// eigenvalue of n has negative real part, with no nonsymmetric
/// eigensolver involved. A singular Lyapunov operator is reported as
/// not stable with the marginal flag set.
HurwitzResult hurwitz_check(const Matrix& n);

/// exp(n t) by scaling-and-squaring with a truncated Taylor series.
Matrix mat_exp(const Matrix& n, double t);

/// Rank of m from the spectrum of m^T m: eigenvalues above
/// rel_tol * trace(m^T m) count toward the rank.
int gram_rank(const Matrix& m, double rel_tol = kGramRankRelTol);

double min_eigenvalue(const Matrix& s);
double max_eigenvalue(const Matrix& s);

}  // namespace ruio

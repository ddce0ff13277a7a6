#include "ruio/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <string>
#include <utility>

#include "ruio/errors.hpp"

namespace ruio {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw DimensionMismatch(what);
}

}  // namespace

Matrix::Matrix(int rows, int cols) : rows_(rows), cols_(cols) {
  require(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
  entries_.assign(static_cast<std::size_t>(rows) * cols, 0.0);
}

Matrix::Matrix(int rows, int cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), entries_(std::move(entries)) {
  require(rows >= 1 && cols >= 1, "matrix dimensions must be positive");
  require(entries_.size() == static_cast<std::size_t>(rows) * cols,
          "entry count does not match dimensions");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = static_cast<int>(rows.size());
  require(rows_ >= 1, "matrix dimensions must be positive");
  cols_ = static_cast<int>(rows.begin()->size());
  require(cols_ >= 1, "matrix dimensions must be positive");
  entries_.reserve(static_cast<std::size_t>(rows_) * cols_);
  for (const auto& row : rows) {
    require(static_cast<int>(row.size()) == cols_, "ragged initializer rows");
    entries_.insert(entries_.end(), row.begin(), row.end());
  }
}

Matrix Matrix::identity(int n) {
  Matrix out(n, n);
  for (int i = 0; i < n; ++i) out(i, i) = 1.0;
  return out;
}

Matrix Matrix::column(std::span<const double> values) {
  Matrix out(static_cast<int>(values.size()), 1);
  std::copy(values.begin(), values.end(), out.data().begin());
  return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "shape mismatch in +");
  Matrix out = a;
  auto ob = out.data();
  auto bb = b.data();
  for (std::size_t i = 0; i < ob.size(); ++i) ob[i] += bb[i];
  return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "shape mismatch in -");
  Matrix out = a;
  auto ob = out.data();
  auto bb = b.data();
  for (std::size_t i = 0; i < ob.size(); ++i) ob[i] -= bb[i];
  return out;
}

Matrix operator*(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "shape mismatch in *");
  Matrix out(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i) {
    for (int k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

Matrix operator*(double s, const Matrix& a) {
  Matrix out = a;
  for (double& v : out.data()) v *= s;
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) {
      const double aij = a(i, j);
      if (aij == 0.0) continue;
      for (int k = 0; k < b.rows(); ++k)
        for (int l = 0; l < b.cols(); ++l)
          out(i * b.rows() + k, j * b.cols() + l) = aij * b(k, l);
    }
  return out;
}

double trace(const Matrix& a) {
  double t = 0.0;
  const int n = std::min(a.rows(), a.cols());
  for (int i = 0; i < n; ++i) t += a(i, i);
  return t;
}

double max_abs(const Matrix& a) {
  double m = 0.0;
  for (double v : a.data()) m = std::max(m, std::abs(v));
  return m;
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

bool all_finite(const Matrix& a) {
  for (double v : a.data())
    if (!std::isfinite(v)) return false;
  return true;
}

std::vector<double> mul(const Matrix& a, std::span<const double> x) {
  std::vector<double> y(static_cast<std::size_t>(a.rows()));
  mul_into(a, x, y);
  return y;
}

void mul_into(const Matrix& a, std::span<const double> x, std::span<double> y) {
  require(static_cast<int>(x.size()) == a.cols() &&
              static_cast<int>(y.size()) == a.rows(),
          "shape mismatch in matrix-vector product");
  for (int i = 0; i < a.rows(); ++i) {
    double acc = 0.0;
    for (int j = 0; j < a.cols(); ++j) acc += a(i, j) * x[j];
    y[i] = acc;
  }
}

Matrix solve_linear(const Matrix& a, const Matrix& b) {
  require(a.rows() == a.cols(), "solve_linear needs a square matrix");
  require(b.rows() == a.rows(), "right-hand side row count mismatch");
  const int n = a.rows();
  const double scale = max_abs(a);
  if (scale == 0.0) throw SingularMatrix("solve_linear: zero matrix");
  const double pivot_tol = kPivotRelTol * scale;

  Matrix lu = a;
  Matrix x = b;
  for (int col = 0; col < n; ++col) {
    int pivot_row = col;
    double best = std::abs(lu(col, col));
    for (int r = col + 1; r < n; ++r) {
      const double cand = std::abs(lu(r, col));
      if (cand > best) {
        best = cand;
        pivot_row = r;
      }
    }
    if (best < pivot_tol)
      throw SingularMatrix("solve_linear: pivot below tolerance at column " +
                           std::to_string(col));
    if (pivot_row != col) {
      for (int j = 0; j < n; ++j) std::swap(lu(col, j), lu(pivot_row, j));
      for (int j = 0; j < x.cols(); ++j) std::swap(x(col, j), x(pivot_row, j));
    }
    const double inv_pivot = 1.0 / lu(col, col);
    for (int r = col + 1; r < n; ++r) {
      const double factor = lu(r, col) * inv_pivot;
      if (factor == 0.0) continue;
      lu(r, col) = 0.0;
      for (int j = col + 1; j < n; ++j) lu(r, j) -= factor * lu(col, j);
      for (int j = 0; j < x.cols(); ++j) x(r, j) -= factor * x(col, j);
    }
  }
  for (int col = n - 1; col >= 0; --col) {
    const double inv_pivot = 1.0 / lu(col, col);
    for (int j = 0; j < x.cols(); ++j) {
      double acc = x(col, j);
      for (int k = col + 1; k < n; ++k) acc -= lu(col, k) * x(k, j);
      x(col, j) = acc * inv_pivot;
    }
  }
  return x;
}

Matrix pinv_full_column_rank(const Matrix& m) {
  const Matrix mt = transpose(m);
  const Matrix gram = mt * m;
  const SymEig eig = sym_eig(gram);
  if (eig.values.front() <= kPinvRankRelTol * trace(gram))
    throw RankDeficient("pinv_full_column_rank: input is rank deficient");
  return solve_linear(gram, mt);
}

SymEig sym_eig(const Matrix& s) {
  require(s.rows() == s.cols(), "sym_eig needs a square matrix");
  const int n = s.rows();
  Matrix a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = 0.5 * (s(i, j) + s(j, i));
  Matrix v = Matrix::identity(n);

  const double target = kJacobiOffdiagRelTol * frobenius_norm(a);
  auto offdiag_norm = [&]() {
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) acc += 2.0 * a(i, j) * a(i, j);
    return std::sqrt(acc);
  };

  int sweep = 0;
  while (offdiag_norm() > target) {
    if (++sweep > kJacobiMaxSweeps)
      throw NoConvergence("sym_eig: Jacobi sweeps exhausted");
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t =
            (theta >= 0 ? 1.0 : -1.0) /
            (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double sn = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = c * akp - sn * akq;
          a(k, q) = sn * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a(p, k);
          const double aqk = a(q, k);
          a(p, k) = c * apk - sn * aqk;
          a(q, k) = sn * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - sn * vkq;
          v(k, q) = sn * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](int i, int j) { return a(i, i) < a(j, j); });
  SymEig out;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (int j = 0; j < n; ++j) {
    out.values[j] = a(order[j], order[j]);
    for (int i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
  }
  return out;
}

HurwitzResult hurwitz_check(const Matrix& n_mat) {
  require(n_mat.rows() == n_mat.cols(), "hurwitz_check needs a square matrix");
  const int n = n_mat.rows();
  const Matrix nt = transpose(n_mat);
  const Matrix eye = Matrix::identity(n);
  // Column-major vectorization: vec(N^T P) = (I (x) N^T) vec(P),
  // vec(P N) = (N^T (x) I) vec(P).
  const Matrix op = kron(eye, nt) + kron(nt, eye);
  Matrix rhs(n * n, 1);
  for (int i = 0; i < n; ++i) rhs(i * n + i, 0) = -1.0;

  Matrix vec_p(n * n, 1);
  try {
    vec_p = solve_linear(op, rhs);
  } catch (const SingularMatrix&) {
    return {false, true};
  }
  Matrix p(n, n);
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) p(i, j) = vec_p(j * n + i, 0);
  const SymEig eig = sym_eig(p);
  return {eig.values.front() > kLyapunovMinEig, false};
}

Matrix mat_exp(const Matrix& n_mat, double t) {
  require(n_mat.rows() == n_mat.cols(), "mat_exp needs a square matrix");
  if (!all_finite(n_mat) || !std::isfinite(t))
    throw Error("mat_exp: non-finite input");
  const int n = n_mat.rows();
  if (t == 0.0) return Matrix::identity(n);

  Matrix a = t * n_mat;
  int squarings = 0;
  double norm = max_abs(a);
  while (norm > 0.5) {
    norm *= 0.5;
    ++squarings;
  }
  if (squarings > 0) a = std::ldexp(1.0, -squarings) * a;

  Matrix sum = Matrix::identity(n);
  Matrix term = Matrix::identity(n);
  for (int k = 1; k <= 30; ++k) {
    term = (1.0 / k) * (term * a);
    sum = sum + term;
    if (max_abs(term) <= 1e-16 * max_abs(sum)) break;
  }
  for (int i = 0; i < squarings; ++i) sum = sum * sum;
  return sum;
}

int gram_rank(const Matrix& m, double rel_tol) {
  const Matrix gram = transpose(m) * m;
  const SymEig eig = sym_eig(gram);
  const double threshold = rel_tol * trace(gram);
  int rank = 0;
  for (double v : eig.values)
    if (v > threshold) ++rank;
  return rank;
}

double min_eigenvalue(const Matrix& s) { return sym_eig(s).values.front(); }

double max_eigenvalue(const Matrix& s) { return sym_eig(s).values.back(); }

}  // namespace ruio

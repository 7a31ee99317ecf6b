#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "sashimi/rng.hpp"

namespace sashimi {

using cplx = std::complex<double>;
using CVector = std::vector<cplx>;

class SingularMatrixError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense complex matrix, row-major. std::complex<double> is laid out as an
// interleaved (re, im) pair, the same representation the tensors use.
class CMatrix {
 public:
  CMatrix() = default;
  CMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}
  CMatrix(std::size_t rows, std::size_t cols, std::vector<cplx> data);

  static CMatrix identity(std::size_t n);
  static CMatrix from_real(std::size_t rows, std::size_t cols, std::span<const double> values);
  static CMatrix column(const CVector& v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool square() const { return rows_ == cols_; }

  cplx& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  const cplx& operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<const cplx> data() const { return data_; }
  std::span<cplx> data() { return data_; }

  CMatrix adjoint() const;
  CMatrix transpose() const;
  CVector col(std::size_t c) const;

  // Largest absolute entry.
  double max_abs() const;
  double frobenius() const;
  bool all_finite() const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<cplx> data_;
};

CMatrix operator*(const CMatrix& a, const CMatrix& b);
CMatrix operator+(const CMatrix& a, const CMatrix& b);
CMatrix operator-(const CMatrix& a, const CMatrix& b);
CMatrix operator*(cplx s, const CMatrix& a);
CVector matvec(const CMatrix& a, const CVector& x);
// out = a * x, accumulated row by row in column order.
void matvec_into(const CMatrix& a, std::span<const cplx> x, std::span<cplx> out);
double max_abs_diff(const CMatrix& a, const CMatrix& b);
double vector_norm(std::span<const cplx> v);

// Solves A X = B by LU with partial pivoting. Pivots below 1e-300 in
// magnitude are treated as singular.
CMatrix lu_solve(const CMatrix& a, const CMatrix& b);

struct HermitianEig {
  std::vector<double> values;  // ascending
  CMatrix vectors;             // columns are eigenvectors
  std::vector<double> off_norm_history;  // off-diagonal Frobenius norm after each sweep
  int sweeps = 0;
};

// Cyclic complex Jacobi. Rejects inputs with |H - H*|_max >= 1e-10.
HermitianEig hermitian_eig(const CMatrix& h);

struct SpectralRadius {
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
};

using LinearOperator = std::function<void(std::span<const cplx>, std::span<cplx>)>;

// Power iteration on a black-box operator with three random restarts; the
// largest estimate wins.
SpectralRadius spectral_radius(const LinearOperator& apply, std::size_t n, int iters, Rng& rng);
SpectralRadius spectral_radius(const CMatrix& m, int iters, Rng& rng);

}  // namespace sashimi

#include "sashimi/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace sashimi {

CMatrix::CMatrix(std::size_t rows, std::size_t cols, std::vector<cplx> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) throw std::invalid_argument("CMatrix: data size does not match dimensions");
}

CMatrix CMatrix::identity(std::size_t n) {
  CMatrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

CMatrix CMatrix::from_real(std::size_t rows, std::size_t cols, std::span<const double> values) {
  if (values.size() != rows * cols) throw std::invalid_argument("CMatrix::from_real: size mismatch");
  CMatrix m(rows, cols);
  for (std::size_t i = 0; i < values.size(); ++i) m.data_[i] = values[i];
  return m;
}

CMatrix CMatrix::column(const CVector& v) { return CMatrix(v.size(), 1, v); }

CMatrix CMatrix::adjoint() const {
  CMatrix out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) out(c, r) = std::conj((*this)(r, c));
  return out;
}

CMatrix CMatrix::transpose() const {
  CMatrix out(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) out(c, r) = (*this)(r, c);
  return out;
}

CVector CMatrix::col(std::size_t c) const {
  CVector v(rows_);
  for (std::size_t r = 0; r < rows_; ++r) v[r] = (*this)(r, c);
  return v;
}

double CMatrix::max_abs() const {
  double m = 0.0;
  for (const auto& z : data_) m = std::max(m, std::abs(z));
  return m;
}

double CMatrix::frobenius() const {
  double s = 0.0;
  for (const auto& z : data_) s += std::norm(z);
  return std::sqrt(s);
}

bool CMatrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](const cplx& z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); });
}

CMatrix operator*(const CMatrix& a, const CMatrix& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matrix product: inner dimensions differ");
  CMatrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const cplx aik = a(i, k);
      if (aik == cplx{}) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
    }
  }
  return out;
}

CMatrix operator+(const CMatrix& a, const CMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("matrix sum: shape mismatch");
  CMatrix out = a;
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

CMatrix operator-(const CMatrix& a, const CMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("matrix difference: shape mismatch");
  CMatrix out = a;
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] -= b.data()[i];
  return out;
}

CMatrix operator*(cplx s, const CMatrix& a) {
  CMatrix out = a;
  for (auto& z : out.data()) z *= s;
  return out;
}

void matvec_into(const CMatrix& a, std::span<const cplx> x, std::span<cplx> out) {
  const std::size_t n = a.rows(), m = a.cols();
  const cplx* row = a.data().data();
  for (std::size_t i = 0; i < n; ++i, row += m) {
    double re = 0.0, im = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      re += row[j].real() * x[j].real() - row[j].imag() * x[j].imag();
      im += row[j].real() * x[j].imag() + row[j].imag() * x[j].real();
    }
    out[i] = cplx(re, im);
  }
}

CVector matvec(const CMatrix& a, const CVector& x) {
  if (a.cols() != x.size()) throw std::invalid_argument("matvec: dimension mismatch");
  CVector out(a.rows());
  matvec_into(a, x, out);
  return out;
}

double max_abs_diff(const CMatrix& a, const CMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw std::invalid_argument("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

double vector_norm(std::span<const cplx> v) {
  double s = 0.0;
  for (const auto& z : v) s += std::norm(z);
  return std::sqrt(s);
}

CMatrix lu_solve(const CMatrix& a, const CMatrix& b) {
  if (!a.square()) throw std::invalid_argument("lu_solve: matrix is not square");
  if (a.rows() != b.rows()) throw std::invalid_argument("lu_solve: right-hand side has wrong row count");
  const std::size_t n = a.rows(), m = b.cols();
  CMatrix lu = a;
  CMatrix x = b;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    double best = std::abs(lu(k, k));
    for (std::size_t r = k + 1; r < n; ++r) {
      const double v = std::abs(lu(r, k));
      if (v > best) {
        best = v;
        piv = r;
      }
    }
    if (!(best >= 1e-300)) throw SingularMatrixError("lu_solve: singular matrix (pivot " + std::to_string(k) + ")");
    if (piv != k) {
      for (std::size_t c = 0; c < n; ++c) std::swap(lu(k, c), lu(piv, c));
      for (std::size_t c = 0; c < m; ++c) std::swap(x(k, c), x(piv, c));
    }
    const cplx inv = 1.0 / lu(k, k);
    for (std::size_t r = k + 1; r < n; ++r) {
      const cplx f = lu(r, k) * inv;
      if (f == cplx{}) continue;
      lu(r, k) = f;
      for (std::size_t c = k + 1; c < n; ++c) lu(r, c) -= f * lu(k, c);
      for (std::size_t c = 0; c < m; ++c) x(r, c) -= f * x(k, c);
    }
  }
  for (std::size_t k = n; k-- > 0;) {
    for (std::size_t c = 0; c < m; ++c) {
      cplx acc = x(k, c);
      for (std::size_t j = k + 1; j < n; ++j) acc -= lu(k, j) * x(j, c);
      x(k, c) = acc / lu(k, k);
    }
  }
  return x;
}

namespace {

double off_diagonal_norm(const CMatrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) s += std::norm(a(i, j));
  return std::sqrt(s);
}

}  // namespace

HermitianEig hermitian_eig(const CMatrix& h) {
  if (!h.square()) throw std::invalid_argument("hermitian_eig: matrix is not square");
  if (max_abs_diff(h, h.adjoint()) >= 1e-10) throw std::invalid_argument("hermitian_eig: matrix is not Hermitian");
  const std::size_t n = h.rows();
  CMatrix a = h;
  for (std::size_t i = 0; i < n; ++i) a(i, i) = a(i, i).real();
  CMatrix v = CMatrix::identity(n);
  HermitianEig out;

  const double scale = h.frobenius();
  const double tol = 1e-12 * scale;
  constexpr int kMaxSweeps = 100;
  double off = off_diagonal_norm(a);
  while (off > tol && out.sweeps < kMaxSweeps) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const cplx b = a(p, q);
        const double mag = std::abs(b);
        if (mag == 0.0) continue;
        const cplx phase = std::conj(b) / mag;  // e^{-i arg b}
        const double tau = (a(q, q).real() - a(p, p).real()) / (2.0 * mag);
        const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        // J = [[c, s], [-s e^{-i phi}, c e^{-i phi}]] acting on columns p, q.
        const cplx jqp = -s * phase;
        const cplx jqq = c * phase;
        for (std::size_t k = 0; k < n; ++k) {
          const cplx ap = a(k, p), aq = a(k, q);
          a(k, p) = c * ap + aq * jqp;
          a(k, q) = s * ap + aq * jqq;
          const cplx vp = v(k, p), vq = v(k, q);
          v(k, p) = c * vp + vq * jqp;
          v(k, q) = s * vp + vq * jqq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const cplx ap = a(p, k), aq = a(q, k);
          a(p, k) = c * ap + std::conj(jqp) * aq;
          a(q, k) = s * ap + std::conj(jqq) * aq;
        }
        a(p, q) = 0.0;
        a(q, p) = 0.0;
        a(p, p) = a(p, p).real();
        a(q, q) = a(q, q).real();
      }
    }
    ++out.sweeps;
    off = off_diagonal_norm(a);
    out.off_norm_history.push_back(off);
  }
  if (off > tol) throw std::runtime_error("hermitian_eig: Jacobi sweeps did not converge");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i).real() < a(j, j).real(); });
  out.values.resize(n);
  out.vectors = CMatrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t src = order[k];
    out.values[k] = a(src, src).real();
    std::size_t big = 0;
    double big_mag = -1.0;
    for (std::size_t r = 0; r < n; ++r) {
      if (std::abs(v(r, src)) > big_mag) {
        big_mag = std::abs(v(r, src));
        big = r;
      }
    }
    const cplx fix = big_mag > 0.0 ? std::conj(v(big, src)) / big_mag : cplx(1.0);
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, k) = v(r, src) * fix;
    out.vectors(big, k) = std::abs(out.vectors(big, k));
  }
  return out;
}

SpectralRadius spectral_radius(const LinearOperator& apply, std::size_t n, int iters, Rng& rng) {
  if (n == 0) throw std::invalid_argument("spectral_radius: empty operator");
  constexpr int kRestarts = 3;
  SpectralRadius best;
  best.value = -1.0;
  CVector v(n), w(n);
  for (int restart = 0; restart < kRestarts; ++restart) {
    for (auto& z : v) z = cplx(rng.normal(), rng.normal());
    double nv = vector_norm(v);
    for (auto& z : v) z /= nv;
    SpectralRadius run;
    double prev = -1.0;
    for (int it = 0; it < iters; ++it) {
      apply(v, w);
      const double est = vector_norm(w);
      run.value = est;
      run.iterations = it + 1;
      if (est == 0.0) {
        run.converged = true;
        break;
      }
      if (prev >= 0.0 && std::abs(est - prev) < 1e-10) {
        run.converged = true;
        break;
      }
      prev = est;
      for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / est;
    }
    if (run.value > best.value) best = run;
  }
  return best;
}

SpectralRadius spectral_radius(const CMatrix& m, int iters, Rng& rng) {
  if (!m.square()) throw std::invalid_argument("spectral_radius: matrix is not square");
  return spectral_radius([&m](std::span<const cplx> x, std::span<cplx> y) { matvec_into(m, x, y); }, m.rows(), iters,
                         rng);
}

}  // namespace sashimi

#include "sashimi/hippo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sashimi::hippo {

std::string_view family_name(Family f) {
  switch (f) {
    case Family::lagt: return "lagt";
    case Family::legs: return "legs";
    case Family::legt: return "legt";
  }
  return "?";
}

Family parse_family(std::string_view name) {
  if (name == "lagt") return Family::lagt;
  if (name == "legs") return Family::legs;
  if (name == "legt") return Family::legt;
  throw std::invalid_argument("unknown HiPPO family '" + std::string(name) + "' (expected lagt, legs or legt)");
}

void HippoSpec::validate() const {
  if (n < 1) throw std::invalid_argument("HiPPO state size must be at least 1");
  if (family == Family::lagt) {
    if (!beta) throw std::invalid_argument("LagT requires beta");
    if (!(*beta >= 0.0 && *beta <= 0.5)) throw std::invalid_argument("LagT beta must lie in [0, 1/2]");
  } else if (beta) {
    throw std::invalid_argument("beta is only meaningful for LagT");
  }
}

double NplrReport::max_residual() const {
  return std::max({reconstruction_err, unitarity_err, re_lambda_err, dplr_err});
}

CMatrix NplrDecomposition::low_rank_matrix() const {
  const std::size_t n = skew.rows();
  std::vector<double> vals(low_rank.begin(), low_rank.end());
  return CMatrix::from_real(n, rank, vals);
}

CMatrix NplrDecomposition::reconstruct() const {
  const std::size_t n = skew.rows();
  CMatrix a(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double pp = 0.0;
      for (std::size_t r = 0; r < rank; ++r) pp += low_rank[i * rank + r] * low_rank[j * rank + r];
      a(i, j) = (i == j ? shift : 0.0) - skew(i, j).real() - pp;
    }
  }
  return a;
}

CMatrix build_hippo(const HippoSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n;
  CMatrix a(n, n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < n; ++k) {
      double v = 0.0;
      switch (spec.family) {
        case Family::lagt:
          v = r < k ? 0.0 : (r == k ? -0.5 - *spec.beta : -1.0);
          break;
        case Family::legs:
          if (r > k) v = -std::sqrt(2.0 * r + 1.0) * std::sqrt(2.0 * k + 1.0);
          else if (r == k) v = -(static_cast<double>(r) + 1.0);
          break;
        case Family::legt:
          // -[1 if r >= k else (-1)^(k - r)]
          v = r >= k ? -1.0 : ((k - r) % 2 == 0 ? -1.0 : 1.0);
          break;
      }
      a(r, k) = v;
    }
  }
  return a;
}

NplrDecomposition nplr_decompose(const HippoSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n;
  NplrDecomposition d;
  d.skew = CMatrix(n, n);
  switch (spec.family) {
    case Family::lagt:
      d.shift = -*spec.beta;
      d.rank = 1;
      d.low_rank.assign(n, std::sqrt(0.5));
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t k = 0; k < n; ++k)
          if (r != k) d.skew(r, k) = r > k ? 0.5 : -0.5;
      break;
    case Family::legs:
      d.shift = -0.5;
      d.rank = 1;
      d.low_rank.resize(n);
      for (std::size_t r = 0; r < n; ++r) d.low_rank[r] = std::sqrt(static_cast<double>(r) + 0.5);
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t k = 0; k < n; ++k) {
          if (r == k) continue;
          const double m = 0.5 * std::sqrt(2.0 * r + 1.0) * std::sqrt(2.0 * k + 1.0);
          d.skew(r, k) = r > k ? m : -m;
        }
      }
      break;
    case Family::legt:
      d.shift = 0.0;
      d.rank = 2;
      d.low_rank.assign(2 * n, 0.0);
      for (std::size_t r = 0; r < n; ++r) d.low_rank[r * 2 + (r % 2)] = 1.0;
      for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t k = 0; k < n; ++k) {
          const std::size_t gap = r > k ? r - k : k - r;
          if (gap % 2 == 1) d.skew(r, k) = r > k ? 1.0 : -1.0;
        }
      }
      break;
  }
  return d;
}

DplrTransform dplr_from_nplr(const NplrDecomposition& d) {
  const std::size_t n = d.skew.rows();
  // i*S is Hermitian; S v = -i mu v for its eigenpairs (mu, v).
  const CMatrix h = cplx(0.0, 1.0) * d.skew;
  HermitianEig eig = hermitian_eig(h);
  DplrTransform out;
  out.v = std::move(eig.vectors);
  out.lambda.resize(n);
  for (std::size_t k = 0; k < n; ++k) out.lambda[k] = cplx(d.shift, eig.values[k]);
  out.p_tilde = out.v.adjoint() * d.low_rank_matrix();
  return out;
}

NplrReport verify_nplr(const HippoSpec& spec) {
  const CMatrix a = build_hippo(spec);
  const NplrDecomposition d = nplr_decompose(spec);
  const DplrTransform t = dplr_from_nplr(d);
  const std::size_t n = spec.n;

  NplrReport rep;
  rep.rank = d.rank;
  rep.shift = d.shift;
  rep.reconstruction_err = max_abs_diff(a, d.reconstruct());
  rep.unitarity_err = max_abs_diff(t.v.adjoint() * t.v, CMatrix::identity(n));

  // Measure Lambda from the transformed matrix rather than trusting the
  // eigensolver's values: V^* (A + P P^T) V should be diagonal with real part c.
  const CMatrix p = d.low_rank_matrix();
  const CMatrix transformed = t.v.adjoint() * a * t.v;
  const CMatrix normal_part = t.v.adjoint() * (a + p * p.transpose()) * t.v;
  for (std::size_t k = 0; k < n; ++k) {
    rep.re_lambda_err = std::max(rep.re_lambda_err, std::abs(normal_part(k, k).real() - d.shift));
  }
  CMatrix expected(n, n);
  for (std::size_t k = 0; k < n; ++k) expected(k, k) = t.lambda[k];
  expected = expected - t.p_tilde * t.p_tilde.adjoint();
  rep.dplr_err = max_abs_diff(transformed, expected);
  return rep;
}

}  // namespace sashimi::hippo

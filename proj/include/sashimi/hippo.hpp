#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sashimi/linalg.hpp"

namespace sashimi::hippo {

enum class Family { lagt, legs, legt };

std::string_view family_name(Family f);
Family parse_family(std::string_view name);

struct HippoSpec {
  Family family = Family::legs;
  std::size_t n = 0;
  std::optional<double> beta;  // LagT only, in [0, 1/2]

  void validate() const;
};

// A = shift * I - skew - low_rank * low_rank^T, with skew real skew-symmetric.
struct NplrDecomposition {
  double shift = 0.0;
  CMatrix skew;
  std::size_t rank = 0;
  std::vector<double> low_rank;  // n x rank, row-major

  CMatrix low_rank_matrix() const;
  CMatrix reconstruct() const;
};

// V^* A V = diag(lambda) - p_tilde p_tilde^*.
struct DplrTransform {
  CVector lambda;   // sorted by ascending imaginary part
  CMatrix p_tilde;  // n x rank
  CMatrix v;        // unitary
};

struct NplrReport {
  double reconstruction_err = 0.0;
  double unitarity_err = 0.0;
  double re_lambda_err = 0.0;
  double dplr_err = 0.0;  // |V^* A V - (diag(lambda) - p p^*)|_max
  std::size_t rank = 0;
  double shift = 0.0;

  double max_residual() const;
};

// Dense HiPPO matrix with zero-indexed n, k. LegT is the unscaled +-1 form.
CMatrix build_hippo(const HippoSpec& spec);
NplrDecomposition nplr_decompose(const HippoSpec& spec);
DplrTransform dplr_from_nplr(const NplrDecomposition& d);
NplrReport verify_nplr(const HippoSpec& spec);

}  // namespace sashimi::hippo

#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "ftl/matrix.hpp"

namespace ftl {

inline constexpr double kDefaultClampEps = 1e-6;
inline constexpr double kDefaultShrinkage = 1e-3;

struct EigenDecomposition;

/// Square symmetric matrix with finite entries.
///
/// Construction symmetrizes the input as (M + Mᵀ)/2, so an input that is
/// already symmetric is stored unchanged.
class SymMatrix {
 public:
  SymMatrix() = default;
  explicit SymMatrix(const Matrix& m);

  std::size_t dim() const noexcept { return m_.rows(); }
  const Matrix& matrix() const noexcept { return m_; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return m_(r, c); }

  friend bool operator==(const SymMatrix&, const SymMatrix&) = default;

 protected:
  struct Trusted {};
  SymMatrix(Matrix m, Trusted) : m_(std::move(m)) {}

  Matrix m_;
};

/// Symmetric positive-definite matrix.
///
/// The checked constructor requires a successful Cholesky factorisation, or
/// failing that a strictly positive smallest eigenvalue.
class SpdMatrix : public SymMatrix {
 public:
  SpdMatrix() = default;
  explicit SpdMatrix(const Matrix& m);
  explicit SpdMatrix(const SymMatrix& s);

  /// U·diag(values)·Uᵀ for strictly positive values. Positivity of the values
  /// is checked; the product is trusted to be SPD.
  static SpdMatrix from_spectrum(std::span<const double> values, const Matrix& vectors);

 private:
  using SymMatrix::Trusted;
  SpdMatrix(Matrix m, Trusted t) : SymMatrix(std::move(m), t) {}

  friend SpdMatrix eig_clamp(const SymMatrix&, double, EigenDecomposition&);
};

/// Eigenpairs of a symmetric matrix: values ascending, column i of `vectors`
/// paired with values[i]. In each column the entry of largest magnitude is
/// positive; near-ties (within 1e-12 relative) resolve to the lowest index.
struct EigenDecomposition {
  std::vector<double> values;
  Matrix vectors;
};

/// Cyclic Jacobi. Stops once the off-diagonal Frobenius norm is at most
/// 1e-12·‖M‖_F; throws ConvergenceError after 100 sweeps.
EigenDecomposition sym_eig(const SymMatrix& m);

/// U·diag(values)·Uᵀ, symmetrized.
Matrix reconstruct(std::span<const double> values, const Matrix& vectors);

SymMatrix spd_log(const SpdMatrix& p);
/// As spd_log, also returning the eigendecomposition used.
SymMatrix spd_log(const SpdMatrix& p, EigenDecomposition& eig);

SpdMatrix spd_exp(const SymMatrix& v);

/// (P^{1/2}, P^{-1/2}).
std::pair<SpdMatrix, SpdMatrix> spd_sqrt_pair(const SpdMatrix& p);

SpdMatrix spd_inverse(const SpdMatrix& p);

/// Riemannian logarithm of `target` at base point `base`:
/// base^{1/2}·log(base^{-1/2}·target·base^{-1/2})·base^{1/2}.
/// When `base` is exactly the identity this returns spd_log(target); when
/// `target` equals `base` bitwise it returns the zero matrix.
SymMatrix log_map(const SpdMatrix& base, const SpdMatrix& target);

/// trace(V1·P⁻¹·V2·P⁻¹).
double tangent_inner(const SpdMatrix& p, const SymMatrix& v1, const SymMatrix& v2);

/// Affine-invariant distance ‖log(P^{-1/2}·Q·P^{-1/2})‖_F.
double geodesic_distance(const SpdMatrix& p, const SpdMatrix& q);

/// Karcher mean under the affine-invariant metric.
///
/// Starts from the log-Euclidean mean and iterates
///   M ← M^{1/2}·exp(mean_i log(M^{-1/2}·P_i·M^{-1/2}))·M^{1/2}
/// until the Frobenius norm of the averaged tangent step is at most `tol`.
SpdMatrix frechet_mean(std::span<const SpdMatrix> set, double tol = 1e-8, int max_iter = 100);

/// exp(mean_i log P_i).
SpdMatrix log_euclidean_mean(std::span<const SpdMatrix> set);

/// X·Xᵀ/(D−1) for an E×D trial, with no mean subtraction.
Matrix covariance_raw(const Matrix& x);

/// covariance_raw followed by shrinkage (1−α)·S + α·(trace(S)/E)·I.
SpdMatrix covariance(const Matrix& x, double shrinkage = kDefaultShrinkage);

/// Replaces every eigenvalue λ by max(λ, eps). Returns the input unchanged
/// (bitwise) when no eigenvalue is below eps.
SpdMatrix eig_clamp(const SymMatrix& p, double eps = kDefaultClampEps);
/// As eig_clamp, also returning the eigendecomposition of the input.
SpdMatrix eig_clamp(const SymMatrix& p, double eps, EigenDecomposition& eig);

}  // namespace ftl

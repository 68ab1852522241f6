#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ftl/matrix.hpp"
#include "ftl/rng.hpp"
#include "ftl/spd.hpp"

namespace ftl {

/// Bilinear manifold reduction S ↦ W·S·Wᵀ with W of shape d_out × d_in.
struct BiMapLayer {
  Matrix weight;

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }
};

/// Rows are the first `out_dim` rows of the orthogonal factor of a seeded
/// Gaussian `in_dim × in_dim` matrix.
BiMapLayer make_bimap(std::size_t in_dim, std::size_t out_dim, Rng& rng);

/// W·S·Wᵀ before rectification.
SymMatrix bimap_apply(const BiMapLayer& layer, const SpdMatrix& s);

/// W·S·Wᵀ followed by eig_clamp(·, eps).
SpdMatrix bimap_forward(const BiMapLayer& layer, const SpdMatrix& s,
                        double eps = kDefaultClampEps);

struct BiMapGradients {
  Matrix d_weight;
  SymMatrix d_input;
};

/// Gradients of the bilinear map given the upstream gradient `g` with
/// respect to W·S·Wᵀ: dW = (G+Gᵀ)·W·S, dS = Wᵀ·G·W.
BiMapGradients bimap_backward(const BiMapLayer& layer, const SpdMatrix& s, const Matrix& g);

/// Backward of eig_clamp given the decomposition of its input.
SymMatrix eig_clamp_backward(const EigenDecomposition& input_eig, double eps, const Matrix& g);

/// Cached state of one logeig evaluation.
struct LogEigTape {
  EigenDecomposition clamp_eig;  // spectrum of the raw input
  EigenDecomposition log_eig;    // spectrum of the clamped input
  double eps = kDefaultClampEps;
};

/// spd_log(eig_clamp(p, eps)).
SymMatrix logeig_forward(const SpdMatrix& p, double eps, LogEigTape& tape);
SymMatrix logeig_forward(const SpdMatrix& p, double eps = kDefaultClampEps);

/// Daleckii-Krein backward of the matrix logarithm (and of the clamp when it
/// was active). Pairs whose relative eigenvalue gap is below 1e-10 use the
/// derivative limit 1/λ.
SymMatrix logeig_backward(const LogEigTape& tape, const Matrix& g);

/// Row-major d² vector.
std::vector<double> flatten(const SymMatrix& v);
/// Inverse of flatten; `values` must have a perfect-square length.
Matrix unflatten(std::span<const double> values);

/// Fully connected layer followed by softmax. weight is n_out × n_in.
struct DenseLayer {
  Matrix weight;
  std::vector<double> bias;

  std::size_t in_dim() const noexcept { return weight.cols(); }
  std::size_t out_dim() const noexcept { return weight.rows(); }
};

/// Weights uniform in [−0.01, 0.01], bias zero.
DenseLayer make_dense(std::size_t in_dim, std::size_t out_dim, Rng& rng);

std::vector<double> dense_logits(const DenseLayer& layer, std::span<const double> x);

/// Max-subtracted softmax.
std::vector<double> softmax(std::span<const double> logits);

std::vector<double> dense_softmax_forward(const DenseLayer& layer, std::span<const double> x);

struct DenseGradients {
  Matrix d_weight;
  std::vector<double> d_bias;
  std::vector<double> d_input;
};

/// Softmax cross-entropy gradients with δ = probs − onehot(label), scaled by
/// `scale`.
DenseGradients dense_softmax_backward(const DenseLayer& layer, std::span<const double> x,
                                      std::span<const double> probs, std::size_t label,
                                      double scale = 1.0);

/// Index of the largest probability; ties go to the lower index.
std::size_t argmax(std::span<const double> probs);

}  // namespace ftl

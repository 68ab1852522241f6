#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ftl/layers.hpp"

namespace ftl {

/// Parameters of one client's network: a private stack of BiMap layers and
/// the shared classifier that federated averaging aggregates.
struct ModelParams {
  std::vector<BiMapLayer> local;
  DenseLayer shared;

  std::size_t input_dim() const;
  /// Dimension of the reduced (common-space) matrices.
  std::size_t common_dim() const;
  std::size_t num_classes() const noexcept { return shared.out_dim(); }
};

/// Builds a network for `input_dim`-channel covariances reducing through
/// `chain` (output dimension of each BiMap layer, each ≤ the previous one)
/// and classifying flatten(log(·)) into `num_classes` classes.
ModelParams init_params(std::size_t input_dim, std::span<const std::size_t> chain,
                        std::size_t num_classes, Rng& rng);

/// Throws std::invalid_argument unless the layer shapes chain together.
void validate_params(const ModelParams& params);

struct ModelGradients {
  std::vector<Matrix> local;
  Matrix shared_weight;
  std::vector<double> shared_bias;

  static ModelGradients zeros_like(const ModelParams& params);
  ModelGradients& operator+=(const ModelGradients& other);
  ModelGradients& operator*=(double s);
  bool all_finite() const;
};

struct BiMapTapeEntry {
  SpdMatrix input;
  EigenDecomposition raw_eig;  // spectrum of W·S·Wᵀ before the clamp
};

/// Intermediates recorded by network_forward for network_backward.
struct ForwardTape {
  std::vector<BiMapTapeEntry> bimap;
  SpdMatrix reduced;  // output of the last BiMap layer, on the common space
  LogEigTape logeig;
  std::vector<double> features;
  std::vector<double> probs;
  double eps = kDefaultClampEps;

  /// One entry per BiMap layer plus logeig, flatten and dense.
  std::size_t length() const noexcept { return bimap.size() + 3; }
};

ForwardTape network_forward(const ModelParams& params, const SpdMatrix& s,
                            double eps = kDefaultClampEps);

/// Only the BiMap stack: the common-space matrix for `s`.
SpdMatrix reduce(const ModelParams& params, const SpdMatrix& s, double eps = kDefaultClampEps);

/// Gradients of ce_scale·CE(probs, label) + ⟨reduced_grad, reduced⟩.
/// `reduced_grad` may be null.
ModelGradients network_backward(const ModelParams& params, const ForwardTape& tape,
                                std::size_t label, double ce_scale = 1.0,
                                const Matrix* reduced_grad = nullptr);

std::size_t predict(const ModelParams& params, const SpdMatrix& s, double eps = kDefaultClampEps);

/// Flattened parameter vector (local layers in order, then shared weight,
/// then shared bias) and its inverse, used by gradient checks and optimizers.
std::vector<double> pack(const ModelParams& params);
void unpack(std::span<const double> values, ModelParams& params);
std::vector<double> pack(const ModelGradients& grads);

}  // namespace ftl

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ftl/layers.hpp"
#include "ftl/spd.hpp"

namespace ftl {

/// Minimum distance to the (Karcher) mean of each class.
struct MdmModel {
  std::vector<SpdMatrix> means;
};

/// `num_classes` of 0 means max(label)+1. Every class needs a sample.
MdmModel mdm_train(std::span<const SpdMatrix> covs, std::span<const std::size_t> labels,
                   std::size_t num_classes = 0);

/// Class whose mean is geodesically closest; ties go to the lower index.
std::size_t mdm_predict(const MdmModel& model, const SpdMatrix& cov);

/// Logistic (softmax) regression on tangent vectors at the Karcher mean of
/// the training covariances.
struct TsmModel {
  SpdMatrix reference;
  DenseLayer classifier;
  std::size_t iterations = 0;
  double grad_norm = 0.0;
};

struct TsmOptions {
  double grad_tol = 1e-6;
  std::size_t max_iter = 10000;
};

/// flatten(log_map(reference, cov)).
std::vector<double> tsm_features(const SpdMatrix& reference, const SpdMatrix& cov);

TsmModel tsm_train(std::span<const SpdMatrix> covs, std::span<const std::size_t> labels,
                   std::size_t num_classes = 0, const TsmOptions& options = {});

std::size_t tsm_predict(const TsmModel& model, const SpdMatrix& cov);

}  // namespace ftl

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ftl/matrix.hpp"
#include "ftl/spd.hpp"

namespace ftl {

inline constexpr double kProbabilityFloor = 1e-12;
inline constexpr double kDefaultKernelSigma = 2.0;
inline constexpr double kDefaultDomainWeight = 0.1;

/// −log(max(probs[label], 1e-12)).
double cross_entropy(std::span<const double> probs, std::size_t label);

/// exp(−‖A−B‖²_F / (2σ²)).
double gaussian_kernel(const SymMatrix& a, const SymMatrix& b, double sigma = kDefaultKernelSigma);

/// Biased (V-statistic) estimate of MMD² under the Gaussian kernel:
///   Σ_ij k(a_i,a_j)/n² + Σ_ij k(b_i,b_j)/m² − 2·Σ_ij k(a_i,b_j)/(n·m)
/// Each double sum runs row-major (i outer, j inner) starting from 0.0.
double mmd2(std::span<const SpdMatrix> a, std::span<const SpdMatrix> b,
            double sigma = kDefaultKernelSigma);

/// ∂mmd2/∂a_p for every member of `a`, with `b` held fixed.
std::vector<Matrix> mmd2_grad_first(std::span<const SpdMatrix> a, std::span<const SpdMatrix> b,
                                    double sigma = kDefaultKernelSigma);

/// Predictions and labels of one subject's batch.
struct SubjectBatch {
  std::vector<std::vector<double>> probs;
  std::vector<std::size_t> labels;
};

/// Σ_subjects mean_trials cross_entropy.
double loss_nontransfer(std::span<const SubjectBatch> batches);

/// Non-negative domain-loss weights λ[i][j][y] for client pairs i < j.
class LossWeights {
 public:
  LossWeights(std::size_t clients, std::size_t classes, double value = kDefaultDomainWeight);

  std::size_t clients() const noexcept { return clients_; }
  std::size_t classes() const noexcept { return classes_; }

  /// Weight for the unordered pair {i, j}, i ≠ j.
  double at(std::size_t i, std::size_t j, std::size_t y) const;
  void set(std::size_t i, std::size_t j, std::size_t y, double value);

 private:
  std::size_t index(std::size_t i, std::size_t j, std::size_t y) const;

  std::size_t clients_;
  std::size_t classes_;
  std::vector<double> values_;
};

/// Reduced common-space matrices of one client, indexed by class.
using ClassSamples = std::vector<std::vector<SpdMatrix>>;
/// One ClassSamples per client.
using ClassPartitionedBatch = std::vector<ClassSamples>;

/// Σ_y λ_y·MMD²(own_y, peer_y) over classes with samples on both sides.
double domain_loss(const ClassSamples& own, const ClassSamples& peer, std::span<const double> lambda,
                   double sigma = kDefaultKernelSigma);

/// loss_nontransfer plus Σ_{i<j} Σ_y λ[i][j][y]·MMD²(Q_i^y, Q_j^y). Terms
/// whose class is empty on either side are skipped.
double loss_transfer(std::span<const SubjectBatch> batches, const ClassPartitionedBatch& partitioned,
                     const LossWeights& weights, double sigma = kDefaultKernelSigma);

}  // namespace ftl

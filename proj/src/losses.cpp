#include "ftl/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ftl {
namespace {

double squared_distance(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "gaussian_kernel");
  const auto x = a.data();
  const auto y = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    s += d * d;
  }
  return s;
}

double kernel_sum(std::span<const SpdMatrix> a, std::span<const SpdMatrix> b, double sigma) {
  double s = 0.0;
  for (const auto& x : a)
    for (const auto& y : b) s += gaussian_kernel(x, y, sigma);
  return s;
}

}  // namespace

double cross_entropy(std::span<const double> probs, std::size_t label) {
  if (label >= probs.size()) {
    throw std::out_of_range("cross_entropy: label " + std::to_string(label) + " outside [0, " +
                            std::to_string(probs.size()) + ")");
  }
  return -std::log(std::max(probs[label], kProbabilityFloor));
}

double gaussian_kernel(const SymMatrix& a, const SymMatrix& b, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_kernel: sigma must be positive");
  return std::exp(-squared_distance(a.matrix(), b.matrix()) / (2.0 * sigma * sigma));
}

double mmd2(std::span<const SpdMatrix> a, std::span<const SpdMatrix> b, double sigma) {
  if (a.empty() || b.empty()) throw std::invalid_argument("mmd2: empty sample set");
  const auto n = static_cast<double>(a.size());
  const auto m = static_cast<double>(b.size());
  const double aa = kernel_sum(a, a, sigma) / (n * n);
  const double bb = kernel_sum(b, b, sigma) / (m * m);
  const double ab = kernel_sum(a, b, sigma) / (n * m);
  return aa + bb - 2.0 * ab;
}

std::vector<Matrix> mmd2_grad_first(std::span<const SpdMatrix> a, std::span<const SpdMatrix> b,
                                    double sigma) {
  if (a.empty() || b.empty()) throw std::invalid_argument("mmd2_grad_first: empty sample set");
  const auto n = static_cast<double>(a.size());
  const auto m = static_cast<double>(b.size());
  const double inv_s2 = 1.0 / (sigma * sigma);
  std::vector<Matrix> grads;
  grads.reserve(a.size());
  // ∂k(x,y)/∂x = −k(x,y)·(x−y)/σ². The aa term counts each pair twice.
  for (const auto& x : a) {
    Matrix g(x.dim(), x.dim());
    for (const auto& y : a) {
      const double k = gaussian_kernel(x, y, sigma);
      g += (x.matrix() - y.matrix()) * (-2.0 * k * inv_s2 / (n * n));
    }
    for (const auto& y : b) {
      const double k = gaussian_kernel(x, y, sigma);
      g += (x.matrix() - y.matrix()) * (2.0 * k * inv_s2 / (n * m));
    }
    grads.push_back(std::move(g));
  }
  return grads;
}

double loss_nontransfer(std::span<const SubjectBatch> batches) {
  double total = 0.0;
  for (const auto& batch : batches) {
    if (batch.probs.empty()) throw std::invalid_argument("loss_nontransfer: empty batch");
    if (batch.probs.size() != batch.labels.size()) {
      throw std::invalid_argument("loss_nontransfer: predictions and labels differ in length");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < batch.probs.size(); ++i)
      sum += cross_entropy(batch.probs[i], batch.labels[i]);
    total += sum / static_cast<double>(batch.probs.size());
  }
  return total;
}

LossWeights::LossWeights(std::size_t clients, std::size_t classes, double value)
    : clients_(clients), classes_(classes),
      values_(clients * clients * classes, value) {
  if (!(value >= 0.0) || !std::isfinite(value)) {
    throw std::invalid_argument("LossWeights: weights must be finite and non-negative");
  }
}

std::size_t LossWeights::index(std::size_t i, std::size_t j, std::size_t y) const {
  if (i == j || i >= clients_ || j >= clients_ || y >= classes_) {
    throw std::out_of_range("LossWeights: invalid index (" + std::to_string(i) + ", " +
                            std::to_string(j) + ", " + std::to_string(y) + ")");
  }
  const std::size_t lo = std::min(i, j);
  const std::size_t hi = std::max(i, j);
  return (lo * clients_ + hi) * classes_ + y;
}

double LossWeights::at(std::size_t i, std::size_t j, std::size_t y) const {
  return values_[index(i, j, y)];
}

void LossWeights::set(std::size_t i, std::size_t j, std::size_t y, double value) {
  if (!(value >= 0.0) || !std::isfinite(value)) {
    throw std::invalid_argument("LossWeights: weights must be finite and non-negative");
  }
  values_[index(i, j, y)] = value;
}

double domain_loss(const ClassSamples& own, const ClassSamples& peer, std::span<const double> lambda,
                   double sigma) {
  const std::size_t classes = std::min({own.size(), peer.size(), lambda.size()});
  double total = 0.0;
  for (std::size_t y = 0; y < classes; ++y) {
    if (own[y].empty() || peer[y].empty() || lambda[y] == 0.0) continue;
    total += lambda[y] * mmd2(own[y], peer[y], sigma);
  }
  return total;
}

double loss_transfer(std::span<const SubjectBatch> batches, const ClassPartitionedBatch& partitioned,
                     const LossWeights& weights, double sigma) {
  double total = loss_nontransfer(batches);
  const std::size_t m = partitioned.size();
  if (m > weights.clients()) throw std::invalid_argument("loss_transfer: too few weights");
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const std::size_t classes = std::min(partitioned[i].size(), partitioned[j].size());
      for (std::size_t y = 0; y < classes && y < weights.classes(); ++y) {
        const auto& qi = partitioned[i][y];
        const auto& qj = partitioned[j][y];
        if (qi.empty() || qj.empty()) continue;
        total += weights.at(i, j, y) * mmd2(qi, qj, sigma);
      }
    }
  }
  return total;
}

}  // namespace ftl

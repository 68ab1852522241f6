#include "ftl/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace ftl {
namespace {

// Tight enough that class means move with a congruence transform to ~1e-12.
constexpr double kMeanTol = 1e-10;
constexpr int kMeanMaxIter = 100;

std::size_t class_count(std::span<const std::size_t> labels, std::size_t num_classes) {
  if (num_classes != 0) return num_classes;
  return labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
}

void require_aligned(std::span<const SpdMatrix> covs, std::span<const std::size_t> labels,
                     const char* where) {
  if (covs.empty()) throw std::invalid_argument(std::string(where) + ": no training data");
  if (covs.size() != labels.size()) {
    throw std::invalid_argument(std::string(where) + ": " + std::to_string(covs.size()) +
                                " covariances but " + std::to_string(labels.size()) + " labels");
  }
}

}  // namespace

MdmModel mdm_train(std::span<const SpdMatrix> covs, std::span<const std::size_t> labels,
                   std::size_t num_classes) {
  require_aligned(covs, labels, "mdm_train");
  const std::size_t classes = class_count(labels, num_classes);
  std::vector<std::vector<SpdMatrix>> groups(classes);
  for (std::size_t i = 0; i < covs.size(); ++i) {
    if (labels[i] >= classes) throw std::out_of_range("mdm_train: label out of range");
    groups[labels[i]].push_back(covs[i]);
  }
  MdmModel model;
  for (std::size_t y = 0; y < classes; ++y) {
    if (groups[y].empty()) {
      throw std::invalid_argument("mdm_train: class " + std::to_string(y) +
                                  " has no training samples");
    }
    model.means.push_back(frechet_mean(groups[y], kMeanTol, kMeanMaxIter));
  }
  return model;
}

std::size_t mdm_predict(const MdmModel& model, const SpdMatrix& cov) {
  if (model.means.empty()) throw std::invalid_argument("mdm_predict: untrained model");
  std::size_t best = 0;
  double best_dist = geodesic_distance(model.means[0], cov);
  for (std::size_t y = 1; y < model.means.size(); ++y) {
    const double d = geodesic_distance(model.means[y], cov);
    if (d < best_dist) {
      best_dist = d;
      best = y;
    }
  }
  return best;
}

std::vector<double> tsm_features(const SpdMatrix& reference, const SpdMatrix& cov) {
  return flatten(log_map(reference, cov));
}

TsmModel tsm_train(std::span<const SpdMatrix> covs, std::span<const std::size_t> labels,
                   std::size_t num_classes, const TsmOptions& options) {
  require_aligned(covs, labels, "tsm_train");
  const std::size_t classes = class_count(labels, num_classes);
  std::vector<bool> present(classes, false);
  for (std::size_t y : labels) {
    if (y >= classes) throw std::out_of_range("tsm_train: label out of range");
    present[y] = true;
  }
  if (std::count(present.begin(), present.end(), true) < 2) {
    throw std::invalid_argument("tsm_train: need at least two classes in the training data");
  }

  TsmModel model;
  model.reference = frechet_mean(covs, kMeanTol, kMeanMaxIter);
  std::vector<std::vector<double>> features;
  features.reserve(covs.size());
  double mean_sq = 0.0;
  for (const auto& c : covs) {
    features.push_back(tsm_features(model.reference, c));
    double sq = 1.0;  // bias input
    for (double v : features.back()) sq += v * v;
    mean_sq += sq;
  }
  const auto n = static_cast<double>(covs.size());
  mean_sq /= n;
  const std::size_t dim = features.front().size();

  // The softmax cross-entropy Hessian is bounded by mean‖x̃‖²/2.
  const double lr = 2.0 / mean_sq;
  model.classifier = DenseLayer{Matrix(classes, dim), std::vector<double>(classes, 0.0)};
  for (model.iterations = 0; model.iterations < options.max_iter; ++model.iterations) {
    Matrix dw(classes, dim);
    std::vector<double> db(classes, 0.0);
    for (std::size_t i = 0; i < features.size(); ++i) {
      const auto probs = dense_softmax_forward(model.classifier, features[i]);
      auto g = dense_softmax_backward(model.classifier, features[i], probs, labels[i], 1.0 / n);
      dw += g.d_weight;
      for (std::size_t k = 0; k < classes; ++k) db[k] += g.d_bias[k];
    }
    double norm2 = 0.0;
    for (double v : dw.data()) norm2 += v * v;
    for (double v : db) norm2 += v * v;
    model.grad_norm = std::sqrt(norm2);
    if (model.grad_norm < options.grad_tol) break;
    dw *= lr;
    model.classifier.weight -= dw;
    for (std::size_t k = 0; k < classes; ++k) model.classifier.bias[k] -= lr * db[k];
  }
  return model;
}

std::size_t tsm_predict(const TsmModel& model, const SpdMatrix& cov) {
  if (cov.dim() != model.reference.dim()) {
    throw std::invalid_argument("tsm_predict: covariance dim " + std::to_string(cov.dim()) +
                                ", model expects " + std::to_string(model.reference.dim()));
  }
  return argmax(dense_softmax_forward(model.classifier, tsm_features(model.reference, cov)));
}

}  // namespace ftl

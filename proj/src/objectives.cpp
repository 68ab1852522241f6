#include "ftl/objectives.hpp"

#include <stdexcept>
#include <string>

namespace ftl {

ClassificationObjective::ClassificationObjective(std::vector<SpdMatrix> covs,
                                                 std::vector<std::size_t> labels, double eps,
                                                 std::vector<std::size_t> subjects)
    : covs_(std::move(covs)), labels_(std::move(labels)), eps_(eps), subjects_(std::move(subjects)) {
  if (covs_.empty()) throw std::invalid_argument("ClassificationObjective: no trials");
  if (covs_.size() != labels_.size()) {
    throw std::invalid_argument("ClassificationObjective: " + std::to_string(covs_.size()) +
                                " covariances but " + std::to_string(labels_.size()) + " labels");
  }
  if (subjects_.empty()) subjects_.assign(covs_.size(), 0);
  if (subjects_.size() != covs_.size()) {
    throw std::invalid_argument("ClassificationObjective: subject index count does not match trials");
  }
  for (std::size_t s : subjects_) {
    if (s >= subject_sizes_.size()) subject_sizes_.resize(s + 1, 0);
    ++subject_sizes_[s];
  }
  for (std::size_t s = 0; s < subject_sizes_.size(); ++s) {
    if (subject_sizes_[s] == 0) {
      throw std::invalid_argument("ClassificationObjective: subject " + std::to_string(s) +
                                  " has no trials");
    }
  }
}

double ClassificationObjective::combine(const std::vector<double>& per_trial) const {
  std::vector<double> sums(subject_sizes_.size(), 0.0);
  for (std::size_t i = 0; i < per_trial.size(); ++i) sums[subjects_[i]] += per_trial[i];
  double total = 0.0;
  for (std::size_t s = 0; s < sums.size(); ++s)
    total += sums[s] * (1.0 / static_cast<double>(subject_sizes_[s]));
  return total;
}

EpochResult ClassificationObjective::evaluate(const ModelParams& params,
                                              ModelGradients& grads) const {
  std::vector<double> ce(covs_.size());
  std::size_t correct = 0;
  for (std::size_t i = 0; i < covs_.size(); ++i) {
    const ForwardTape tape = network_forward(params, covs_[i], eps_);
    ce[i] = cross_entropy(tape.probs, labels_[i]);
    if (argmax(tape.probs) == labels_[i]) ++correct;
    grads += network_backward(params, tape, labels_[i], trial_scale(i));
  }
  return {combine(ce), static_cast<double>(correct) / static_cast<double>(covs_.size())};
}

DomainAdaptedObjective::DomainAdaptedObjective(ClassificationObjective classification,
                                               std::vector<PeerDomain> peers, double sigma)
    : classification_(std::move(classification)), peers_(std::move(peers)), sigma_(sigma) {
  if (!(sigma_ > 0.0)) throw std::invalid_argument("DomainAdaptedObjective: sigma must be positive");
}

EpochResult DomainAdaptedObjective::evaluate(const ModelParams& params,
                                             ModelGradients& grads) const {
  const auto& covs = classification_.covs();
  const auto& labels = classification_.labels();
  const double eps = classification_.eps();
  const std::size_t n = covs.size();

  std::vector<ForwardTape> tapes;
  tapes.reserve(n);
  std::vector<double> ce(n);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    tapes.push_back(network_forward(params, covs[i], eps));
    ce[i] = cross_entropy(tapes.back().probs, labels[i]);
    if (argmax(tapes.back().probs) == labels[i]) ++correct;
  }

  const std::size_t classes = params.num_classes();
  std::vector<std::vector<std::size_t>> members(classes);
  for (std::size_t i = 0; i < n; ++i) members.at(labels[i]).push_back(i);

  const std::size_t d = params.common_dim();
  std::vector<Matrix> reduced_grads(n, Matrix(d, d));
  double domain = 0.0;
  for (std::size_t y = 0; y < classes; ++y) {
    if (members[y].empty()) continue;
    std::vector<SpdMatrix> own;
    own.reserve(members[y].size());
    for (std::size_t i : members[y]) own.push_back(tapes[i].reduced);
    for (const auto& peer : peers_) {
      if (y >= peer.samples.size() || y >= peer.lambda.size()) continue;
      const auto& theirs = peer.samples[y];
      const double lambda = peer.lambda[y];
      if (theirs.empty() || lambda == 0.0) continue;
      domain += lambda * mmd2(own, theirs, sigma_);
      const auto g = mmd2_grad_first(own, theirs, sigma_);
      for (std::size_t k = 0; k < own.size(); ++k) reduced_grads[members[y][k]] += g[k] * lambda;
    }
  }

  for (std::size_t i = 0; i < n; ++i)
    grads += network_backward(params, tapes[i], labels[i], classification_.trial_scale(i),
                              &reduced_grads[i]);
  return {classification_.combine(ce) + domain,
          static_cast<double>(correct) / static_cast<double>(n)};
}

ClassSamples reduce_by_class(const ModelParams& params, const std::vector<SpdMatrix>& covs,
                             const std::vector<std::size_t>& labels, std::size_t num_classes,
                             double eps) {
  ClassSamples out(num_classes);
  for (std::size_t i = 0; i < covs.size(); ++i)
    out.at(labels.at(i)).push_back(reduce(params, covs[i], eps));
  return out;
}

double accuracy(const ModelParams& params, const std::vector<SpdMatrix>& covs,
                const std::vector<std::size_t>& labels, double eps) {
  if (covs.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < covs.size(); ++i)
    if (predict(params, covs[i], eps) == labels.at(i)) ++correct;
  return static_cast<double>(correct) / static_cast<double>(covs.size());
}

}  // namespace ftl

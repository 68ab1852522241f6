#pragma once

#include <cstddef>
#include <vector>

#include "ftl/losses.hpp"
#include "ftl/optim.hpp"

namespace ftl {

/// Sum over subjects of the mean cross-entropy over that subject's trials.
/// `subjects` gives the subject index of each trial; empty means one subject.
class ClassificationObjective : public Objective {
 public:
  ClassificationObjective(std::vector<SpdMatrix> covs, std::vector<std::size_t> labels,
                          double eps = kDefaultClampEps, std::vector<std::size_t> subjects = {});

  EpochResult evaluate(const ModelParams& params, ModelGradients& grads) const override;

  const std::vector<SpdMatrix>& covs() const noexcept { return covs_; }
  const std::vector<std::size_t>& labels() const noexcept { return labels_; }
  double eps() const noexcept { return eps_; }
  const std::vector<std::size_t>& subjects() const noexcept { return subjects_; }
  std::size_t subject_count() const noexcept { return subject_sizes_.size(); }
  /// Weight 1/n_s of trial i in the loss.
  double trial_scale(std::size_t i) const { return 1.0 / static_cast<double>(subject_sizes_[subjects_[i]]); }

  /// Classification loss from per-trial cross-entropies, summed per subject first.
  double combine(const std::vector<double>& per_trial) const;

 private:
  std::vector<SpdMatrix> covs_;
  std::vector<std::size_t> labels_;
  double eps_;
  std::vector<std::size_t> subjects_;
  std::vector<std::size_t> subject_sizes_;
};

/// A peer's common-space samples together with the per-class weights λ_y of
/// the domain term against it.
struct PeerDomain {
  ClassSamples samples;
  std::vector<double> lambda;
};

/// Mean cross-entropy plus Σ_peers Σ_y λ_y·MMD²(own reduced matrices of class
/// y, peer samples of class y). Peer samples are constants.
class DomainAdaptedObjective : public Objective {
 public:
  DomainAdaptedObjective(ClassificationObjective classification, std::vector<PeerDomain> peers,
                         double sigma = kDefaultKernelSigma);

  EpochResult evaluate(const ModelParams& params, ModelGradients& grads) const override;

  void set_peers(std::vector<PeerDomain> peers) { peers_ = std::move(peers); }

 private:
  ClassificationObjective classification_;
  std::vector<PeerDomain> peers_;
  double sigma_;
};

/// Common-space matrices of `covs` under `params`, grouped by label.
ClassSamples reduce_by_class(const ModelParams& params, const std::vector<SpdMatrix>& covs,
                             const std::vector<std::size_t>& labels, std::size_t num_classes,
                             double eps = kDefaultClampEps);

/// Fraction of `covs` whose predicted label matches.
double accuracy(const ModelParams& params, const std::vector<SpdMatrix>& covs,
                const std::vector<std::size_t>& labels, double eps = kDefaultClampEps);

}  // namespace ftl

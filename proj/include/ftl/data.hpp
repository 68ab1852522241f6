#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "ftl/matrix.hpp"
#include "ftl/spd.hpp"

namespace ftl {

/// One E×D segment of (band-pass filtered) EEG with its class label.
struct EegTrial {
  Matrix signal;
  std::size_t label = 0;

  std::size_t channels() const noexcept { return signal.rows(); }
  std::size_t samples() const noexcept { return signal.cols(); }
};

/// All trials of one subject. Every trial shares the channel and sample
/// counts, and every label is below `classes`.
struct TrialSet {
  std::string subject;
  std::size_t classes = 0;
  std::vector<EegTrial> trials;

  std::size_t size() const noexcept { return trials.size(); }
  std::size_t channels() const { return trials.empty() ? 0 : trials.front().channels(); }
  std::size_t samples() const { return trials.empty() ? 0 : trials.front().samples(); }
  std::vector<std::size_t> labels() const;

  /// Throws std::invalid_argument describing the first violated invariant.
  void validate() const;
};

// EEGTRIALS v1:
//   line 1: "EEGTRIALS v1"
//   line 2: "subject=<id> trials=<N> channels=<E> samples=<D> classes=<K>"
//   then N records of (u16 label, E·D f64 row-major), all little-endian.
void save_trials(const TrialSet& set, std::ostream& os);
void save_trials(const TrialSet& set, const std::filesystem::path& path);
/// Throws FormatError with a line number or byte offset.
TrialSet load_trials(std::istream& is);
TrialSet load_trials(const std::filesystem::path& path);

/// Keeps and reorders rows per `indices` (unique, each < E).
TrialSet select_channels(const TrialSet& set, std::span<const std::size_t> indices);

/// Shrunk covariance of every trial, in order.
std::vector<SpdMatrix> trial_covariances(const TrialSet& set, double shrinkage = kDefaultShrinkage);

struct FoldAssignment {
  std::vector<std::size_t> fold_of;  // one entry per trial
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  bool stratified = true;

  std::vector<std::size_t> test_indices(std::size_t fold) const;
  std::vector<std::size_t> train_indices(std::size_t fold) const;
};

/// Seeded Fisher-Yates shuffle, then round-robin into `folds`. When
/// stratified, each class is shuffled separately and dealt in label order
/// with the round-robin position carried across classes, so fold sizes
/// differ by at most one overall.
FoldAssignment make_folds(std::span<const std::size_t> labels, std::size_t folds,
                          std::uint64_t seed, bool stratified = true);

/// CSV with a `# folds=<k> seed=<s> stratified=<0|1>` line, a `trial,fold`
/// header, then one row per trial.
void save_folds(const FoldAssignment& folds, const std::filesystem::path& path);
FoldAssignment load_folds(const std::filesystem::path& path);

struct SynthSpec {
  std::string subject = "synthetic";
  std::vector<SpdMatrix> class_bases;  // one E×E base covariance per class
  double spread = 0.0;                 // scale of the symmetric Gaussian log-perturbation
  double power_spread = 0.0;           // std of a per-trial global log-power offset
  std::size_t trials_per_class = 10;
  std::size_t samples = 256;
  std::uint64_t seed = 0;
};

/// Per trial draws C = exp(log(base_y) + spread·(G+Gᵀ)/2 + power_spread·g·I)
/// with G, g standard normal, then D columns C^{1/2}·z with z standard normal. Trials cycle
/// through the classes in label order.
TrialSet synth_generate(const SynthSpec& spec);

}  // namespace ftl

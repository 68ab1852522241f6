#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ftl/error.hpp"
#include "ftl/network.hpp"

namespace ftl {

enum class DecayMode {
  kPerEpoch,  // lr0·(1−d)^{epoch−start+1} from `start` on
  kOneShot,   // lr0·(1−d) from `start` on
};

struct Schedule {
  double lr0 = 0.1;
  double decay_rate = 0.02;
  std::size_t decay_start_epoch = 50;
  DecayMode decay_mode = DecayMode::kPerEpoch;
  std::size_t max_epochs = 2000;
  double stop_loss = 0.1;

  void validate() const;
};

double lr_at(const Schedule& schedule, std::size_t epoch);

struct OptimizerOptions {
  /// Keep BiMap weights row-orthonormal: project gradients onto the tangent
  /// space, step, then re-orthonormalize.
  bool stiefel = false;
};

/// p ← p − lr·g. Throws DivergenceError on a non-finite gradient.
void sgd_step(std::span<double> params, std::span<const double> grads, double lr);

void sgd_step(ModelParams& params, const ModelGradients& grads, double lr,
              const OptimizerOptions& options = {});

struct EpochResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Full-batch training objective. `evaluate` fills `grads` (pre-shaped by the
/// caller via ModelGradients::zeros_like) with the gradient of the returned
/// loss.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual EpochResult evaluate(const ModelParams& params, ModelGradients& grads) const = 0;
};

enum class StopReason { kThreshold, kMaxEpochs };

std::string to_string(StopReason reason);

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double learning_rate = 0.0;
  double accuracy = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  StopReason stop_reason = StopReason::kMaxEpochs;

  double final_loss() const {
    return epochs.empty() ? std::numeric_limits<double>::quiet_NaN() : epochs.back().loss;
  }
};

/// Training stopped on a non-finite loss; carries the epochs completed so far.
class TrainingDivergedError : public DivergenceError {
 public:
  TrainingDivergedError(const std::string& what, TrainReport report)
      : DivergenceError(what), report_(std::move(report)) {}

  const TrainReport& report() const noexcept { return report_; }

 private:
  TrainReport report_;
};

/// Full-batch gradient descent. Each epoch evaluates the loss and gradient,
/// steps with lr_at(schedule, first_epoch + e), and stops once the evaluated
/// loss is below schedule.stop_loss or `max_epochs` epochs have run.
/// Throws TrainingDivergedError if the loss or gradient becomes non-finite.
TrainReport train(ModelParams& params, const Objective& objective, const Schedule& schedule,
                  const OptimizerOptions& options = {}, std::size_t first_epoch = 0);

/// Runs exactly `epochs` epochs ignoring the stop threshold. Used for local
/// federated updates.
TrainReport train_epochs(ModelParams& params, const Objective& objective, const Schedule& schedule,
                         std::size_t epochs, const OptimizerOptions& options = {},
                         std::size_t first_epoch = 0);

}  // namespace ftl

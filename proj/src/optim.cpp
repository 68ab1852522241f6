#include "ftl/optim.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ftl/stiefel.hpp"

namespace ftl {

void Schedule::validate() const {
  if (!(lr0 > 0.0)) throw std::invalid_argument("schedule: lr0 must be positive");
  if (!(decay_rate >= 0.0 && decay_rate <= 1.0)) {
    throw std::invalid_argument("schedule: decay_rate must lie in [0, 1]");
  }
  if (max_epochs < 1) throw std::invalid_argument("schedule: max_epochs must be at least 1");
  if (!(stop_loss >= 0.0)) throw std::invalid_argument("schedule: stop_loss must be non-negative");
}

double lr_at(const Schedule& schedule, std::size_t epoch) {
  if (epoch < schedule.decay_start_epoch) return schedule.lr0;
  const double keep = 1.0 - schedule.decay_rate;
  if (schedule.decay_mode == DecayMode::kOneShot) return schedule.lr0 * keep;
  const auto steps = static_cast<double>(epoch - schedule.decay_start_epoch + 1);
  return schedule.lr0 * std::pow(keep, steps);
}

void sgd_step(std::span<double> params, std::span<const double> grads, double lr) {
  if (params.size() != grads.size()) {
    throw std::invalid_argument("sgd_step: " + std::to_string(params.size()) + " parameters but " +
                                std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw DivergenceError("sgd_step: non-finite gradient at index " + std::to_string(i));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
}

void sgd_step(ModelParams& params, const ModelGradients& grads, double lr,
              const OptimizerOptions& options) {
  if (grads.local.size() != params.local.size()) {
    throw std::invalid_argument("sgd_step: gradient has " + std::to_string(grads.local.size()) +
                                " BiMap layers, model has " + std::to_string(params.local.size()));
  }
  if (!grads.all_finite()) throw DivergenceError("sgd_step: non-finite gradient");
  if (lr == 0.0) return;
  for (std::size_t k = 0; k < params.local.size(); ++k) {
    Matrix& w = params.local[k].weight;
    require_same_shape(w, grads.local[k], "sgd_step");
    if (options.stiefel) {
      const Matrix step = stiefel_tangent(w, grads.local[k]);
      sgd_step(w.data(), step.data(), lr);
      orthonormalize_rows(w);
    } else {
      sgd_step(w.data(), grads.local[k].data(), lr);
    }
  }
  require_same_shape(params.shared.weight, grads.shared_weight, "sgd_step");
  sgd_step(params.shared.weight.data(), grads.shared_weight.data(), lr);
  sgd_step(params.shared.bias, grads.shared_bias, lr);
}

std::string to_string(StopReason reason) {
  return reason == StopReason::kThreshold ? "threshold" : "max_epochs";
}

namespace {

TrainReport run_epochs(ModelParams& params, const Objective& objective, const Schedule& schedule,
                       std::size_t epochs, bool use_threshold, const OptimizerOptions& options,
                       std::size_t first_epoch) {
  TrainReport report;
  for (std::size_t e = 0; e < epochs; ++e) {
    const std::size_t epoch = first_epoch + e;
    const double lr = lr_at(schedule, epoch);
    ModelGradients grads = ModelGradients::zeros_like(params);
    const EpochResult result = objective.evaluate(params, grads);
    if (!std::isfinite(result.loss) || !grads.all_finite()) {
      std::ostringstream os;
      os << "training diverged at epoch " << epoch << " (loss " << result.loss << ", lr " << lr
         << ")";
      throw TrainingDivergedError(os.str(), std::move(report));
    }
    sgd_step(params, grads, lr, options);
    report.epochs.push_back({epoch, result.loss, lr, result.accuracy});
    if (use_threshold && result.loss < schedule.stop_loss) {
      report.stop_reason = StopReason::kThreshold;
      return report;
    }
  }
  report.stop_reason = StopReason::kMaxEpochs;
  return report;
}

}  // namespace

TrainReport train(ModelParams& params, const Objective& objective, const Schedule& schedule,
                  const OptimizerOptions& options, std::size_t first_epoch) {
  schedule.validate();
  return run_epochs(params, objective, schedule, schedule.max_epochs, true, options, first_epoch);
}

TrainReport train_epochs(ModelParams& params, const Objective& objective, const Schedule& schedule,
                         std::size_t epochs, const OptimizerOptions& options,
                         std::size_t first_epoch) {
  return run_epochs(params, objective, schedule, epochs, false, options, first_epoch);
}

}  // namespace ftl

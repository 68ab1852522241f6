#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ftl/cli/config.hpp"
#include "ftl/data.hpp"

namespace ftl::cli {

inline constexpr std::size_t kDefaultInputChannels = 32;
inline constexpr std::size_t kSpecificChain[] = {32, 4, 4};
inline constexpr std::size_t kSourceChain[] = {32, 16, 8, 4};
inline constexpr std::size_t kTargetChain[] = {32, 8, 4};

struct CommandContext {
  std::filesystem::path out_dir;
  std::uint64_t seed = 0;
  std::ostream* log = nullptr;  // warnings and progress; nullptr silences them
};

/// One line of metrics.csv. `loss` is absent for the baselines, which
/// have no training loss; `step` is the epoch or the federated round.
struct MetricsRow {
  std::string run_id;
  std::string method;
  std::string subject;
  std::size_t fold = 0;
  std::size_t step = 0;
  std::optional<double> loss;
  double accuracy = 0.0;
};

struct FoldResult {
  std::string method;
  std::string subject;
  std::size_t fold = 0;
  double accuracy = 0.0;  // held-out
  double seconds = 0.0;   // wall time, reported in timing.csv only
};

struct RunResult {
  std::vector<MetricsRow> metrics;
  std::vector<FoldResult> folds;

  /// Mean held-out accuracy of one method over all its folds and subjects.
  double mean_accuracy(const std::string& method) const;
};

inline constexpr const char* kMetricsHeader = "run_id,method,subject,fold,step,loss,accuracy";
inline constexpr const char* kSummaryHeader = "run_id,method,subject,fold,accuracy";

/// Writes metrics.csv, summary.csv and timing.csv into `dir`.
void write_run_files(const std::string& run_id, const RunResult& result,
                     const std::filesystem::path& dir);

std::string format_real(double value);
double sample_std(std::span<const double> values);

/// Channel indices used for a file with `available` channels. With the auto
/// rule, `wanted` (the first chain entry, if the chain was given) decides
/// the count; otherwise up to kDefaultInputChannels are taken.
std::vector<std::size_t> resolve_channels(const ChannelSelection& selection, std::size_t available,
                                          std::optional<std::size_t> wanted,
                                          const std::string& who, std::ostream* log);

/// Explicit chains must start at `channels`. Default chains start at
/// `channels` and cap every later entry by its predecessor.
std::vector<std::size_t> resolve_chain(const std::optional<std::vector<std::size_t>>& explicit_chain,
                                       std::span<const std::size_t> default_chain,
                                       std::size_t channels, const std::string& who);

/// Loads <fold_dir>/<subject>.csv if it exists, otherwise creates the
/// assignment and saves it there. A copy always lands in <out>/folds.
FoldAssignment folds_for(const TrialSet& set, const RunConfig& config, std::uint64_t seed,
                         const std::filesystem::path& out_dir, std::ostream* log);

RunResult cmd_train_specific(const RunConfig& config, const CommandContext& ctx);
RunResult cmd_train_adaptive(const RunConfig& config, const CommandContext& ctx);
RunResult cmd_baseline(const RunConfig& config, BaselineAlgorithm algorithm,
                       const CommandContext& ctx);
/// Returns the path of the written EEGTRIALS file.
std::filesystem::path cmd_synth(const SynthConfig& config, const CommandContext& ctx);

}  // namespace ftl::cli

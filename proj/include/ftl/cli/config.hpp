#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "ftl/losses.hpp"
#include "ftl/optim.hpp"
#include "ftl/spd.hpp"

namespace ftl::cli {

enum class RunMode { kSpecific, kAdaptive };

struct ChannelSelection {
  enum class Kind { kAuto, kAll, kList };
  Kind kind = Kind::kAuto;
  std::vector<std::size_t> indices;  // kList only
};

/// One data source: a single subject in subject-specific and baseline runs,
/// or a federated client (possibly several subjects) in adaptive runs.
struct ClientConfig {
  std::string name;
  std::vector<std::filesystem::path> paths;  // one EEGTRIALS file per subject
  ChannelSelection channels;
  /// Full dimension chain including the input, e.g. 32,16,8,4. Absent means
  /// the mode's default, fitted to the selected channel count.
  std::optional<std::vector<std::size_t>> chain;
};

struct AdaptiveConfig {
  std::string target;
  std::size_t rounds = 2000;
  std::size_t local_epochs = 1;
  double stop_loss = 1.5;
  double lambda = kDefaultDomainWeight;
  /// (client a, client b, class) → λ overrides; names as in [client.<name>].
  std::map<std::tuple<std::string, std::string, std::size_t>, double> lambda_overrides;
  double sigma = kDefaultKernelSigma;
  bool domain_adaptation = true;
  bool compare_target_only = true;
  bool parallel = false;
  bool snapshots = false;
};

enum class BaselineAlgorithm { kMdm, kTsm };

struct BaselineConfig {
  std::optional<BaselineAlgorithm> algorithm;
  double tsm_grad_tol = 1e-6;
  std::size_t tsm_max_iter = 10000;
};

struct RunConfig {
  RunMode mode = RunMode::kSpecific;
  std::string run_id = "run";
  std::optional<std::uint64_t> seed;
  std::size_t folds = 5;
  bool stratified = true;
  /// Directory holding <subject>.csv fold files; reused when present.
  std::optional<std::filesystem::path> fold_dir;
  std::size_t threads = 1;

  Schedule schedule;
  OptimizerOptions optimizer;
  double shrinkage = kDefaultShrinkage;
  double clamp_eps = kDefaultClampEps;

  std::vector<ClientConfig> clients;  // [data] for specific/baseline, [client.*] for adaptive
  AdaptiveConfig adaptive;
  BaselineConfig baseline;

  void validate() const;
};

struct SynthConfig {
  std::string subject = "synthetic";
  std::size_t trials_per_class = 40;
  std::size_t samples = 256;
  double spread = 0.1;
  double power_spread = 0.0;
  std::vector<std::vector<double>> class_diagonals;  // eigenvalues of each class base
  bool rotate = false;
  std::optional<std::filesystem::path> file;
  std::optional<std::uint64_t> seed;
};

/// Parses an INI run configuration. Relative data paths are resolved
/// against `base_dir`. Throws ConfigError naming the section and key.
RunConfig parse_run_config(std::istream& is, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

SynthConfig parse_synth_config(std::istream& is);
SynthConfig load_synth_config(const std::filesystem::path& path);

/// "0-3,7" → {0,1,2,3,7}; "all" and "auto" map to the matching kinds.
ChannelSelection parse_channels(const std::string& text);
std::vector<std::size_t> parse_size_list(const std::string& text);
std::vector<double> parse_double_list(const std::string& text);

}  // namespace ftl::cli

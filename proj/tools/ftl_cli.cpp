#include <CLI11.hpp>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "ftl/cli/commands.hpp"
#include "ftl/cli/config.hpp"
#include "ftl/error.hpp"

namespace {

// Exit codes: 0 success, 1 runtime failure, 2 bad configuration or usage,
// 3 malformed data, 4 training diverged.
int report(const char* kind, const std::exception& e, int code) {
  std::cerr << "error: " << kind << ": " << e.what() << '\n';
  return code;
}

struct CommonArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config, "INI configuration file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", args.seed, "Random seed (overrides [run] seed)");
  cmd->add_option("--out", args.out, "Output directory")->required();
}

std::uint64_t pick_seed(const std::optional<std::uint64_t>& cli, const std::optional<std::uint64_t>& file) {
  if (cli) return *cli;
  if (file) return *file;
  throw ftl::ConfigError("no seed given: pass --seed or set seed in the config");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated transfer learning on SPD covariance features"};
  app.require_subcommand(1);

  CommonArgs specific_args, adaptive_args, baseline_args, synth_args;
  auto* specific = app.add_subcommand("train-specific", "Per-subject cross-validated training");
  add_common(specific, specific_args);
  auto* adaptive = app.add_subcommand("train-adaptive", "Federated source/target training");
  add_common(adaptive, adaptive_args);
  auto* baseline = app.add_subcommand("baseline", "MDM or TSM baseline on the same folds");
  add_common(baseline, baseline_args);
  std::string algorithm;
  baseline->add_option("--algorithm", algorithm, "mdm or tsm (overrides [baseline] algorithm)")
      ->check(CLI::IsMember({"mdm", "tsm"}));
  auto* synth = app.add_subcommand("synth", "Generate a synthetic EEGTRIALS file");
  add_common(synth, synth_args);

  CLI11_PARSE(app, argc, argv);

  try {
    ftl::cli::CommandContext ctx;
    ctx.log = &std::cerr;
    if (synth->parsed()) {
      const auto cfg = ftl::cli::load_synth_config(synth_args.config);
      ctx.seed = pick_seed(synth_args.seed, cfg.seed);
      ctx.out_dir = synth_args.out;
      ftl::cli::cmd_synth(cfg, ctx);
      return 0;
    }
    const CommonArgs& args = specific->parsed() ? specific_args : adaptive->parsed() ? adaptive_args : baseline_args;
    const auto cfg = ftl::cli::load_run_config(args.config);
    ctx.seed = pick_seed(args.seed, cfg.seed);
    ctx.out_dir = args.out;
    if (specific->parsed()) {
      const auto result = ftl::cli::cmd_train_specific(cfg, ctx);
      std::cout << "mean accuracy " << ftl::cli::format_real(result.mean_accuracy("ftl")) << '\n';
    } else if (adaptive->parsed()) {
      const auto result = ftl::cli::cmd_train_adaptive(cfg, ctx);
      std::cout << "transfer mean accuracy " << ftl::cli::format_real(result.mean_accuracy("ftl-transfer")) << '\n';
      if (cfg.adaptive.compare_target_only) {
        std::cout << "target-only mean accuracy " << ftl::cli::format_real(result.mean_accuracy("target-only"))
                  << '\n';
      }
    } else {
      std::optional<ftl::cli::BaselineAlgorithm> algo = cfg.baseline.algorithm;
      if (algorithm == "mdm") algo = ftl::cli::BaselineAlgorithm::kMdm;
      if (algorithm == "tsm") algo = ftl::cli::BaselineAlgorithm::kTsm;
      if (!algo) throw ftl::ConfigError("no baseline algorithm: pass --algorithm or set [baseline] algorithm");
      const auto result = ftl::cli::cmd_baseline(cfg, *algo, ctx);
      const char* name = *algo == ftl::cli::BaselineAlgorithm::kMdm ? "mdm" : "tsm";
      std::cout << name << " mean accuracy " << ftl::cli::format_real(result.mean_accuracy(name)) << '\n';
    }
    return 0;
  } catch (const ftl::ConfigError& e) {
    return report("config", e, 2);
  } catch (const ftl::FormatError& e) {
    return report("data", e, 3);
  } catch (const ftl::DivergenceError& e) {
    return report("diverged", e, 4);
  } catch (const std::invalid_argument& e) {
    return report("invalid input", e, 1);
  } catch (const std::exception& e) {
    return report("failed", e, 1);
  }
}

#include "ftl/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <sstream>

#include "ftl/baselines.hpp"
#include "ftl/error.hpp"
#include "ftl/federated.hpp"
#include "ftl/objectives.hpp"
#include "ftl/stiefel.hpp"

namespace ftl::cli {
namespace {

// Sub-seed streams.
constexpr std::uint64_t kFoldStream = 1;
constexpr std::uint64_t kInitStream = 2;
constexpr std::uint64_t kSynthRotationStream = 3;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

void warn(std::ostream* log, const std::string& message) {
  if (log) *log << "WARNING: " << message << '\n';
}

void note(std::ostream* log, const std::string& message) {
  if (log) *log << message << '\n';
}

std::string join(std::span<const std::size_t> values, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) out += sep;
    out += std::to_string(values[i]);
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw std::runtime_error("write to " + path.string() + " failed");
}

/// A subject's data after channel selection, as covariances.
struct PreparedSubject {
  TrialSet set;
  std::vector<std::size_t> channels;
  std::vector<SpdMatrix> covs;
  std::vector<std::size_t> labels;
};

PreparedSubject prepare(const std::filesystem::path& path, const ChannelSelection& selection,
                        std::optional<std::size_t> wanted, double shrinkage, std::ostream* log) {
  PreparedSubject p;
  TrialSet raw = load_trials(path);
  p.channels = resolve_channels(selection, raw.channels(), wanted, raw.subject + " (" + path.string() + ")", log);
  p.set = p.channels.size() == raw.channels() &&
                  std::is_sorted(p.channels.begin(), p.channels.end())
              ? std::move(raw)
              : select_channels(raw, p.channels);
  p.covs = trial_covariances(p.set, shrinkage);
  p.labels = p.set.labels();
  return p;
}

template <class T>
std::vector<T> pick(const std::vector<T>& values, std::span<const std::size_t> idx) {
  std::vector<T> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(values[i]);
  return out;
}

/// Runs fn(0..n-1) on up to `threads` workers; results stay in index order.
template <class Fn>
auto run_indexed(std::size_t n, std::size_t threads, Fn fn) {
  using R = decltype(fn(std::size_t{0}));
  std::vector<R> out(n);
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) out[i] = fn(i);
    return out;
  }
  for (std::size_t start = 0; start < n; start += threads) {
    const std::size_t end = std::min(n, start + threads);
    std::vector<std::future<R>> futures;
    for (std::size_t i = start; i < end; ++i) futures.push_back(std::async(std::launch::async, fn, i));
    for (std::size_t i = start; i < end; ++i) out[i] = futures[i - start].get();
  }
  return out;
}

std::vector<PreparedSubject> load_subjects(const ClientConfig& client, std::optional<std::size_t> wanted,
                                           double shrinkage, std::ostream* log) {
  std::vector<PreparedSubject> subjects;
  std::set<std::string> names;
  for (const auto& path : client.paths) {
    subjects.push_back(prepare(path, client.channels, wanted, shrinkage, log));
    if (!names.insert(subjects.back().set.subject).second) {
      throw ConfigError("subject '" + subjects.back().set.subject + "' appears twice in " +
                        (client.name == "data" ? std::string("[data]") : "[client." + client.name + "]"));
    }
  }
  return subjects;
}

std::string resolved_header(const RunConfig& config, const CommandContext& ctx, const char* command) {
  std::ostringstream os;
  os << "command=" << command << '\n'
     << "run_id=" << config.run_id << '\n'
     << "seed=" << ctx.seed << '\n'
     << "folds=" << config.folds << " stratified=" << (config.stratified ? 1 : 0) << '\n'
     << "shrinkage=" << format_real(config.shrinkage) << " clamp_eps=" << format_real(config.clamp_eps) << '\n';
  return os.str();
}

}  // namespace

std::string format_real(double value) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

double sample_std(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

double RunResult::mean_accuracy(const std::string& method) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& f : folds) {
    if (f.method != method) continue;
    sum += f.accuracy;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("no folds recorded for method " + method);
  return sum / static_cast<double>(n);
}

void write_run_files(const std::string& run_id, const RunResult& result,
                     const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ostringstream metrics;
  metrics << kMetricsHeader << '\n';
  for (const auto& r : result.metrics) {
    if (!(r.accuracy >= 0.0 && r.accuracy <= 1.0) || (r.loss && !std::isfinite(*r.loss))) {
      throw std::logic_error("metrics row for " + r.subject + " is out of range");
    }
    metrics << r.run_id << ',' << r.method << ',' << r.subject << ',' << r.fold << ',' << r.step << ','
            << (r.loss ? format_real(*r.loss) : std::string()) << ',' << format_real(r.accuracy) << '\n';
  }
  write_text(dir / "metrics.csv", metrics.str());

  // Group folds by (method, subject) in order of first appearance.
  std::vector<std::pair<std::string, std::string>> groups;
  for (const auto& f : result.folds) {
    const std::pair<std::string, std::string> key{f.method, f.subject};
    if (std::find(groups.begin(), groups.end(), key) == groups.end()) groups.push_back(key);
  }
  std::ostringstream summary;
  summary << kSummaryHeader << '\n';
  std::map<std::string, std::vector<double>> subject_means;
  std::vector<std::string> methods;
  for (const auto& [method, subject] : groups) {
    std::vector<double> acc;
    for (const auto& f : result.folds) {
      if (f.method != method || f.subject != subject) continue;
      summary << run_id << ',' << method << ',' << subject << ',' << f.fold << ','
              << format_real(f.accuracy) << '\n';
      acc.push_back(f.accuracy);
    }
    const double mean = std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
    summary << run_id << ',' << method << ',' << subject << ",mean," << format_real(mean) << '\n';
    summary << run_id << ',' << method << ',' << subject << ",std," << format_real(sample_std(acc)) << '\n';
    if (!subject_means.count(method)) methods.push_back(method);
    subject_means[method].push_back(mean);
  }
  for (const auto& method : methods) {
    const auto& means = subject_means[method];
    if (means.size() < 2) continue;
    const double mean = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(means.size());
    summary << run_id << ',' << method << ",all,mean," << format_real(mean) << '\n';
    summary << run_id << ',' << method << ",all,std," << format_real(sample_std(means)) << '\n';
  }
  write_text(dir / "summary.csv", summary.str());

  std::ostringstream timing;
  timing << "run_id,method,subject,fold,seconds\n";
  for (const auto& f : result.folds) {
    timing << run_id << ',' << f.method << ',' << f.subject << ',' << f.fold << ','
           << format_real(f.seconds) << '\n';
  }
  write_text(dir / "timing.csv", timing.str());
}

std::vector<std::size_t> resolve_channels(const ChannelSelection& selection, std::size_t available,
                                          std::optional<std::size_t> wanted,
                                          const std::string& who, std::ostream* log) {
  std::vector<std::size_t> out;
  switch (selection.kind) {
    case ChannelSelection::Kind::kAll:
      out.resize(available);
      std::iota(out.begin(), out.end(), std::size_t{0});
      return out;
    case ChannelSelection::Kind::kList:
      for (std::size_t i : selection.indices) {
        if (i >= available) {
          throw ConfigError(who + ": channel index " + std::to_string(i) + " out of range; the file has " +
                            std::to_string(available) + " channels");
        }
      }
      return selection.indices;
    case ChannelSelection::Kind::kAuto:
      break;
  }
  std::size_t count = available;
  if (wanted) {
    if (available < *wanted) {
      throw ConfigError(who + ": chain expects " + std::to_string(*wanted) + " input channels but the file has " +
                        std::to_string(available) + "; shorten the chain or set channels explicitly");
    }
    count = *wanted;
  } else {
    count = std::min(available, kDefaultInputChannels);
  }
  if (count < available) {
    warn(log, who + ": file has " + std::to_string(available) + " channels; using the first " +
                  std::to_string(count) + " (set channels = ... to choose others)");
  }
  out.resize(count);
  std::iota(out.begin(), out.end(), std::size_t{0});
  return out;
}

std::vector<std::size_t> resolve_chain(const std::optional<std::vector<std::size_t>>& explicit_chain,
                                       std::span<const std::size_t> default_chain,
                                       std::size_t channels, const std::string& who) {
  if (explicit_chain) {
    const auto& c = *explicit_chain;
    if (c.empty() || c.front() != channels) {
      throw ConfigError(who + ": chain starts at " + (c.empty() ? std::string("nothing") : std::to_string(c.front())) +
                        " but " + std::to_string(channels) + " channels are selected");
    }
    return c;
  }
  std::vector<std::size_t> out{channels};
  for (std::size_t k = 1; k < default_chain.size(); ++k)
    out.push_back(std::min(default_chain[k], out.back()));
  return out;
}

FoldAssignment folds_for(const TrialSet& set, const RunConfig& config, std::uint64_t seed,
                         const std::filesystem::path& out_dir, std::ostream* log) {
  const auto own_dir = out_dir / "folds";
  const auto dir = config.fold_dir.value_or(own_dir);
  const auto file = dir / (set.subject + ".csv");
  FoldAssignment folds;
  if (std::filesystem::exists(file)) {
    folds = load_folds(file);
    if (folds.fold_of.size() != set.size()) {
      throw ConfigError(file.string() + " assigns " + std::to_string(folds.fold_of.size()) +
                        " trials but subject " + set.subject + " has " + std::to_string(set.size()));
    }
    if (folds.folds != config.folds) {
      throw ConfigError(file.string() + " has " + std::to_string(folds.folds) + " folds but the config asks for " +
                        std::to_string(config.folds));
    }
    note(log, "reusing fold assignment " + file.string());
  } else {
    const auto labels = set.labels();
    folds = make_folds(labels, config.folds, seed, config.stratified);
    std::filesystem::create_directories(dir);
    save_folds(folds, file);
  }
  if (std::filesystem::weakly_canonical(dir) != std::filesystem::weakly_canonical(own_dir)) {
    std::filesystem::create_directories(own_dir);
    save_folds(folds, own_dir / (set.subject + ".csv"));
  }
  return folds;
}

RunResult cmd_train_specific(const RunConfig& config, const CommandContext& ctx) {
  if (config.mode != RunMode::kSpecific) throw ConfigError("train-specific needs [run] mode = specific");
  config.validate();
  std::filesystem::create_directories(ctx.out_dir);
  const auto& client = config.clients.front();
  const std::optional<std::size_t> wanted =
      client.chain ? std::optional<std::size_t>(client.chain->front()) : std::nullopt;
  const auto subjects = load_subjects(client, wanted, config.shrinkage, ctx.log);

  RunResult result;
  std::string resolved = resolved_header(config, ctx, "train-specific");
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    const auto& subj = subjects[s];
    const auto chain = resolve_chain(client.chain, kSpecificChain, subj.channels.size(), subj.set.subject);
    resolved += "subject=" + subj.set.subject + " channels=" + join(subj.channels, ",") +
                " chain=" + join(chain, "->") + '\n';
    const auto folds = folds_for(subj.set, config, derive_seed(derive_seed(ctx.seed, kFoldStream), s),
                                 ctx.out_dir, ctx.log);
    const std::vector<std::size_t> out_dims(chain.begin() + 1, chain.end());

    struct FoldOut {
      std::vector<MetricsRow> rows;
      FoldResult result;
    };
    auto outs = run_indexed(config.folds, config.threads, [&](std::size_t f) {
      const auto start = Clock::now();
      const auto train_idx = folds.train_indices(f);
      const auto test_idx = folds.test_indices(f);
      Rng rng(derive_seed(derive_seed(ctx.seed, kInitStream), s * 1000 + f));
      ModelParams params = init_params(chain.front(), out_dims, subj.set.classes, rng);
      ClassificationObjective objective(pick(subj.covs, train_idx), pick(subj.labels, train_idx),
                                        config.clamp_eps);
      TrainReport report;
      try {
        report = train(params, objective, config.schedule, config.optimizer);
      } catch (const TrainingDivergedError& e) {
        throw DivergenceError("subject " + subj.set.subject + " fold " + std::to_string(f) + ": " + e.what() +
                              " after " + std::to_string(e.report().epochs.size()) + " epochs");
      }
      FoldOut out;
      for (const auto& ep : report.epochs) {
        out.rows.push_back({config.run_id, "ftl", subj.set.subject, f, ep.epoch, ep.loss, ep.accuracy});
      }
      const double acc = accuracy(params, pick(subj.covs, test_idx), pick(subj.labels, test_idx), config.clamp_eps);
      out.result = {"ftl", subj.set.subject, f, acc, seconds_since(start)};
      return out;
    });
    for (auto& o : outs) {
      result.metrics.insert(result.metrics.end(), o.rows.begin(), o.rows.end());
      result.folds.push_back(o.result);
      note(ctx.log, subj.set.subject + " fold " + std::to_string(o.result.fold) + ": " +
                        std::to_string(o.rows.size()) + " epochs, final loss " +
                        format_real(o.rows.back().loss.value_or(0.0)) + ", test accuracy " +
                        format_real(o.result.accuracy));
    }
  }
  write_text(ctx.out_dir / "resolved.txt", resolved);
  write_run_files(config.run_id, result, ctx.out_dir);
  return result;
}

RunResult cmd_train_adaptive(const RunConfig& config, const CommandContext& ctx) {
  if (config.mode != RunMode::kAdaptive) throw ConfigError("train-adaptive needs [run] mode = adaptive");
  config.validate();
  std::filesystem::create_directories(ctx.out_dir);
  const auto& a = config.adaptive;

  struct PreparedClient {
    std::string name;
    std::vector<std::size_t> chain;
    std::vector<PreparedSubject> subjects;
    std::vector<SpdMatrix> covs;         // all subjects concatenated
    std::vector<std::size_t> labels;
    std::vector<std::size_t> subject_of;
    std::vector<std::size_t> offsets;    // first trial of each subject
  };
  std::vector<PreparedClient> clients;
  std::size_t target_pos = 0;
  std::string resolved = resolved_header(config, ctx, "train-adaptive");
  for (std::size_t c = 0; c < config.clients.size(); ++c) {
    const auto& cc = config.clients[c];
    const bool is_target = cc.name == a.target;
    if (is_target) target_pos = c;
    const std::optional<std::size_t> wanted =
        cc.chain ? std::optional<std::size_t>(cc.chain->front()) : std::nullopt;
    PreparedClient pc;
    pc.name = cc.name;
    pc.subjects = load_subjects(cc, wanted, config.shrinkage, ctx.log);
    const std::size_t e = pc.subjects.front().channels.size();
    for (const auto& subj : pc.subjects) {
      if (subj.channels.size() != e) {
        throw ConfigError("client " + cc.name + ": subjects have different channel counts after selection");
      }
      if (subj.set.classes != pc.subjects.front().set.classes) {
        throw ConfigError("client " + cc.name + ": subjects declare different class counts");
      }
    }
    pc.chain = resolve_chain(cc.chain, is_target ? std::span<const std::size_t>(kTargetChain)
                                                 : std::span<const std::size_t>(kSourceChain),
                             e, "client " + cc.name);
    for (std::size_t s = 0; s < pc.subjects.size(); ++s) {
      pc.offsets.push_back(pc.covs.size());
      const auto& subj = pc.subjects[s];
      pc.covs.insert(pc.covs.end(), subj.covs.begin(), subj.covs.end());
      pc.labels.insert(pc.labels.end(), subj.labels.begin(), subj.labels.end());
      pc.subject_of.insert(pc.subject_of.end(), subj.covs.size(), s);
    }
    resolved += "client=" + cc.name + (is_target ? " (target)" : "") + " channels=" +
                join(pc.subjects.front().channels, ",") + " chain=" + join(pc.chain, "->") + '\n';
    clients.push_back(std::move(pc));
  }
  const std::size_t common = clients.front().chain.back();
  const std::size_t classes = clients.front().subjects.front().set.classes;
  for (const auto& pc : clients) {
    if (pc.chain.back() != common) {
      throw ConfigError("client " + pc.name + " reduces to " + std::to_string(pc.chain.back()) + "x" +
                        std::to_string(pc.chain.back()) + " but client " + clients.front().name + " to " +
                        std::to_string(common) + "x" + std::to_string(common) +
                        "; every chain must end at the same common dimension");
    }
    if (pc.subjects.front().set.classes != classes) {
      throw ConfigError("clients " + clients.front().name + " and " + pc.name + " declare different class counts");
    }
  }

  LossWeights weights(clients.size(), classes, a.lambda);
  for (const auto& [key, value] : a.lambda_overrides) {
    const auto& [first, second, y] = key;
    if (y >= classes) throw ConfigError("[adaptive] lambda override for class " + std::to_string(y) + " but data has " + std::to_string(classes) + " classes");
    std::size_t i = 0, j = 0;
    for (std::size_t c = 0; c < clients.size(); ++c) {
      if (clients[c].name == first) i = c;
      if (clients[c].name == second) j = c;
    }
    weights.set(i, j, y, value);
  }

  // Folds over each target subject; fold f of the client is the union.
  const auto& target = clients[target_pos];
  std::vector<FoldAssignment> target_folds;
  for (std::size_t s = 0; s < target.subjects.size(); ++s) {
    target_folds.push_back(folds_for(target.subjects[s].set, config,
                                     derive_seed(derive_seed(ctx.seed, kFoldStream), s), ctx.out_dir, ctx.log));
  }
  write_text(ctx.out_dir / "resolved.txt", resolved);

  Schedule target_only = config.schedule;
  target_only.max_epochs = a.rounds * std::max<std::size_t>(a.local_epochs, 1);
  target_only.stop_loss = a.stop_loss;

  RunResult result;
  for (std::size_t f = 0; f < config.folds; ++f) {
    const auto start = Clock::now();
    std::vector<std::size_t> train_idx, test_idx;
    for (std::size_t s = 0; s < target.subjects.size(); ++s) {
      for (std::size_t i : target_folds[s].train_indices(f)) train_idx.push_back(target.offsets[s] + i);
      for (std::size_t i : target_folds[s].test_indices(f)) test_idx.push_back(target.offsets[s] + i);
    }
    const auto test_covs = pick(target.covs, test_idx);
    const auto test_labels = pick(target.labels, test_idx);

    Rng rng(derive_seed(derive_seed(ctx.seed, kInitStream), f));
    std::vector<ModelParams> init;
    for (const auto& pc : clients) {
      const std::vector<std::size_t> out_dims(pc.chain.begin() + 1, pc.chain.end());
      init.push_back(init_params(pc.chain.front(), out_dims, classes, rng));
    }

    std::vector<Client> fed;
    for (std::size_t c = 0; c < clients.size(); ++c) {
      const auto& pc = clients[c];
      if (c == target_pos) {
        fed.emplace_back(static_cast<std::uint32_t>(c), pick(pc.covs, train_idx), pick(pc.labels, train_idx),
                         init[c], config.schedule, config.optimizer, config.clamp_eps,
                         pick(pc.subject_of, train_idx));
      } else {
        fed.emplace_back(static_cast<std::uint32_t>(c), pc.covs, pc.labels, init[c], config.schedule,
                         config.optimizer, config.clamp_eps, pc.subject_of);
      }
    }
    FederatedOptions options;
    options.local_epochs = a.local_epochs;
    options.max_rounds = a.rounds;
    options.stop_loss = a.stop_loss;
    options.domain_adaptation = a.domain_adaptation;
    options.sigma = a.sigma;
    options.weights = weights;
    options.parallel = a.parallel;
    if (a.snapshots) {
      options.snapshot_dir = ctx.out_dir / "snapshots" / ("fold_" + std::to_string(f));
      std::filesystem::create_directories(*options.snapshot_dir);
    }
    ServerState server = init_federation(fed, options);
    FederatedHistory history;
    try {
      history = run_federated_training(server, fed, options);
    } catch (const FederatedTrainingError& e) {
      throw DivergenceError("fold " + std::to_string(f) + ": " + e.what() + " after " +
                            std::to_string(e.history().rounds.size()) + " completed rounds");
    }
    for (const auto& round : history.rounds) {
      for (const auto& cr : round.clients) {
        result.metrics.push_back({config.run_id, "ftl-transfer", clients[cr.client_id].name, f,
                                  static_cast<std::size_t>(round.round), cr.loss, cr.accuracy});
      }
    }
    const double transfer_acc = fed[target_pos].evaluate_accuracy(test_covs, test_labels);
    result.folds.push_back({"ftl-transfer", target.name, f, transfer_acc, seconds_since(start)});
    note(ctx.log, "fold " + std::to_string(f) + ": " + std::to_string(history.rounds.size()) +
                      " rounds, target test accuracy " + format_real(transfer_acc));

    if (a.compare_target_only) {
      const auto only_start = Clock::now();
      ModelParams params = init[target_pos];
      ClassificationObjective objective(pick(target.covs, train_idx), pick(target.labels, train_idx),
                                        config.clamp_eps, pick(target.subject_of, train_idx));
      TrainReport report;
      try {
        report = train(params, objective, target_only, config.optimizer);
      } catch (const TrainingDivergedError& e) {
        throw DivergenceError("fold " + std::to_string(f) + " target-only: " + e.what());
      }
      for (const auto& ep : report.epochs) {
        result.metrics.push_back({config.run_id, "target-only", target.name, f, ep.epoch, ep.loss, ep.accuracy});
      }
      const double acc = accuracy(params, test_covs, test_labels, config.clamp_eps);
      result.folds.push_back({"target-only", target.name, f, acc, seconds_since(only_start)});
      note(ctx.log, "fold " + std::to_string(f) + ": target-only test accuracy " + format_real(acc));
    }
  }
  write_run_files(config.run_id, result, ctx.out_dir);
  return result;
}

RunResult cmd_baseline(const RunConfig& config, BaselineAlgorithm algorithm, const CommandContext& ctx) {
  if (config.mode != RunMode::kSpecific) throw ConfigError("baseline runs use a [data] section ([run] mode = specific)");
  config.validate();
  std::filesystem::create_directories(ctx.out_dir);
  const auto& client = config.clients.front();
  const std::optional<std::size_t> wanted =
      client.chain ? std::optional<std::size_t>(client.chain->front()) : std::nullopt;
  const auto subjects = load_subjects(client, wanted, config.shrinkage, ctx.log);
  const std::string method = algorithm == BaselineAlgorithm::kMdm ? "mdm" : "tsm";

  RunResult result;
  std::string resolved = resolved_header(config, ctx, ("baseline " + method).c_str());
  for (std::size_t s = 0; s < subjects.size(); ++s) {
    const auto& subj = subjects[s];
    resolved += "subject=" + subj.set.subject + " channels=" + join(subj.channels, ",") + '\n';
    const auto folds = folds_for(subj.set, config, derive_seed(derive_seed(ctx.seed, kFoldStream), s),
                                 ctx.out_dir, ctx.log);
    struct FoldOut {
      MetricsRow row;
      FoldResult result;
    };
    auto outs = run_indexed(config.folds, config.threads, [&](std::size_t f) {
      const auto start = Clock::now();
      const auto train_idx = folds.train_indices(f);
      const auto test_idx = folds.test_indices(f);
      const auto train_covs = pick(subj.covs, train_idx);
      const auto train_labels = pick(subj.labels, train_idx);
      auto score = [&](auto&& predict_one, const std::vector<std::size_t>& idx) {
        std::size_t correct = 0;
        for (std::size_t i : idx)
          if (predict_one(subj.covs[i]) == subj.labels[i]) ++correct;
        return static_cast<double>(correct) / static_cast<double>(idx.size());
      };
      double train_acc = 0.0;
      double test_acc = 0.0;
      try {
        if (algorithm == BaselineAlgorithm::kMdm) {
          const auto model = mdm_train(train_covs, train_labels, subj.set.classes);
          auto p = [&](const SpdMatrix& c) { return mdm_predict(model, c); };
          train_acc = score(p, train_idx);
          test_acc = score(p, test_idx);
        } else {
          TsmOptions opts{config.baseline.tsm_grad_tol, config.baseline.tsm_max_iter};
          const auto model = tsm_train(train_covs, train_labels, subj.set.classes, opts);
          auto p = [&](const SpdMatrix& c) { return tsm_predict(model, c); };
          train_acc = score(p, train_idx);
          test_acc = score(p, test_idx);
        }
      } catch (const std::invalid_argument& e) {
        throw std::invalid_argument("subject " + subj.set.subject + " fold " + std::to_string(f) + ": " + e.what());
      }
      return FoldOut{{config.run_id, method, subj.set.subject, f, 0, std::nullopt, train_acc},
                     {method, subj.set.subject, f, test_acc, seconds_since(start)}};
    });
    for (auto& o : outs) {
      result.metrics.push_back(o.row);
      result.folds.push_back(o.result);
      note(ctx.log, subj.set.subject + " fold " + std::to_string(o.result.fold) + ": " + method +
                        " test accuracy " + format_real(o.result.accuracy));
    }
  }
  write_text(ctx.out_dir / "resolved.txt", resolved);
  write_run_files(config.run_id, result, ctx.out_dir);
  return result;
}

std::filesystem::path cmd_synth(const SynthConfig& config, const CommandContext& ctx) {
  SynthSpec spec;
  spec.subject = config.subject;
  spec.spread = config.spread;
  spec.power_spread = config.power_spread;
  spec.trials_per_class = config.trials_per_class;
  spec.samples = config.samples;
  spec.seed = ctx.seed;
  const std::size_t e = config.class_diagonals.front().size();
  Matrix rotation = Matrix::identity(e);
  if (config.rotate) {
    Rng rng(derive_seed(ctx.seed, kSynthRotationStream));
    for (double& v : rotation.data()) v = rng.normal();
    orthonormalize_rows(rotation);
  }
  for (const auto& diag : config.class_diagonals) {
    const Matrix base = matmul_nt(matmul(rotation.transpose(), Matrix::diagonal(diag)), rotation.transpose());
    spec.class_bases.emplace_back(base);
  }
  const TrialSet set = synth_generate(spec);
  std::filesystem::create_directories(ctx.out_dir);
  const auto path = ctx.out_dir / config.file.value_or(config.subject + ".eegtrials");
  save_trials(set, path);
  note(ctx.log, "wrote " + std::to_string(set.size()) + " trials (" + std::to_string(e) + " channels, " +
                    std::to_string(spec.samples) + " samples) to " + path.string());
  return path;
}

}  // namespace ftl::cli

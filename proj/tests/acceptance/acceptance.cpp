// Acceptance run: one PASS/FAIL (or SKIP) line per criterion, nonzero exit on
// any FAIL.
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "ftl/baselines.hpp"
#include "ftl/cli/commands.hpp"
#include "ftl/cli/config.hpp"
#include "ftl/federated.hpp"
#include "ftl/losses.hpp"
#include "ftl/message.hpp"
#include "ftl/spd.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace ftl;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = true;
  std::string detail;
  bool skipped = false;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
};

struct Paths {
  fs::path work;
  fs::path configs;
};

int failures = 0;

void criterion(const std::string& name, const std::function<Outcome()>& body) {
  const auto start = Clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out.pass = false;
    out.detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  const char* tag = out.skipped ? "SKIP" : out.pass ? "PASS" : "FAIL";
  if (!out.pass && !out.skipped) ++failures;
  char elapsed[32];
  std::snprintf(elapsed, sizeof elapsed, "%.1f s", secs);
  std::cout << tag << "  " << name << "  [" << elapsed << "]";
  if (!out.detail.empty()) std::cout << "  " << out.detail;
  std::cout << std::endl;
}

std::string num(double v) {
  std::ostringstream os;
  os.precision(3);
  os << v;
  return os.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

Tensor vec(std::vector<double> v) { return Tensor{{static_cast<std::uint32_t>(v.size())}, std::move(v)}; }

RoundMessage upload(std::uint32_t id, std::vector<double> w) {
  return RoundMessage{Direction::kUpload, 0, id, {vec(std::move(w))}, {}};
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
  Outcome out;
  const auto start = Clock::now();
  constexpr int kSeeds = 20;
  const std::pair<std::size_t, std::size_t> bimaps[] = {{32, 16}, {16, 8}, {8, 4}, {32, 8}, {32, 4}, {4, 4}};
  double layer_worst = 0.0, net_worst = 0.0;
  int cases = 0;
  for (std::uint64_t s = 0; s < kSeeds; ++s) {
    const std::uint64_t seed = 7000 + s;
    for (auto [in, o] : bimaps) layer_worst = std::max(layer_worst, gradcheck::bimap(seed, in, o)), ++cases;
    for (std::size_t n : {16, 8, 4}) layer_worst = std::max(layer_worst, gradcheck::eig_clamp(seed, n)), ++cases;
    layer_worst = std::max(layer_worst, gradcheck::logeig(seed, 4)), ++cases;
    layer_worst = std::max(layer_worst, gradcheck::dense(seed, 16, 2)), ++cases;
  }
  const std::vector<std::vector<std::size_t>> chains = {{16, 8, 4}, {8, 4}, {4, 4}};
  for (std::uint64_t s = 0; s < kSeeds; ++s)
    for (const auto& chain : chains) net_worst = std::max(net_worst, gradcheck::network(8000 + s, 32, chain, 2)), ++cases;
  const double secs = seconds_since(start);
  out.require(layer_worst <= 1e-5, "per-layer error " + num(layer_worst) + " > 1e-5");
  out.require(net_worst <= 1e-4, "end-to-end error " + num(net_worst) + " > 1e-4");
  out.require(secs < 60.0, "runtime " + num(secs) + " s >= 60 s");
  if (out.pass) {
    out.detail = std::to_string(cases) + " cases; worst layer " + num(layer_worst) + ", worst network " +
                 num(net_worst);
  }
  return out;
}

Outcome spd_suite() {
  Outcome out;
  double rt = 0.0, recon = 0.0, cong = 0.0, frechet = 0.0;
  for (std::uint64_t s = 0; s < 40; ++s) {
    Rng rng(9000 + s);
    const std::size_t n = 2 + (s * 5) % 31;
    const SpdMatrix p = oracle::random_spd(n, rng, std::pow(10.0, static_cast<double>(s % 7)));
    rt = std::max(rt, oracle::rel_err(spd_exp(spd_log(p)).matrix(), p.matrix()));
    const SymMatrix v = oracle::random_sym(n, rng, 3.0 / std::sqrt(static_cast<double>(n)));
    rt = std::max(rt, oracle::rel_err(spd_log(spd_exp(v)).matrix(), v.matrix()));

    const SymMatrix m = oracle::random_sym(n, rng, 2.0);
    const auto eig = sym_eig(m);
    const Matrix rebuilt = oracle::mul(oracle::mul(eig.vectors, oracle::diag(eig.values)), oracle::trans(eig.vectors));
    recon = std::max(recon, oracle::fro(oracle::sub(rebuilt, m.matrix())) / (1.0 + oracle::fro(m.matrix())));
  }
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng rng(9500 + s);
    const std::size_t n = 2 + s % 7;
    const SpdMatrix p = oracle::random_spd(n, rng, 100), q = oracle::random_spd(n, rng, 100);
    Matrix a = oracle::random_matrix(n, n, rng);
    for (std::size_t i = 0; i < n; ++i) a(i, i) += 3.0;
    const SpdMatrix ap(oracle::mul(oracle::mul(a, p.matrix()), oracle::trans(a)));
    const SpdMatrix aq(oracle::mul(oracle::mul(a, q.matrix()), oracle::trans(a)));
    const double d = geodesic_distance(p, q);
    cong = std::max(cong, std::abs(geodesic_distance(ap, aq) - d) / std::max(1.0, d));
  }
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng(9800 + s);
    const std::size_t n = 2 + s % 6, count = 3 + s % 5;
    const Matrix q = oracle::random_orthogonal(n, rng);
    std::vector<SpdMatrix> set;
    std::vector<double> logsum(n, 0.0);
    for (std::size_t k = 0; k < count; ++k) {
      std::vector<double> d(n);
      for (std::size_t i = 0; i < n; ++i) {
        d[i] = std::exp(rng.uniform(-2.0, 2.0));
        logsum[i] += std::log(d[i]);
      }
      set.emplace_back(oracle::with_spectrum(q, d));
    }
    std::vector<double> mean(n);
    for (std::size_t i = 0; i < n; ++i) mean[i] = std::exp(logsum[i] / static_cast<double>(count));
    frechet = std::max(frechet, oracle::rel_err(frechet_mean(set).matrix(), oracle::with_spectrum(q, mean)));
  }
  out.require(rt <= 1e-10, "log/exp round trip " + num(rt));
  out.require(recon <= 1e-10, "eigen reconstruction " + num(recon));
  out.require(cong <= 1e-9, "congruence invariance " + num(cong));
  out.require(frechet <= 1e-8, "Frechet closed form " + num(frechet));
  if (out.pass) {
    out.detail = "round trip " + num(rt) + ", reconstruction " + num(recon) + ", congruence " + num(cong) +
                 " (100 pairs), Frechet " + num(frechet);
  }
  return out;
}

Outcome mmd_suite() {
  Outcome out;
  Rng rng(11);
  std::vector<SpdMatrix> a;
  for (int i = 0; i < 8; ++i) a.push_back(oracle::random_spd(4, rng, 5.0));
  const double self = std::abs(mmd2(a, a));
  out.require(self <= 1e-12, "mmd2(A,A) = " + num(self));

  int mismatches = 0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    Rng r(12000 + s);
    std::vector<SpdMatrix> x, y;
    for (std::size_t i = 0; i < 1 + s % 10; ++i) x.push_back(oracle::random_spd(3, r, 5.0));
    for (std::size_t i = 0; i < 1 + (s * 7) % 10; ++i) y.push_back(oracle::random_spd(3, r, 5.0));
    if (mmd2(x, y, 2.0) != oracle::mmd2(x, y, 2.0)) ++mismatches;
  }
  out.require(mismatches == 0, std::to_string(mismatches) + " of 50 sets differ from the oracle");

  const std::vector<SpdMatrix> p{SpdMatrix(oracle::diag({1, 1}))}, q{SpdMatrix(oracle::diag({1, 3}))};
  const double closed = 2.0 - 2.0 * std::exp(-0.5);
  const double err = std::abs(mmd2(p, q, 2.0) - closed);
  out.require(err <= 1e-12 && std::abs(closed - 0.786939) < 1e-6, "singleton closed form off by " + num(err));
  if (out.pass) out.detail = "self " + num(self) + ", 50/50 bitwise, singleton " + cli::format_real(mmd2(p, q, 2.0));
  return out;
}

Outcome fedavg_suite() {
  Outcome out;
  const std::vector<RoundMessage> known{upload(0, {1, 2, -4}), upload(1, {3, 4, 0.5}), upload(2, {2, 0, 0.5})};
  out.require(fedavg(known)[0].values == std::vector<double>{2, 2, -1}, "known-vector average");

  const std::vector<RoundMessage> single{upload(4, {0.1, -7.25, 1e-300})};
  out.require(fedavg(single)[0].values == single[0].shared[0].values, "m=1 average is not the identity");

  Rng rng(13);
  bool order_ok = true;
  for (int t = 0; t < 20; ++t) {
    std::vector<RoundMessage> ups;
    for (std::uint32_t i = 0; i < 5; ++i) {
      std::vector<double> w(6);
      for (double& x : w) x = rng.normal();
      ups.push_back(upload(3 * i, w));
    }
    const auto want = fedavg(ups)[0].values;
    for (int k = 0; k < 5; ++k) {
      for (std::size_t i = ups.size() - 1; i > 0; --i) std::swap(ups[i], ups[rng.below(i + 1)]);
      order_ok = order_ok && fedavg(ups)[0].values == want;
    }
  }
  out.require(order_ok, "upload order changes the average");

  // Broadcast equality and m=1 idempotence on real clients.
  auto client = [](std::uint32_t id, std::size_t dim, std::span<const std::size_t> chain, std::uint64_t seed) {
    Rng r(seed);
    std::vector<SpdMatrix> covs;
    std::vector<std::size_t> labels;
    for (std::size_t k = 0; k < 8; ++k) {
      covs.push_back(oracle::random_spd(dim, r, 5.0));
      labels.push_back(k % 2);
    }
    return Client(id, covs, labels, init_params(dim, chain, 2, r), Schedule{});
  };
  constexpr std::size_t big[] = {4, 2};
  constexpr std::size_t small[] = {2};
  std::vector<Client> clients{client(3, 6, big, 1), client(1, 4, small, 2)};
  FederatedOptions opts;
  ServerState server = init_federation(clients, opts);
  bool equal = true;
  for (int r = 0; r < 3; ++r) {
    (void)run_round(server, clients, opts);
    const auto b = make_broadcast(server);
    for (auto& c : clients) c.receive(b);
    equal = equal && shared_tensors(clients[0].params().shared) == shared_tensors(clients[1].params().shared) &&
            shared_tensors(clients[0].params().shared) == server.global_shared;
  }
  out.require(equal, "post-broadcast weights differ");

  std::vector<Client> one{client(1, 4, small, 3)};
  ServerState solo = init_federation(one, opts);
  (void)run_round(solo, one, opts);
  out.require(solo.global_shared == shared_tensors(one[0].params().shared), "m=1 round changes the client's weights");
  if (out.pass) out.detail = "exact oracle, 100 permutations, 3 broadcasts, m=1";
  return out;
}

struct SpecificRun {
  fs::path data;
  fs::path out;
  cli::RunResult result;
  double seconds = 0.0;
};

fs::path synth(const Paths& p, const std::string& config, std::uint64_t seed, const fs::path& dir) {
  const auto cfg = cli::load_synth_config(p.configs / config);
  return cli::cmd_synth(cfg, {dir, seed, nullptr});
}

SpecificRun run_specific(const Paths& p, const fs::path& data, const fs::path& out) {
  auto cfg = cli::load_run_config(p.configs / "specific.ini");
  cfg.clients.front().paths = {data};
  const auto start = Clock::now();
  SpecificRun run{data, out, cli::cmd_train_specific(cfg, {out, 42, nullptr}), 0.0};
  run.seconds = seconds_since(start);
  return run;
}

Outcome e2e_specific(const Paths& p, SpecificRun& run) {
  Outcome out;
  const auto data = synth(p, "synth_subject.ini", 42, p.work / "specific");
  const auto set = load_trials(data);
  out.require(set.channels() == 8 && set.size() == 80, "synthetic set is not 8 channels x 40 per class");
  run = run_specific(p, data, p.work / "specific" / "run1");
  const double acc = run.result.mean_accuracy("ftl");
  std::size_t worst_epochs = 0;
  double worst_loss = 0.0;
  for (const auto& f : run.result.folds) {
    std::size_t epochs = 0;
    double last = 0.0;
    for (const auto& r : run.result.metrics)
      if (r.method == "ftl" && r.fold == f.fold) ++epochs, last = *r.loss;
    worst_epochs = std::max(worst_epochs, epochs);
    worst_loss = std::max(worst_loss, last);
  }
  out.require(acc >= 0.95, "mean CV accuracy " + num(acc) + " < 0.95");
  out.require(worst_loss < 0.1, "a fold ended with loss " + num(worst_loss));
  out.require(worst_epochs <= 500, "a fold needed " + std::to_string(worst_epochs) + " epochs");
  out.require(run.seconds < 300.0, "runtime " + num(run.seconds) + " s");
  if (out.pass) {
    out.detail = "accuracy " + num(acc) + ", every fold below 0.1 by epoch " + std::to_string(worst_epochs) +
                 ", " + num(run.seconds) + " s";
  }
  return out;
}

cli::RunConfig adaptive_config(const Paths& p, const fs::path& dir) {
  auto cfg = cli::load_run_config(p.configs / "adaptive.ini");
  for (auto& c : cfg.clients) c.paths = {dir / (c.name + ".eegtrials")};
  return cfg;
}

cli::RunResult run_adaptive(const Paths& p, std::uint64_t seed, const fs::path& out) {
  const auto dir = p.work / "adaptive" / ("seed" + std::to_string(seed));
  synth(p, "synth_source.ini", seed, dir);
  synth(p, "synth_target.ini", seed + 100, dir);
  return cli::cmd_train_adaptive(adaptive_config(p, dir), {out, seed, nullptr});
}

Outcome e2e_adaptive(const Paths& p) {
  Outcome out;
  const auto start = Clock::now();
  double transfer = 0.0, alone = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto r = run_adaptive(p, seed, p.work / "adaptive" / ("seed" + std::to_string(seed)) / "run1");
    const double t = r.mean_accuracy("ftl-transfer"), o = r.mean_accuracy("target-only");
    transfer += t / 10.0;
    alone += o / 10.0;
    per_seed += (per_seed.empty() ? "" : " ") + num(t - o);
  }
  const double secs = seconds_since(start);
  out.require(transfer >= alone, "transfer " + num(transfer) + " < target-only " + num(alone));
  out.require(secs < 900.0, "runtime " + num(secs) + " s");
  out.detail += (out.detail.empty() ? "" : "; ") + std::string("transfer ") + num(transfer) + " vs target-only " +
                num(alone) + " over 10 seeds (per-seed gain: " + per_seed + ")";
  return out;
}

Outcome baseline_suite(const Paths& p, const SpecificRun& specific) {
  Outcome out;
  auto cfg = cli::load_run_config(p.configs / "baseline.ini");
  cfg.clients.front().paths = {specific.data};
  cfg.fold_dir = specific.out / "folds";
  const auto mdm = cli::cmd_baseline(cfg, cli::BaselineAlgorithm::kMdm, {p.work / "mdm" / "run1", 42, nullptr});
  const double acc = mdm.mean_accuracy("mdm");
  out.require(acc >= 0.95, "MDM accuracy " + num(acc));

  const auto set = load_trials(specific.data);
  const auto covs = trial_covariances(set);
  const auto labels = set.labels();
  const auto tsm = tsm_train(covs, labels);
  bool zero = true;
  for (double v : tsm_features(tsm.reference, tsm.reference)) zero = zero && v == 0.0;
  out.require(zero, "TSM feature at the reference is not exactly zero");

  double worst = 0.0;
  bool same = true;
  for (std::uint64_t s = 0; s < 5; ++s) {
    Rng rng(14000 + s);
    Matrix a = oracle::random_matrix(8, 8, rng);
    for (std::size_t i = 0; i < 8; ++i) a(i, i) += 3.0;
    std::vector<SpdMatrix> moved;
    for (const auto& c : covs) moved.emplace_back(oracle::mul(oracle::mul(a, c.matrix()), oracle::trans(a)));
    const auto m0 = mdm_train(covs, labels), m1 = mdm_train(moved, labels);
    for (std::size_t i = 0; i < covs.size(); ++i) {
      for (std::size_t y = 0; y < m0.means.size(); ++y) {
        const double d = geodesic_distance(m0.means[y], covs[i]);
        worst = std::max(worst, std::abs(geodesic_distance(m1.means[y], moved[i]) - d) / std::max(1.0, d));
      }
      same = same && mdm_predict(m0, covs[i]) == mdm_predict(m1, moved[i]);
    }
  }
  out.require(worst <= 1e-9, "MDM distances move by " + num(worst) + " under congruence");
  out.require(same, "MDM predictions change under congruence");
  if (out.pass) out.detail = "MDM accuracy " + num(acc) + ", TSM reference feature 0, invariance " + num(worst);
  return out;
}

Outcome physionet() {
  Outcome out;
  const char* config = std::getenv("FTL_PHYSIONET_CONFIG");
  if (!config || !*config) {
    out.skipped = true;
    out.detail = "set FTL_PHYSIONET_CONFIG to a train-specific config over 10 converted subjects";
    return out;
  }
  const auto cfg = cli::load_run_config(config);
  const auto out_dir = fs::temp_directory_path() / "ftl_physionet_run";
  const auto r = cli::cmd_train_specific(cfg, {out_dir, cfg.seed.value_or(1), &std::cerr});
  const double acc = r.mean_accuracy("ftl");
  out.require(std::abs(acc - 0.633) <= 0.08, "mean accuracy " + num(acc) + " outside 0.633 +- 0.08");
  if (out.pass) out.detail = "mean accuracy " + num(acc);
  return out;
}

Outcome determinism(const Paths& p, const SpecificRun& specific) {
  Outcome out;
  const char* files[] = {"metrics.csv", "summary.csv", "resolved.txt"};
  auto compare = [&](const std::string& what, const fs::path& a, const fs::path& b) {
    for (const char* f : files) out.require(slurp(a / f) == slurp(b / f), what + " " + f + " differs");
  };

  const auto d1 = synth(p, "synth_subject.ini", 42, p.work / "det" / "a");
  const auto d2 = synth(p, "synth_subject.ini", 42, p.work / "det" / "b");
  out.require(slurp(d1) == slurp(d2), "synth output differs");

  const auto again = run_specific(p, specific.data, p.work / "specific" / "run2");
  compare("train-specific", specific.out, again.out);
  out.require(slurp(specific.out / "folds" / "synth01.csv") == slurp(again.out / "folds" / "synth01.csv"),
              "fold file differs");

  auto cfg = cli::load_run_config(p.configs / "baseline.ini");
  cfg.clients.front().paths = {specific.data};
  cfg.fold_dir = specific.out / "folds";
  for (auto algo : {cli::BaselineAlgorithm::kMdm, cli::BaselineAlgorithm::kTsm}) {
    const std::string name = algo == cli::BaselineAlgorithm::kMdm ? "mdm" : "tsm";
    const auto a = p.work / ("det_" + name) / "a", b = p.work / ("det_" + name) / "b";
    (void)cli::cmd_baseline(cfg, algo, {a, 42, nullptr});
    (void)cli::cmd_baseline(cfg, algo, {b, 42, nullptr});
    compare("baseline " + name, a, b);
  }

  const auto base = p.work / "adaptive" / "seed1";
  const auto r2 = base / "run2";
  (void)cli::cmd_train_adaptive(adaptive_config(p, base), {r2, 1, nullptr});
  compare("train-adaptive", base / "run1", r2);
  if (out.pass) out.detail = "synth, train-specific, baseline mdm/tsm and train-adaptive reproduce byte-for-byte";
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  Paths paths{fs::temp_directory_path() / "ftl_acceptance", FTL_CONFIG_DIR};
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--work") {
      paths.work = argv[i + 1];
    } else if (flag == "--configs") {
      paths.configs = argv[i + 1];
    } else {
      std::cerr << "usage: ftl_acceptance [--work <dir>] [--configs <dir>]\n";
      return 2;
    }
  }
  fs::remove_all(paths.work);
  fs::create_directories(paths.work);

  SpecificRun specific;
  criterion("gradient suite", gradient_suite);
  criterion("SPD algebra suite", spd_suite);
  criterion("MMD suite", mmd_suite);
  criterion("FedAvg suite", fedavg_suite);
  criterion("end-to-end subject-specific", [&] { return e2e_specific(paths, specific); });
  criterion("end-to-end subject-adaptive", [&] { return e2e_adaptive(paths); });
  criterion("baseline suite", [&] { return baseline_suite(paths, specific); });
  criterion("PhysioNet subset (optional)", physionet);
  criterion("determinism", [&] { return determinism(paths, specific); });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}

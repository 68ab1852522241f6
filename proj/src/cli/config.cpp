#include "ftl/cli/config.hpp"

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "ftl/error.hpp"

namespace ftl::cli {
namespace {

using boost::property_tree::ptree;

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  for (char ch : text) {
    if (ch == sep) {
      out.push_back(trim(item));
      item.clear();
    } else {
      item.push_back(ch);
    }
  }
  out.push_back(trim(item));
  return out;
}

[[noreturn]] void fail(const std::string& where, const std::string& message) {
  throw ConfigError("[" + where + "] " + message);
}

double to_double(const std::string& where, const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    fail(where, key + " = '" + text + "' is not a number");
  }
  if (!std::isfinite(value)) fail(where, key + " must be finite");
  return value;
}

std::uint64_t to_u64(const std::string& where, const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  std::uint64_t value = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    fail(where, key + " = '" + text + "' is not a non-negative integer");
  }
  return value;
}

bool to_bool(const std::string& where, const std::string& key, const std::string& text) {
  std::string t = trim(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "true" || t == "yes" || t == "on" || t == "1") return true;
  if (t == "false" || t == "no" || t == "off" || t == "0") return false;
  fail(where, key + " = '" + text + "' is not a boolean (true/false)");
}

/// Key access for one INI section with unknown-key detection.
class Section {
 public:
  Section(const ptree* node, std::string name) : node_(node), name_(std::move(name)) {}

  bool present() const { return node_ != nullptr; }
  const std::string& name() const { return name_; }

  std::optional<std::string> raw(const std::string& key) {
    used_.insert(key);
    if (!node_) return std::nullopt;
    const auto child = node_->get_child_optional(ptree::path_type(key, '\0'));
    if (!child) return std::nullopt;
    return trim(child->data());
  }

  std::string str(const std::string& key, const std::string& fallback) {
    return raw(key).value_or(fallback);
  }
  double real(const std::string& key, double fallback) {
    const auto v = raw(key);
    return v ? to_double(name_, key, *v) : fallback;
  }
  std::size_t size(const std::string& key, std::size_t fallback) {
    const auto v = raw(key);
    return v ? static_cast<std::size_t>(to_u64(name_, key, *v)) : fallback;
  }
  bool flag(const std::string& key, bool fallback) {
    const auto v = raw(key);
    return v ? to_bool(name_, key, *v) : fallback;
  }

  /// Keys of the form `<prefix>.<rest>`, in file order.
  std::vector<std::pair<std::string, std::string>> prefixed(const std::string& prefix) {
    std::vector<std::pair<std::string, std::string>> out;
    if (!node_) return out;
    for (const auto& [key, child] : *node_) {
      if (key.rfind(prefix + ".", 0) == 0) {
        used_.insert(key);
        out.emplace_back(key.substr(prefix.size() + 1), trim(child.data()));
      }
    }
    return out;
  }

  void reject_unknown() const {
    if (!node_) return;
    for (const auto& [key, child] : *node_) {
      if (!used_.count(key)) fail(name_, "unknown key '" + key + "'");
    }
  }

 private:
  const ptree* node_;
  std::string name_;
  std::set<std::string> used_;
};

const ptree* find_section(const ptree& root, const std::string& name) {
  const auto child = root.get_child_optional(ptree::path_type(name, '\0'));
  return child ? &*child : nullptr;
}

ptree read_ini(std::istream& is) {
  ptree root;
  try {
    boost::property_tree::ini_parser::read_ini(is, root);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  for (const auto& [key, child] : root) {
    if (child.empty() && !child.data().empty()) {
      throw ConfigError("key '" + key + "' appears outside any [section]");
    }
  }
  return root;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& text) {
  std::filesystem::path p(text);
  return p.is_absolute() || base.empty() ? p : base / p;
}

std::vector<std::filesystem::path> read_paths(Section& s, const std::filesystem::path& base) {
  std::vector<std::filesystem::path> out;
  const auto one = s.raw("path");
  const auto many = s.raw("paths");
  if (one && many) fail(s.name(), "give either path or paths, not both");
  if (one) {
    if (one->empty()) fail(s.name(), "path is empty");
    out.push_back(resolve(base, *one));
  } else if (many) {
    for (const auto& item : split(*many, ',')) {
      if (item.empty()) fail(s.name(), "paths contains an empty entry");
      out.push_back(resolve(base, item));
    }
  }
  return out;
}

ClientConfig read_client(Section& s, const std::string& name, const std::filesystem::path& base) {
  ClientConfig c;
  c.name = name;
  c.paths = read_paths(s, base);
  if (c.paths.empty()) fail(s.name(), "missing path (or paths) to EEGTRIALS data");
  try {
    c.channels = parse_channels(s.str("channels", "auto"));
    if (auto chain = s.raw("chain"); chain && *chain != "auto") c.chain = parse_size_list(*chain);
  } catch (const ConfigError& e) {
    fail(s.name(), e.what());
  }
  return c;
}

DecayMode parse_decay_mode(const std::string& where, const std::string& text) {
  if (text == "per-epoch" || text == "per_epoch") return DecayMode::kPerEpoch;
  if (text == "one-shot" || text == "one_shot") return DecayMode::kOneShot;
  fail(where, "decay_mode must be per-epoch or one-shot, got '" + text + "'");
}

}  // namespace

ChannelSelection parse_channels(const std::string& text) {
  const std::string t = trim(text);
  if (t.empty() || t == "auto") return {};
  if (t == "all") return {ChannelSelection::Kind::kAll, {}};
  ChannelSelection sel{ChannelSelection::Kind::kList, {}};
  for (const auto& item : split(t, ',')) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      sel.indices.push_back(to_u64("channels", "index", item));
    } else {
      const auto lo = to_u64("channels", "range start", item.substr(0, dash));
      const auto hi = to_u64("channels", "range end", item.substr(dash + 1));
      if (hi < lo) throw ConfigError("channel range '" + item + "' is reversed");
      for (auto i = lo; i <= hi; ++i) sel.indices.push_back(i);
    }
  }
  std::vector<std::size_t> sorted = sel.indices;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ConfigError("channel list '" + t + "' repeats an index");
  }
  return sel;
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& item : split(text, ',')) out.push_back(to_u64("list", "entry", item));
  return out;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split(text, ',')) out.push_back(to_double("list", "entry", item));
  return out;
}

void RunConfig::validate() const {
  if (folds < 2) throw ConfigError("[run] folds must be at least 2");
  if (threads < 1) throw ConfigError("[run] threads must be at least 1");
  try {
    schedule.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("[schedule] ") + e.what());
  }
  if (!(shrinkage >= 0.0 && shrinkage <= 1.0)) throw ConfigError("[model] shrinkage must be in [0, 1]");
  if (!(clamp_eps > 0.0)) throw ConfigError("[model] clamp_eps must be positive");
  if (clients.empty()) throw ConfigError("no data configured");
  for (const auto& c : clients) {
    if (c.chain) {
      if (c.chain->size() < 2) throw ConfigError("client " + c.name + ": chain needs an input and at least one output dim");
      for (std::size_t k = 0; k < c.chain->size(); ++k) {
        if ((*c.chain)[k] == 0) throw ConfigError("client " + c.name + ": chain dims must be positive");
        if (k > 0 && (*c.chain)[k] > (*c.chain)[k - 1]) {
          throw ConfigError("client " + c.name + ": chain must not increase (" +
                            std::to_string((*c.chain)[k - 1]) + " -> " +
                            std::to_string((*c.chain)[k]) + ")");
        }
      }
    }
  }
  if (mode == RunMode::kAdaptive) {
    if (clients.size() < 2) throw ConfigError("adaptive mode needs at least two [client.<name>] sections");
    const bool found = std::any_of(clients.begin(), clients.end(),
                                   [&](const ClientConfig& c) { return c.name == adaptive.target; });
    if (!found) throw ConfigError("[adaptive] target '" + adaptive.target + "' is not a configured client");
    if (adaptive.rounds < 1) throw ConfigError("[adaptive] rounds must be at least 1");
    if (!(adaptive.stop_loss >= 0.0)) throw ConfigError("[adaptive] stop_loss must be non-negative");
    if (!(adaptive.lambda >= 0.0)) throw ConfigError("[adaptive] lambda must be non-negative");
    if (!(adaptive.sigma > 0.0)) throw ConfigError("[adaptive] sigma must be positive");
    for (const auto& [key, value] : adaptive.lambda_overrides) {
      if (!(value >= 0.0)) throw ConfigError("[adaptive] lambda overrides must be non-negative");
      for (const auto& who : {std::get<0>(key), std::get<1>(key)}) {
        if (std::none_of(clients.begin(), clients.end(),
                         [&](const ClientConfig& c) { return c.name == who; })) {
          throw ConfigError("[adaptive] lambda override names unknown client '" + who + "'");
        }
      }
    }
  }
}

RunConfig parse_run_config(std::istream& is, const std::filesystem::path& base_dir) {
  const ptree root = read_ini(is);
  RunConfig cfg;

  Section run(find_section(root, "run"), "run");
  const std::string mode = run.str("mode", "specific");
  if (mode == "specific") {
    cfg.mode = RunMode::kSpecific;
  } else if (mode == "adaptive") {
    cfg.mode = RunMode::kAdaptive;
  } else {
    fail("run", "mode must be specific or adaptive, got '" + mode + "'");
  }
  cfg.run_id = run.str("run_id", cfg.run_id);
  if (cfg.run_id.empty() || cfg.run_id.find_first_of(",\n\"") != std::string::npos) {
    fail("run", "run_id must be non-empty and free of commas and quotes");
  }
  if (auto seed = run.raw("seed")) cfg.seed = to_u64("run", "seed", *seed);
  cfg.folds = run.size("folds", cfg.folds);
  cfg.stratified = run.flag("stratified", cfg.stratified);
  if (auto dir = run.raw("fold_dir")) cfg.fold_dir = resolve(base_dir, *dir);
  cfg.threads = run.size("threads", cfg.threads);
  run.reject_unknown();

  Section model(find_section(root, "model"), "model");
  cfg.shrinkage = model.real("shrinkage", cfg.shrinkage);
  cfg.clamp_eps = model.real("clamp_eps", cfg.clamp_eps);
  cfg.optimizer.stiefel = model.flag("stiefel", false);
  const auto model_chain = model.raw("chain");
  model.reject_unknown();

  Section sched(find_section(root, "schedule"), "schedule");
  cfg.schedule.lr0 = sched.real("lr0", cfg.schedule.lr0);
  cfg.schedule.decay_rate = sched.real("decay_rate", cfg.schedule.decay_rate);
  cfg.schedule.decay_start_epoch = sched.size("decay_start", cfg.schedule.decay_start_epoch);
  cfg.schedule.decay_mode = parse_decay_mode("schedule", sched.str("decay_mode", "per-epoch"));
  cfg.schedule.max_epochs = sched.size("max_epochs", cfg.schedule.max_epochs);
  cfg.schedule.stop_loss = sched.real("stop_loss", cfg.schedule.stop_loss);
  sched.reject_unknown();

  Section base(find_section(root, "baseline"), "baseline");
  if (auto algo = base.raw("algorithm")) {
    if (*algo == "mdm") {
      cfg.baseline.algorithm = BaselineAlgorithm::kMdm;
    } else if (*algo == "tsm") {
      cfg.baseline.algorithm = BaselineAlgorithm::kTsm;
    } else {
      fail("baseline", "algorithm must be mdm or tsm, got '" + *algo + "'");
    }
  }
  cfg.baseline.tsm_grad_tol = base.real("tsm_grad_tol", cfg.baseline.tsm_grad_tol);
  cfg.baseline.tsm_max_iter = base.size("tsm_max_iter", cfg.baseline.tsm_max_iter);
  base.reject_unknown();

  Section data(find_section(root, "data"), "data");
  std::vector<std::pair<std::string, const ptree*>> client_sections;
  for (const auto& [key, child] : root) {
    if (key.rfind("client.", 0) == 0) client_sections.emplace_back(key, &child);
  }

  if (cfg.mode == RunMode::kSpecific) {
    if (!data.present()) fail("data", "subject-specific and baseline runs need a [data] section");
    if (!client_sections.empty()) fail(client_sections.front().first, "client sections are only used in adaptive mode");
    ClientConfig c = read_client(data, "data", base_dir);
    if (model_chain && *model_chain != "auto") c.chain = parse_size_list(*model_chain);
    cfg.clients.push_back(std::move(c));
    data.reject_unknown();
  } else {
    if (data.present()) fail("data", "adaptive runs configure data per [client.<name>] section");
    if (model_chain) fail("model", "in adaptive mode set chain per [client.<name>] section");
    for (const auto& [key, node] : client_sections) {
      const std::string name = key.substr(std::string("client.").size());
      if (name.empty() || name.find_first_of(",\"") != std::string::npos) {
        fail(key, "client name must be non-empty and free of commas and quotes");
      }
      Section s(node, key);
      cfg.clients.push_back(read_client(s, name, base_dir));
      s.reject_unknown();
    }
  }

  Section adapt(find_section(root, "adaptive"), "adaptive");
  if (cfg.mode == RunMode::kSpecific && adapt.present()) {
    fail("adaptive", "section only applies when [run] mode = adaptive");
  }
  auto& a = cfg.adaptive;
  a.target = adapt.str("target", "");
  a.rounds = adapt.size("rounds", a.rounds);
  a.local_epochs = adapt.size("local_epochs", a.local_epochs);
  a.stop_loss = adapt.real("stop_loss", a.stop_loss);
  a.lambda = adapt.real("lambda", a.lambda);
  for (const auto& [rest, value] : adapt.prefixed("lambda")) {
    const auto parts = split(rest, '.');
    if (parts.size() != 3) fail("adaptive", "lambda override 'lambda." + rest + "' must be lambda.<client>.<client>.<class>");
    auto first = parts[0];
    auto second = parts[1];
    if (first == second) fail("adaptive", "lambda override pairs a client with itself");
    if (second < first) std::swap(first, second);
    a.lambda_overrides[{first, second, to_u64("adaptive", "lambda class", parts[2])}] =
        to_double("adaptive", "lambda." + rest, value);
  }
  a.sigma = adapt.real("sigma", a.sigma);
  a.domain_adaptation = adapt.flag("domain_adaptation", a.domain_adaptation);
  a.compare_target_only = adapt.flag("compare_target_only", a.compare_target_only);
  a.parallel = adapt.flag("parallel", a.parallel);
  a.snapshots = adapt.flag("snapshots", a.snapshots);
  adapt.reject_unknown();

  static const std::set<std::string> known = {"run", "model", "schedule", "data", "adaptive", "baseline"};
  for (const auto& [key, child] : root) {
    if (!known.count(key) && key.rfind("client.", 0) != 0) {
      throw ConfigError("unknown section [" + key + "]");
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  try {
    return parse_run_config(is, path.parent_path());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

SynthConfig parse_synth_config(std::istream& is) {
  const ptree root = read_ini(is);
  for (const auto& [key, child] : root) {
    if (key != "synth") throw ConfigError("unknown section [" + key + "] in synth config");
  }
  const ptree* node = find_section(root, "synth");
  if (!node) throw ConfigError("synth config needs a [synth] section");
  Section s(node, "synth");
  SynthConfig cfg;
  cfg.subject = s.str("subject", cfg.subject);
  if (cfg.subject.empty() || cfg.subject.find_first_of(" \t\n,\"") != std::string::npos) {
    fail("synth", "subject must be non-empty and free of whitespace, commas and quotes");
  }
  cfg.trials_per_class = s.size("trials_per_class", cfg.trials_per_class);
  cfg.samples = s.size("samples", cfg.samples);
  cfg.spread = s.real("spread", cfg.spread);
  cfg.power_spread = s.real("power_spread", cfg.power_spread);
  cfg.rotate = s.flag("rotate", cfg.rotate);
  if (auto f = s.raw("file")) cfg.file = *f;
  if (auto seed = s.raw("seed")) cfg.seed = to_u64("synth", "seed", *seed);

  std::vector<std::pair<std::size_t, std::vector<double>>> classes;
  for (const auto& [rest, value] : s.prefixed("class")) {
    classes.emplace_back(to_u64("synth", "class index", rest), parse_double_list(value));
  }
  s.reject_unknown();
  std::sort(classes.begin(), classes.end());
  for (std::size_t k = 0; k < classes.size(); ++k) {
    if (classes[k].first != k) fail("synth", "class.<k> keys must be numbered 0, 1, ... without gaps");
    if (classes[k].second.size() != classes[0].second.size()) {
      fail("synth", "class.* diagonals must all have the same channel count");
    }
    for (double v : classes[k].second) {
      if (!(v > 0.0)) fail("synth", "class." + std::to_string(k) + " entries must be positive variances");
    }
    cfg.class_diagonals.push_back(classes[k].second);
  }
  if (cfg.class_diagonals.size() < 2) fail("synth", "need at least class.0 and class.1");
  if (cfg.trials_per_class == 0) fail("synth", "trials_per_class must be positive");
  if (cfg.samples < 2) fail("synth", "samples must be at least 2");
  if (!(cfg.spread >= 0.0) || !(cfg.power_spread >= 0.0)) fail("synth", "spreads must be non-negative");
  return cfg;
}

SynthConfig load_synth_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file " + path.string());
  try {
    return parse_synth_config(is);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

}  // namespace ftl::cli

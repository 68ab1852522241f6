#include "ftl/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

#include "ftl/binary_io.hpp"
#include "ftl/error.hpp"
#include "ftl/rng.hpp"

namespace ftl {
namespace {

constexpr const char* kMagicLine = "EEGTRIALS v1";

std::size_t parse_count(const std::string& key, const std::string& text) {
  std::size_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw FormatError("line 2: " + key + "='" + text + "' is not a non-negative integer");
  }
  return value;
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

std::vector<std::size_t> TrialSet::labels() const {
  std::vector<std::size_t> out;
  out.reserve(trials.size());
  for (const auto& t : trials) out.push_back(t.label);
  return out;
}

void TrialSet::validate() const {
  if (trials.empty()) throw std::invalid_argument("trial set '" + subject + "' is empty");
  if (classes == 0) throw std::invalid_argument("trial set '" + subject + "' has zero classes");
  const std::size_t e = channels();
  const std::size_t d = samples();
  if (e < 1) throw std::invalid_argument("trials need at least one channel");
  if (d < 2) throw std::invalid_argument("trials need at least two samples");
  for (std::size_t i = 0; i < trials.size(); ++i) {
    const auto& t = trials[i];
    if (t.channels() != e || t.samples() != d) {
      throw std::invalid_argument("trial " + std::to_string(i) + " is " +
                                  std::to_string(t.channels()) + "x" + std::to_string(t.samples()) +
                                  ", expected " + std::to_string(e) + "x" + std::to_string(d));
    }
    if (t.label >= classes) {
      throw std::invalid_argument("trial " + std::to_string(i) + " has label " +
                                  std::to_string(t.label) + " outside [0, " +
                                  std::to_string(classes) + ")");
    }
    if (!t.signal.all_finite()) {
      throw std::invalid_argument("trial " + std::to_string(i) + " has non-finite samples");
    }
  }
}

void save_trials(const TrialSet& set, std::ostream& os) {
  set.validate();
  if (set.subject.empty() ||
      std::any_of(set.subject.begin(), set.subject.end(),
                  [](char c) { return std::isspace(static_cast<unsigned char>(c)) || c == '='; })) {
    throw std::invalid_argument("subject id '" + set.subject +
                                "' must be non-empty without whitespace or '='");
  }
  if (set.classes > std::numeric_limits<std::uint16_t>::max() + 1u) {
    throw std::invalid_argument("too many classes for a u16 label");
  }
  os << kMagicLine << '\n'
     << "subject=" << set.subject << " trials=" << set.size() << " channels=" << set.channels()
     << " samples=" << set.samples() << " classes=" << set.classes << '\n';
  for (const auto& t : set.trials) {
    binary::write_le(os, static_cast<std::uint16_t>(t.label));
    for (double v : t.signal.data()) binary::write_f64(os, v);
  }
  if (!os) throw std::runtime_error("save_trials: write failed");
}

void save_trials(const TrialSet& set, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  save_trials(set, os);
}

TrialSet load_trials(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kMagicLine) {
    throw FormatError("line 1: expected '" + std::string(kMagicLine) + "'");
  }
  if (!std::getline(is, line)) throw FormatError("line 2: missing header");

  std::map<std::string, std::string> fields;
  std::istringstream tokens(line);
  std::string token;
  while (tokens >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw FormatError("line 2: token '" + token + "' is not key=value");
    }
    fields[token.substr(0, eq)] = token.substr(eq + 1);
  }
  for (const char* key : {"subject", "trials", "channels", "samples", "classes"}) {
    if (!fields.contains(key)) throw FormatError(std::string("line 2: missing key '") + key + "'");
  }

  TrialSet set;
  set.subject = fields["subject"];
  const std::size_t n = parse_count("trials", fields["trials"]);
  const std::size_t e = parse_count("channels", fields["channels"]);
  const std::size_t d = parse_count("samples", fields["samples"]);
  set.classes = parse_count("classes", fields["classes"]);
  if (n == 0) throw FormatError("line 2: trials must be positive");
  if (e == 0) throw FormatError("line 2: channels must be positive");
  if (d < 2) throw FormatError("line 2: samples must be at least 2");
  if (set.classes == 0) throw FormatError("line 2: classes must be positive");

  set.trials.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    const auto offset = static_cast<long long>(is.tellg());
    std::uint16_t label = 0;
    if (!binary::read_le(is, label)) {
      throw FormatError("record " + std::to_string(r) + " at byte offset " +
                        std::to_string(offset) + ": truncated label");
    }
    if (label >= set.classes) {
      throw FormatError("record " + std::to_string(r) + " at byte offset " +
                        std::to_string(offset) + ": label " + std::to_string(label) +
                        " outside [0, " + std::to_string(set.classes) + ")");
    }
    EegTrial trial{Matrix(e, d), label};
    for (double& v : trial.signal.data()) {
      if (!binary::read_f64(is, v)) {
        throw FormatError("record " + std::to_string(r) + " at byte offset " +
                          std::to_string(offset) + ": truncated signal (expected " +
                          std::to_string(e * d) + " values)");
      }
      if (!std::isfinite(v)) {
        throw FormatError("record " + std::to_string(r) + " at byte offset " +
                          std::to_string(offset) + ": non-finite sample");
      }
    }
    set.trials.push_back(std::move(trial));
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes after " + std::to_string(n) + " records at byte offset " +
                      std::to_string(static_cast<long long>(is.tellg())));
  }
  return set;
}

TrialSet load_trials(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open trial file " + path.string());
  try {
    return load_trials(is);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

TrialSet select_channels(const TrialSet& set, std::span<const std::size_t> indices) {
  const std::size_t e = set.channels();
  std::vector<bool> seen(e, false);
  for (std::size_t idx : indices) {
    if (idx >= e) {
      throw std::out_of_range("select_channels: channel " + std::to_string(idx) + " outside [0, " +
                              std::to_string(e) + ")");
    }
    if (seen[idx]) throw std::invalid_argument("select_channels: duplicate channel " + std::to_string(idx));
    seen[idx] = true;
  }
  if (indices.empty()) throw std::invalid_argument("select_channels: no channels selected");

  TrialSet out{set.subject, set.classes, {}};
  out.trials.reserve(set.size());
  for (const auto& t : set.trials) {
    EegTrial sel{Matrix(indices.size(), t.samples()), t.label};
    for (std::size_t r = 0; r < indices.size(); ++r)
      for (std::size_t c = 0; c < t.samples(); ++c) sel.signal(r, c) = t.signal(indices[r], c);
    out.trials.push_back(std::move(sel));
  }
  return out;
}

std::vector<SpdMatrix> trial_covariances(const TrialSet& set, double shrinkage) {
  std::vector<SpdMatrix> out;
  out.reserve(set.size());
  for (const auto& t : set.trials) out.push_back(covariance(t.signal, shrinkage));
  return out;
}

std::vector<std::size_t> FoldAssignment::test_indices(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] == fold) out.push_back(i);
  return out;
}

std::vector<std::size_t> FoldAssignment::train_indices(std::size_t fold) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < fold_of.size(); ++i)
    if (fold_of[i] != fold) out.push_back(i);
  return out;
}

FoldAssignment make_folds(std::span<const std::size_t> labels, std::size_t folds,
                          std::uint64_t seed, bool stratified) {
  if (folds < 2) throw std::invalid_argument("make_folds: need at least 2 folds");
  if (labels.size() < folds) {
    throw std::invalid_argument("make_folds: " + std::to_string(labels.size()) +
                                " trials cannot fill " + std::to_string(folds) + " folds");
  }
  FoldAssignment out{std::vector<std::size_t>(labels.size()), folds, seed, stratified};
  Rng rng(seed);

  std::vector<std::vector<std::size_t>> groups;
  if (stratified) {
    const std::size_t classes = *std::max_element(labels.begin(), labels.end()) + 1;
    groups.resize(classes);
    for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(i);
  } else {
    groups.emplace_back(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) groups[0][i] = i;
  }

  std::size_t next = 0;
  for (auto& group : groups) {
    shuffle(group, rng);
    for (std::size_t idx : group) {
      out.fold_of[idx] = next;
      next = (next + 1) % folds;
    }
  }
  return out;
}

void save_folds(const FoldAssignment& folds, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << "# folds=" << folds.folds << " seed=" << folds.seed
     << " stratified=" << (folds.stratified ? 1 : 0) << '\n'
     << "trial,fold\n";
  for (std::size_t i = 0; i < folds.fold_of.size(); ++i) os << i << ',' << folds.fold_of[i] << '\n';
}

FoldAssignment load_folds(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open fold file " + path.string());
  FoldAssignment out;
  std::string line;
  if (!std::getline(is, line) || line.rfind("# ", 0) != 0) {
    throw FormatError(path.string() + ": line 1: expected '# folds=... seed=... stratified=...'");
  }
  int stratified = 1;
  std::istringstream meta(line.substr(2));
  std::string token;
  while (meta >> token) {
    const auto eq = token.find('=');
    if (eq == std::string::npos) throw FormatError(path.string() + ": line 1: bad token " + token);
    const std::string key = token.substr(0, eq);
    const std::string value = token.substr(eq + 1);
    if (key == "folds") out.folds = std::stoul(value);
    else if (key == "seed") out.seed = std::stoull(value);
    else if (key == "stratified") stratified = std::stoi(value);
  }
  out.stratified = stratified != 0;
  if (!std::getline(is, line) || line != "trial,fold") {
    throw FormatError(path.string() + ": line 2: expected header 'trial,fold'");
  }
  std::size_t line_no = 2;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::size_t trial = 0;
    std::size_t fold = 0;
    char comma = 0;
    std::istringstream row(line);
    if (!(row >> trial >> comma >> fold) || comma != ',' || trial != out.fold_of.size() ||
        fold >= out.folds) {
      throw FormatError(path.string() + ": line " + std::to_string(line_no) + ": bad row '" +
                        line + "'");
    }
    out.fold_of.push_back(fold);
  }
  return out;
}

TrialSet synth_generate(const SynthSpec& spec) {
  if (spec.class_bases.empty()) throw std::invalid_argument("synth_generate: no class bases");
  if (spec.trials_per_class == 0) throw std::invalid_argument("synth_generate: zero trials per class");
  if (spec.samples < 2) throw std::invalid_argument("synth_generate: need at least 2 samples");
  const std::size_t e = spec.class_bases.front().dim();
  std::vector<SymMatrix> base_logs;
  for (const auto& b : spec.class_bases) {
    if (b.dim() != e) throw std::invalid_argument("synth_generate: class bases differ in dimension");
    base_logs.push_back(spd_log(b));
  }

  Rng rng(spec.seed);
  TrialSet set{spec.subject, spec.class_bases.size(), {}};
  for (std::size_t t = 0; t < spec.trials_per_class; ++t) {
    for (std::size_t y = 0; y < spec.class_bases.size(); ++y) {
      Matrix log_c = base_logs[y].matrix();
      if (spec.spread != 0.0) {
        Matrix g(e, e);
        for (double& v : g.data()) v = rng.normal();
        log_c += (g + g.transpose()) * (spec.spread / 2.0);
      }
      if (spec.power_spread != 0.0) {
        const double offset = spec.power_spread * rng.normal();
        for (std::size_t i = 0; i < e; ++i) log_c(i, i) += offset;
      }
      const SpdMatrix c = spd_exp(SymMatrix(log_c));
      const Matrix root = spd_sqrt_pair(c).first.matrix();
      Matrix z(e, spec.samples);
      for (double& v : z.data()) v = rng.normal();
      set.trials.push_back({matmul(root, z), y});
    }
  }
  return set;
}

}  // namespace ftl

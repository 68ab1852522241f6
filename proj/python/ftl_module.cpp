#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <algorithm>
#include <map>

#include "ftl/baselines.hpp"
#include "ftl/cli/commands.hpp"
#include "ftl/cli/config.hpp"
#include "ftl/data.hpp"
#include "ftl/error.hpp"
#include "ftl/federated.hpp"
#include "ftl/losses.hpp"
#include "ftl/message.hpp"
#include "ftl/spd.hpp"

namespace py = pybind11;
using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

namespace {

ftl::Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
  const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
  return ftl::Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

Array to_array(const ftl::Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

Array to_vector(std::span<const double> v) {
  Array out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

ftl::SpdMatrix to_spd(const Array& a) { return ftl::SpdMatrix(to_matrix(a)); }
ftl::SymMatrix to_sym(const Array& a) { return ftl::SymMatrix(to_matrix(a)); }

std::vector<ftl::SpdMatrix> to_spd_list(const std::vector<Array>& list) {
  std::vector<ftl::SpdMatrix> out;
  out.reserve(list.size());
  for (const auto& a : list) out.push_back(to_spd(a));
  return out;
}

py::dict trials_to_dict(const ftl::TrialSet& set) {
  Array signals({set.size(), set.channels(), set.samples()});
  std::vector<std::size_t> labels;
  double* dst = signals.mutable_data();
  for (const auto& t : set.trials) {
    dst = std::copy(t.signal.data().begin(), t.signal.data().end(), dst);
    labels.push_back(t.label);
  }
  py::dict d;
  d["subject"] = set.subject;
  d["classes"] = set.classes;
  d["signals"] = signals;
  d["labels"] = labels;
  return d;
}

ftl::TrialSet trials_from(const std::string& subject, std::size_t classes, const Array& signals,
                          const std::vector<std::size_t>& labels) {
  if (signals.ndim() != 3) throw py::value_error("signals must have shape (trials, channels, samples)");
  const auto n = static_cast<std::size_t>(signals.shape(0));
  const auto e = static_cast<std::size_t>(signals.shape(1)), d = static_cast<std::size_t>(signals.shape(2));
  if (labels.size() != n) throw py::value_error("one label per trial is required");
  ftl::TrialSet set{subject, classes, {}};
  const double* src = signals.data();
  for (std::size_t i = 0; i < n; ++i, src += e * d)
    set.trials.push_back({ftl::Matrix(e, d, std::vector<double>(src, src + e * d)), labels[i]});
  set.validate();
  return set;
}

py::dict run_summary(const ftl::cli::RunResult& r) {
  std::map<std::string, double> means;
  for (const auto& f : r.folds) means.try_emplace(f.method, r.mean_accuracy(f.method));
  py::list folds;
  for (const auto& f : r.folds) {
    py::dict d;
    d["method"] = f.method;
    d["subject"] = f.subject;
    d["fold"] = f.fold;
    d["accuracy"] = f.accuracy;
    folds.append(d);
  }
  py::dict out;
  out["mean_accuracy"] = means;
  out["folds"] = folds;
  return out;
}

ftl::cli::CommandContext context(const std::filesystem::path& out, std::uint64_t seed) {
  return {out, seed, nullptr};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "SPD manifold network, federated transfer learning and Riemannian baselines";

  py::register_exception<ftl::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ftl::FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ftl::ConvergenceError>(m, "ConvergenceError", PyExc_RuntimeError);
  py::register_exception<ftl::DivergenceError>(m, "DivergenceError", PyExc_RuntimeError);

  // SPD algebra
  m.def("sym_eig", [](const Array& a) {
    const auto e = ftl::sym_eig(to_sym(a));
    return py::make_tuple(to_vector(e.values), to_array(e.vectors));
  }, py::arg("m"), "Eigenvalues (ascending) and eigenvectors (columns) of a symmetric matrix.");
  m.def("spd_log", [](const Array& p) { return to_array(ftl::spd_log(to_spd(p)).matrix()); }, py::arg("p"));
  m.def("spd_exp", [](const Array& v) { return to_array(ftl::spd_exp(to_sym(v)).matrix()); }, py::arg("v"));
  m.def("spd_sqrt", [](const Array& p) {
    auto [root, inv_root] = ftl::spd_sqrt_pair(to_spd(p));
    return py::make_tuple(to_array(root.matrix()), to_array(inv_root.matrix()));
  }, py::arg("p"), "P^(1/2) and P^(-1/2).");
  m.def("log_map", [](const Array& base, const Array& target) {
    return to_array(ftl::log_map(to_spd(base), to_spd(target)).matrix());
  }, py::arg("base"), py::arg("target"));
  m.def("geodesic_distance", [](const Array& p, const Array& q) {
    return ftl::geodesic_distance(to_spd(p), to_spd(q));
  }, py::arg("p"), py::arg("q"));
  m.def("frechet_mean", [](const std::vector<Array>& set, double tol, int max_iter) {
    return to_array(ftl::frechet_mean(to_spd_list(set), tol, max_iter).matrix());
  }, py::arg("set"), py::arg("tol") = 1e-8, py::arg("max_iter") = 100);
  m.def("covariance", [](const Array& x, double shrinkage) {
    return to_array(ftl::covariance(to_matrix(x), shrinkage).matrix());
  }, py::arg("x"), py::arg("shrinkage") = ftl::kDefaultShrinkage);
  m.def("eig_clamp", [](const Array& p, double eps) {
    return to_array(ftl::eig_clamp(to_sym(p), eps).matrix());
  }, py::arg("p"), py::arg("eps") = ftl::kDefaultClampEps);

  // losses
  m.def("gaussian_kernel", [](const Array& a, const Array& b, double sigma) {
    return ftl::gaussian_kernel(to_sym(a), to_sym(b), sigma);
  }, py::arg("a"), py::arg("b"), py::arg("sigma") = ftl::kDefaultKernelSigma);
  m.def("mmd2", [](const std::vector<Array>& a, const std::vector<Array>& b, double sigma) {
    return ftl::mmd2(to_spd_list(a), to_spd_list(b), sigma);
  }, py::arg("a"), py::arg("b"), py::arg("sigma") = ftl::kDefaultKernelSigma);

  // federated averaging of uploaded shared weights, keyed by client id
  m.def("fedavg", [](const std::map<std::uint32_t, std::vector<Array>>& uploads) {
    std::vector<ftl::RoundMessage> msgs;
    for (const auto& [id, tensors] : uploads) {
      ftl::RoundMessage msg{ftl::Direction::kUpload, 0, id, {}, {}};
      for (const auto& t : tensors) {
        ftl::Tensor tensor;
        for (py::ssize_t k = 0; k < t.ndim(); ++k) tensor.shape.push_back(static_cast<std::uint32_t>(t.shape(k)));
        tensor.values.assign(t.data(), t.data() + t.size());
        msg.shared.push_back(std::move(tensor));
      }
      msgs.push_back(std::move(msg));
    }
    py::list out;
    for (const auto& t : ftl::fedavg(msgs)) {
      std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
      Array a(shape);
      std::copy(t.values.begin(), t.values.end(), a.mutable_data());
      out.append(a);
    }
    return out;
  }, py::arg("uploads"), "Average shared tensors from {client_id: [arrays]}.");

  // data
  m.def("load_trials", [](const std::filesystem::path& path) { return trials_to_dict(ftl::load_trials(path)); },
        py::arg("path"), "Read an EEGTRIALS v1 file into a dict.");
  m.def("save_trials", [](const std::filesystem::path& path, const std::string& subject, std::size_t classes,
                          const Array& signals, const std::vector<std::size_t>& labels) {
    ftl::save_trials(trials_from(subject, classes, signals, labels), path);
  }, py::arg("path"), py::arg("subject"), py::arg("classes"), py::arg("signals"), py::arg("labels"));

  // baselines
  py::class_<ftl::MdmModel>(m, "MdmModel")
      .def_property_readonly("means", [](const ftl::MdmModel& model) {
        py::list out;
        for (const auto& p : model.means) out.append(to_array(p.matrix()));
        return out;
      })
      .def("predict", [](const ftl::MdmModel& model, const Array& cov) { return ftl::mdm_predict(model, to_spd(cov)); },
           py::arg("cov"));
  m.def("mdm_train", [](const std::vector<Array>& covs, const std::vector<std::size_t>& labels) {
    return ftl::mdm_train(to_spd_list(covs), labels);
  }, py::arg("covs"), py::arg("labels"));

  py::class_<ftl::TsmModel>(m, "TsmModel")
      .def_property_readonly("reference", [](const ftl::TsmModel& model) { return to_array(model.reference.matrix()); })
      .def_readonly("iterations", &ftl::TsmModel::iterations)
      .def("features", [](const ftl::TsmModel& model, const Array& cov) {
        return to_vector(ftl::tsm_features(model.reference, to_spd(cov)));
      }, py::arg("cov"))
      .def("predict", [](const ftl::TsmModel& model, const Array& cov) { return ftl::tsm_predict(model, to_spd(cov)); },
           py::arg("cov"));
  m.def("tsm_train", [](const std::vector<Array>& covs, const std::vector<std::size_t>& labels) {
    return ftl::tsm_train(to_spd_list(covs), labels);
  }, py::arg("covs"), py::arg("labels"));

  // commands, same behaviour and output files as the command-line tool
  m.def("synth", [](const std::filesystem::path& config, std::uint64_t seed, const std::filesystem::path& out) {
    return ftl::cli::cmd_synth(ftl::cli::load_synth_config(config), context(out, seed));
  }, py::arg("config"), py::arg("seed"), py::arg("out"), "Write a synthetic EEGTRIALS file; returns its path.");
  m.def("train_specific", [](const std::filesystem::path& config, std::uint64_t seed, const std::filesystem::path& out) {
    return run_summary(ftl::cli::cmd_train_specific(ftl::cli::load_run_config(config), context(out, seed)));
  }, py::arg("config"), py::arg("seed"), py::arg("out"));
  m.def("train_adaptive", [](const std::filesystem::path& config, std::uint64_t seed, const std::filesystem::path& out) {
    return run_summary(ftl::cli::cmd_train_adaptive(ftl::cli::load_run_config(config), context(out, seed)));
  }, py::arg("config"), py::arg("seed"), py::arg("out"));
  m.def("baseline", [](const std::filesystem::path& config, const std::string& algorithm, std::uint64_t seed,
                       const std::filesystem::path& out) {
    ftl::cli::BaselineAlgorithm algo;
    if (algorithm == "mdm") {
      algo = ftl::cli::BaselineAlgorithm::kMdm;
    } else if (algorithm == "tsm") {
      algo = ftl::cli::BaselineAlgorithm::kTsm;
    } else {
      throw py::value_error("algorithm must be 'mdm' or 'tsm'");
    }
    return run_summary(ftl::cli::cmd_baseline(ftl::cli::load_run_config(config), algo, context(out, seed)));
  }, py::arg("config"), py::arg("algorithm"), py::arg("seed"), py::arg("out"));
}

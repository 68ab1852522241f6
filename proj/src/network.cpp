#include "ftl/network.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace ftl {

std::size_t ModelParams::input_dim() const {
  return local.empty() ? static_cast<std::size_t>(std::llround(std::sqrt(shared.in_dim())))
                       : local.front().in_dim();
}

std::size_t ModelParams::common_dim() const {
  return local.empty() ? input_dim() : local.back().out_dim();
}

ModelParams init_params(std::size_t input_dim, std::span<const std::size_t> chain,
                        std::size_t num_classes, Rng& rng) {
  ModelParams params;
  std::size_t dim = input_dim;
  for (std::size_t out : chain) {
    params.local.push_back(make_bimap(dim, out, rng));
    dim = out;
  }
  params.shared = make_dense(dim * dim, num_classes, rng);
  return params;
}

void validate_params(const ModelParams& params) {
  for (std::size_t i = 0; i < params.local.size(); ++i) {
    const auto& w = params.local[i].weight;
    if (w.rows() == 0 || w.rows() > w.cols()) {
      throw std::invalid_argument("BiMap layer " + std::to_string(i) + " has shape " +
                                  std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                                  "; need 0 < d_out <= d_in");
    }
    if (i > 0 && params.local[i - 1].out_dim() != w.cols()) {
      throw std::invalid_argument("BiMap layer " + std::to_string(i) + " expects input dim " +
                                  std::to_string(w.cols()) + " but layer " +
                                  std::to_string(i - 1) + " outputs " +
                                  std::to_string(params.local[i - 1].out_dim()));
    }
    if (!w.all_finite()) throw std::invalid_argument("BiMap layer has non-finite weights");
  }
  const std::size_t d = params.common_dim();
  if (params.shared.in_dim() != d * d) {
    throw std::invalid_argument("dense layer expects " + std::to_string(params.shared.in_dim()) +
                                " inputs but the common space flattens to " +
                                std::to_string(d * d));
  }
  if (params.shared.bias.size() != params.shared.out_dim()) {
    throw std::invalid_argument("dense bias length does not match output count");
  }
}

ModelGradients ModelGradients::zeros_like(const ModelParams& params) {
  ModelGradients g;
  for (const auto& layer : params.local)
    g.local.emplace_back(layer.weight.rows(), layer.weight.cols());
  g.shared_weight = Matrix(params.shared.weight.rows(), params.shared.weight.cols());
  g.shared_bias.assign(params.shared.bias.size(), 0.0);
  return g;
}

ModelGradients& ModelGradients::operator+=(const ModelGradients& other) {
  if (local.size() != other.local.size() || shared_bias.size() != other.shared_bias.size()) {
    throw std::invalid_argument("ModelGradients: layer count mismatch");
  }
  for (std::size_t i = 0; i < local.size(); ++i) local[i] += other.local[i];
  shared_weight += other.shared_weight;
  for (std::size_t i = 0; i < shared_bias.size(); ++i) shared_bias[i] += other.shared_bias[i];
  return *this;
}

ModelGradients& ModelGradients::operator*=(double s) {
  for (auto& m : local) m *= s;
  shared_weight *= s;
  for (double& b : shared_bias) b *= s;
  return *this;
}

bool ModelGradients::all_finite() const {
  for (const auto& m : local)
    if (!m.all_finite()) return false;
  if (!shared_weight.all_finite()) return false;
  for (double b : shared_bias)
    if (!std::isfinite(b)) return false;
  return true;
}

ForwardTape network_forward(const ModelParams& params, const SpdMatrix& s, double eps) {
  if (s.dim() != params.input_dim()) {
    throw std::invalid_argument("network_forward: input dim " + std::to_string(s.dim()) +
                                ", network expects " + std::to_string(params.input_dim()));
  }
  ForwardTape tape;
  tape.eps = eps;
  SpdMatrix current = s;
  for (const auto& layer : params.local) {
    BiMapTapeEntry entry{current, {}};
    const SymMatrix raw = bimap_apply(layer, current);
    current = eig_clamp(raw, eps, entry.raw_eig);
    tape.bimap.push_back(std::move(entry));
  }
  tape.reduced = current;
  tape.features = flatten(logeig_forward(current, eps, tape.logeig));
  tape.probs = dense_softmax_forward(params.shared, tape.features);
  return tape;
}

SpdMatrix reduce(const ModelParams& params, const SpdMatrix& s, double eps) {
  SpdMatrix current = s;
  for (const auto& layer : params.local) current = bimap_forward(layer, current, eps);
  return current;
}

ModelGradients network_backward(const ModelParams& params, const ForwardTape& tape,
                                std::size_t label, double ce_scale, const Matrix* reduced_grad) {
  if (tape.bimap.size() != params.local.size() ||
      tape.features.size() != params.shared.in_dim() ||
      tape.probs.size() != params.shared.out_dim()) {
    throw std::invalid_argument("network_backward: tape does not match parameters");
  }
  ModelGradients grads;
  grads.local.resize(params.local.size());

  auto dense = dense_softmax_backward(params.shared, tape.features, tape.probs, label, ce_scale);
  grads.shared_weight = std::move(dense.d_weight);
  grads.shared_bias = std::move(dense.d_bias);

  Matrix g = logeig_backward(tape.logeig, unflatten(dense.d_input)).matrix();
  if (reduced_grad != nullptr) g += SymMatrix(*reduced_grad).matrix();

  for (std::size_t k = params.local.size(); k-- > 0;) {
    const auto& entry = tape.bimap[k];
    const SymMatrix g_raw = eig_clamp_backward(entry.raw_eig, tape.eps, g);
    auto layer_grads = bimap_backward(params.local[k], entry.input, g_raw.matrix());
    grads.local[k] = std::move(layer_grads.d_weight);
    g = layer_grads.d_input.matrix();
  }
  return grads;
}

std::size_t predict(const ModelParams& params, const SpdMatrix& s, double eps) {
  return argmax(network_forward(params, s, eps).probs);
}

std::vector<double> pack(const ModelParams& params) {
  std::vector<double> out;
  for (const auto& layer : params.local) {
    const auto d = layer.weight.data();
    out.insert(out.end(), d.begin(), d.end());
  }
  const auto w = params.shared.weight.data();
  out.insert(out.end(), w.begin(), w.end());
  out.insert(out.end(), params.shared.bias.begin(), params.shared.bias.end());
  return out;
}

void unpack(std::span<const double> values, ModelParams& params) {
  std::size_t pos = 0;
  auto take = [&](std::span<double> dst) {
    if (pos + dst.size() > values.size()) throw std::invalid_argument("unpack: too few values");
    std::copy(values.begin() + static_cast<std::ptrdiff_t>(pos),
              values.begin() + static_cast<std::ptrdiff_t>(pos + dst.size()), dst.begin());
    pos += dst.size();
  };
  for (auto& layer : params.local) take(layer.weight.data());
  take(params.shared.weight.data());
  take(params.shared.bias);
  if (pos != values.size()) throw std::invalid_argument("unpack: too many values");
}

std::vector<double> pack(const ModelGradients& grads) {
  std::vector<double> out;
  for (const auto& m : grads.local) {
    const auto d = m.data();
    out.insert(out.end(), d.begin(), d.end());
  }
  const auto w = grads.shared_weight.data();
  out.insert(out.end(), w.begin(), w.end());
  out.insert(out.end(), grads.shared_bias.begin(), grads.shared_bias.end());
  return out;
}

}  // namespace ftl

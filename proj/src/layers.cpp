#include "ftl/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "ftl/stiefel.hpp"

namespace ftl {
namespace {

constexpr double kNearEqualGap = 1e-10;

bool near_equal(double a, double b) {
  return std::abs(a - b) < kNearEqualGap * std::max(std::abs(a), std::abs(b));
}

Matrix symmetric_part(const Matrix& g) {
  Matrix s(g.rows(), g.cols());
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j) s(i, j) = (g(i, j) + g(j, i)) / 2.0;
  return s;
}

// U·(L ∘ (Uᵀ·sym(G)·U))·Uᵀ where L holds first divided differences of the
// spectral function.
template <class Quotient>
SymMatrix loewner_backward(const EigenDecomposition& eig, const Matrix& g, Quotient quotient) {
  const std::size_t n = eig.values.size();
  if (g.rows() != n || g.cols() != n) {
    throw std::invalid_argument("spectral backward: gradient is " + std::to_string(g.rows()) +
                                "x" + std::to_string(g.cols()) + ", expected " +
                                std::to_string(n));
  }
  const Matrix& u = eig.vectors;
  Matrix inner = matmul_tn(u, matmul(symmetric_part(g), u));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) inner(i, j) *= quotient(eig.values[i], eig.values[j]);
  return SymMatrix(matmul_nt(matmul(u, inner), u));
}

void require_dim(std::size_t actual, std::size_t expected, const char* where) {
  if (actual != expected) {
    throw std::invalid_argument(std::string(where) + ": dimension " + std::to_string(actual) +
                                ", expected " + std::to_string(expected));
  }
}

}  // namespace

BiMapLayer make_bimap(std::size_t in_dim, std::size_t out_dim, Rng& rng) {
  if (out_dim == 0 || out_dim > in_dim) {
    throw std::invalid_argument("make_bimap: need 0 < d_out <= d_in, got " +
                                std::to_string(out_dim) + " > " + std::to_string(in_dim));
  }
  Matrix g(in_dim, in_dim);
  for (double& v : g.data()) v = rng.normal();
  orthonormalize_rows(g);
  Matrix w(out_dim, in_dim);
  for (std::size_t r = 0; r < out_dim; ++r)
    for (std::size_t c = 0; c < in_dim; ++c) w(r, c) = g(r, c);
  return BiMapLayer{std::move(w)};
}

SymMatrix bimap_apply(const BiMapLayer& layer, const SpdMatrix& s) {
  require_dim(s.dim(), layer.in_dim(), "bimap_forward");
  return SymMatrix(matmul_nt(matmul(layer.weight, s.matrix()), layer.weight));
}

SpdMatrix bimap_forward(const BiMapLayer& layer, const SpdMatrix& s, double eps) {
  return eig_clamp(bimap_apply(layer, s), eps);
}

BiMapGradients bimap_backward(const BiMapLayer& layer, const SpdMatrix& s, const Matrix& g) {
  require_dim(s.dim(), layer.in_dim(), "bimap_backward");
  require_dim(g.rows(), layer.out_dim(), "bimap_backward");
  require_dim(g.cols(), layer.out_dim(), "bimap_backward");
  const Matrix g2 = g + g.transpose();
  Matrix d_weight = matmul(matmul(g2, layer.weight), s.matrix());
  SymMatrix d_input(matmul(matmul_tn(layer.weight, g), layer.weight));
  return {std::move(d_weight), std::move(d_input)};
}

SymMatrix eig_clamp_backward(const EigenDecomposition& input_eig, double eps, const Matrix& g) {
  if (input_eig.values.empty() || input_eig.values.front() >= eps) return SymMatrix(g);
  auto clamp = [eps](double x) { return std::max(x, eps); };
  return loewner_backward(input_eig, g, [&](double a, double b) {
    if (near_equal(a, b)) return a >= eps ? 1.0 : 0.0;
    return (clamp(a) - clamp(b)) / (a - b);
  });
}

SymMatrix logeig_forward(const SpdMatrix& p, double eps, LogEigTape& tape) {
  tape.eps = eps;
  const SpdMatrix clamped = eig_clamp(p, eps, tape.clamp_eig);
  return spd_log(clamped, tape.log_eig);
}

SymMatrix logeig_forward(const SpdMatrix& p, double eps) {
  LogEigTape tape;
  return logeig_forward(p, eps, tape);
}

SymMatrix logeig_backward(const LogEigTape& tape, const Matrix& g) {
  if (tape.log_eig.values.empty() && g.size() != 0) {
    throw std::invalid_argument("logeig_backward: empty tape entry");
  }
  const SymMatrix d_clamped = loewner_backward(tape.log_eig, g, [](double a, double b) {
    if (near_equal(a, b)) return 1.0 / a;
    // log(a/b)/(a−b) without cancellation for close eigenvalues.
    return std::log1p((a - b) / b) / (a - b);
  });
  return eig_clamp_backward(tape.clamp_eig, tape.eps, d_clamped.matrix());
}

std::vector<double> flatten(const SymMatrix& v) {
  const auto d = v.matrix().data();
  return {d.begin(), d.end()};
}

Matrix unflatten(std::span<const double> values) {
  const auto n = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(values.size()))));
  if (n * n != values.size()) {
    throw std::invalid_argument("unflatten: length " + std::to_string(values.size()) +
                                " is not a perfect square");
  }
  return Matrix(n, n, std::vector<double>(values.begin(), values.end()));
}

DenseLayer make_dense(std::size_t in_dim, std::size_t out_dim, Rng& rng) {
  if (in_dim == 0 || out_dim == 0) throw std::invalid_argument("make_dense: empty layer");
  DenseLayer layer{Matrix(out_dim, in_dim), std::vector<double>(out_dim, 0.0)};
  for (double& w : layer.weight.data()) w = rng.uniform(-0.01, 0.01);
  return layer;
}

std::vector<double> dense_logits(const DenseLayer& layer, std::span<const double> x) {
  require_dim(x.size(), layer.in_dim(), "dense_softmax_forward");
  std::vector<double> logits(layer.out_dim());
  for (std::size_t r = 0; r < layer.out_dim(); ++r) {
    double s = layer.bias[r];
    for (std::size_t c = 0; c < layer.in_dim(); ++c) s += layer.weight(r, c) * x[c];
    logits[r] = s;
  }
  return logits;
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) return {};
  const double top = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - top);
    total += out[i];
  }
  for (double& p : out) p /= total;
  return out;
}

std::vector<double> dense_softmax_forward(const DenseLayer& layer, std::span<const double> x) {
  return softmax(dense_logits(layer, x));
}

DenseGradients dense_softmax_backward(const DenseLayer& layer, std::span<const double> x,
                                      std::span<const double> probs, std::size_t label,
                                      double scale) {
  require_dim(x.size(), layer.in_dim(), "dense_softmax_backward");
  require_dim(probs.size(), layer.out_dim(), "dense_softmax_backward");
  if (label >= layer.out_dim()) {
    throw std::out_of_range("dense_softmax_backward: label " + std::to_string(label) +
                            " outside [0, " + std::to_string(layer.out_dim()) + ")");
  }
  std::vector<double> delta(probs.begin(), probs.end());
  delta[label] -= 1.0;
  for (double& d : delta) d *= scale;

  DenseGradients out{Matrix(layer.out_dim(), layer.in_dim()), delta,
                     std::vector<double>(layer.in_dim(), 0.0)};
  for (std::size_t r = 0; r < layer.out_dim(); ++r) {
    for (std::size_t c = 0; c < layer.in_dim(); ++c) {
      out.d_weight(r, c) = delta[r] * x[c];
      out.d_input[c] += layer.weight(r, c) * delta[r];
    }
  }
  return out;
}

std::size_t argmax(std::span<const double> probs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[best]) best = i;
  return best;
}

}  // namespace ftl

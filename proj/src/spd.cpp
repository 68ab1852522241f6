#include "ftl/spd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>

#include "ftl/error.hpp"

namespace ftl {
namespace {

constexpr int kMaxSweeps = 100;
constexpr double kOffDiagonalTol = 1e-12;
constexpr double kSignTieTol = 1e-12;

Matrix symmetrize(const Matrix& m) {
  if (!m.square()) {
    throw std::invalid_argument("SymMatrix: matrix is " + std::to_string(m.rows()) + "x" +
                                std::to_string(m.cols()) + ", not square");
  }
  if (!m.all_finite()) throw std::domain_error("SymMatrix: non-finite entry");
  const std::size_t n = m.rows();
  Matrix s(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) s(i, j) = (m(i, j) + m(j, i)) / 2.0;
  return s;
}

bool cholesky_succeeds(const Matrix& a) {
  const std::size_t n = a.rows();
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = a(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) return false;
    l(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return true;
}

double off_diagonal_norm(const Matrix& a) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      if (i != j) s += a(i, j) * a(i, j);
  return std::sqrt(s);
}

void require_same_dim(const SymMatrix& a, const SymMatrix& b, const char* where) {
  if (a.dim() != b.dim()) {
    throw std::invalid_argument(std::string(where) + ": dimension " + std::to_string(a.dim()) +
                                " vs " + std::to_string(b.dim()));
  }
}

template <class F>
std::vector<double> map_values(const std::vector<double>& values, F f) {
  std::vector<double> out(values.size());
  std::transform(values.begin(), values.end(), out.begin(), f);
  return out;
}

void require_positive_spectrum(const EigenDecomposition& eig, const char* where) {
  if (!eig.values.empty() && !(eig.values.front() > 0.0)) {
    std::ostringstream os;
    os << where << ": eigenvalue " << eig.values.front() << " is not positive";
    throw std::domain_error(os.str());
  }
}

}  // namespace

SymMatrix::SymMatrix(const Matrix& m) : m_(symmetrize(m)) {}

SpdMatrix::SpdMatrix(const Matrix& m) : SpdMatrix(SymMatrix(m)) {}

SpdMatrix::SpdMatrix(const SymMatrix& s) : SymMatrix(s) {
  if (cholesky_succeeds(m_)) return;
  const auto eig = sym_eig(s);
  require_positive_spectrum(eig, "SpdMatrix");
}

SpdMatrix SpdMatrix::from_spectrum(std::span<const double> values, const Matrix& vectors) {
  for (double v : values) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      std::ostringstream os;
      os << "SpdMatrix::from_spectrum: eigenvalue " << v << " is not positive and finite";
      throw std::domain_error(os.str());
    }
  }
  return SpdMatrix(reconstruct(values, vectors), Trusted{});
}

EigenDecomposition sym_eig(const SymMatrix& m) {
  const std::size_t n = m.dim();
  Matrix a = m.matrix();
  Matrix v = Matrix::identity(n);
  const double tol = kOffDiagonalTol * a.frobenius_norm();

  double off = off_diagonal_norm(a);
  int sweep = 0;
  // One sweep past the tolerance: convergence is quadratic, so the extra sweep
  // takes the off-diagonal mass to roundoff, which the small eigenvalues of
  // ill-conditioned inputs need for accurate logarithms.
  bool polish = off > 0.0;
  while (off > tol || polish) {
    if (off <= tol) polish = false;
    if (sweep == kMaxSweeps) {
      if (off <= tol) break;
      std::ostringstream os;
      os << "sym_eig: no convergence after " << kMaxSweeps << " sweeps (dim " << n
         << ", off-diagonal norm " << off << ", Frobenius norm " << m.matrix().frobenius_norm()
         << ")";
      throw ConvergenceError(os.str(), off);
    }
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        double t;
        if (std::abs(theta) > 1e150) {
          t = 1.0 / (2.0 * theta);
        } else {
          t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
          if (theta < 0.0) t = -t;
        }
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          if (k == p || k == q) continue;
          const double akp = a(k, p);
          const double akq = a(k, q);
          a(k, p) = a(p, k) = c * akp - s * akq;
          a(k, q) = a(q, k) = s * akp + c * akq;
        }
        a(p, p) -= t * apq;
        a(q, q) += t * apq;
        a(p, q) = a(q, p) = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p);
          const double vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
    off = off_diagonal_norm(a);
    ++sweep;
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return a(i, i) < a(j, j); });

  EigenDecomposition out;
  out.values.resize(n);
  out.vectors = Matrix(n, n);
  for (std::size_t c = 0; c < n; ++c) {
    const std::size_t src = order[c];
    out.values[c] = a(src, src);
    double max_abs = 0.0;
    for (std::size_t r = 0; r < n; ++r) max_abs = std::max(max_abs, std::abs(v(r, src)));
    std::size_t lead = 0;
    for (std::size_t r = 0; r < n; ++r) {
      if (std::abs(v(r, src)) >= max_abs * (1.0 - kSignTieTol)) {
        lead = r;
        break;
      }
    }
    const double sign = v(lead, src) < 0.0 ? -1.0 : 1.0;
    for (std::size_t r = 0; r < n; ++r) out.vectors(r, c) = sign * v(r, src);
  }
  return out;
}

Matrix reconstruct(std::span<const double> values, const Matrix& vectors) {
  const std::size_t n = vectors.rows();
  if (values.size() != vectors.cols()) throw std::invalid_argument("reconstruct: size mismatch");
  Matrix scaled = vectors;
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < values.size(); ++c) scaled(r, c) *= values[c];
  Matrix out = matmul_nt(scaled, vectors);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double avg = (out(i, j) + out(j, i)) / 2.0;
      out(i, j) = out(j, i) = avg;
    }
  }
  return out;
}

SymMatrix spd_log(const SpdMatrix& p) {
  EigenDecomposition eig;
  return spd_log(p, eig);
}

SymMatrix spd_log(const SpdMatrix& p, EigenDecomposition& eig) {
  eig = sym_eig(p);
  require_positive_spectrum(eig, "spd_log");
  const auto logs = map_values(eig.values, [](double x) { return std::log(x); });
  return SymMatrix(reconstruct(logs, eig.vectors));
}

SpdMatrix spd_exp(const SymMatrix& v) {
  const auto eig = sym_eig(v);
  const double max_log = std::log(std::numeric_limits<double>::max());
  const double min_log = std::log(std::numeric_limits<double>::min());
  if (!eig.values.empty() && (eig.values.back() > max_log || eig.values.front() < min_log)) {
    std::ostringstream os;
    os << "spd_exp: eigenvalue range [" << eig.values.front() << ", " << eig.values.back()
       << "] overflows double precision";
    throw std::range_error(os.str());
  }
  const auto exps = map_values(eig.values, [](double x) { return std::exp(x); });
  return SpdMatrix::from_spectrum(exps, eig.vectors);
}

std::pair<SpdMatrix, SpdMatrix> spd_sqrt_pair(const SpdMatrix& p) {
  const auto eig = sym_eig(p);
  require_positive_spectrum(eig, "spd_sqrt_pair");
  const auto roots = map_values(eig.values, [](double x) { return std::sqrt(x); });
  const auto inv_roots = map_values(eig.values, [](double x) { return 1.0 / std::sqrt(x); });
  return {SpdMatrix::from_spectrum(roots, eig.vectors),
          SpdMatrix::from_spectrum(inv_roots, eig.vectors)};
}

SpdMatrix spd_inverse(const SpdMatrix& p) {
  const auto eig = sym_eig(p);
  require_positive_spectrum(eig, "spd_inverse");
  const auto inv = map_values(eig.values, [](double x) { return 1.0 / x; });
  return SpdMatrix::from_spectrum(inv, eig.vectors);
}

SymMatrix log_map(const SpdMatrix& base, const SpdMatrix& target) {
  require_same_dim(base, target, "log_map");
  if (base.matrix() == target.matrix()) return SymMatrix(Matrix(base.dim(), base.dim()));
  if (base.matrix() == Matrix::identity(base.dim())) return spd_log(target);
  const auto [root, inv_root] = spd_sqrt_pair(base);
  const SpdMatrix whitened(matmul(matmul(inv_root.matrix(), target.matrix()), inv_root.matrix()));
  const SymMatrix log_w = spd_log(whitened);
  return SymMatrix(matmul(matmul(root.matrix(), log_w.matrix()), root.matrix()));
}

double tangent_inner(const SpdMatrix& p, const SymMatrix& v1, const SymMatrix& v2) {
  require_same_dim(p, v1, "tangent_inner");
  require_same_dim(p, v2, "tangent_inner");
  const Matrix p_inv = spd_inverse(p).matrix();
  const Matrix a = matmul(v1.matrix(), p_inv);
  const Matrix b = matmul(v2.matrix(), p_inv);
  // trace(A·B) = Σ_ij A_ij·B_ji
  return frobenius_inner(a, b.transpose());
}

double geodesic_distance(const SpdMatrix& p, const SpdMatrix& q) {
  require_same_dim(p, q, "geodesic_distance");
  if (p.matrix() == q.matrix()) return 0.0;
  const auto [root, inv_root] = spd_sqrt_pair(p);
  const SymMatrix whitened(matmul(matmul(inv_root.matrix(), q.matrix()), inv_root.matrix()));
  const auto eig = sym_eig(whitened);
  require_positive_spectrum(eig, "geodesic_distance");
  double s = 0.0;
  for (double l : eig.values) {
    const double lg = std::log(l);
    s += lg * lg;
  }
  return std::sqrt(s);
}

SpdMatrix log_euclidean_mean(std::span<const SpdMatrix> set) {
  if (set.empty()) throw std::invalid_argument("log_euclidean_mean: empty set");
  Matrix acc(set.front().dim(), set.front().dim());
  for (const auto& p : set) {
    require_same_dim(set.front(), p, "log_euclidean_mean");
    acc += spd_log(p).matrix();
  }
  acc *= 1.0 / static_cast<double>(set.size());
  return spd_exp(SymMatrix(acc));
}

SpdMatrix frechet_mean(std::span<const SpdMatrix> set, double tol, int max_iter) {
  if (set.empty()) throw std::invalid_argument("frechet_mean: empty set");
  for (const auto& p : set) require_same_dim(set.front(), p, "frechet_mean");
  if (set.size() == 1) return set.front();

  const std::size_t n = set.front().dim();
  SpdMatrix mean = log_euclidean_mean(set);
  double residual = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter <= max_iter; ++iter) {
    const auto [root, inv_root] = spd_sqrt_pair(mean);
    Matrix step(n, n);
    for (const auto& p : set) {
      const SpdMatrix whitened(matmul(matmul(inv_root.matrix(), p.matrix()), inv_root.matrix()));
      step += spd_log(whitened).matrix();
    }
    step *= 1.0 / static_cast<double>(set.size());
    residual = step.frobenius_norm();
    if (residual <= tol) return mean;
    if (iter == max_iter) break;
    const SpdMatrix moved = spd_exp(SymMatrix(step));
    mean = SpdMatrix(matmul(matmul(root.matrix(), moved.matrix()), root.matrix()));
  }
  std::ostringstream os;
  os << "frechet_mean: no convergence after " << max_iter << " iterations (residual "
     << residual << ", tol " << tol << ")";
  throw ConvergenceError(os.str(), residual);
}

Matrix covariance_raw(const Matrix& x) {
  if (x.cols() < 2) {
    throw std::invalid_argument("covariance: need at least 2 samples, got " +
                                std::to_string(x.cols()));
  }
  if (!x.all_finite()) throw std::domain_error("covariance: non-finite sample");
  Matrix s = matmul_nt(x, x);
  s *= 1.0 / static_cast<double>(x.cols() - 1);
  return s;
}

SpdMatrix covariance(const Matrix& x, double shrinkage) {
  if (!(shrinkage >= 0.0 && shrinkage <= 1.0)) {
    throw std::invalid_argument("covariance: shrinkage must lie in [0, 1]");
  }
  Matrix s = covariance_raw(x);
  if (shrinkage > 0.0) {
    const double target = s.trace() / static_cast<double>(s.rows());
    s *= (1.0 - shrinkage);
    for (std::size_t i = 0; i < s.rows(); ++i) s(i, i) += shrinkage * target;
  }
  return SpdMatrix(s);
}

SpdMatrix eig_clamp(const SymMatrix& p, double eps) {
  EigenDecomposition eig;
  return eig_clamp(p, eps, eig);
}

SpdMatrix eig_clamp(const SymMatrix& p, double eps, EigenDecomposition& eig) {
  if (!(eps > 0.0)) throw std::invalid_argument("eig_clamp: eps must be positive");
  eig = sym_eig(p);
  if (eig.values.empty() || eig.values.front() >= eps) {
    // Spectrum already certified >= eps.
    return SpdMatrix(p.matrix(), SpdMatrix::Trusted{});
  }
  const auto clamped = map_values(eig.values, [eps](double x) { return std::max(x, eps); });
  return SpdMatrix::from_spectrum(clamped, eig.vectors);
}

}  // namespace ftl

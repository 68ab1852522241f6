#include "ftl/stiefel.hpp"

#include <cmath>
#include <stdexcept>

namespace ftl {

void orthonormalize_rows(Matrix& m) {
  if (m.rows() > m.cols()) throw std::invalid_argument("orthonormalize_rows: more rows than columns");
  for (std::size_t r = 0; r < m.rows(); ++r) {
    // Two passes of projection keep orthogonality at machine precision.
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t q = 0; q < r; ++q) {
        double dot = 0.0;
        for (std::size_t c = 0; c < m.cols(); ++c) dot += m(r, c) * m(q, c);
        for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) -= dot * m(q, c);
      }
    }
    double norm = 0.0;
    for (std::size_t c = 0; c < m.cols(); ++c) norm += m(r, c) * m(r, c);
    norm = std::sqrt(norm);
    if (!(norm > 1e-300)) throw std::domain_error("orthonormalize_rows: rank deficient rows");
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) /= norm;
  }
}

Matrix stiefel_tangent(const Matrix& w, const Matrix& g) {
  require_same_shape(w, g, "stiefel_tangent");
  Matrix gw = matmul_nt(g, w);
  Matrix sym(gw.rows(), gw.cols());
  for (std::size_t i = 0; i < gw.rows(); ++i)
    for (std::size_t j = 0; j < gw.cols(); ++j) sym(i, j) = (gw(i, j) + gw(j, i)) / 2.0;
  return g - matmul(sym, w);
}

}  // namespace ftl

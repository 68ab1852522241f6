#pragma once

#include "ftl/matrix.hpp"

namespace ftl {

/// Modified Gram-Schmidt over the rows of `m` (rows ≤ cols). Throws
/// std::domain_error if the rows are numerically dependent.
void orthonormalize_rows(Matrix& m);

/// Projects a Euclidean gradient onto the tangent space of the manifold of
/// row-orthonormal matrices at `w`: G − sym(G·Wᵀ)·W.
Matrix stiefel_tangent(const Matrix& w, const Matrix& g);

}  // namespace ftl

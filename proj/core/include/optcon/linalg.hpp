#pragma once

#include <complex>
#include <span>
#include <vector>

#include "optcon/types.hpp"

// Small dense helpers shared by the modules. Dimensions in this library are
// desk-scale (tens to low hundreds), so everything is materialized densely.
namespace optcon::linalg {

/// max |λ| over the eigenvalues of a square matrix.
double spectral_radius(const Matrix& m);

/// Largest singular value (0 for an empty matrix).
double sigma_max(const Matrix& m);

std::vector<std::complex<double>> eigenvalues(const Matrix& m);

bool is_symmetric(const Matrix& m, double tol = 1e-10);

/// Smallest eigenvalue of the symmetric part of `m`.
double min_symmetric_eigenvalue(const Matrix& m);

/// Block-diagonal concatenation.
Matrix block_diagonal(std::span<const Matrix> blocks);

/// Vertical concatenation; all blocks must have the same column count.
Matrix vstack(std::span<const Matrix> blocks, Eigen::Index cols);

/// Horizontal concatenation; all blocks must have the same row count.
Matrix hstack(std::span<const Matrix> blocks, Eigen::Index rows);

/// Throws DimensionError naming `what` unless m is rows x cols.
void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* what);

}  // namespace optcon::linalg

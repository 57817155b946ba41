#include "optcon/linalg.hpp"

#include <algorithm>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace optcon::linalg {

std::vector<std::complex<double>> eigenvalues(const Matrix& m) {
  if (m.rows() != m.cols()) throw DimensionError("eigenvalues: matrix is not square");
  if (m.size() == 0) return {};
  Eigen::EigenSolver<Matrix> solver(m, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) {
    throw NonConvergence("eigenvalues: QR iteration did not converge", 0, 0.0);
  }
  const auto& ev = solver.eigenvalues();
  return {ev.data(), ev.data() + ev.size()};
}

double spectral_radius(const Matrix& m) {
  double r = 0.0;
  for (const auto& z : eigenvalues(m)) r = std::max(r, std::abs(z));
  return r;
}

double sigma_max(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

bool is_symmetric(const Matrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  return (m - m.transpose()).cwiseAbs().maxCoeff() <= tol * std::max(1.0, m.cwiseAbs().maxCoeff());
}

double min_symmetric_eigenvalue(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  return solver.eigenvalues()(0);
}

Matrix block_diagonal(std::span<const Matrix> blocks) {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  for (const auto& b : blocks) {
    rows += b.rows();
    cols += b.cols();
  }
  Matrix out = Matrix::Zero(rows, cols);
  Eigen::Index r = 0;
  Eigen::Index c = 0;
  for (const auto& b : blocks) {
    out.block(r, c, b.rows(), b.cols()) = b;
    r += b.rows();
    c += b.cols();
  }
  return out;
}

Matrix vstack(std::span<const Matrix> blocks, Eigen::Index cols) {
  Eigen::Index rows = 0;
  for (const auto& b : blocks) {
    if (b.cols() != cols) throw DimensionError("vstack: column count mismatch");
    rows += b.rows();
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  for (const auto& b : blocks) {
    out.middleRows(r, b.rows()) = b;
    r += b.rows();
  }
  return out;
}

Matrix hstack(std::span<const Matrix> blocks, Eigen::Index rows) {
  Eigen::Index cols = 0;
  for (const auto& b : blocks) {
    if (b.rows() != rows) throw DimensionError("hstack: row count mismatch");
    cols += b.cols();
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  for (const auto& b : blocks) {
    out.middleCols(c, b.cols()) = b;
    c += b.cols();
  }
  return out;
}

void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* what) {
  if (m.rows() == rows && m.cols() == cols) return;
  std::ostringstream os;
  os << what << ": expected " << rows << "x" << cols << ", got " << m.rows() << "x" << m.cols();
  throw DimensionError(os.str());
}

}  // namespace optcon::linalg

#ifndef LSCHAIN_MATRIX_OPS_HPP
#define LSCHAIN_MATRIX_OPS_HPP

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <cstdint>

#include "lschain/types.hpp"

namespace lschain {

/// d^n with overflow guard (dimensions stay well below 2^31 by the caps).
inline long power_dim(int d, int n) {
  long r = 1;
  for (int i = 0; i < n; ++i) {
    r *= d;
    if (r > (1L << 40)) throw DimensionCapError("power_dim: dimension overflow");
  }
  return r;
}

/// Kronecker product, first factor most significant (lexicographic basis).
inline Matrix kron(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

inline Matrix identity(long dim) { return Matrix::Identity(dim, dim); }

/// Largest singular value (spectral norm). Exact dense computation.
inline double operator_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  if (m.rows() <= 64 && m.cols() <= 64) {
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues()(0);
  }
  Eigen::BDCSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

/// Matrix exponential via scaling-and-squaring Pade approximation.
inline Matrix matrix_exponential(const Matrix& m) {
  if (m.rows() != m.cols()) throw ConfigError("matrix_exponential: square matrix required");
  return m.exp();
}

/// (h + shift)^{-1/2} for Hermitian positive semidefinite h, via eigendecomposition.
/// Throws if any shifted eigenvalue is not strictly positive.
inline Matrix hermitian_inv_sqrt(const Matrix& h, double shift = 1.0) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  if (es.info() != Eigen::Success)
    throw Error("hermitian_inv_sqrt: eigendecomposition failed");
  RealVector vals = es.eigenvalues();
  RealVector w(vals.size());
  for (Eigen::Index i = 0; i < vals.size(); ++i) {
    double v = vals(i) + shift;
    if (v <= 0.0) throw PreconditionError("hermitian_inv_sqrt: nonpositive shifted eigenvalue");
    w(i) = 1.0 / std::sqrt(v);
  }
  return es.eigenvectors() * w.asDiagonal() * es.eigenvectors().adjoint();
}

/// (h + shift)^{1/2} for Hermitian PSD h.
inline Matrix hermitian_sqrt(const Matrix& h, double shift = 1.0) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(h);
  if (es.info() != Eigen::Success)
    throw Error("hermitian_sqrt: eigendecomposition failed");
  RealVector vals = es.eigenvalues();
  RealVector w(vals.size());
  for (Eigen::Index i = 0; i < vals.size(); ++i) {
    double v = vals(i) + shift;
    if (v < 0.0) throw PreconditionError("hermitian_sqrt: negative shifted eigenvalue");
    w(i) = std::sqrt(v);
  }
  return es.eigenvectors() * w.asDiagonal() * es.eigenvectors().adjoint();
}

// ---------------------------------------------------------------------------
// Structured products with middle-factor embeddings.
//
// For x acting on a space factored as L (x) M (x) R (dims l_dim, m_dim, r_dim,
// leftmost factor most significant), these compute products with
// (1_L (x) s (x) 1_R) without materializing the embedded matrix:
// cost O(dim^2 * m_dim) instead of O(dim^3).
// ---------------------------------------------------------------------------

using StridedMap = Eigen::Map<Matrix, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;
using ConstStridedMap =
    Eigen::Map<const Matrix, 0, Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>>;

/// y = (1_L (x) s (x) 1_R) * x.
inline Matrix embedded_mult_left(const Matrix& s, const Matrix& x, long l_dim,
                                 long m_dim, long r_dim) {
  const long dim = l_dim * m_dim * r_dim;
  if (x.rows() != dim || x.cols() != x.rows() || s.rows() != m_dim || s.cols() != m_dim)
    throw ConfigError("embedded_mult_left: dimension mismatch");
  Matrix y(dim, x.cols());
  // Row index decomposes as ((iL * m_dim) + m) * r_dim + iR.
  for (long iL = 0; iL < l_dim; ++iL) {
    for (long iR = 0; iR < r_dim; ++iR) {
      const long base = iL * m_dim * r_dim + iR;
      ConstStridedMap xs(x.data() + base, m_dim, x.cols(),
                         Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(dim, r_dim));
      StridedMap ys(y.data() + base, m_dim, x.cols(),
                    Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(dim, r_dim));
      ys = s * xs;
    }
  }
  return y;
}

/// y = x * (1_L (x) s (x) 1_R).
inline Matrix embedded_mult_right(const Matrix& x, const Matrix& s, long l_dim,
                                  long m_dim, long r_dim) {
  const long dim = l_dim * m_dim * r_dim;
  if (x.cols() != dim || x.rows() != x.cols() || s.rows() != m_dim || s.cols() != m_dim)
    throw ConfigError("embedded_mult_right: dimension mismatch");
  Matrix y(x.rows(), dim);
  // Column index decomposes as ((jL * m_dim) + m) * r_dim + jR.
  for (long jL = 0; jL < l_dim; ++jL) {
    for (long jR = 0; jR < r_dim; ++jR) {
      const long base = (jL * m_dim * r_dim + jR) * dim;
      ConstStridedMap xs(x.data() + base, dim, m_dim,
                         Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(r_dim * dim, 1));
      StridedMap ys(y.data() + base, dim, m_dim,
                    Eigen::Stride<Eigen::Dynamic, Eigen::Dynamic>(r_dim * dim, 1));
      ys = xs * s;
    }
  }
  return y;
}

/// acc += coeff * (1_L (x) m (x) 1_R), accumulated in place without forming
/// the embedded matrix.
inline void add_embedded(Matrix& acc, const Matrix& m, long l_dim, long m_dim,
                         long r_dim, Complex coeff = Complex(1.0, 0.0)) {
  const long dim = l_dim * m_dim * r_dim;
  if (acc.rows() != dim || acc.cols() != dim || m.rows() != m_dim || m.cols() != m_dim)
    throw ConfigError("add_embedded: dimension mismatch");
  for (long iL = 0; iL < l_dim; ++iL)
    for (long a = 0; a < m_dim; ++a)
      for (long b = 0; b < m_dim; ++b) {
        const Complex v = coeff * m(a, b);
        if (v == Complex(0.0, 0.0)) continue;
        for (long iR = 0; iR < r_dim; ++iR)
          acc(iL * m_dim * r_dim + a * r_dim + iR, iL * m_dim * r_dim + b * r_dim + iR) += v;
      }
}

}  // namespace lschain

#endif  // LSCHAIN_MATRIX_OPS_HPP

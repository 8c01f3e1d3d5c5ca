#ifndef LSCHAIN_OPERATOR_ALGEBRA_HPP
#define LSCHAIN_OPERATOR_ALGEBRA_HPP

#include <memory>
#include <utility>
#include <vector>

#include "lschain/chain_spec.hpp"
#include "lschain/matrix_ops.hpp"
#include "lschain/types.hpp"

namespace lschain {

/// Dense operator together with the interval of sites it acts on.
struct LocalOperator {
  Interval support;
  Matrix matrix;
};

/// Rank-1 vacuum projector on an interval space and its complement.
struct VacuumProjectors {
  Matrix p_minus;
  Matrix p_plus;
  Vector vacuum;  // the unit vector spanning range(p_minus)
};

// ---------------------------------------------------------------------------
// ChainContext: a ChainSpec plus per-interval-length caches.
//
// The on-site term is site-independent, so every cached object depends only on
// the interval's edge count. Caches are built eagerly at construction; the
// context is immutable afterwards and safe to share across threads.
// ---------------------------------------------------------------------------

class ChainContext {
 public:
  explicit ChainContext(ChainSpec spec, long dim_cap = 4096) : spec_(std::move(spec)) {
    spec_.validate_structure();
    const int d = spec_.local_dim;
    const int max_edges = spec_.n_sites - 1;
    if (power_dim(d, spec_.n_sites) > dim_cap)
      throw DimensionCapError("ChainContext: d^N exceeds dimension cap");

    // Diagonal fast path: both built models rotate h_local to its eigenbasis.
    bool diag = true;
    for (int i = 0; i < d && diag; ++i)
      for (int j = 0; j < d && diag; ++j)
        if (i != j && spec_.h_local(i, j) != Complex(0.0, 0.0)) diag = false;
    h_local_diagonal_ = diag;

    h0_.resize(max_edges + 1);
    inv_sqrt_.resize(max_edges + 1);
    sqrt_.resize(max_edges + 1);
    vac_.resize(max_edges + 1);
    for (int l = 0; l <= max_edges; ++l) {
      const long dim = power_dim(d, l + 1);
      // Vacuum vector: omega^(x)(l+1) in the lexicographic product basis.
      Vector v(dim);
      if (l == 0) {
        v = spec_.omega;
      } else {
        const Vector& prev = vac_[l - 1];
        for (int i = 0; i < d; ++i)
          v.segment(i * prev.size(), prev.size()) = spec_.omega(i) * prev;
      }
      vac_[l] = std::move(v);

      // Free Hamiltonian: Kronecker sum of on-site terms.
      Matrix h0 = Matrix::Zero(dim, dim);
      for (int site = 0; site <= l; ++site)
        add_embedded(h0, spec_.h_local, power_dim(d, site), d, power_dim(d, l - site));
      if (h_local_diagonal_) {
        RealVector diag_vals = h0.diagonal().real();
        RealVector wi(dim), ws(dim);
        for (long i = 0; i < dim; ++i) {
          const double s = diag_vals(i) + 1.0;
          if (s <= 0.0) throw PreconditionError("ChainContext: H0+1 not positive");
          wi(i) = 1.0 / std::sqrt(s);
          ws(i) = std::sqrt(s);
        }
        inv_sqrt_[l] = wi.cast<Complex>().asDiagonal();
        sqrt_[l] = ws.cast<Complex>().asDiagonal();
      } else {
        inv_sqrt_[l] = hermitian_inv_sqrt(h0, 1.0);
        sqrt_[l] = hermitian_sqrt(h0, 1.0);
      }
      h0_[l] = std::move(h0);
    }
  }

  const ChainSpec& spec() const { return spec_; }
  int n_sites() const { return spec_.n_sites; }
  int local_dim() const { return spec_.local_dim; }
  long dim_of_edges(int edges) const { return power_dim(spec_.local_dim, edges + 1); }
  bool h_local_diagonal() const { return h_local_diagonal_; }

  const Matrix& h0(int edges) const { return h0_.at(edges); }
  const Matrix& inv_sqrt_h0p1(int edges) const { return inv_sqrt_.at(edges); }
  const Matrix& sqrt_h0p1(int edges) const { return sqrt_.at(edges); }
  const Vector& vacuum(int edges) const { return vac_.at(edges); }

  /// Weighted norm of a matrix supported on an interval with `edges` edges.
  double weighted_norm(const Matrix& m, int edges) const {
    if (m.rows() != dim_of_edges(edges))
      throw SupportError("weighted_norm: matrix/interval dimension mismatch");
    const Matrix& w = inv_sqrt_.at(edges);
    return lschain::operator_norm(w * m * w);
  }

  Complex vacuum_expectation(const Matrix& m, int edges) const {
    const Vector& v = vac_.at(edges);
    return v.dot(m * v);  // Eigen dot conjugates the left argument
  }

 private:
  ChainSpec spec_;
  bool h_local_diagonal_ = false;
  std::vector<Matrix> h0_, inv_sqrt_, sqrt_;
  std::vector<Vector> vac_;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Pad `op` with identities so it acts on `target`; exact Kronecker embedding.
inline LocalOperator tensor_embed(const LocalOperator& op, const Interval& target, int local_dim) {
  if (!target.contains(op.support))
    throw SupportError("tensor_embed: support " + to_string(op.support) +
                       " not contained in target " + to_string(target));
  const long l_dim = power_dim(local_dim, op.support.left - target.left);
  const long m_dim = power_dim(local_dim, op.support.sites());
  const long r_dim = power_dim(local_dim, target.right() - op.support.right());
  if (op.matrix.rows() != m_dim) throw SupportError("tensor_embed: matrix dimension mismatch");
  Matrix out = Matrix::Zero(l_dim * m_dim * r_dim, l_dim * m_dim * r_dim);
  add_embedded(out, op.matrix, l_dim, m_dim, r_dim);
  return LocalOperator{target, std::move(out)};
}

inline VacuumProjectors vacuum_projectors(const Interval& interval, const ChainContext& ctx) {
  const Vector& v = ctx.vacuum(interval.edges);
  VacuumProjectors p;
  p.vacuum = v;
  p.p_minus = v * v.adjoint();
  p.p_plus = Matrix::Identity(v.size(), v.size()) - p.p_minus;
  return p;
}

inline LocalOperator free_hamiltonian(const Interval& interval, const ChainContext& ctx) {
  return LocalOperator{interval, ctx.h0(interval.edges)};
}

inline double weighted_norm(const LocalOperator& v, const ChainContext& ctx) {
  return ctx.weighted_norm(v.matrix, v.support.edges);
}

/// Unitary that maps basis vector 0 to `vac`, or an empty matrix when `vac`
/// already is basis vector 0 (so callers can take plain minors).
inline Matrix vacuum_rotation(const Vector& vac) {
  const long dim = vac.size();
  const bool vac_is_e0 =
      (std::abs(vac(0) - Complex(1.0, 0.0)) < 1e-14) && (vac.tail(dim - 1).norm() < 1e-14);
  if (vac_is_e0) return Matrix();
  Eigen::HouseholderQR<Matrix> qr(vac);
  Matrix q = qr.householderQ();
  // Column 0 of q is vac up to a unimodular factor; absorb that factor.
  const Complex phase = q.col(0).dot(vac);
  q.col(0) *= phase;
  return q;
}

/// Restriction of m to the orthogonal complement of `vac`: rotate the vacuum
/// onto basis vector 0 and take the trailing principal minor.
inline Matrix complement_block(const Matrix& m, const Vector& vac) {
  const long dim = m.rows();
  if (m.cols() != dim || vac.size() != dim)
    throw ConfigError("complement_block: dimension mismatch");
  const Matrix q = vacuum_rotation(vac);
  if (q.size() == 0) return m.bottomRightCorner(dim - 1, dim - 1);
  return Matrix((q.adjoint() * m * q).bottomRightCorner(dim - 1, dim - 1));
}

/// [p_plus (g - e - z) p_plus]^{-1} on the p_plus range, zero on the p_minus
/// range. Solved by dense LU of the restricted block.
inline Matrix reduced_resolvent(const Matrix& g, Complex e, Complex z, const Vector& vac,
                                double rcond_threshold = 1e-10) {
  const long dim = g.rows();
  if (g.cols() != dim || vac.size() != dim)
    throw ConfigError("reduced_resolvent: dimension mismatch");

  const Matrix q = vacuum_rotation(vac);
  const bool vac_is_e0 = (q.size() == 0);
  Matrix shifted = g - (e + z) * Matrix::Identity(dim, dim);
  Matrix m = vac_is_e0 ? Matrix(shifted.bottomRightCorner(dim - 1, dim - 1))
                       : Matrix((q.adjoint() * shifted * q).bottomRightCorner(dim - 1, dim - 1));

  Eigen::PartialPivLU<Matrix> lu(m);
  Matrix minv = lu.inverse();
  const double norm_m = m.cwiseAbs().colwise().sum().maxCoeff();
  const double norm_minv = minv.cwiseAbs().colwise().sum().maxCoeff();
  const double rcond = (norm_m > 0.0 && norm_minv > 0.0) ? 1.0 / (norm_m * norm_minv) : 0.0;
  if (!(rcond >= rcond_threshold))
    throw SingularRestrictionError("reduced_resolvent: restricted block numerically singular",
                                   rcond);

  Matrix r = Matrix::Zero(dim, dim);
  r.bottomRightCorner(dim - 1, dim - 1) = minv;
  if (!vac_is_e0) r = q * r * q.adjoint();
  return r;
}

inline Matrix reduced_resolvent(const Matrix& g, Complex e, Complex z,
                                const VacuumProjectors& proj, double rcond_threshold = 1e-10) {
  return reduced_resolvent(g, e, z, proj.vacuum, rcond_threshold);
}

/// Norm-level spec validation: seed weighted norms must respect the 1/2 cap.
inline void validate_spec(const ChainSpec& spec) {
  spec.validate_structure();
  ChainContext ctx(spec);
  for (const auto& s : spec.seeds) {
    const double w = ctx.weighted_norm(s.matrix, s.edges);
    if (w > 0.5 + 1e-12)
      throw ConfigError("validate_spec: seed weighted norm exceeds 1/2");
  }
}

}  // namespace lschain

#endif  // LSCHAIN_OPERATOR_ALGEBRA_HPP

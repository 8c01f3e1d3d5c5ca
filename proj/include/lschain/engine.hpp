#ifndef LSCHAIN_ENGINE_HPP
#define LSCHAIN_ENGINE_HPP

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "lschain/chain_models.hpp"
#include "lschain/operator_algebra.hpp"
#include "lschain/serialize.hpp"
#include "lschain/series_bounds.hpp"

namespace lschain {

// ---------------------------------------------------------------------------
// State and report types
// ---------------------------------------------------------------------------

/// Iteration state: current effective potential per interval (all edge counts
/// 1..N-1 are present; absent interactions are stored as zero matrices so the
/// table shape is step-independent), plus cached vacuum expectations.
struct PotentialTable {
  std::map<Interval, Matrix, StepOrder> entries;
  std::map<Interval, Complex, StepOrder> vac_expectations;
  StepIndex step;  // last processed step; (0, N) before the first step
  Complex tau;
};

struct EngineConfig {
  Complex tau;
  int j_max = 40;
  double tail_tol = 1e-14;
  double residual_tol = 1e-9;
  bool track_u = false;
  bool neumann_check = false;  // honored by the verification pipeline (observer)
  long dim_cap = 4096;
  bool compute_gap = true;

  void validate() const {
    if (j_max < 1) throw ConfigError("EngineConfig: j_max must be >= 1");
    if (!(tail_tol > 0.0)) throw ConfigError("EngineConfig: tail_tol must be > 0");
    if (!(residual_tol > 0.0)) throw ConfigError("EngineConfig: residual_tol must be > 0");
  }
};

struct SeriesDiagnostics {
  int j_used = 0;
  double tail_estimate = 0.0;
  double s_norm = 0.0;               // operator norm of the evaluated generator
  double v_diag_weighted_norm = 0.0;
  double delta = 0.0;                // gap quantity Delta(|tau|); may be negative
  bool certified_tail = false;       // |tau| inside the majorant disk a/(4 B1)
  bool snorm_bound_ok = true;        // per-term ||S_j|| <= (2 sqrt2/Delta)||V_j||_w
  double max_snorm_ratio = 0.0;      // max_j of the per-term ratio (when Delta > 0)
};

struct StepRecord {
  StepIndex step;
  Complex e;  // vacuum energy of the step Hamiltonian
  SeriesDiagnostics diag;
};

struct PerLengthNorm {
  int length = 0;  // edge count r
  double max_weighted_norm = 0.0;
  double decay_bound = 0.0;  // |tau|^{(r-1)/4}
};

struct RunReport {
  Complex e_n;
  double gap_margin = std::numeric_limits<double>::quiet_NaN();
  double blockdiag_residual = 0.0;
  std::vector<PerLengthNorm> per_length_norms;
  double t0_estimate = 0.0;
  std::vector<StepRecord> steps;
  double wall_time_s = 0.0;
  // Populated when track_u and the full space fits the cap:
  double u_unitarity = std::numeric_limits<double>::quiet_NaN();
  double u_conj_residual = std::numeric_limits<double>::quiet_NaN();
};

// ---------------------------------------------------------------------------
// build_g: the step Hamiltonian and its vacuum energy
// ---------------------------------------------------------------------------

struct StepHamiltonian {
  Matrix g;
  Complex e;
};

/// g = H0_I + tau * sum of the already-processed shorter potentials strictly
/// inside the step interval; e its vacuum expectation (from the table cache).
inline StepHamiltonian build_g(const PotentialTable& table, const StepIndex& step,
                               const ChainContext& ctx, double residual_tol) {
  const Interval iv = step.interval();
  const int d = ctx.local_dim();
  Matrix g = ctx.h0(iv.edges);
  Complex e(0.0, 0.0);
  const Complex tau = table.tau;
  for (int l = 1; l < step.k; ++l) {
    for (int i = iv.left; i + l <= iv.right(); ++i) {
      const Interval sub{i, l};
      const auto it = table.entries.find(sub);
      if (it == table.entries.end()) continue;
      const Matrix& v = it->second;
      // Processed entries must be block-diagonal w.r.t. their own projectors.
      const Vector& vs = ctx.vacuum(l);
      const Vector col = v * vs;
      const double offdiag = (col - vs * vs.dot(col)).norm();
      if (offdiag > residual_tol * (1.0 + v.norm()))
        throw PreconditionError("build_g: sub-entry " + to_string(sub) +
                                " not block-diagonal before step");
      add_embedded(g, v, power_dim(d, i - iv.left), power_dim(d, l + 1),
                   power_dim(d, iv.right() - i - l), tau);
      e += tau * table.vac_expectations.at(sub);
    }
  }
  // g must hold the vacuum as an eigenvector with eigenvalue e.
  const Vector& vac = ctx.vacuum(iv.edges);
  const double vac_residual = (g * vac - e * vac).norm();
  if (vac_residual > residual_tol * (1.0 + g.norm()))
    throw PreconditionError("build_g: vacuum is not an eigenvector within residual_tol");
  return StepHamiltonian{std::move(g), e};
}

// ---------------------------------------------------------------------------
// The generator series
//
// Each order-j generator has the rank-2 form S_j = a_j vac^H - vac b_j^H, so
// nested commutators against dense operands cost O(dim^2) apiece. The order-j
// potential term is assembled from the triangular table
//   M_1(m) = ad S_m(G) + ad S_{m-1}(V_1),
//   M_p(j) = sum_r ad S_r(M_{p-1}(j-r)),
//   V_j = sum_{p=2..j} M_p(j)/p! + ad S_{j-1}(V_1),
// which reproduces the nested-commutator recursion exactly while reusing
// shared sub-sums (O(J^3) commutators instead of exponential growth).
// ---------------------------------------------------------------------------

namespace detail {

struct Dyad {
  Vector a, b;  // S = a vac^H - vac b^H
};

inline Matrix dyad_dense(const Dyad& s, const Vector& vac) {
  return s.a * vac.adjoint() - vac * s.b.adjoint();
}

/// ad S (x) = S x - x S for a dyad S.
inline Matrix dyad_ad(const Dyad& s, const Vector& vac, const Matrix& x) {
  Matrix out = s.a * (vac.adjoint() * x);
  out.noalias() -= vac * (s.b.adjoint() * x);
  out.noalias() -= (x * s.a) * vac.adjoint();
  out.noalias() += (x * vac) * s.b.adjoint();
  return out;
}

/// Operator norm of a vac^H - vac b^H via the rank-2 Gram trick: with
/// A = [a | -vac], B = [vac | b] the nonzero singular values squared are the
/// eigenvalues of the 2x2 product (B^H B)(A^H A).
inline double dyad_norm(const Vector& a, const Vector& b, const Vector& vac) {
  Eigen::Matrix2cd ga, gb;
  ga(0, 0) = a.dot(a);
  ga(0, 1) = -a.dot(vac);
  ga(1, 0) = -vac.dot(a);
  ga(1, 1) = vac.dot(vac);
  gb(0, 0) = vac.dot(vac);
  gb(0, 1) = vac.dot(b);
  gb(1, 0) = b.dot(vac);
  gb(1, 1) = b.dot(b);
  const Eigen::Matrix2cd prod = gb * ga;
  const Complex tr = prod.trace();
  const Complex det = prod.determinant();
  const Complex disc = std::sqrt(tr * tr - 4.0 * det);
  // Eigenvalues are real nonnegative in exact arithmetic; take magnitudes.
  const double l1 = std::abs(0.5 * (tr + disc));
  const double l2 = std::abs(0.5 * (tr - disc));
  return std::sqrt(std::max(l1, l2));
}

/// Off-diagonal part c vac^H + vac d^H of x w.r.t. the vacuum splitting; the
/// diagonal part is x minus this (the two parts sum to x bitwise).
inline Matrix offdiag_part(const Matrix& x, const Vector& vac) {
  const Vector xv = x * vac;
  const Complex vxv = vac.dot(xv);
  const Vector c = xv - vxv * vac;                            // P+ x vac
  const Vector d = x.adjoint() * vac - std::conj(vxv) * vac;  // (vac^H x P+)^H
  Matrix out = c * vac.adjoint();
  out.noalias() += vac * d.adjoint();
  return out;
}

}  // namespace detail

struct SeriesOutput {
  Matrix s;       // evaluated generator sum_j tau^j S_j (dense on the interval space)
  Matrix v_diag;  // sum_j tau^{j-1} diag(V_j)
  SeriesDiagnostics diag;
};

inline SeriesOutput lie_schwinger_series(const Matrix& g, Complex e, const Matrix& v,
                                         const Vector& vac, const ChainContext& ctx, int edges,
                                         const EngineConfig& cfg) {
  cfg.validate();
  const long dim = g.rows();
  const Complex tau = cfg.tau;
  const double tau_abs = std::abs(tau);

  SeriesOutput out;
  out.diag.delta = tau_abs < 1.0 ? delta_of_tau(tau_abs) : -1e300;

  const double v1w = ctx.weighted_norm(v, edges);
  // Degenerate input or tau = 0: the generator vanishes; only the order-one
  // projection survives in v_diag.
  if (v1w < 1e-300 || tau_abs == 0.0) {
    out.s = Matrix::Zero(dim, dim);
    out.v_diag = v - detail::offdiag_part(v, vac);
    out.diag.j_used = 1;
    out.diag.tail_estimate = 0.0;
    out.diag.s_norm = 0.0;
    out.diag.v_diag_weighted_norm = ctx.weighted_norm(out.v_diag, edges);
    out.diag.certified_tail = true;
    return out;
  }

  static const double a_root = tau_domain_estimate().a_root;
  const bool in_disk = tau_abs < a_root / (4.0 * v1w);
  int j_cert = -1;
  if (in_disk) {
    for (int j = 1; j <= cfg.j_max; ++j)
      if (bj_tail(v1w, a_root, tau_abs, j) <= cfg.tail_tol) {
        j_cert = j;
        break;
      }
  }
  out.diag.certified_tail = in_disk;

  const Matrix r = reduced_resolvent(g, e, Complex(0.0, 0.0), vac);

  std::vector<detail::Dyad> dyads(1);   // 1-based
  std::vector<Matrix> vterms(1);        // 1-based
  std::vector<double> term_w(1, 0.0);   // |tau|^{j-1} * weighted_norm(V_j)
  // Triangular table: m_table[p] stores M_p(j) for j = p, p+1, ... (index j-p).
  std::vector<std::vector<Matrix>> m_table(2);

  const double snorm_factor = out.diag.delta > 0.0 ? 2.0 * std::sqrt(2.0) / out.diag.delta : 0.0;

  auto make_generator = [&](const Matrix& vj, double wj) {
    detail::Dyad s;
    s.a = r * (vj * vac);
    s.b = r.adjoint() * (vj.adjoint() * vac);
    if (out.diag.delta > 0.0 && wj > 0.0) {
      const double snj = detail::dyad_norm(s.a, s.b, vac);
      const double ratio = snj / (snorm_factor * wj);
      out.diag.max_snorm_ratio = std::max(out.diag.max_snorm_ratio, ratio);
      if (ratio > 1.0 + 1e-9) out.diag.snorm_bound_ok = false;
    }
    return s;
  };

  term_w.push_back(v1w);
  vterms.push_back(v);
  dyads.push_back(make_generator(v, v1w));

  Matrix v_diag = v - detail::offdiag_part(v, vac);
  Vector s_a = tau * dyads[1].a;             // evaluated generator, left dyad leg
  Vector s_b = std::conj(tau) * dyads[1].b;  // right dyad leg

  auto stopped = [&](int j) {
    if (j_cert > 0 && j >= j_cert) return true;
    if (j >= 2 && term_w[static_cast<std::size_t>(j)] < cfg.tail_tol &&
        term_w[static_cast<std::size_t>(j - 1)] < cfg.tail_tol)
      return true;
    return false;
  };

  if (!stopped(1)) {
    m_table[1].push_back(detail::dyad_ad(dyads[1], vac, g));  // M_1(1)
    Complex tau_pow_jm1 = Complex(1.0, 0.0);                  // tau^{j-1}
    for (int j = 2; j <= cfg.j_max; ++j) {
      tau_pow_jm1 *= tau;
      // Row 1 column j-1 (needs S_{j-1} and S_{j-2}; M_1(1) pre-seeded).
      if (j >= 3) {
        Matrix m1 = detail::dyad_ad(dyads[static_cast<std::size_t>(j - 1)], vac, g);
        m1 += detail::dyad_ad(dyads[static_cast<std::size_t>(j - 2)], vac, vterms[1]);
        m_table[1].push_back(std::move(m1));
      }
      if (static_cast<int>(m_table.size()) <= j) m_table.resize(static_cast<std::size_t>(j) + 1);
      Matrix vj = Matrix::Zero(dim, dim);
      double factorial = 1.0;
      for (int p = 2; p <= j; ++p) {
        Matrix mpj = Matrix::Zero(dim, dim);
        for (int rr = 1; rr <= j - p + 1; ++rr)
          mpj += detail::dyad_ad(dyads[static_cast<std::size_t>(rr)], vac,
                                 m_table[static_cast<std::size_t>(p - 1)]
                                        [static_cast<std::size_t>(j - rr - (p - 1))]);
        factorial *= p;
        vj += mpj / factorial;
        m_table[static_cast<std::size_t>(p)].push_back(std::move(mpj));
      }
      vj += detail::dyad_ad(dyads[static_cast<std::size_t>(j - 1)], vac, vterms[1]);

      const double wj = ctx.weighted_norm(vj, edges);
      term_w.push_back(std::pow(tau_abs, j - 1) * wj);
      v_diag.noalias() += tau_pow_jm1 * (vj - detail::offdiag_part(vj, vac));
      detail::Dyad sj = make_generator(vj, wj);
      const Complex tau_pow_j = tau_pow_jm1 * tau;
      s_a += tau_pow_j * sj.a;
      s_b += std::conj(tau_pow_j) * sj.b;
      dyads.push_back(std::move(sj));
      vterms.push_back(std::move(vj));
      if (stopped(j)) break;
    }
  }

  const int j_used = static_cast<int>(dyads.size()) - 1;
  out.diag.j_used = j_used;

  // Tail estimate: certified majorant inside the disk, measured geometric
  // ratio otherwise; take the tighter valid value.
  double tail = std::numeric_limits<double>::infinity();
  if (in_disk) tail = bj_tail(v1w, a_root, tau_abs, j_used);
  if (j_used >= 3) {
    const double t1 = term_w[static_cast<std::size_t>(j_used)];
    const double t2 = term_w[static_cast<std::size_t>(j_used - 1)];
    const double t3 = term_w[static_cast<std::size_t>(j_used - 2)];
    double rho = 0.0;
    if (t2 > 0.0) rho = std::max(rho, t1 / t2);
    if (t3 > 0.0) rho = std::max(rho, t2 / t3);
    if (rho < 1.0) tail = std::min(tail, t1 * rho / (1.0 - rho));
    else if (t1 == 0.0) tail = 0.0;
  } else if (j_used >= 1 && term_w[static_cast<std::size_t>(j_used)] == 0.0) {
    tail = 0.0;
  }
  out.diag.tail_estimate = tail;
  const bool empirically_small =
      j_used >= 2 && term_w[static_cast<std::size_t>(j_used)] < cfg.tail_tol &&
      term_w[static_cast<std::size_t>(j_used - 1)] < cfg.tail_tol;
  if (!(tail <= cfg.tail_tol) && !empirically_small)
    throw NonconvergenceError(
        "lie_schwinger_series: tail above tail_tol at j_max (|tau| too large or j_max too small)");

  out.diag.s_norm = detail::dyad_norm(s_a, s_b, vac);
  out.s = detail::dyad_dense(detail::Dyad{std::move(s_a), std::move(s_b)}, vac);
  out.v_diag = std::move(v_diag);
  out.diag.v_diag_weighted_norm = ctx.weighted_norm(out.v_diag, edges);
  return out;
}

/// Convenience overload taking the projector bundle.
inline SeriesOutput lie_schwinger_series(const Matrix& g, Complex e, const Matrix& v,
                                         const VacuumProjectors& proj, const ChainContext& ctx,
                                         int edges, const EngineConfig& cfg) {
  return lie_schwinger_series(g, e, v, proj.vacuum, ctx, edges, cfg);
}

// ---------------------------------------------------------------------------
// apply_alpha: propagate one step's conjugation through the table
// ---------------------------------------------------------------------------

namespace detail {

/// sum_{n>=1} ad^n S (x) / n! where S acts on the middle factor of the
/// (l_dim, m_dim, r_dim) factorization of the container space.
inline Matrix ad_series_tail(const Matrix& s, const Matrix& x, long l_dim, long m_dim,
                             long r_dim, double tail_tol, int n_max = 80) {
  Matrix z = Matrix::Zero(x.rows(), x.cols());
  Matrix w = x;
  const double scale = std::max(1.0, x.norm());
  int small_streak = 0;
  for (int n = 1; n <= n_max; ++n) {
    Matrix sw = embedded_mult_left(s, w, l_dim, m_dim, r_dim);
    sw -= embedded_mult_right(w, s, l_dim, m_dim, r_dim);
    w = sw / static_cast<double>(n);
    z += w;
    if (w.norm() < tail_tol * scale) {
      if (++small_streak >= 2) return z;
    } else {
      small_streak = 0;
    }
  }
  throw NonconvergenceError("ad_series_tail: commutator series did not converge");
}

}  // namespace detail

/// Update the table after one step: replace the step entry by its
/// block-diagonal series, and push the conjugation into every strictly
/// containing entry (absorbing the sliding shorter intervals when the
/// container shares an endpoint with the step interval).
inline void apply_alpha(PotentialTable& table, const StepIndex& step, const Matrix& s,
                        const Matrix& v_diag, const ChainContext& ctx, const EngineConfig& cfg) {
  const Interval iv = step.interval();
  const int d = ctx.local_dim();
  if (s.rows() != ctx.dim_of_edges(iv.edges))
    throw SupportError("apply_alpha: generator dimension does not match the step interval");

  table.entries.at(iv) = v_diag;
  table.vac_expectations.at(iv) = ctx.vacuum_expectation(v_diag, iv.edges);

  const bool s_zero = (s.norm() == 0.0);
  for (auto& [container, vc] : table.entries) {
    if (!container.contains(iv) || container == iv) continue;
    if (s_zero) continue;
    const long l_dim = power_dim(d, iv.left - container.left);
    const long m_dim = ctx.dim_of_edges(iv.edges);
    const long r_dim = power_dim(d, container.right() - iv.right());

    // Absorbed set: the container itself, plus (for shared endpoints) the
    // sliding shorter intervals whose union with the step interval fills the
    // container. Members are never containers of the step interval, so this
    // in-place pass is order-independent.
    std::vector<Interval> members{container};
    if (container.left == iv.left) {
      for (int j = 1; j <= step.k; ++j)
        members.push_back(Interval{container.left + j, container.edges - j});
    } else if (container.right() == iv.right()) {
      for (int j = 1; j <= step.k; ++j)
        members.push_back(Interval{container.left, container.edges - j});
    }

    Matrix delta = Matrix::Zero(vc.rows(), vc.cols());
    bool changed = false;
    for (const Interval& m : members) {
      const Matrix& vm = (m == container) ? vc : table.entries.at(m);
      if (vm.norm() == 0.0) continue;
      if (m == container) {
        delta += detail::ad_series_tail(s, vm, l_dim, m_dim, r_dim, cfg.tail_tol);
      } else {
        const Matrix x = tensor_embed(LocalOperator{m, vm}, container, d).matrix;
        delta += detail::ad_series_tail(s, x, l_dim, m_dim, r_dim, cfg.tail_tol);
      }
      changed = true;
    }
    if (changed) {
      vc += delta;
      table.vac_expectations.at(container) = ctx.vacuum_expectation(vc, container.edges);
    }
  }
  table.step = step;
}

// ---------------------------------------------------------------------------
// Engine
// ---------------------------------------------------------------------------

struct StepContext {
  StepIndex step;
  const Matrix& g;
  Complex e;
  const Matrix& v;       // the entry fed into the series (pre-step)
  const Matrix& s;       // evaluated generator
  const Matrix& v_diag;
  const SeriesDiagnostics& diag;
  const PotentialTable& before;
  const PotentialTable& after;
  const ChainContext& ctx;
};

using StepObserver = std::function<void(const StepContext&)>;

class BlockDiagEngine {
 public:
  BlockDiagEngine(std::shared_ptr<const ChainContext> ctx, EngineConfig cfg)
      : ctx_(std::move(ctx)), cfg_(cfg) {
    cfg_.validate();
    init_table();
    if (cfg_.track_u) {
      const long dim = full_dim();
      u_ = Matrix::Identity(dim, dim);
      u_inv_ = Matrix::Identity(dim, dim);
    }
  }

  const ChainContext& ctx() const { return *ctx_; }
  const EngineConfig& config() const { return cfg_; }
  const PotentialTable& table() const { return table_; }
  const std::vector<StepRecord>& records() const { return records_; }
  const Matrix& u() const { return require_u(u_); }
  const Matrix& u_inverse() const { return require_u(u_inv_); }
  long full_dim() const { return ctx_->dim_of_edges(ctx_->n_sites() - 1); }

  /// Run all remaining steps and assemble the report.
  RunReport run(const StepObserver& observer = {}) {
    const auto t_start = std::chrono::steady_clock::now();
    for (const StepIndex& s : step_sequence(ctx_->n_sites())) {
      if (!step_precedes(table_.step, s)) continue;
      do_step(s, observer);
    }
    RunReport rep = make_report();
    rep.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return rep;
  }

  /// Effective Hamiltonian assembled from the current table
  /// (free part + tau * entries).
  Matrix assemble_effective_hamiltonian() const {
    const int n = ctx_->n_sites();
    const int d = ctx_->local_dim();
    const long dim = full_dim();
    Matrix k = Matrix::Zero(dim, dim);
    for (int site = 1; site <= n; ++site)
      add_embedded(k, ctx_->spec().h_local, power_dim(d, site - 1), d, power_dim(d, n - site));
    for (const auto& [iv, m] : table_.entries)
      add_embedded(k, m, power_dim(d, iv.left - 1), ctx_->dim_of_edges(iv.edges),
                   power_dim(d, n - iv.right()), table_.tau);
    return k;
  }

  Complex vacuum_energy() const {
    Complex sum(0.0, 0.0);
    for (const auto& [iv, val] : table_.vac_expectations) sum += val;
    return table_.tau * sum;
  }

  // ---- checkpointing ----

  Json checkpoint_to_json() const {
    Json j;
    j["format"] = "lschain-checkpoint";
    j["version"] = 1;
    j["spec_digest"] = spec_digest();
    j["step"] = Json{{"k", table_.step.k}, {"q", table_.step.q}};
    j["tau"] = complex_to_json(table_.tau);
    j["j_max"] = cfg_.j_max;
    j["tail_tol"] = double_to_hex(cfg_.tail_tol);
    j["residual_tol"] = double_to_hex(cfg_.residual_tol);
    j["track_u"] = cfg_.track_u;
    Json entries = Json::array();
    for (const auto& [iv, m] : table_.entries)
      entries.push_back(
          Json{{"left", iv.left}, {"edges", iv.edges}, {"matrix", matrix_to_json(m)}});
    j["entries"] = std::move(entries);
    Json recs = Json::array();
    for (const auto& r : records_) recs.push_back(record_to_json(r));
    j["records"] = std::move(recs);
    if (cfg_.track_u) {
      j["u"] = matrix_to_json(u_);
      j["u_inv"] = matrix_to_json(u_inv_);
    }
    return j;
  }

  static BlockDiagEngine from_checkpoint(std::shared_ptr<const ChainContext> ctx,
                                         const EngineConfig& cfg, const Json& j) {
    if (!j.is_object() || j.value("format", "") != "lschain-checkpoint")
      throw ConfigError("from_checkpoint: not a checkpoint document");
    BlockDiagEngine eng(std::move(ctx), cfg);
    if (j.at("spec_digest").get<std::string>() != eng.spec_digest())
      throw ConfigError("from_checkpoint: checkpoint belongs to a different chain spec");
    if (complex_from_json(j.at("tau")) != cfg.tau || j.at("j_max").get<int>() != cfg.j_max ||
        hex_to_double(j.at("tail_tol").get<std::string>()) != cfg.tail_tol ||
        hex_to_double(j.at("residual_tol").get<std::string>()) != cfg.residual_tol ||
        j.at("track_u").get<bool>() != cfg.track_u)
      throw ConfigError("from_checkpoint: engine config differs from the checkpointed run");
    eng.table_.step = StepIndex{j.at("step").at("k").get<int>(), j.at("step").at("q").get<int>()};
    const Json& entries = j.at("entries");
    if (entries.size() != eng.table_.entries.size())
      throw ConfigError("from_checkpoint: entry count mismatch");
    for (const auto& ej : entries) {
      const Interval iv{ej.at("left").get<int>(), ej.at("edges").get<int>()};
      Matrix m = matrix_from_json(ej.at("matrix"));
      auto it = eng.table_.entries.find(iv);
      if (it == eng.table_.entries.end())
        throw ConfigError("from_checkpoint: unexpected interval " + to_string(iv));
      if (m.rows() != it->second.rows())
        throw ConfigError("from_checkpoint: matrix dimension mismatch at " + to_string(iv));
      it->second = std::move(m);
    }
    for (auto& [iv, m] : eng.table_.entries)
      eng.table_.vac_expectations.at(iv) = eng.ctx_->vacuum_expectation(m, iv.edges);
    eng.records_.clear();
    for (const auto& rj : j.at("records")) eng.records_.push_back(record_from_json(rj));
    if (cfg.track_u) {
      eng.u_ = matrix_from_json(j.at("u"));
      eng.u_inv_ = matrix_from_json(j.at("u_inv"));
    }
    return eng;
  }

  std::string spec_digest() const { return fnv1a_hex(spec_to_json(ctx_->spec()).dump()); }

  static std::string fnv1a_hex(const std::string& data) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : data) {
      h ^= c;
      h *= 1099511628211ull;
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
  }

 private:
  void init_table() {
    const ChainSpec& spec = ctx_->spec();
    table_.tau = cfg_.tau;
    table_.step = StepIndex{0, spec.n_sites};
    for (int l = 1; l <= spec.n_sites - 1; ++l) {
      for (int i = 1; i + l <= spec.n_sites; ++i) {
        const Interval iv{i, l};
        Matrix m = spec.has_seed_for_edges(l)
                       ? spec.seed_for_edges(l)
                       : Matrix::Zero(ctx_->dim_of_edges(l), ctx_->dim_of_edges(l));
        table_.vac_expectations[iv] = ctx_->vacuum_expectation(m, l);
        table_.entries[iv] = std::move(m);
      }
    }
  }

  void do_step(const StepIndex& s, const StepObserver& observer) {
    const Interval iv = s.interval();
    std::optional<PotentialTable> before;
    if (observer) before = table_;

    StepHamiltonian gh = build_g(table_, s, *ctx_, cfg_.residual_tol);
    const Matrix v = table_.entries.at(iv);
    SeriesOutput so =
        lie_schwinger_series(gh.g, gh.e, v, ctx_->vacuum(iv.edges), *ctx_, iv.edges, cfg_);
    apply_alpha(table_, s, so.s, so.v_diag, *ctx_, cfg_);

    if (cfg_.track_u) {
      const int d = ctx_->local_dim();
      const int n = ctx_->n_sites();
      const long l_dim = power_dim(d, iv.left - 1);
      const long m_dim = ctx_->dim_of_edges(iv.edges);
      const long r_dim = power_dim(d, n - iv.right());
      const Matrix em = matrix_exponential(Matrix(-so.s));
      const Matrix ep = matrix_exponential(so.s);
      u_ = embedded_mult_right(u_, em, l_dim, m_dim, r_dim);
      u_inv_ = embedded_mult_left(ep, u_inv_, l_dim, m_dim, r_dim);
    }

    records_.push_back(StepRecord{s, gh.e, so.diag});
    if (observer) {
      StepContext sc{s, gh.g, gh.e, v, so.s, so.v_diag, so.diag, *before, table_, *ctx_};
      observer(sc);
    }
  }

  RunReport make_report() {
    RunReport rep;
    rep.e_n = vacuum_energy();
    rep.steps = records_;
    rep.t0_estimate = tau_domain_estimate().t0;
    const double tau_abs = std::abs(table_.tau);

    double max_bd = 0.0;
    std::map<int, double> per_length;
    for (const auto& [iv, m] : table_.entries) {
      const double w = ctx_->weighted_norm(m, iv.edges);
      auto [it, inserted] = per_length.try_emplace(iv.edges, w);
      if (!inserted) it->second = std::max(it->second, w);
      const Vector& vs = ctx_->vacuum(iv.edges);
      const Vector col = m * vs;
      const double off = (col - vs * vs.dot(col)).norm();
      max_bd = std::max(max_bd, off / (1.0 + m.norm()));
    }
    for (const auto& [l, w] : per_length)
      rep.per_length_norms.push_back(PerLengthNorm{l, w, std::pow(tau_abs, (l - 1) / 4.0)});
    rep.blockdiag_residual = max_bd;

    if (cfg_.compute_gap && full_dim() <= cfg_.dim_cap) {
      const Matrix ktilde = assemble_effective_hamiltonian();
      rep.gap_margin = gap_margin_of(ktilde, rep.e_n);
      if (cfg_.track_u) {
        rep.u_unitarity =
            operator_norm(Matrix(u_.adjoint() * u_ - Matrix::Identity(u_.rows(), u_.cols())));
        const Matrix k0 = assemble_full_hamiltonian(ctx_->spec(), table_.tau, cfg_.dim_cap).matrix;
        rep.u_conj_residual = operator_norm(Matrix(u_inv_ * k0 * u_ - ktilde));
      }
    }
    return rep;
  }

  /// Min distance from e_n to the spectrum of the vacuum-complement block.
  double gap_margin_of(const Matrix& ktilde, Complex e_n) const {
    const Vector& vac = ctx_->vacuum(ctx_->n_sites() - 1);
    const Matrix block = complement_block(ktilde, vac);
    const bool herm = std::abs(table_.tau.imag()) < 1e-15;
    double margin = std::numeric_limits<double>::infinity();
    if (herm) {
      Eigen::SelfAdjointEigenSolver<Matrix> es(Matrix(0.5 * (block + block.adjoint())));
      for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
        margin = std::min(margin, std::abs(Complex(es.eigenvalues()(i), 0.0) - e_n));
    } else {
      Eigen::ComplexEigenSolver<Matrix> es(block);
      for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
        margin = std::min(margin, std::abs(es.eigenvalues()(i) - e_n));
    }
    return margin;
  }

  static Json record_to_json(const StepRecord& r) {
    Json j;
    j["k"] = r.step.k;
    j["q"] = r.step.q;
    j["e"] = complex_to_json(r.e);
    j["j_used"] = r.diag.j_used;
    j["tail_estimate"] = double_to_hex(r.diag.tail_estimate);
    j["s_norm"] = double_to_hex(r.diag.s_norm);
    j["v_diag_weighted_norm"] = double_to_hex(r.diag.v_diag_weighted_norm);
    j["delta"] = double_to_hex(r.diag.delta);
    j["certified_tail"] = r.diag.certified_tail;
    j["snorm_bound_ok"] = r.diag.snorm_bound_ok;
    j["max_snorm_ratio"] = double_to_hex(r.diag.max_snorm_ratio);
    return j;
  }

  static StepRecord record_from_json(const Json& j) {
    StepRecord r;
    r.step = StepIndex{j.at("k").get<int>(), j.at("q").get<int>()};
    r.e = complex_from_json(j.at("e"));
    r.diag.j_used = j.at("j_used").get<int>();
    r.diag.tail_estimate = hex_to_double(j.at("tail_estimate").get<std::string>());
    r.diag.s_norm = hex_to_double(j.at("s_norm").get<std::string>());
    r.diag.v_diag_weighted_norm = hex_to_double(j.at("v_diag_weighted_norm").get<std::string>());
    r.diag.delta = hex_to_double(j.at("delta").get<std::string>());
    r.diag.certified_tail = j.at("certified_tail").get<bool>();
    r.diag.snorm_bound_ok = j.at("snorm_bound_ok").get<bool>();
    r.diag.max_snorm_ratio = hex_to_double(j.at("max_snorm_ratio").get<std::string>());
    return r;
  }

  const Matrix& require_u(const Matrix& m) const {
    if (!cfg_.track_u) throw ConfigError("BlockDiagEngine: track_u is disabled");
    return m;
  }

  std::shared_ptr<const ChainContext> ctx_;
  EngineConfig cfg_;
  PotentialTable table_;
  std::vector<StepRecord> records_;
  Matrix u_, u_inv_;
};

}  // namespace lschain

#endif  // LSCHAIN_ENGINE_HPP

// Tests for the block-diagonalization engine: the generator series, the
// per-step table update, end-to-end energies against dense eigensolvers,
// unitary tracking, and checkpoint round-trips.

#include "lschain/engine.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <memory>
#include <string>
#include <vector>

namespace {

using namespace lschain;

constexpr double kPi = 3.14159265358979323846;

std::shared_ptr<const ChainContext> make_ctx(const ChainSpec& spec, long cap = 4096) {
  return std::make_shared<ChainContext>(spec, cap);
}

/// Spin chain whose range-1 seed is sigma_x (x) sigma_x before normalization;
/// the stored seed is then (sqrt(3)/2) sigma_x (x) sigma_x.
ChainSpec sigma_xx_spec(int n_sites) {
  Matrix h = Matrix::Zero(2, 2);
  h(1, 1) = 1.0;
  Vector omega = Vector::Zero(2);
  omega(0) = 1.0;
  Matrix sx(2, 2);
  sx << 0.0, 1.0, 1.0, 0.0;
  return finalize_spec("spin", n_sites, 2, 1, h, omega, {kron(sx, sx)});
}

Matrix embed_into(const Matrix& m, const Interval& support, const Interval& target, int d) {
  return tensor_embed(LocalOperator{support, m}, target, d).matrix;
}

Matrix embed_full(const Matrix& m, const Interval& support, const ChainContext& ctx) {
  return embed_into(m, support, Interval{1, ctx.n_sites() - 1}, ctx.local_dim());
}

/// Dense Hamiltonian represented by a table: free part + tau * entries.
Matrix assemble_from_table(const PotentialTable& t, const ChainContext& ctx) {
  const int n = ctx.n_sites();
  const int d = ctx.local_dim();
  const long dim = ctx.dim_of_edges(n - 1);
  Matrix k = Matrix::Zero(dim, dim);
  for (int site = 1; site <= n; ++site)
    add_embedded(k, ctx.spec().h_local, power_dim(d, site - 1), d, power_dim(d, n - site));
  for (const auto& [iv, m] : t.entries)
    add_embedded(k, m, power_dim(d, iv.left - 1), ctx.dim_of_edges(iv.edges),
                 power_dim(d, n - iv.right()), t.tau);
  return k;
}

struct CapturedStep {
  StepIndex step;
  Matrix g, v, s, v_diag;
  Complex e;
  SeriesDiagnostics diag;
  PotentialTable before, after;
};

std::vector<CapturedStep> run_capturing(BlockDiagEngine& eng, RunReport* rep = nullptr) {
  std::vector<CapturedStep> out;
  RunReport r = eng.run([&](const StepContext& sc) {
    CapturedStep c;
    c.step = sc.step;
    c.g = sc.g;
    c.v = sc.v;
    c.s = sc.s;
    c.v_diag = sc.v_diag;
    c.e = sc.e;
    c.diag = sc.diag;
    c.before = sc.before;
    c.after = sc.after;
    out.push_back(std::move(c));
  });
  if (rep != nullptr) *rep = r;
  return out;
}

const CapturedStep& find_step(const std::vector<CapturedStep>& caps, const StepIndex& s) {
  for (const auto& c : caps)
    if (c.step == s) return c;
  throw std::logic_error("step not captured");
}

EngineConfig config_for(Complex tau) {
  EngineConfig cfg;
  cfg.tau = tau;
  return cfg;
}

// ---------------------------------------------------------------------------
// Generator series on a single interval
// ---------------------------------------------------------------------------

class SeriesOnBond : public ::testing::Test {
 protected:
  void SetUp() override {
    spec_ = sigma_xx_spec(2);
    ctx_ = make_ctx(spec_);
    g_ = ctx_->h0(1);
    v_ = spec_.seed_for_edges(1);
    vac_ = ctx_->vacuum(1);
  }

  ChainSpec spec_;
  std::shared_ptr<const ChainContext> ctx_;
  Matrix g_, v_;
  Vector vac_;
};

TEST_F(SeriesOnBond, ZeroCouplingKeepsOnlyTheProjection) {
  const SeriesOutput out =
      lie_schwinger_series(g_, Complex(0, 0), v_, vac_, *ctx_, 1, config_for(Complex(0, 0)));
  EXPECT_EQ(out.s.norm(), 0.0);
  EXPECT_EQ(out.diag.j_used, 1);
  EXPECT_EQ(out.diag.tail_estimate, 0.0);
  EXPECT_TRUE(out.diag.certified_tail);
  // v_diag is the vacuum-diagonal part of the seed: the (0,3)/(3,0) entries of
  // (sqrt3/2) sigma_x (x) sigma_x are removed, the (1,2)/(2,1) entries stay.
  const double w = std::sqrt(3.0) / 2.0;
  Matrix expected = Matrix::Zero(4, 4);
  expected(1, 2) = w;
  expected(2, 1) = w;
  EXPECT_LT((out.v_diag - expected).norm(), 1e-14);
}

TEST_F(SeriesOnBond, ZeroPotentialIsTrivial) {
  const Matrix zero = Matrix::Zero(4, 4);
  const SeriesOutput out =
      lie_schwinger_series(g_, Complex(0, 0), zero, vac_, *ctx_, 1, config_for(Complex(0.01, 0)));
  EXPECT_EQ(out.s.norm(), 0.0);
  EXPECT_EQ(out.v_diag.norm(), 0.0);
  EXPECT_EQ(out.diag.j_used, 1);
}

TEST_F(SeriesOnBond, FirstOrderGeneratorMatchesHandValue) {
  // With G = diag(0,1,1,2), e = 0, V = (sqrt3/2) sigma_x (x) sigma_x:
  // R = diag(0,1,1,1/2), V vac = (sqrt3/2) e3, so
  // S1 = (sqrt3/4) (e3 e0^H - e0 e3^H) and s ~ tau S1 + O(tau^2).
  const double tau = 1e-6;
  const SeriesOutput out =
      lie_schwinger_series(g_, Complex(0, 0), v_, vac_, *ctx_, 1, config_for(Complex(tau, 0)));
  const double c = std::sqrt(3.0) / 4.0;
  Matrix s1 = Matrix::Zero(4, 4);
  s1(3, 0) = c;
  s1(0, 3) = -c;
  EXPECT_LT((out.s - tau * s1).norm(), 1e-11);
  // First-order diagonal part, as in the zero-coupling case, up to O(tau).
  const double w = std::sqrt(3.0) / 2.0;
  Matrix vd = Matrix::Zero(4, 4);
  vd(1, 2) = w;
  vd(2, 1) = w;
  EXPECT_LT((out.v_diag - vd).norm(), 1e-5);
}

TEST_F(SeriesOnBond, ConjugationIdentityRealCoupling) {
  // The defining property of the generator: e^S (G + tau V) e^{-S} equals
  // G + tau * v_diag up to the truncation tail.
  const Complex tau(0.01, 0.0);
  const SeriesOutput out =
      lie_schwinger_series(g_, Complex(0, 0), v_, vac_, *ctx_, 1, config_for(tau));
  const Matrix k = g_ + tau * v_;
  const Matrix lhs =
      matrix_exponential(out.s) * k * matrix_exponential(Matrix(-out.s));
  const Matrix rhs = g_ + tau * out.v_diag;
  EXPECT_LT((lhs - rhs).norm(), 1e-11 * (1.0 + k.norm()));
}

TEST_F(SeriesOnBond, ConjugationIdentityComplexCoupling) {
  const Complex tau = 0.01 * std::exp(Complex(0.0, kPi / 3.0));
  const SeriesOutput out =
      lie_schwinger_series(g_, Complex(0, 0), v_, vac_, *ctx_, 1, config_for(tau));
  const Matrix k = g_ + tau * v_;
  const Matrix lhs =
      matrix_exponential(out.s) * k * matrix_exponential(Matrix(-out.s));
  const Matrix rhs = g_ + tau * out.v_diag;
  EXPECT_LT((lhs - rhs).norm(), 1e-11 * (1.0 + k.norm()));
  // v_diag must be vacuum-block-diagonal by construction.
  const Vector col = out.v_diag * vac_;
  EXPECT_LT((col - vac_ * vac_.dot(col)).norm(), 1e-13);
}

TEST_F(SeriesOnBond, CertifiedTruncationInsideTheDisk) {
  // |tau| = 0.001 lies inside the majorant disk a/(4 * 0.5) ~ 0.00448.
  const SeriesOutput out =
      lie_schwinger_series(g_, Complex(0, 0), v_, vac_, *ctx_, 1, config_for(Complex(0.001, 0)));
  EXPECT_TRUE(out.diag.certified_tail);
  EXPECT_LE(out.diag.tail_estimate, 1e-14);
  EXPECT_GE(out.diag.j_used, 3);
  EXPECT_LE(out.diag.j_used, 40);
  EXPECT_TRUE(out.diag.snorm_bound_ok);
  EXPECT_LE(out.diag.max_snorm_ratio, 1.0 + 1e-9);
}

TEST_F(SeriesOnBond, EmpiricalTruncationOutsideTheDisk) {
  const SeriesOutput out =
      lie_schwinger_series(g_, Complex(0, 0), v_, vac_, *ctx_, 1, config_for(Complex(0.01, 0)));
  EXPECT_FALSE(out.diag.certified_tail);
  EXPECT_LE(out.diag.tail_estimate, 1e-12);
  EXPECT_TRUE(out.diag.snorm_bound_ok);
  EXPECT_GT(out.diag.delta, 0.0);
}

TEST_F(SeriesOnBond, GeneratorIsAntiHermitianForRealCoupling) {
  const SeriesOutput out =
      lie_schwinger_series(g_, Complex(0, 0), v_, vac_, *ctx_, 1, config_for(Complex(0.02, 0)));
  EXPECT_LT((out.s + Matrix(out.s.adjoint())).norm(), 1e-13 * (1.0 + out.s.norm()));
}

TEST_F(SeriesOnBond, ThrowsWhenTruncationOrderIsTooSmall) {
  EngineConfig cfg = config_for(Complex(0.2, 0));
  cfg.j_max = 3;
  EXPECT_THROW(lie_schwinger_series(g_, Complex(0, 0), v_, vac_, *ctx_, 1, cfg),
               NonconvergenceError);
}

// ---------------------------------------------------------------------------
// build_g
// ---------------------------------------------------------------------------

TEST(BuildG, FirstStepHasNoSubEntries) {
  const ChainSpec spec = build_spin_model(2, 3, 11);
  auto ctx = make_ctx(spec);
  BlockDiagEngine eng(ctx, config_for(Complex(0.02, 0)));
  const StepHamiltonian gh = build_g(eng.table(), StepIndex{1, 1}, *ctx, 1e-9);
  EXPECT_EQ((gh.g - ctx->h0(1)).norm(), 0.0);
  EXPECT_EQ(gh.e, Complex(0.0, 0.0));
}

TEST(BuildG, MatchesEmbeddedSumOfProcessedEntries) {
  const ChainSpec spec = build_spin_model(2, 4, 11);
  auto ctx = make_ctx(spec);
  const Complex tau(0.02, 0.007);
  BlockDiagEngine eng(ctx, config_for(tau));
  const auto caps = run_capturing(eng);
  ASSERT_EQ(caps.size(), 6u);
  for (const auto& c : caps) {
    const Interval iv = c.step.interval();
    Matrix g_oracle = ctx->h0(iv.edges);
    Complex e_oracle(0.0, 0.0);
    for (int l = 1; l < c.step.k; ++l) {
      for (int i = iv.left; i + l <= iv.right(); ++i) {
        const Interval sub{i, l};
        const Matrix& vm = c.before.entries.at(sub);
        g_oracle += tau * embed_into(vm, sub, iv, ctx->local_dim());
        e_oracle += tau * ctx->vacuum_expectation(vm, l);
      }
    }
    EXPECT_LT((c.g - g_oracle).norm(), 1e-13 * (1.0 + g_oracle.norm()))
        << "step " << to_string(iv);
    EXPECT_LT(std::abs(c.e - e_oracle), 1e-13 * (1.0 + std::abs(e_oracle)));
    // The potential fed to the series is the pre-step entry of the interval.
    EXPECT_EQ((c.v - c.before.entries.at(iv)).norm(), 0.0);
  }
}

TEST(BuildG, RejectsNonBlockDiagonalSubEntry) {
  const ChainSpec spec = sigma_xx_spec(3);
  auto ctx = make_ctx(spec);
  PotentialTable table;
  table.tau = Complex(0.1, 0.0);
  table.step = StepIndex{1, 2};
  // sigma_x (x) sigma_x couples the vacuum to |11>, so it is not
  // block-diagonal and must be refused as a processed entry.
  Matrix sxx = spec.seed_for_edges(1);
  table.entries[Interval{1, 1}] = sxx;
  table.vac_expectations[Interval{1, 1}] = Complex(0.0, 0.0);
  table.entries[Interval{2, 1}] = Matrix::Zero(4, 4);
  table.vac_expectations[Interval{2, 1}] = Complex(0.0, 0.0);
  try {
    build_g(table, StepIndex{2, 1}, *ctx, 1e-9);
    FAIL() << "expected PreconditionError";
  } catch (const PreconditionError& err) {
    EXPECT_NE(std::string(err.what()).find("block-diagonal"), std::string::npos);
  }
}

TEST(BuildG, RejectsInconsistentVacuumCache) {
  const ChainSpec spec = sigma_xx_spec(3);
  auto ctx = make_ctx(spec);
  PotentialTable table;
  table.tau = Complex(0.1, 0.0);
  table.step = StepIndex{1, 2};
  Matrix m = Matrix::Zero(4, 4);
  m(0, 0) = 0.3;
  m(3, 3) = 0.7;
  table.entries[Interval{1, 1}] = m;
  table.vac_expectations[Interval{1, 1}] = Complex(0.9, 0.0);  // true value is 0.3
  table.entries[Interval{2, 1}] = m;
  table.vac_expectations[Interval{2, 1}] = Complex(0.3, 0.0);
  try {
    build_g(table, StepIndex{2, 1}, *ctx, 1e-9);
    FAIL() << "expected PreconditionError";
  } catch (const PreconditionError& err) {
    EXPECT_NE(std::string(err.what()).find("vacuum"), std::string::npos);
  }
}

// ---------------------------------------------------------------------------
// apply_alpha, checked step by step against dense conjugation
// ---------------------------------------------------------------------------

TEST(ApplyAlpha, StepEntryBecomesItsDiagonalSeries) {
  const ChainSpec spec = build_spin_model(2, 3, 5);
  auto ctx = make_ctx(spec);
  BlockDiagEngine eng(ctx, config_for(Complex(0.03, 0.01)));
  const auto caps = run_capturing(eng);
  for (const auto& c : caps) {
    const Interval iv = c.step.interval();
    EXPECT_EQ((c.after.entries.at(iv) - c.v_diag).norm(), 0.0);
    const Complex cached = c.after.vac_expectations.at(iv);
    EXPECT_LT(std::abs(cached - ctx->vacuum_expectation(c.v_diag, iv.edges)), 1e-15);
  }
}

/// Shared helper: the container update must equal
///   e^S (V_C + sum_m emb V_m) e^{-S} - sum_m emb V_m
/// where m runs over the hand-enumerated sliding intervals (which the step
/// itself leaves untouched) and S acts on the step interval inside C.
void expect_container_update(const CapturedStep& c, const Interval& container,
                             const std::vector<Interval>& sliding, const ChainContext& ctx) {
  const int d = ctx.local_dim();
  const Interval iv = c.step.interval();
  const Matrix s_emb = embed_into(c.s, iv, container, d);
  Matrix inside = c.before.entries.at(container);
  Matrix absorbed = Matrix::Zero(inside.rows(), inside.cols());
  for (const Interval& m : sliding) {
    EXPECT_EQ((c.after.entries.at(m) - c.before.entries.at(m)).norm(), 0.0)
        << "sliding member " << to_string(m) << " must not change in this step";
    absorbed += embed_into(c.before.entries.at(m), m, container, d);
  }
  const Matrix oracle = matrix_exponential(s_emb) * (inside + absorbed) *
                            matrix_exponential(Matrix(-s_emb)) -
                        absorbed;
  const Matrix& updated = c.after.entries.at(container);
  EXPECT_LT((updated - oracle).norm(), 1e-11 * (1.0 + oracle.norm()))
      << "container " << to_string(container) << " after step " << to_string(iv);
}

TEST(ApplyAlpha, ContainerSharingTheLeftEndpoint) {
  const ChainSpec spec = build_spin_model(2, 3, 5);
  auto ctx = make_ctx(spec);
  BlockDiagEngine eng(ctx, config_for(Complex(0.03, 0.01)));
  const auto caps = run_capturing(eng);
  expect_container_update(find_step(caps, StepIndex{1, 1}), Interval{1, 2}, {Interval{2, 1}},
                          *ctx);
}

TEST(ApplyAlpha, ContainerSharingTheRightEndpoint) {
  const ChainSpec spec = build_spin_model(2, 3, 5);
  auto ctx = make_ctx(spec);
  BlockDiagEngine eng(ctx, config_for(Complex(0.03, 0.01)));
  const auto caps = run_capturing(eng);
  expect_container_update(find_step(caps, StepIndex{1, 2}), Interval{1, 2}, {Interval{1, 1}},
                          *ctx);
}

TEST(ApplyAlpha, ContainerWithBothEndpointsStrictlyOutside) {
  const ChainSpec spec = build_spin_model(2, 4, 5);
  auto ctx = make_ctx(spec);
  BlockDiagEngine eng(ctx, config_for(Complex(0.03, 0.01)));
  const auto caps = run_capturing(eng);
  const CapturedStep& c = find_step(caps, StepIndex{1, 2});
  expect_container_update(c, Interval{1, 3}, {}, *ctx);
  expect_container_update(c, Interval{1, 2}, {Interval{1, 1}}, *ctx);
  expect_container_update(c, Interval{2, 2}, {Interval{3, 1}}, *ctx);
}

TEST(ApplyAlpha, LongerStepAbsorbsTwoSlidingIntervals) {
  const ChainSpec spec = build_spin_model(2, 4, 5);
  auto ctx = make_ctx(spec);
  BlockDiagEngine eng(ctx, config_for(Complex(0.03, 0.01)));
  const auto caps = run_capturing(eng);
  expect_container_update(find_step(caps, StepIndex{2, 1}), Interval{1, 3},
                          {Interval{2, 2}, Interval{3, 1}}, *ctx);
}

TEST(ApplyAlpha, OverlappingNonContainersAreUntouched) {
  const ChainSpec spec = build_spin_model(2, 4, 5);
  auto ctx = make_ctx(spec);
  BlockDiagEngine eng(ctx, config_for(Complex(0.03, 0.01)));
  const auto caps = run_capturing(eng);
  const CapturedStep& c = find_step(caps, StepIndex{1, 2});
  // Sites {1,2} and {3,4} overlap or touch the step interval {2,3} but do not
  // contain it; both entries must be bitwise identical before and after.
  EXPECT_EQ((c.after.entries.at(Interval{1, 1}) - c.before.entries.at(Interval{1, 1})).norm(),
            0.0);
  EXPECT_EQ((c.after.entries.at(Interval{3, 1}) - c.before.entries.at(Interval{3, 1})).norm(),
            0.0);
}

TEST(ApplyAlpha, ProcessedEntriesStayFrozenForTheRestOfTheRun) {
  const ChainSpec spec = build_spin_model(2, 5, 5);
  auto ctx = make_ctx(spec);
  BlockDiagEngine eng(ctx, config_for(Complex(0.02, 0)));
  std::map<Interval, Matrix, StepOrder> at_processing;
  eng.run([&](const StepContext& sc) {
    at_processing[sc.step.interval()] = sc.after.entries.at(sc.step.interval());
  });
  for (const auto& [iv, frozen] : at_processing)
    EXPECT_EQ((eng.table().entries.at(iv) - frozen).norm(), 0.0) << to_string(iv);
}

TEST(ApplyAlpha, EveryStepIsADenseSimilarityTransform) {
  for (const int n : {3, 4}) {
    const ChainSpec spec = build_spin_model(2, n, 11);
    auto ctx = make_ctx(spec);
    BlockDiagEngine eng(ctx, config_for(Complex(0.05, 0.01)));
    const auto caps = run_capturing(eng);
    for (const auto& c : caps) {
      const Matrix kb = assemble_from_table(c.before, *ctx);
      const Matrix ka = assemble_from_table(c.after, *ctx);
      const Matrix s_emb = embed_full(c.s, c.step.interval(), *ctx);
      const Matrix conj =
          matrix_exponential(s_emb) * kb * matrix_exponential(Matrix(-s_emb));
      EXPECT_LT((conj - ka).norm(), 1e-10 * (1.0 + kb.norm()))
          << "n=" << n << " step " << to_string(c.step.interval());
    }
  }
}

TEST(ApplyAlpha, RejectsGeneratorWithWrongSupport) {
  const ChainSpec spec = build_spin_model(2, 3, 5);
  auto ctx = make_ctx(spec);
  BlockDiagEngine eng(ctx, config_for(Complex(0.02, 0)));
  PotentialTable table = eng.table();
  const Matrix s_bad = Matrix::Zero(8, 8);  // dimension of two bonds, not one
  const Matrix vd = Matrix::Zero(4, 4);
  EXPECT_THROW(apply_alpha(table, StepIndex{1, 1}, s_bad, vd, *ctx, eng.config()),
               SupportError);
}

// ---------------------------------------------------------------------------
// End-to-end runs against dense eigensolvers
// ---------------------------------------------------------------------------

TEST(EngineRun, IsolatedEigenvalueMatchesDenseSolverRealCoupling) {
  for (const int n : {2, 3, 4, 5}) {
    for (const double t : {0.02, -0.02, 0.05}) {
      const ChainSpec spec = build_spin_model(2, n, 11);
      auto ctx = make_ctx(spec);
      BlockDiagEngine eng(ctx, config_for(Complex(t, 0)));
      const RunReport rep = eng.run();
      EXPECT_LT(std::abs(rep.e_n.imag()), 1e-12);

      const Matrix k = assemble_full_hamiltonian(spec, Complex(t, 0)).matrix;
      Eigen::SelfAdjointEigenSolver<Matrix> es(k);
      EXPECT_LT(std::abs(rep.e_n.real() - es.eigenvalues()(0)), 1e-8)
          << "n=" << n << " t=" << t;
      // Certified gap: margin to the rest of the spectrum stays above 1/2.
      EXPECT_GE(rep.gap_margin, 0.5 - 1e-9);
      EXPECT_NEAR(rep.gap_margin, es.eigenvalues()(1) - rep.e_n.real(), 1e-9);
    }
  }
}

TEST(EngineRun, IsolatedEigenvalueMatchesDenseSolverComplexCoupling) {
  const ChainSpec spec = build_spin_model(2, 3, 11);
  auto ctx = make_ctx(spec);
  for (const int k8 : {1, 3, 6}) {
    const Complex tau = 0.02 * std::exp(Complex(0.0, kPi * k8 / 4.0));
    BlockDiagEngine eng(ctx, config_for(tau));
    const RunReport rep = eng.run();

    const Matrix k = assemble_full_hamiltonian(spec, tau).matrix;
    Eigen::ComplexEigenSolver<Matrix> es(k);
    double best = 1e300;
    Complex lambda0;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
      const double dist = std::abs(es.eigenvalues()(i) - rep.e_n);
      if (dist < best) {
        best = dist;
        lambda0 = es.eigenvalues()(i);
      }
    }
    EXPECT_LT(best, 1e-8);
    EXPECT_LT(std::abs(lambda0), 0.25);
    // Every other eigenvalue keeps its distance.
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i) {
      const Complex li = es.eigenvalues()(i);
      if (li == lambda0) continue;
      EXPECT_GE(std::abs(li - rep.e_n), 0.5);
    }
    EXPECT_GE(rep.gap_margin, 0.5);
  }
}

TEST(EngineRun, ReportInternalConsistency) {
  const ChainSpec spec = build_spin_model(2, 4, 11);
  auto ctx = make_ctx(spec);
  BlockDiagEngine eng(ctx, config_for(Complex(0.02, 0.005)));
  const RunReport rep = eng.run();

  // e_n is a re-readable quantity of the final table.
  EXPECT_EQ(rep.e_n, eng.vacuum_energy());
  // The effective Hamiltonian holds the vacuum as eigenvector at e_n.
  const Matrix ktilde = eng.assemble_effective_hamiltonian();
  const Vector& vac = ctx->vacuum(3);
  EXPECT_LT((ktilde * vac - rep.e_n * vac).norm(), 1e-10 * (1.0 + ktilde.norm()));
  EXPECT_LT(std::abs(vac.dot(ktilde * vac) - rep.e_n), 1e-12);
  // All entries are block-diagonal at the end.
  EXPECT_LE(rep.blockdiag_residual, 1e-11);
  // One step record per step, in processing order.
  const auto seq = step_sequence(4);
  ASSERT_EQ(rep.steps.size(), seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) EXPECT_EQ(rep.steps[i].step, seq[i]);
  EXPECT_EQ(eng.table().step, (StepIndex{3, 1}));
  EXPECT_GT(rep.wall_time_s, 0.0);
  EXPECT_NEAR(rep.t0_estimate, tau_domain_estimate().t0, 1e-18);
}

TEST(EngineRun, PerLengthNormsObeyTheDecayBound) {
  const ChainSpec spec = build_spin_model(2, 5, 11);
  auto ctx = make_ctx(spec);
  const double t = 0.02;
  BlockDiagEngine eng(ctx, config_for(Complex(t, 0)));
  const RunReport rep = eng.run();
  ASSERT_EQ(rep.per_length_norms.size(), 4u);
  for (int r = 1; r <= 4; ++r) {
    const PerLengthNorm& pl = rep.per_length_norms[static_cast<std::size_t>(r - 1)];
    EXPECT_EQ(pl.length, r);
    EXPECT_NEAR(pl.decay_bound, std::pow(t, (r - 1) / 4.0), 1e-15);
    EXPECT_LE(pl.max_weighted_norm, pl.decay_bound);
  }
}

TEST(EngineRun, TranslationInvarianceMakesSameLengthEntriesIdentical) {
  const Complex tau(0.02, 0.0);
  const ChainSpec spec = build_spin_model(2, 5, 11);
  auto ctx = make_ctx(spec);
  BlockDiagEngine eng(ctx, config_for(tau));
  eng.run();
  for (int l = 1; l <= 3; ++l) {
    const Matrix& first = eng.table().entries.at(Interval{1, l});
    for (int q = 2; q + l <= 5; ++q)
      EXPECT_EQ((eng.table().entries.at(Interval{q, l}) - first).norm(), 0.0)
          << "l=" << l << " q=" << q;
    // The same entry arises from the standalone chain on l+1 sites.
    const ChainSpec small = build_spin_model(2, l + 1, 11);
    BlockDiagEngine eng_small(make_ctx(small), config_for(tau));
    eng_small.run();
    EXPECT_EQ((eng_small.table().entries.at(Interval{1, l}) - first).norm(), 0.0) << "l=" << l;
  }
}

TEST(EngineRun, ZeroCouplingLeavesTheFreeChain) {
  const ChainSpec spec = sigma_xx_spec(4);
  auto ctx = make_ctx(spec);
  BlockDiagEngine eng(ctx, config_for(Complex(0, 0)));
  const RunReport rep = eng.run();
  EXPECT_EQ(rep.e_n, Complex(0.0, 0.0));
  // The effective Hamiltonian is exactly the free chain.
  Matrix free_part = Matrix::Zero(16, 16);
  for (int site = 1; site <= 4; ++site)
    add_embedded(free_part, spec.h_local, power_dim(2, site - 1), 2, power_dim(2, 4 - site));
  EXPECT_EQ((eng.assemble_effective_hamiltonian() - free_part).norm(), 0.0);
  EXPECT_NEAR(rep.gap_margin, 1.0, 1e-12);
  for (const auto& srec : rep.steps) EXPECT_EQ(srec.diag.s_norm, 0.0);
}

TEST(EngineRun, AnharmonicChainMatchesDenseSolver) {
  const ChainSpec spec = build_anharmonic_model(4, 3);
  auto ctx = make_ctx(spec);
  const double t = 0.02;
  BlockDiagEngine eng(ctx, config_for(Complex(t, 0)));
  const RunReport rep = eng.run();

  const Matrix k = assemble_full_hamiltonian(spec, Complex(t, 0)).matrix;
  Eigen::SelfAdjointEigenSolver<Matrix> es(k);
  EXPECT_LT(std::abs(rep.e_n.real() - es.eigenvalues()(0)), 1e-8);
  EXPECT_GE(rep.gap_margin, 0.5 - 1e-9);
  for (const auto& pl : rep.per_length_norms)
    EXPECT_LE(pl.max_weighted_norm, pl.decay_bound);
}

TEST(EngineRun, ThrowsAtVeryLargeCoupling) {
  const ChainSpec spec = build_spin_model(2, 3, 11);
  auto ctx = make_ctx(spec);
  BlockDiagEngine eng(ctx, config_for(Complex(0.9, 0)));
  EXPECT_THROW(eng.run(), NonconvergenceError);
}

TEST(EngineRun, ConfigValidationAndAccessGuards) {
  const ChainSpec spec = build_spin_model(2, 3, 11);
  auto ctx = make_ctx(spec);
  EngineConfig bad = config_for(Complex(0.02, 0));
  bad.j_max = 0;
  EXPECT_THROW(BlockDiagEngine(ctx, bad), ConfigError);

  BlockDiagEngine eng(ctx, config_for(Complex(0.02, 0)));
  EXPECT_THROW(eng.u(), ConfigError);
  EXPECT_THROW(eng.u_inverse(), ConfigError);
}

TEST(EngineRun, GapSkippedWhenTheChainExceedsTheCap) {
  const ChainSpec spec = build_spin_model(2, 4, 11);
  auto ctx = make_ctx(spec);
  EngineConfig cfg = config_for(Complex(0.02, 0));
  cfg.dim_cap = 8;  // full chain needs 16
  BlockDiagEngine eng(ctx, cfg);
  const RunReport rep = eng.run();
  EXPECT_TRUE(std::isnan(rep.gap_margin));

  const Matrix k = assemble_full_hamiltonian(spec, Complex(0.02, 0)).matrix;
  Eigen::SelfAdjointEigenSolver<Matrix> es(k);
  EXPECT_LT(std::abs(rep.e_n.real() - es.eigenvalues()(0)), 1e-8);
}

TEST(EngineRun, GapComputationCanBeDisabled) {
  const ChainSpec spec = build_spin_model(2, 3, 11);
  auto ctx = make_ctx(spec);
  EngineConfig cfg = config_for(Complex(0.02, 0));
  cfg.compute_gap = false;
  BlockDiagEngine eng(ctx, cfg);
  EXPECT_TRUE(std::isnan(eng.run().gap_margin));
}

// ---------------------------------------------------------------------------
// Unitary tracking
// ---------------------------------------------------------------------------

TEST(UnitaryTracking, RealCouplingGivesAUnitaryConjugation) {
  const ChainSpec spec = build_spin_model(2, 3, 11);
  auto ctx = make_ctx(spec);
  EngineConfig cfg = config_for(Complex(0.05, 0));
  cfg.track_u = true;
  BlockDiagEngine eng(ctx, cfg);
  const RunReport rep = eng.run();

  EXPECT_LT(rep.u_unitarity, 1e-9);
  const Matrix k0 = assemble_full_hamiltonian(spec, Complex(0.05, 0)).matrix;
  EXPECT_LT(rep.u_conj_residual, 1e-7 * operator_norm(k0));
  // For real coupling the generator is anti-Hermitian, so U^{-1} = U^H.
  EXPECT_LT((eng.u_inverse() - Matrix(eng.u().adjoint())).norm(), 1e-10);
  const Matrix id = Matrix::Identity(8, 8);
  EXPECT_LT((eng.u_inverse() * eng.u() - id).norm(), 1e-12);
}

TEST(UnitaryTracking, ComplexCouplingStillConjugatesExactly) {
  const ChainSpec spec = build_spin_model(2, 3, 11);
  auto ctx = make_ctx(spec);
  const Complex tau(0.0, 0.02);
  EngineConfig cfg = config_for(tau);
  cfg.track_u = true;
  BlockDiagEngine eng(ctx, cfg);
  eng.run();

  const Matrix id = Matrix::Identity(8, 8);
  EXPECT_LT((eng.u_inverse() * eng.u() - id).norm(), 1e-12);
  const Matrix k0 = assemble_full_hamiltonian(spec, tau).matrix;
  const Matrix ktilde = eng.assemble_effective_hamiltonian();
  EXPECT_LT((eng.u_inverse() * k0 * eng.u() - ktilde).norm(), 1e-9 * (1.0 + k0.norm()));
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

TEST(Checkpoint, MidRunRoundTripReproducesTheRunBitwise) {
  const ChainSpec spec = build_spin_model(2, 4, 11);
  auto ctx = make_ctx(spec);
  EngineConfig cfg = config_for(Complex(0.02, 0.005));
  cfg.track_u = true;

  BlockDiagEngine eng_a(ctx, cfg);
  Json mid;
  const RunReport rep_a = eng_a.run([&](const StepContext& sc) {
    if (sc.step == StepIndex{2, 2}) mid = eng_a.checkpoint_to_json();
  });
  ASSERT_FALSE(mid.is_null());
  EXPECT_EQ(mid.at("step").at("k").get<int>(), 2);
  EXPECT_EQ(mid.at("step").at("q").get<int>(), 2);

  BlockDiagEngine eng_b = BlockDiagEngine::from_checkpoint(ctx, cfg, mid);
  const RunReport rep_b = eng_b.run();

  EXPECT_EQ(rep_a.e_n, rep_b.e_n);
  EXPECT_EQ(rep_a.gap_margin, rep_b.gap_margin);
  EXPECT_EQ(rep_a.u_unitarity, rep_b.u_unitarity);
  EXPECT_EQ(rep_a.u_conj_residual, rep_b.u_conj_residual);
  ASSERT_EQ(rep_a.per_length_norms.size(), rep_b.per_length_norms.size());
  for (std::size_t i = 0; i < rep_a.per_length_norms.size(); ++i)
    EXPECT_EQ(rep_a.per_length_norms[i].max_weighted_norm,
              rep_b.per_length_norms[i].max_weighted_norm);
  ASSERT_EQ(rep_a.steps.size(), rep_b.steps.size());
  // Final checkpoints agree byte for byte (hex-float serialization).
  EXPECT_EQ(eng_a.checkpoint_to_json().dump(), eng_b.checkpoint_to_json().dump());
}

TEST(Checkpoint, ResumingACompletedRunIsANoOp) {
  const ChainSpec spec = build_spin_model(2, 3, 11);
  auto ctx = make_ctx(spec);
  const EngineConfig cfg = config_for(Complex(0.02, 0));
  BlockDiagEngine eng_a(ctx, cfg);
  const RunReport rep_a = eng_a.run();
  const Json done = eng_a.checkpoint_to_json();

  BlockDiagEngine eng_b = BlockDiagEngine::from_checkpoint(ctx, cfg, done);
  const RunReport rep_b = eng_b.run();
  EXPECT_EQ(rep_b.steps.size(), rep_a.steps.size());
  EXPECT_EQ(rep_a.e_n, rep_b.e_n);
  EXPECT_EQ(eng_b.checkpoint_to_json().dump(), done.dump());
}

TEST(Checkpoint, RejectsForeignDocumentsAndMismatchedSetups) {
  const ChainSpec spec = build_spin_model(2, 3, 11);
  auto ctx = make_ctx(spec);
  const EngineConfig cfg = config_for(Complex(0.02, 0));
  BlockDiagEngine eng(ctx, cfg);
  eng.run();
  const Json good = eng.checkpoint_to_json();

  EXPECT_THROW(BlockDiagEngine::from_checkpoint(ctx, cfg, Json{{"format", "other"}}),
               ConfigError);

  // Same geometry, different random seed: digest must not match.
  auto other_ctx = make_ctx(build_spin_model(2, 3, 7));
  EXPECT_THROW(BlockDiagEngine::from_checkpoint(other_ctx, cfg, good), ConfigError);

  EngineConfig other_tau = cfg;
  other_tau.tau = Complex(0.03, 0);
  EXPECT_THROW(BlockDiagEngine::from_checkpoint(ctx, other_tau, good), ConfigError);

  EngineConfig other_tol = cfg;
  other_tol.tail_tol = 1e-12;
  EXPECT_THROW(BlockDiagEngine::from_checkpoint(ctx, other_tol, good), ConfigError);

  Json truncated = good;
  truncated["entries"].erase(0);
  EXPECT_THROW(BlockDiagEngine::from_checkpoint(ctx, cfg, truncated), ConfigError);
}

TEST(Checkpoint, DigestIsStableAndSeedSensitive) {
  EXPECT_EQ(BlockDiagEngine::fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(BlockDiagEngine::fnv1a_hex("a"), "af63dc4c8601ec8c");

  const ChainSpec spec = build_spin_model(2, 3, 11);
  auto ctx = make_ctx(spec);
  const EngineConfig cfg = config_for(Complex(0.02, 0));
  BlockDiagEngine e1(ctx, cfg), e2(ctx, cfg);
  EXPECT_EQ(e1.spec_digest(), e2.spec_digest());
  BlockDiagEngine e3(make_ctx(build_spin_model(2, 3, 7)), cfg);
  EXPECT_NE(e1.spec_digest(), e3.spec_digest());
}

}  // namespace

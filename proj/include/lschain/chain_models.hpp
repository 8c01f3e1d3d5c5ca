#ifndef LSCHAIN_CHAIN_MODELS_HPP
#define LSCHAIN_CHAIN_MODELS_HPP

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "lschain/operator_algebra.hpp"

namespace lschain {

/// Deterministic uniform double in [-1, 1) from raw mt19937_64 bits; avoids
/// implementation-defined std distribution behavior.
inline double uniform_pm1(std::mt19937_64& gen) {
  return 2.0 * ((gen() >> 11) * 0x1.0p-53) - 1.0;
}

/// Random Hermitian matrix with entries of order 1, fixed draw order.
inline Matrix random_hermitian(long dim, std::mt19937_64& gen) {
  Matrix a(dim, dim);
  for (long i = 0; i < dim; ++i)
    for (long j = 0; j < dim; ++j) {
      const double re = uniform_pm1(gen);
      const double im = uniform_pm1(gen);
      a(i, j) = Complex(re, im);
    }
  return 0.5 * (a + Matrix(a.adjoint()));
}

/// Rescale raw Hermitian seeds so each has weighted norm exactly 1/2, and
/// assemble the finished spec. Shared by the builders and by tests that force
/// a specific interaction.
inline ChainSpec finalize_spec(std::string model, int n_sites, int local_dim, int kbar,
                               Matrix h_local, Vector omega, std::vector<Matrix> raw_seeds,
                               std::uint64_t rng_seed = 0, int d_trunc = 0,
                               double x4_disc = 0.0) {
  if (kbar < 1 || kbar > 2) throw ConfigError("finalize_spec: kbar must be 1 or 2");
  if (n_sites < kbar + 1) throw ConfigError("finalize_spec: kbar requires n_sites >= kbar+1");
  if (static_cast<int>(raw_seeds.size()) != kbar)
    throw ConfigError("finalize_spec: need one raw seed per range 1..kbar");

  ChainSpec spec;
  spec.model = std::move(model);
  spec.n_sites = n_sites;
  spec.local_dim = local_dim;
  spec.kbar = kbar;
  spec.translation_invariant = true;
  spec.rng_seed = rng_seed;
  spec.d_trunc = d_trunc;
  spec.x4_truncation_discrepancy = x4_disc;
  spec.h_local = std::move(h_local);
  spec.omega = std::move(omega);

  // A small context over kbar+1 sites suffices to evaluate seed norms.
  ChainSpec proto = spec;
  proto.n_sites = kbar + 1;
  ChainContext norm_ctx(proto);
  for (int k = 1; k <= kbar; ++k) {
    Matrix m = std::move(raw_seeds[static_cast<std::size_t>(k - 1)]);
    const double w = norm_ctx.weighted_norm(m, k);
    if (w < 1e-14) throw ConfigError("finalize_spec: seed potential has zero weighted norm");
    m *= 0.5 / w;
    spec.seeds.push_back(SeedPotential{k, std::move(m)});
  }
  spec.validate_structure();
  return spec;
}

/// Gapped spin chain: on-site diag(0, 1, ..., 1), random Hermitian seed
/// interactions with weighted norm 1/2. Deterministic in rng_seed.
inline ChainSpec build_spin_model(int local_dim, int n_sites, std::uint64_t rng_seed,
                                  int kbar = 1) {
  if (local_dim < 2) throw ConfigError("build_spin_model: local_dim must be >= 2");
  Matrix h = Matrix::Zero(local_dim, local_dim);
  for (int i = 1; i < local_dim; ++i) h(i, i) = 1.0;
  Vector omega = Vector::Zero(local_dim);
  omega(0) = 1.0;

  std::mt19937_64 gen(rng_seed);
  std::vector<Matrix> raw;
  for (int k = 1; k <= kbar; ++k) raw.push_back(random_hermitian(power_dim(local_dim, k + 1), gen));
  return finalize_spec("spin", n_sites, local_dim, kbar, std::move(h), std::move(omega),
                       std::move(raw), rng_seed);
}

/// Position operator in the truncated oscillator basis: x = (a + a^dagger)/sqrt(2).
inline Matrix oscillator_position(int d_trunc) {
  Matrix x = Matrix::Zero(d_trunc, d_trunc);
  for (int m = 0; m + 1 < d_trunc; ++m) {
    const double v = std::sqrt((m + 1) / 2.0);
    x(m, m + 1) = v;
    x(m + 1, m) = v;
  }
  return x;
}

/// Momentum operator in the truncated oscillator basis: p = i(a^dagger - a)/sqrt(2).
inline Matrix oscillator_momentum(int d_trunc) {
  Matrix p = Matrix::Zero(d_trunc, d_trunc);
  for (int m = 0; m + 1 < d_trunc; ++m) {
    const double v = std::sqrt((m + 1) / 2.0);
    p(m, m + 1) = Complex(0.0, -v);
    p(m + 1, m) = Complex(0.0, v);
  }
  return p;
}

/// Truncated anharmonic crystal: on-site p^2 + x^2 + x^4 (normalized, rotated
/// to its eigenbasis) with nearest-neighbor coupling x (x) x at weighted norm 1/2.
inline ChainSpec build_anharmonic_model(int d_trunc, int n_sites) {
  if (d_trunc < 3) throw ConfigError("build_anharmonic_model: d_trunc must be >= 3");
  const Matrix x = oscillator_position(d_trunc);
  const Matrix p = oscillator_momentum(d_trunc);
  const Matrix x2 = x * x;
  const Matrix h_raw = p * p + x2 + x2 * x2;

  Eigen::SelfAdjointEigenSolver<Matrix> es(h_raw);
  if (es.info() != Eigen::Success) throw Error("build_anharmonic_model: eigensolver failed");
  const RealVector vals = es.eigenvalues();
  const double gap = vals(1) - vals(0);
  if (gap < 1e-10) throw DegenerateGroundStateError("build_anharmonic_model: degenerate ground state");

  // Work in the on-site eigenbasis: the normalized on-site term is exactly
  // diagonal and the vacuum is basis vector 0.
  Matrix q = es.eigenvectors();
  for (int c = 0; c < d_trunc; ++c) q.col(c) = fix_phase(q.col(c));
  Matrix h = Matrix::Zero(d_trunc, d_trunc);
  for (int i = 0; i < d_trunc; ++i) h(i, i) = (vals(i) - vals(0)) / gap;
  Vector omega = Vector::Zero(d_trunc);
  omega(0) = 1.0;
  const Matrix x_rot = q.adjoint() * x * q;

  // Truncation bookkeeping: ||(x^4 truncated from a larger space) - (truncated x)^4||.
  const int big = d_trunc + 4;
  const Matrix xb = oscillator_position(big);
  const Matrix x4b = xb * xb * xb * xb;
  const double x4_disc =
      operator_norm(Matrix(x4b.topLeftCorner(d_trunc, d_trunc)) - x2 * x2);

  std::vector<Matrix> raw;
  raw.push_back(kron(x_rot, x_rot));
  return finalize_spec("anharmonic", n_sites, d_trunc, /*kbar=*/1, std::move(h),
                       std::move(omega), std::move(raw), /*rng_seed=*/0, d_trunc, x4_disc);
}

// ---------------------------------------------------------------------------
// Full-chain Hamiltonian (oracle-side dense assembly)
// ---------------------------------------------------------------------------

struct FullHamiltonian {
  Matrix matrix;
  Complex tau;
};

/// K_N(tau) = sum_i H_i + tau * sum_{k<=kbar, i} V_{I_{k,i}} on the full chain.
inline FullHamiltonian assemble_full_hamiltonian(const ChainSpec& spec, Complex tau,
                                                 long dim_cap = 4096) {
  spec.validate_structure();
  const int d = spec.local_dim;
  const int n = spec.n_sites;
  const long dim = power_dim(d, n);
  if (dim > dim_cap) throw DimensionCapError("assemble_full_hamiltonian: d^N exceeds cap");
  Matrix k = Matrix::Zero(dim, dim);
  for (int site = 1; site <= n; ++site)
    add_embedded(k, spec.h_local, power_dim(d, site - 1), d, power_dim(d, n - site));
  for (const auto& s : spec.seeds)
    for (int i = 1; i + s.edges <= n; ++i)
      add_embedded(k, s.matrix, power_dim(d, i - 1), power_dim(d, s.edges + 1),
                   power_dim(d, n - i - s.edges), tau);
  return FullHamiltonian{std::move(k), tau};
}

}  // namespace lschain

#endif  // LSCHAIN_CHAIN_MODELS_HPP

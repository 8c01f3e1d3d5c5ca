#ifndef LSCHAIN_TYPES_HPP
#define LSCHAIN_TYPES_HPP

#include <Eigen/Dense>

#include <complex>
#include <compare>
#include <stdexcept>
#include <string>
#include <vector>

namespace lschain {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXcd;
using Vector = Eigen::VectorXcd;
using RealVector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad supports, non-Hermitian matrices, invalid config values.
struct ConfigError : Error {
  using Error::Error;
};

/// An operator's support does not lie inside the target interval / chain.
struct SupportError : ConfigError {
  using ConfigError::ConfigError;
};

/// Requested dense object exceeds the configured dimension cap.
struct DimensionCapError : Error {
  using Error::Error;
};

/// On-site spectrum has a (near-)degenerate ground state; normalization impossible.
struct DegenerateGroundStateError : Error {
  using Error::Error;
};

/// The restricted operator to invert is numerically singular.
struct SingularRestrictionError : Error {
  double rcond = 0.0;
  explicit SingularRestrictionError(const std::string& what, double rcond_in)
      : Error(what), rcond(rcond_in) {}
};

/// A truncated series failed to reach the requested tolerance.
struct NonconvergenceError : Error {
  using Error::Error;
};

/// A required numerical precondition (e.g. block-diagonality of inputs) is violated.
struct PreconditionError : Error {
  using Error::Error;
};

/// Root bracketing for the scalar equation failed.
struct BracketingError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Intervals of consecutive chain sites
// ---------------------------------------------------------------------------

/// Closed interval of consecutive sites {left, ..., left+edges}; sites are
/// 1-based, `edges` counts bonds (so a single site has edges == 0).
struct Interval {
  int left = 1;
  int edges = 0;

  int right() const { return left + edges; }
  int sites() const { return edges + 1; }

  bool contains_site(int s) const { return left <= s && s <= right(); }
  bool contains(const Interval& o) const {
    return left <= o.left && o.right() <= right();
  }
  bool disjoint_from(const Interval& o) const {
    return right() < o.left || o.right() < left;
  }

  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Processing order for intervals: shorter first, then left-to-right.
/// This is exactly the order in which the iteration visits its steps.
struct StepOrder {
  bool operator()(const Interval& a, const Interval& b) const {
    if (a.edges != b.edges) return a.edges < b.edges;
    return a.left < b.left;
  }
};

inline std::string to_string(const Interval& iv) {
  return "I(" + std::to_string(iv.edges) + "," + std::to_string(iv.left) + ")";
}

// ---------------------------------------------------------------------------
// Step indices
// ---------------------------------------------------------------------------

/// Index (k, q) of one block-diagonalization step: interval length k >= 1
/// (in bonds), left endpoint q. The initial state, before any step, is
/// conventionally (0, n_sites).
struct StepIndex {
  int k = 0;
  int q = 0;

  Interval interval() const { return Interval{q, k}; }

  friend bool operator==(const StepIndex&, const StepIndex&) = default;
};

/// True if `a` strictly precedes `b` in the step order.
inline bool step_precedes(const StepIndex& a, const StepIndex& b) {
  return a.k < b.k || (a.k == b.k && a.q < b.q);
}

/// All steps for an n-site chain in execution order:
/// (1,1), (1,2), ..., (1,n-1), (2,1), ..., (n-1,1).
inline std::vector<StepIndex> step_sequence(int n_sites) {
  if (n_sites < 2) throw ConfigError("step_sequence: need at least 2 sites");
  std::vector<StepIndex> seq;
  seq.reserve(static_cast<std::size_t>(n_sites) * (n_sites - 1) / 2);
  for (int k = 1; k <= n_sites - 1; ++k)
    for (int q = 1; q <= n_sites - k; ++q) seq.push_back(StepIndex{k, q});
  return seq;
}

/// Step executed immediately before `s` in an n-site chain, or (0, n_sites)
/// if `s` is the first step. For q == 1 the predecessor is the last step of
/// the previous length level, (k-1, n-k+1).
inline StepIndex predecessor_step(const StepIndex& s, int n_sites) {
  if (s.q > 1) return StepIndex{s.k, s.q - 1};
  if (s.k > 1) return StepIndex{s.k - 1, n_sites - s.k + 1};
  return StepIndex{0, n_sites};
}

}  // namespace lschain

#endif  // LSCHAIN_TYPES_HPP

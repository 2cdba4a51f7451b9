#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <vector>

#include "mcinv/exec.hpp"
#include "mcinv/markov.hpp"
#include "mcinv/polytope.hpp"

namespace mcinv {

struct KEstimate {
  double epsilon = 0.0;  // min slack of the stationary point, min(g - G v)
  double g_norm = 0.0;   // induced infinity norm of G
  double rho = 0.0;
  long k = 1;
};

// Conservative bound on the iteration count needed before the stopping test
// can pass: ceil(log(epsilon / |||G|||) / log(rho)), clamped to at least 1;
// rho == 0 gives 1 by convention. Requires an ergodic chain and G v < g
// strictly.
KEstimate k_estimate(const MarkovChain& chain, const Polyhedron& safe, const Eigen::VectorXd& v);

enum class InvariantStatus : std::uint8_t { Converged, IterationCapReached, EmptyConstraintSet };

struct IterationRecord {
  int t = 0;
  int stacked_rows = 0;
  Verdict stopping_test = Verdict::Unknown;
};

struct InvariantSetResult {
  InvariantStatus status = InvariantStatus::EmptyConstraintSet;
  // Converged: the stopping test passed at this t. IterationCapReached: the
  // last t whose block was stacked; the partial stack constrains only the
  // next t_star + 1 steps.
  int t_star = -1;
  Polyhedron stacked;                  // blocks G M^0 .. G M^t_star
  ContainmentCertificate certificate;  // final successful stopping test
  std::vector<IterationRecord> history;
  bool empty_set = false;  // stack became infeasible on the simplex (t > 0)
  std::vector<std::string> warnings;
};

struct InvariantOptions {
  int iteration_cap = -1;  // -1: max(2 K, 1000) when the K estimate applies, else 1000
  double feas_tol = kLpFeasTol;
  Exec exec = Exec::Parallel;
  bool eliminate_redundant = false;
};

// Largest subset of (simplex \cap safe) that the chain never leaves, found by
// stacking preimage blocks until the stacked system certifies containment in
// the next preimage.
InvariantSetResult maximal_invariant_set(const MarkovChain& chain, const Polyhedron& safe,
                                         const InvariantOptions& options = {});

// Is x0 in the converged set? Accepts distributions satisfying the stacked
// system within a 1e-9 slack.
bool membership(const InvariantSetResult& result, const Eigen::VectorXd& x0);

enum class InvarianceVerdict : std::uint8_t { Invariant, NotInvariant, Empty, Unknown };

struct InvarianceResult {
  InvarianceVerdict verdict = InvarianceVerdict::Unknown;
  ContainmentCertificate certificate;  // populated when Invariant
};

// One-shot certificate that (simplex \cap p) is positively invariant:
// Y >= 0 with Y (G - g 1') >= (G - g 1') M.
InvarianceResult certify_invariance(const MarkovChain& chain, const Polyhedron& p,
                                    double feas_tol = kLpFeasTol, Exec exec = Exec::Parallel);

}  // namespace mcinv

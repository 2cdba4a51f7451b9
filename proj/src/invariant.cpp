#include "mcinv/invariant.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace mcinv {

KEstimate k_estimate(const MarkovChain& chain, const Polyhedron& safe, const Eigen::VectorXd& v) {
  validate_polyhedron(safe);
  if (v.size() != chain.size() || safe.dim() != chain.size())
    throw std::invalid_argument("k_estimate: dimension mismatch");
  if (!is_ergodic(chain)) throw NotErgodicError("k_estimate: chain pattern is not primitive");

  KEstimate est;
  est.rho = mixing_rho(chain.matrix(), v);
  if (est.rho >= 1.0)
    throw std::invalid_argument("k_estimate: spectral factor " + std::to_string(est.rho) +
                                " is not below 1");
  const Eigen::VectorXd slack = safe.g - safe.G * v;
  est.epsilon = safe.num_rows() > 0 ? slack.minCoeff() : 1.0;
  if (est.epsilon <= 0.0)
    throw std::invalid_argument("k_estimate: stationary distribution is not strictly inside the "
                                "safe set (min slack " +
                                std::to_string(est.epsilon) + ")");
  est.g_norm = safe.num_rows() > 0 ? safe.G.cwiseAbs().rowwise().sum().maxCoeff() : 0.0;

  if (est.rho == 0.0 || est.g_norm == 0.0 || est.epsilon >= est.g_norm) {
    est.k = 1;
    return est;
  }
  est.k = static_cast<long>(std::ceil(std::log(est.epsilon / est.g_norm) / std::log(est.rho)));
  est.k = std::max(est.k, 1L);
  return est;
}

namespace {

// Exact maximum of coeffs . x over {0 <= x <= caps, sum x = 1}: fill the
// largest coefficients first (fractional knapsack). Requires sum(caps) >= 1.
double box_simplex_max(const Eigen::VectorXd& coeffs, const Eigen::VectorXd& caps,
                       std::vector<int>& order) {
  order.resize(static_cast<std::size_t>(coeffs.size()));
  for (int i = 0; i < coeffs.size(); ++i) order[static_cast<std::size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](int a, int b) { return coeffs[a] > coeffs[b]; });
  double mass = 1.0;
  double value = 0.0;
  for (int i : order) {
    const double take = std::min(mass, caps[i]);
    value += coeffs[i] * take;
    mass -= take;
    if (mass <= 0.0) break;
  }
  return value;
}

}  // namespace

InvariantSetResult maximal_invariant_set(const MarkovChain& chain, const Polyhedron& safe,
                                         const InvariantOptions& options) {
  validate_polyhedron(safe);
  if (!safe.on_simplex)
    throw std::invalid_argument("maximal_invariant_set: safe set must be simplex-restricted");
  if (safe.dim() != chain.size())
    throw std::invalid_argument("maximal_invariant_set: safe set dimension " +
                                std::to_string(safe.dim()) + " does not match chain size " +
                                std::to_string(chain.size()));

  InvariantSetResult result;
  const int n = chain.size();
  const int m = safe.num_rows();

  // The stationary distribution sits in every stacked preimage whenever it is
  // strictly inside the safe set, so the stack can never become empty and the
  // per-iteration nonemptiness probes are skipped.
  bool stationary_interior = false;
  if (is_ergodic(chain)) {
    const StationaryInfo info = stationary(chain);
    const Eigen::VectorXd slack = safe.g - safe.G * info.v;
    stationary_interior = m == 0 || slack.minCoeff() > 0.0;
  }

  int cap = options.iteration_cap;
  if (cap < 0) {
    cap = 1000;
    if (!is_ergodic(chain)) {
      result.warnings.push_back("chain is not ergodic; finite convergence is not guaranteed");
    } else if (!stationary_interior) {
      result.warnings.push_back(
          "stationary distribution is not strictly inside the safe set; finite convergence is "
          "not guaranteed");
    } else {
      const KEstimate est = k_estimate(chain, safe, stationary(chain).v);
      cap = static_cast<int>(std::max(2L * est.k, 1000L));
    }
  }

  if (!stationary_interior) {
    const SimplexPoint ne = nonempty_on_simplex(safe, options.feas_tol);
    if (ne.verdict == Verdict::Unknown)
      throw NumericalFailureError("maximal_invariant_set: nonemptiness check failed");
    if (ne.verdict == Verdict::Fails) {
      result.status = InvariantStatus::EmptyConstraintSet;
      result.stacked = safe;
      return result;
    }
  }

  // Fractional-knapsack screen over the safe box alone. It is a relaxation of
  // the stack, so rows it certifies are implied by any stack that refines the
  // safe set. Only available when the safe rows are exactly the identity box.
  const bool box_screen = safe.G.rows() == n && safe.G.isIdentity(0.0) && safe.g.sum() >= 1.0;

  Polyhedron stack = safe;
  Eigen::MatrixXd power = chain.matrix();  // M^(t+1)
  for (int t = 0; t <= cap; ++t) {
    if (t > 0 && !stationary_interior) {
      const SimplexPoint ne = nonempty_on_simplex(stack, options.feas_tol);
      if (ne.verdict == Verdict::Unknown)
        throw NumericalFailureError("maximal_invariant_set: nonemptiness check failed at t = " +
                                    std::to_string(t));
      if (ne.verdict == Verdict::Fails) {
        result.status = InvariantStatus::Converged;
        result.t_star = t;
        result.stacked = stack;
        result.empty_set = true;
        result.certificate.vacuous = true;
        result.warnings.push_back("stacked system became empty on the simplex at t = " +
                                  std::to_string(t) + "; the invariant set is empty");
        return result;
      }
    }

    const Polyhedron next{safe.G * power, safe.g, false};

    if (options.eliminate_redundant) {
      // Decide each row of the next block separately; rows already implied by
      // the stack are never appended, so the stack keeps only rows that cut.
      // The described set matches full stacking at every t, hence so does the
      // stopping index.
      std::vector<int> scratch;
      std::vector<int> rest;
      for (int i = 0; i < m; ++i) {
        const bool screened =
            box_screen && box_simplex_max(next.G.row(i).transpose(), safe.g, scratch) <= next.g[i];
        if (!screened) rest.push_back(i);
      }
      const int pending = static_cast<int>(rest.size());
      std::vector<Verdict> row_verdicts(static_cast<std::size_t>(pending), Verdict::Unknown);
      detail::parallel_for(pending, options.exec, [&](int k) {
        const int i = rest[static_cast<std::size_t>(k)];
        row_verdicts[static_cast<std::size_t>(k)] =
            row_implied_on_simplex(stack, next.G.row(i).transpose(), next.g[i], options.feas_tol)
                .verdict;
      });
      std::vector<int> violated;
      for (int k = 0; k < pending; ++k) {
        if (row_verdicts[static_cast<std::size_t>(k)] == Verdict::Unknown)
          throw NumericalFailureError("maximal_invariant_set: stopping test failed at t = " +
                                      std::to_string(t));
        if (row_verdicts[static_cast<std::size_t>(k)] == Verdict::Fails)
          violated.push_back(rest[static_cast<std::size_t>(k)]);
      }
      result.history.push_back(IterationRecord{
          t, stack.num_rows(), violated.empty() ? Verdict::Holds : Verdict::Fails});
      if (violated.empty()) {
        // Re-run the full containment once for the certificate.
        const ContainmentResult test =
            contains_on_simplex(stack, next, options.feas_tol, options.exec);
        if (test.verdict != Verdict::Holds)
          throw NumericalFailureError(
              "maximal_invariant_set: certificate construction failed at t = " +
              std::to_string(t));
        result.status = InvariantStatus::Converged;
        result.t_star = t;
        result.stacked = stack;
        result.certificate = test.certificate;
        return result;
      }
      const int old_rows = stack.num_rows();
      stack.G.conservativeResize(old_rows + static_cast<int>(violated.size()), n);
      stack.g.conservativeResize(old_rows + static_cast<int>(violated.size()));
      for (std::size_t k = 0; k < violated.size(); ++k) {
        stack.G.row(old_rows + static_cast<int>(k)) = next.G.row(violated[k]);
        stack.g[old_rows + static_cast<int>(k)] = next.g[violated[k]];
      }
    } else {
      const ContainmentResult test =
          contains_on_simplex(stack, next, options.feas_tol, options.exec);
      result.history.push_back(IterationRecord{t, stack.num_rows(), test.verdict});
      if (test.verdict == Verdict::Unknown)
        throw NumericalFailureError("maximal_invariant_set: stopping test failed at t = " +
                                    std::to_string(t));
      if (test.verdict == Verdict::Holds) {
        result.status = InvariantStatus::Converged;
        result.t_star = t;
        result.stacked = stack;
        result.certificate = test.certificate;
        return result;
      }
      Polyhedron grown;
      grown.on_simplex = true;
      grown.G.resize(stack.num_rows() + m, n);
      grown.G.topRows(stack.num_rows()) = stack.G;
      grown.G.bottomRows(m) = next.G;
      grown.g.resize(stack.num_rows() + m);
      grown.g.head(stack.num_rows()) = stack.g;
      grown.g.tail(m) = next.g;
      stack = std::move(grown);
    }
    power *= chain.matrix();
  }

  result.status = InvariantStatus::IterationCapReached;
  result.t_star = cap;
  result.stacked = stack;
  result.warnings.push_back("iteration cap " + std::to_string(cap) +
                            " reached; the partial stack constrains only the next " +
                            std::to_string(cap + 1) + " steps");
  return result;
}

bool membership(const InvariantSetResult& result, const Eigen::VectorXd& x0) {
  if (result.status != InvariantStatus::Converged)
    throw std::invalid_argument("membership: requires a converged invariant set result");
  validate_distribution(x0);
  if (x0.size() != result.stacked.dim())
    throw std::invalid_argument("membership: distribution dimension mismatch");
  return result.stacked.contains(x0, kMembershipTol);
}

InvarianceResult certify_invariance(const MarkovChain& chain, const Polyhedron& p,
                                    double feas_tol, Exec exec) {
  validate_polyhedron(p);
  if (!p.on_simplex)
    throw std::invalid_argument("certify_invariance: polytope must be simplex-restricted");
  if (p.dim() != chain.size())
    throw std::invalid_argument("certify_invariance: dimension mismatch");

  InvarianceResult result;
  const SimplexPoint ne = nonempty_on_simplex(p, feas_tol);
  if (ne.verdict == Verdict::Unknown) return result;
  if (ne.verdict == Verdict::Fails) {
    result.verdict = InvarianceVerdict::Empty;
    return result;
  }

  const Polyhedron image{p.G * chain.matrix(), p.g, false};
  const ContainmentResult test = contains_on_simplex(p, image, feas_tol, exec);
  switch (test.verdict) {
    case Verdict::Holds:
      result.verdict = InvarianceVerdict::Invariant;
      result.certificate = test.certificate;
      break;
    case Verdict::Fails: result.verdict = InvarianceVerdict::NotInvariant; break;
    case Verdict::Unknown: result.verdict = InvarianceVerdict::Unknown; break;
  }
  return result;
}

}  // namespace mcinv

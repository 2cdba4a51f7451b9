#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcinv/markov.hpp"
#include "mcinv/solver_core.hpp"

namespace mcinv {

enum class SynthesisMode : std::uint8_t { ReversibleLMI, FixedD_LMI };
enum class SynthesisObjective : std::uint8_t { None, MinTransitionFrequency, MaxSelfLoopMass };

// Box bound on a single transition matrix entry M(row, col).
struct EntryBound {
  int row = 0;
  int col = 0;
  double lo = 0.0;
  double hi = 1.0;
};

struct SynthesisProblem {
  Graph graph;
  Eigen::VectorXd v;  // target stationary distribution, always an input
  SynthesisMode mode = SynthesisMode::ReversibleLMI;
  Eigen::MatrixXd fixed_d;  // FixedD_LMI scaling; empty selects diag(v)^{-1}
  SynthesisObjective objective = SynthesisObjective::None;
  std::vector<EntryBound> entry_bounds;
  double lambda_tol = 1e-4;
  double feas_tol = kSpectralFeasTol;
};

// No chain satisfies the constraints even with the spectral bound fully
// relaxed; signals over-constrained structure or entry bounds.
struct InfeasibleAtLambdaOneError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct BisectionStep {
  double lambda = 0.0;
  SpectralStatus status = SpectralStatus::NumericalFailure;
};

struct SynthesisResiduals {
  double stochasticity = 0.0;  // max |column sum - 1|
  double stationarity = 0.0;   // max |(M v - v)_i|
  double sparsity = 0.0;       // max |M entry| outside the graph support
  double reversibility = 0.0;  // max detailed-balance defect (ReversibleLMI)
};

struct SynthesisResult {
  MarkovChain chain;
  double lambda_star = 1.0;   // certified spectral bound of the returned chain
  double rho_achieved = 1.0;  // independently recomputed mixing factor
  SynthesisResiduals residuals;
  double baseline_rho = std::numeric_limits<double>::quiet_NaN();  // Metropolis-Hastings
  double objective_value = std::numeric_limits<double>::quiet_NaN();
  bool objective_optimized = false;
  bool ergodic_certified = false;
  std::vector<BisectionStep> trace;
  std::vector<std::string> warnings;
};

// Minimizes the certified mixing bound lambda over chains that respect the
// graph, keep v stationary, and (ReversibleLMI) are reversible with respect
// to v. Bisection over lambda with a certified-feasible upper bracket.
SynthesisResult synthesize(const SynthesisProblem& problem);

// Expected fraction of steps that change state: sum_i (1 - M_ii) v_i.
double objective_transition_frequency(const Eigen::MatrixXd& m, const Eigen::VectorXd& v);

// Rejects a target distribution that is not strictly inside the safe set
// (componentwise G v < g); invariant-set convergence around v needs this.
void require_strict_interior(const Eigen::MatrixXd& g_matrix, const Eigen::VectorXd& g_rhs,
                             const Eigen::VectorXd& v);

// Similarity transform diag(r)^{-1} M diag(r) - r r' with r = sqrt(v)
// elementwise; symmetric exactly when M is reversible with respect to v, and
// then its spectrum matches M - v 1'.
Eigen::MatrixXd reversible_spectral_matrix(const Eigen::MatrixXd& m, const Eigen::VectorXd& v);

// Parametrization of reversible chains on the symmetric part of the graph
// support with spectral bound lambda.
SpectralFeasibilityProblem reversible_feasibility_problem(
    const Graph& graph, const Eigen::VectorXd& v, double lambda,
    const std::vector<EntryBound>& entry_bounds = {});

// Joint search for (M, P >= 0) satisfying the scaled block inequality
// [[lambda^2 P, E' D'], [D E, D + D' - P]] >= 0 with E = M - v 1'. A
// Feasible witness additionally passes an independent eigenvalue check
// rho(M - v 1') <= lambda + 1e-6; otherwise the outcome degrades to
// NumericalFailure.
SpectralOutcome fixed_d_lmi_feasible(const Graph& graph, const Eigen::VectorXd& v,
                                     const Eigen::MatrixXd& d, double lambda,
                                     double feas_tol = kSpectralFeasTol, CutPool* pool = nullptr,
                                     const std::vector<EntryBound>& entry_bounds = {},
                                     const Eigen::VectorXd* objective = nullptr,
                                     int max_rounds = 60, const Eigen::VectorXd* hint = nullptr);

}  // namespace mcinv

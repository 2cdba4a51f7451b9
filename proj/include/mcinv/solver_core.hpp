#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <deque>
#include <stdexcept>
#include <utility>
#include <vector>

namespace mcinv {

inline constexpr double kLpFeasTol = 1e-8;
inline constexpr double kSpectralFeasTol = 1e-7;

// Raised when a solver cannot produce a trustworthy verdict. Distinct from
// input-validation errors so callers can map the two to different exit paths.
struct NumericalFailureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class Sense : std::uint8_t { LessEq, GreaterEq, Equal };

// Feasibility system  A x (sense) b  with an optional per-variable sign
// restriction. Variables with nonneg_vars[j] == true are constrained to
// x_j >= 0; all others are free. An empty nonneg_vars means all variables
// are nonnegative.
struct LpFeasibilityProblem {
  Eigen::MatrixXd constraint_matrix;  // m x p
  Eigen::VectorXd rhs;                // m
  std::vector<Sense> sense;           // m
  std::vector<bool> nonneg_vars;      // p or empty

  int num_rows() const { return static_cast<int>(constraint_matrix.rows()); }
  int num_vars() const { return static_cast<int>(constraint_matrix.cols()); }
  bool var_nonneg(int j) const {
    return nonneg_vars.empty() || nonneg_vars[static_cast<std::size_t>(j)];
  }
};

enum class LpStatus : std::uint8_t { Feasible, Infeasible, NumericalFailure };

struct LpOutcome {
  LpStatus status = LpStatus::NumericalFailure;
  Eigen::VectorXd witness;  // set when Feasible
  double residual = 0.0;    // max constraint violation of the witness
};

// Max violation of x against the problem (constraints and sign restrictions).
double lp_violation(const LpFeasibilityProblem& problem, const Eigen::VectorXd& x);

LpOutcome lp_feasible(const LpFeasibilityProblem& problem, double feas_tol = kLpFeasTol);

struct LpOptimum {
  LpStatus status = LpStatus::NumericalFailure;
  bool bounded = true;
  Eigen::VectorXd x;
  double objective = 0.0;
  double residual = 0.0;
};

// min cost . x subject to the problem constraints.
LpOptimum lp_minimize(const LpFeasibilityProblem& problem, const Eigen::VectorXd& cost,
                      double feas_tol = kLpFeasTol);

// Eigenvalues of a symmetric matrix, sorted nondecreasing. Rejects inputs
// whose relative asymmetry exceeds 1e-12.
Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& s);

// Affine map  theta -> constant + sum_k theta_k * basis[k]  into square
// matrices. Used to pose parametrized spectral constraints.
struct AffineMatrixMap {
  int dim = 0;
  Eigen::MatrixXd constant;            // dim x dim
  std::vector<Eigen::MatrixXd> basis;  // one dim x dim block per parameter

  int num_params() const { return static_cast<int>(basis.size()); }
  Eigen::MatrixXd at(const Eigen::VectorXd& theta) const;
  // Row of coefficients for the scalar map theta -> u' A(theta) u.
  Eigen::VectorXd quadratic_form_coeffs(const Eigen::VectorXd& u) const;
  double quadratic_form_constant(const Eigen::VectorXd& u) const;
};

struct LinearConstraintSet {
  Eigen::MatrixXd matrix;     // q x p
  Eigen::VectorXd rhs;        // q
  std::vector<Sense> sense;   // q
  std::vector<bool> nonneg;   // p or empty (empty => all nonnegative)

  int num_rows() const { return static_cast<int>(matrix.rows()); }
  int num_vars() const { return static_cast<int>(matrix.cols()); }
};

// Requires every eigenvalue of map(theta) to lie inside [lo, hi]. Use
// +/-infinity for one-sided constraints.
struct EigenBand {
  AffineMatrixMap map;
  double lo = 0.0;
  double hi = 0.0;
};

// Pool of separating directions discovered while solving band-constrained
// problems. Reusable across calls that share a parametrization (e.g. a
// bisection over lambda); directions stay valid because each call rebuilds
// the cut rows from its own band bounds.
class CutPool {
 public:
  explicit CutPool(std::size_t capacity = 1024) : capacity_(capacity) {}
  void add(int band, Eigen::VectorXd direction);
  const std::deque<std::pair<int, Eigen::VectorXd>>& directions() const { return dirs_; }
  std::size_t size() const { return dirs_.size(); }

 private:
  std::size_t capacity_;
  std::deque<std::pair<int, Eigen::VectorXd>> dirs_;
};

struct BandFeasibilityProblem {
  int num_params = 0;
  LinearConstraintSet constraints;  // over theta
  std::vector<EigenBand> bands;
};

enum class SpectralStatus : std::uint8_t { Feasible, Infeasible, NumericalFailure };

struct BandOutcome {
  SpectralStatus status = SpectralStatus::NumericalFailure;
  Eigen::VectorXd theta;
  double linear_residual = 0.0;
  double band_excess = 0.0;  // max eigenvalue violation across bands
  int rounds = 0;
};

struct BandOptions {
  double feas_tol = kSpectralFeasTol;
  int max_rounds = 60;
  // Maximized when present; otherwise an interior margin is maximized.
  const Eigen::VectorXd* objective = nullptr;
  CutPool* pool = nullptr;
  const Eigen::VectorXd* hint = nullptr;  // verified first when present
};

// Decides feasibility of {theta : linear constraints hold, eigenvalues of
// every band matrix lie in its interval}. Feasible answers carry a witness
// re-verified against the bands by symmetric_eigenvalues; Infeasible answers
// are backed by an infeasible linear relaxation built from valid cuts.
BandOutcome band_feasible(const BandFeasibilityProblem& problem, const BandOptions& options);

// Parametrized family of chains with a symmetric certificate matrix S(theta)
// whose spectrum must lie inside [-lambda, lambda].
struct SpectralFeasibilityProblem {
  int ambient_dim = 0;
  AffineMatrixMap s_map;            // theta -> symmetric ambient x ambient
  AffineMatrixMap m_map;            // theta -> transition matrix
  LinearConstraintSet constraints;  // over theta
  double lambda = 0.0;
};

struct SpectralOutcome {
  SpectralStatus status = SpectralStatus::NumericalFailure;
  Eigen::MatrixXd m;  // witness chain matrix (Feasible only)
  Eigen::MatrixXd s;  // witness certificate matrix (Feasible only)
  Eigen::VectorXd theta;
  double linear_residual = 0.0;
  double spectral_excess = 0.0;  // max(0, max |eig(S)| - lambda)
  int rounds = 0;
};

struct SpectralOptions {
  double feas_tol = kSpectralFeasTol;
  int max_rounds = 60;
  CutPool* pool = nullptr;
  const Eigen::VectorXd* hint = nullptr;
};

SpectralOutcome spectral_feasible(const SpectralFeasibilityProblem& problem,
                                  const SpectralOptions& options = {});

}  // namespace mcinv

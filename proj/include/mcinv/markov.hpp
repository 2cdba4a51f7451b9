#pragma once

#include <Eigen/Dense>

#include <stdexcept>

#include "mcinv/solver_core.hpp"

namespace mcinv {

inline constexpr double kStochasticTol = 1e-10;
inline constexpr double kPatternTol = 1e-12;

struct NegativeEntryError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NotStochasticError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NotErgodicError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Column-stochastic transition matrix: M(i, j) is the probability of moving
// to state i given the current state j, so distributions evolve as x+ = M x.
// Construction goes through validate() and never renormalizes silently.
class MarkovChain {
 public:
  MarkovChain() = default;
  static MarkovChain validate(Eigen::MatrixXd m, double tol = kStochasticTol);
  const Eigen::MatrixXd& matrix() const { return m_; }
  int size() const { return static_cast<int>(m_.rows()); }

 private:
  explicit MarkovChain(Eigen::MatrixXd m) : m_(std::move(m)) {}
  Eigen::MatrixXd m_;
};

// Directed graph over states; adjacency(i, j) == 1 iff the edge i -> j is
// present, which permits the transition entry M(j, i).
struct Graph {
  Eigen::MatrixXi adjacency;

  int size() const { return static_cast<int>(adjacency.rows()); }
  bool symmetric() const;
  bool has_all_self_loops() const;
  static Graph complete(int n);  // includes self-loops
  static Graph from_adjacency(Eigen::MatrixXi a);
};

// True when some power of the 0/1 pattern is entrywise positive; the search
// is capped at the Wielandt exponent n^2 - 2n + 2.
bool pattern_primitive(const Eigen::MatrixXi& pattern);

bool respects_graph(const MarkovChain& chain, const Graph& graph, double tol = kPatternTol);

bool is_ergodic(const MarkovChain& chain);

struct StationaryInfo {
  Eigen::VectorXd v;  // unique stationary distribution
  double rho = 0.0;   // second-largest eigenvalue magnitude, spectral radius of M - v 1'
};

StationaryInfo stationary(const MarkovChain& chain);

// Second-largest eigenvalue magnitude for a chain with known stationary v.
double mixing_rho(const Eigen::MatrixXd& m, const Eigen::VectorXd& v);

bool is_reversible(const MarkovChain& chain, const Eigen::VectorXd& v, double tol = 1e-10);

// Metropolis-Hastings chain targeting v: uniform proposal over out-neighbors
// (self-loop included), acceptance min(1, v_i d_j / (v_j d_i)), rejected mass
// absorbed into the diagonal. Requires a symmetric graph with all self-loops.
MarkovChain metropolis_hastings(const Graph& graph, const Eigen::VectorXd& v);

// M^k x0 by repeated multiplication; never renormalizes.
Eigen::VectorXd propagate(const MarkovChain& chain, const Eigen::VectorXd& x0, int k);

// Lazy variant (M + I) / 2.
MarkovChain lazy(const MarkovChain& chain);

inline constexpr double kDistributionTol = 1e-9;

void validate_distribution(const Eigen::VectorXd& x, double tol = kDistributionTol);

}  // namespace mcinv

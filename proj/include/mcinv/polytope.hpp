#pragma once

#include <Eigen/Dense>

#include "mcinv/exec.hpp"
#include "mcinv/solver_core.hpp"

namespace mcinv {

inline constexpr double kMembershipTol = 1e-9;

// Halfspace system G x <= g. When on_simplex is set, the system is read as a
// subset of the probability simplex: membership additionally requires
// sum(x) == 1 and x >= 0, and the simplex-aware operations below apply.
struct Polyhedron {
  Eigen::MatrixXd G;  // m x n
  Eigen::VectorXd g;  // m
  bool on_simplex = false;

  int dim() const { return static_cast<int>(G.cols()); }
  int num_rows() const { return static_cast<int>(G.rows()); }
  bool contains(const Eigen::VectorXd& x, double tol = kMembershipTol) const;
};

void validate_polyhedron(const Polyhedron& p);

// P(G A, g): points x with A x in P.
Polyhedron preimage(const Polyhedron& p, const Eigen::MatrixXd& a);

// Rewrites a simplex-restricted system into conical form P(G - g 1', 0),
// which describes the same subset of the simplex. Idempotent.
Polyhedron normalize_conical(const Polyhedron& p);

enum class Verdict : std::uint8_t { Holds, Fails, Unknown };

struct ContainmentCertificate {
  Eigen::MatrixXd Y;       // row i certifies outer row i
  double residual = 0.0;   // max violation of the certificate identity
  bool vacuous = false;    // inner set was empty
};

struct ContainmentResult {
  Verdict verdict = Verdict::Unknown;
  ContainmentCertificate certificate;  // populated when verdict == Holds
};

// Decides (simplex \cap inner) \subseteq outer via one feasibility LP per
// outer row: find y >= 0 with y'(G - g 1') >= row_i(H - h 1'). The rows are
// independent, so the sweep runs under the execution policy. Requires the
// inner set to be nonempty on the simplex.
ContainmentResult contains_on_simplex(const Polyhedron& inner, const Polyhedron& outer,
                                      double feas_tol = kLpFeasTol, Exec exec = Exec::Parallel);

// Decides inner \subseteq outer for a bounded nonempty inner set via
// Y >= 0, Y G1 = G2, Y g1 <= g2. An empty inner set yields Holds with the
// vacuous flag. Unbounded inner sets are rejected.
ContainmentResult contains_general(const Polyhedron& inner, const Polyhedron& outer,
                                   double feas_tol = kLpFeasTol, Exec exec = Exec::Parallel);

struct SimplexPoint {
  Verdict verdict = Verdict::Unknown;
  Eigen::VectorXd witness;  // a distribution in the set when verdict == Holds
};

// Is (simplex \cap P) nonempty?
SimplexPoint nonempty_on_simplex(const Polyhedron& p, double feas_tol = kLpFeasTol);

struct RowImplication {
  Verdict verdict = Verdict::Unknown;
  Eigen::VectorXd y;  // nonnegative multiplier over the inner rows when Holds
};

// Farkas test for one halfspace over (simplex \cap inner): does every point
// of the inner set satisfy row . x <= rhs?
RowImplication row_implied_on_simplex(const Polyhedron& inner, const Eigen::VectorXd& row,
                                      double rhs, double feas_tol = kLpFeasTol);

// Max violation of Y as a simplex-containment certificate for inner/outer;
// independent of how Y was produced.
double certificate_violation_on_simplex(const ContainmentCertificate& cert,
                                        const Polyhedron& inner, const Polyhedron& outer);

double certificate_violation_general(const ContainmentCertificate& cert, const Polyhedron& inner,
                                     const Polyhedron& outer);

// Drops rows certified redundant by the remaining system (simplex reading).
// Greedy front-to-back sweep; the result describes the same subset of the
// simplex.
Polyhedron eliminate_redundant_rows_on_simplex(const Polyhedron& p, double feas_tol = kLpFeasTol);

}  // namespace mcinv

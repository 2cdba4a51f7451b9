#include "mcinv/polytope.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>
#include <vector>

namespace mcinv {

namespace {

// Conical row system W = G - g 1' over the simplex.
Eigen::MatrixXd conical_rows(const Polyhedron& p) {
  return p.G - p.g * Eigen::RowVectorXd::Ones(p.dim());
}

// One certificate row: find y >= 0 with W' y >= target.
LpOutcome certificate_row(const Eigen::MatrixXd& w_t, const Eigen::VectorXd& target,
                          double feas_tol) {
  LpFeasibilityProblem lp;
  lp.constraint_matrix = w_t;
  lp.rhs = target;
  lp.sense.assign(static_cast<std::size_t>(w_t.rows()), Sense::GreaterEq);
  return lp_feasible(lp, feas_tol);
}

}  // namespace

bool Polyhedron::contains(const Eigen::VectorXd& x, double tol) const {
  if (x.size() != dim()) throw std::invalid_argument("Polyhedron::contains: dimension mismatch");
  if (on_simplex) {
    if (std::abs(x.sum() - 1.0) > tol) return false;
    if (x.minCoeff() < -tol) return false;
  }
  for (int i = 0; i < num_rows(); ++i)
    if (G.row(i).dot(x) > g[i] + tol) return false;
  return true;
}

void validate_polyhedron(const Polyhedron& p) {
  if (p.G.rows() != p.g.size())
    throw std::invalid_argument("polyhedron: G has " + std::to_string(p.G.rows()) +
                                " rows but g has " + std::to_string(p.g.size()) + " entries");
  if (!p.G.allFinite() || !p.g.allFinite())
    throw std::invalid_argument("polyhedron: non-finite entries");
}

Polyhedron preimage(const Polyhedron& p, const Eigen::MatrixXd& a) {
  validate_polyhedron(p);
  if (a.rows() != p.dim())
    throw std::invalid_argument("preimage: map has " + std::to_string(a.rows()) +
                                " rows but polyhedron dimension is " + std::to_string(p.dim()));
  // The result is a plain halfspace system; the caller chooses whether to
  // intersect it with the simplex.
  return Polyhedron{p.G * a, p.g, false};
}

Polyhedron normalize_conical(const Polyhedron& p) {
  validate_polyhedron(p);
  if (!p.on_simplex)
    throw std::invalid_argument("normalize_conical: defined only for simplex-restricted systems");
  return Polyhedron{conical_rows(p), Eigen::VectorXd::Zero(p.num_rows()), true};
}

SimplexPoint nonempty_on_simplex(const Polyhedron& p, double feas_tol) {
  validate_polyhedron(p);
  const int n = p.dim();
  const int m = p.num_rows();
  LpFeasibilityProblem lp;
  lp.constraint_matrix.resize(m + 1, n);
  lp.constraint_matrix.topRows(m) = p.G;
  lp.constraint_matrix.row(m) = Eigen::RowVectorXd::Ones(n);
  lp.rhs.resize(m + 1);
  lp.rhs.head(m) = p.g;
  lp.rhs[m] = 1.0;
  lp.sense.assign(static_cast<std::size_t>(m), Sense::LessEq);
  lp.sense.push_back(Sense::Equal);
  const LpOutcome out = lp_feasible(lp, feas_tol);
  SimplexPoint result;
  switch (out.status) {
    case LpStatus::Feasible:
      result.verdict = Verdict::Holds;
      result.witness = out.witness;
      break;
    case LpStatus::Infeasible: result.verdict = Verdict::Fails; break;
    case LpStatus::NumericalFailure: result.verdict = Verdict::Unknown; break;
  }
  return result;
}

ContainmentResult contains_on_simplex(const Polyhedron& inner, const Polyhedron& outer,
                                      double feas_tol, Exec exec) {
  validate_polyhedron(inner);
  validate_polyhedron(outer);
  if (!inner.on_simplex)
    throw std::invalid_argument("contains_on_simplex: inner set must be simplex-restricted");
  if (inner.dim() != outer.dim())
    throw std::invalid_argument("contains_on_simplex: dimension mismatch");

  const SimplexPoint ne = nonempty_on_simplex(inner, feas_tol);
  if (ne.verdict == Verdict::Fails)
    throw std::invalid_argument("contains_on_simplex: inner set is empty on the simplex");
  ContainmentResult result;
  if (ne.verdict == Verdict::Unknown) return result;

  const Eigen::MatrixXd w = conical_rows(inner);
  const Eigen::MatrixXd v = conical_rows(outer);
  const Eigen::MatrixXd w_t = w.transpose();
  const int m2 = outer.num_rows();

  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(m2, inner.num_rows());
  std::vector<LpStatus> row_status(static_cast<std::size_t>(m2), LpStatus::Feasible);
  detail::parallel_for(m2, exec, [&](int i) {
    const LpOutcome out = certificate_row(w_t, v.row(i).transpose(), feas_tol);
    row_status[static_cast<std::size_t>(i)] = out.status;
    if (out.status == LpStatus::Feasible) y.row(i) = out.witness.transpose();
  });

  bool unknown = false;
  for (LpStatus s : row_status) {
    if (s == LpStatus::Infeasible) {
      result.verdict = Verdict::Fails;
      return result;
    }
    if (s == LpStatus::NumericalFailure) unknown = true;
  }
  if (unknown) return result;

  ContainmentCertificate cert;
  cert.Y = y;
  cert.residual = certificate_violation_on_simplex(cert, inner, outer);
  if (cert.residual > feas_tol) return result;
  result.verdict = Verdict::Holds;
  result.certificate = std::move(cert);
  return result;
}

RowImplication row_implied_on_simplex(const Polyhedron& inner, const Eigen::VectorXd& row,
                                      double rhs, double feas_tol) {
  validate_polyhedron(inner);
  if (!inner.on_simplex)
    throw std::invalid_argument("row_implied_on_simplex: inner set must be simplex-restricted");
  if (row.size() != inner.dim())
    throw std::invalid_argument("row_implied_on_simplex: dimension mismatch");
  const Eigen::MatrixXd w_t = conical_rows(inner).transpose();
  const Eigen::VectorXd target = row - Eigen::VectorXd::Constant(inner.dim(), rhs);
  const LpOutcome out = certificate_row(w_t, target, feas_tol);
  RowImplication result;
  switch (out.status) {
    case LpStatus::Feasible:
      result.verdict = Verdict::Holds;
      result.y = out.witness;
      break;
    case LpStatus::Infeasible: result.verdict = Verdict::Fails; break;
    case LpStatus::NumericalFailure: result.verdict = Verdict::Unknown; break;
  }
  return result;
}

double certificate_violation_on_simplex(const ContainmentCertificate& cert,
                                        const Polyhedron& inner, const Polyhedron& outer) {
  if (cert.Y.rows() != outer.num_rows() || cert.Y.cols() != inner.num_rows())
    throw std::invalid_argument("certificate_violation_on_simplex: shape mismatch");
  double worst = cert.Y.size() > 0 ? std::max(0.0, -cert.Y.minCoeff()) : 0.0;
  const Eigen::MatrixXd gap =
      conical_rows(outer) - cert.Y * conical_rows(inner);  // must be <= 0
  if (gap.size() > 0) worst = std::max(worst, gap.maxCoeff());
  return std::max(worst, 0.0);
}

namespace {

LpOutcome general_row(const Polyhedron& inner, const Eigen::VectorXd& outer_row, double outer_rhs,
                      double feas_tol) {
  // y >= 0, G1' y = outer_row, g1' y <= outer_rhs
  const int m1 = inner.num_rows();
  const int n = inner.dim();
  LpFeasibilityProblem lp;
  lp.constraint_matrix.resize(n + 1, m1);
  lp.constraint_matrix.topRows(n) = inner.G.transpose();
  lp.constraint_matrix.row(n) = inner.g.transpose();
  lp.rhs.resize(n + 1);
  lp.rhs.head(n) = outer_row;
  lp.rhs[n] = outer_rhs;
  lp.sense.assign(static_cast<std::size_t>(n), Sense::Equal);
  lp.sense.push_back(Sense::LessEq);
  return lp_feasible(lp, feas_tol);
}

bool inner_nonempty(const Polyhedron& inner, double feas_tol, bool& unknown) {
  LpFeasibilityProblem lp;
  lp.constraint_matrix = inner.G;
  lp.rhs = inner.g;
  lp.sense.assign(static_cast<std::size_t>(inner.num_rows()), Sense::LessEq);
  lp.nonneg_vars.assign(static_cast<std::size_t>(inner.dim()), false);
  const LpOutcome out = lp_feasible(lp, feas_tol);
  unknown = out.status == LpStatus::NumericalFailure;
  return out.status == LpStatus::Feasible;
}

// Recession cone of {G x <= g} reduced to the origin?
bool inner_bounded(const Polyhedron& inner, double feas_tol, bool& unknown, Exec exec) {
  const int n = inner.dim();
  std::atomic<bool> ray{false};
  std::atomic<bool> numfail{false};
  detail::parallel_for(2 * n, exec, [&](int idx) {
    if (ray.load()) return;
    const int j = idx / 2;
    const double sign = (idx % 2 == 0) ? 1.0 : -1.0;
    LpFeasibilityProblem lp;
    lp.constraint_matrix.resize(inner.num_rows() + 1, n);
    lp.constraint_matrix.topRows(inner.num_rows()) = inner.G;
    lp.constraint_matrix.row(inner.num_rows()) = Eigen::RowVectorXd::Zero(n);
    lp.constraint_matrix(inner.num_rows(), j) = 1.0;
    lp.rhs = Eigen::VectorXd::Zero(inner.num_rows() + 1);
    lp.rhs[inner.num_rows()] = sign;
    lp.sense.assign(static_cast<std::size_t>(inner.num_rows()), Sense::LessEq);
    lp.sense.push_back(Sense::Equal);
    lp.nonneg_vars.assign(static_cast<std::size_t>(n), false);
    const LpOutcome out = lp_feasible(lp, feas_tol);
    if (out.status == LpStatus::Feasible) ray.store(true);
    if (out.status == LpStatus::NumericalFailure) numfail.store(true);
  });
  unknown = !ray.load() && numfail.load();
  return !ray.load();
}

}  // namespace

ContainmentResult contains_general(const Polyhedron& inner, const Polyhedron& outer,
                                   double feas_tol, Exec exec) {
  validate_polyhedron(inner);
  validate_polyhedron(outer);
  if (inner.dim() != outer.dim())
    throw std::invalid_argument("contains_general: dimension mismatch");

  ContainmentResult result;
  bool unknown = false;
  if (!inner_nonempty(inner, feas_tol, unknown)) {
    if (unknown) return result;
    result.verdict = Verdict::Holds;
    result.certificate.vacuous = true;
    result.certificate.Y = Eigen::MatrixXd::Zero(outer.num_rows(), inner.num_rows());
    return result;
  }
  if (!inner_bounded(inner, feas_tol, unknown, exec)) {
    throw std::invalid_argument("contains_general: inner set is unbounded");
  }
  if (unknown) return result;

  const int m2 = outer.num_rows();
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(m2, inner.num_rows());
  std::vector<LpStatus> row_status(static_cast<std::size_t>(m2), LpStatus::Feasible);
  detail::parallel_for(m2, exec, [&](int i) {
    const LpOutcome out = general_row(inner, outer.G.row(i).transpose(), outer.g[i], feas_tol);
    row_status[static_cast<std::size_t>(i)] = out.status;
    if (out.status == LpStatus::Feasible) y.row(i) = out.witness.transpose();
  });
  bool numfail = false;
  for (LpStatus s : row_status) {
    if (s == LpStatus::Infeasible) {
      result.verdict = Verdict::Fails;
      return result;
    }
    if (s == LpStatus::NumericalFailure) numfail = true;
  }
  if (numfail) return result;

  ContainmentCertificate cert;
  cert.Y = y;
  cert.residual = certificate_violation_general(cert, inner, outer);
  if (cert.residual > feas_tol) return result;
  result.verdict = Verdict::Holds;
  result.certificate = std::move(cert);
  return result;
}

double certificate_violation_general(const ContainmentCertificate& cert, const Polyhedron& inner,
                                     const Polyhedron& outer) {
  if (cert.Y.rows() != outer.num_rows() || cert.Y.cols() != inner.num_rows())
    throw std::invalid_argument("certificate_violation_general: shape mismatch");
  double worst = cert.Y.size() > 0 ? std::max(0.0, -cert.Y.minCoeff()) : 0.0;
  const Eigen::MatrixXd eq_gap = cert.Y * inner.G - outer.G;
  if (eq_gap.size() > 0) worst = std::max(worst, eq_gap.cwiseAbs().maxCoeff());
  const Eigen::VectorXd rhs_gap = cert.Y * inner.g - outer.g;  // must be <= 0
  if (rhs_gap.size() > 0) worst = std::max(worst, rhs_gap.maxCoeff());
  return std::max(worst, 0.0);
}

Polyhedron eliminate_redundant_rows_on_simplex(const Polyhedron& p, double feas_tol) {
  validate_polyhedron(p);
  if (!p.on_simplex)
    throw std::invalid_argument(
        "eliminate_redundant_rows_on_simplex: defined only for simplex-restricted systems");
  std::vector<int> keep(static_cast<std::size_t>(p.num_rows()));
  for (int i = 0; i < p.num_rows(); ++i) keep[static_cast<std::size_t>(i)] = i;

  for (int i = 0; i < static_cast<int>(keep.size());) {
    if (keep.size() == 1) break;
    std::vector<int> rest;
    for (int r : keep)
      if (r != keep[static_cast<std::size_t>(i)]) rest.push_back(r);
    Eigen::MatrixXd gr(rest.size(), p.dim());
    Eigen::VectorXd gg(rest.size());
    for (std::size_t k = 0; k < rest.size(); ++k) {
      gr.row(static_cast<int>(k)) = p.G.row(rest[k]);
      gg[static_cast<int>(k)] = p.g[rest[k]];
    }
    const Polyhedron reduced{gr, gg, true};
    const Eigen::MatrixXd w_t = conical_rows(reduced).transpose();
    const Eigen::VectorXd target =
        (p.G.row(keep[static_cast<std::size_t>(i)]) -
         p.g[keep[static_cast<std::size_t>(i)]] * Eigen::RowVectorXd::Ones(p.dim()))
            .transpose();
    const LpOutcome out = certificate_row(w_t, target, feas_tol);
    if (out.status == LpStatus::Feasible)
      keep.erase(keep.begin() + i);
    else
      ++i;
  }

  Polyhedron out;
  out.on_simplex = true;
  out.G.resize(keep.size(), p.dim());
  out.g.resize(keep.size());
  for (std::size_t k = 0; k < keep.size(); ++k) {
    out.G.row(static_cast<int>(k)) = p.G.row(keep[k]);
    out.g[static_cast<int>(k)] = p.g[keep[k]];
  }
  return out;
}

}  // namespace mcinv

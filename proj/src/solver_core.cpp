#include "mcinv/solver_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace mcinv {

namespace {

constexpr double kPivotTol = 1e-9;
constexpr double kCostTol = 1e-9;

void validate_problem(const LpFeasibilityProblem& pb) {
  const int m = pb.num_rows();
  const int p = pb.num_vars();
  if (pb.rhs.size() != m)
    throw std::invalid_argument("lp: rhs length " + std::to_string(pb.rhs.size()) +
                                " does not match constraint rows " + std::to_string(m));
  if (static_cast<int>(pb.sense.size()) != m)
    throw std::invalid_argument("lp: sense length " + std::to_string(pb.sense.size()) +
                                " does not match constraint rows " + std::to_string(m));
  if (!pb.nonneg_vars.empty() && static_cast<int>(pb.nonneg_vars.size()) != p)
    throw std::invalid_argument("lp: nonneg_vars length " + std::to_string(pb.nonneg_vars.size()) +
                                " does not match variable count " + std::to_string(p));
  if (!pb.constraint_matrix.allFinite() || !pb.rhs.allFinite())
    throw std::invalid_argument("lp: constraint data contains non-finite entries");
}

struct Tableau {
  Eigen::MatrixXd t;       // m x ncols, basis columns kept at identity
  Eigen::VectorXd rhs;     // m, nonnegative
  std::vector<int> basis;  // column basic in each row
  int m = 0;
  int ncols = 0;
  int art_begin = 0;  // first artificial column; ncols when none remain
  std::vector<int> pos_col;
  std::vector<int> neg_col;  // -1 for sign-restricted variables
};

void pivot(Tableau& tb, int row, int col) {
  const double p = tb.t(row, col);
  tb.t.row(row) /= p;
  tb.rhs[row] /= p;
  tb.t(row, col) = 1.0;
  for (int i = 0; i < tb.m; ++i) {
    if (i == row) continue;
    const double f = tb.t(i, col);
    if (f == 0.0) continue;
    tb.t.row(i) -= f * tb.t.row(row);
    tb.t(i, col) = 0.0;
    tb.rhs[i] -= f * tb.rhs[row];
    if (tb.rhs[i] < 0.0 && tb.rhs[i] > -1e-11) tb.rhs[i] = 0.0;
  }
  tb.basis[row] = col;
}

double basis_objective(const Tableau& tb, const Eigen::VectorXd& c) {
  double obj = 0.0;
  for (int i = 0; i < tb.m; ++i) obj += c[tb.basis[i]] * tb.rhs[i];
  return obj;
}

enum class PivotResult { Optimal, Unbounded, IterLimit };

PivotResult run_simplex(Tableau& tb, const Eigen::VectorXd& c, bool allow_artificials) {
  const int m = tb.m;
  const int n = tb.ncols;
  const long max_iters = 500 + 12L * (m + n);
  bool bland = false;
  long stall = 0;
  double last_obj = std::numeric_limits<double>::infinity();
  Eigen::VectorXd y(m);
  for (long iter = 0; iter < max_iters; ++iter) {
    for (int i = 0; i < m; ++i) y[i] = c[tb.basis[i]];
    Eigen::VectorXd red = c;
    red.noalias() -= tb.t.transpose() * y;

    int enter = -1;
    if (bland) {
      for (int j = 0; j < n; ++j) {
        if (!allow_artificials && j >= tb.art_begin) break;
        if (red[j] < -kCostTol) {
          enter = j;
          break;
        }
      }
    } else {
      double best = -kCostTol;
      for (int j = 0; j < n; ++j) {
        if (!allow_artificials && j >= tb.art_begin) break;
        if (red[j] < best) {
          best = red[j];
          enter = j;
        }
      }
    }
    if (enter < 0) return PivotResult::Optimal;

    int leave = -1;
    double best_ratio = std::numeric_limits<double>::infinity();
    double best_pivot = 0.0;
    for (int i = 0; i < m; ++i) {
      const double a = tb.t(i, enter);
      if (a <= kPivotTol) continue;
      const double ratio = tb.rhs[i] / a;
      if (ratio < best_ratio - 1e-12) {
        best_ratio = ratio;
        leave = i;
        best_pivot = a;
      } else if (ratio < best_ratio + 1e-12 && leave >= 0) {
        const bool cur_art = tb.basis[i] >= tb.art_begin;
        const bool old_art = tb.basis[leave] >= tb.art_begin;
        if (bland) {
          if (tb.basis[i] < tb.basis[leave]) {
            leave = i;
            best_pivot = a;
          }
        } else if (cur_art && !old_art) {
          leave = i;
          best_pivot = a;
        } else if (cur_art == old_art && a > best_pivot) {
          leave = i;
          best_pivot = a;
        }
      }
    }
    if (leave < 0) return PivotResult::Unbounded;

    pivot(tb, leave, enter);
    const double obj = basis_objective(tb, c);
    if (obj < last_obj - 1e-13)
      stall = 0;
    else
      ++stall;
    last_obj = obj;
    if (!bland && stall > m + 64) bland = true;
  }
  return PivotResult::IterLimit;
}

Tableau build_tableau(const LpFeasibilityProblem& pb) {
  const int m = pb.num_rows();
  const int p = pb.num_vars();
  Tableau tb;
  tb.m = m;
  tb.pos_col.assign(p, -1);
  tb.neg_col.assign(p, -1);
  int col = 0;
  for (int j = 0; j < p; ++j) {
    tb.pos_col[j] = col++;
    if (!pb.var_nonneg(j)) tb.neg_col[j] = col++;
  }
  std::vector<int> slack_col(m, -1);
  for (int i = 0; i < m; ++i)
    if (pb.sense[i] != Sense::Equal) slack_col[i] = col++;
  const int slack_end = col;

  std::vector<double> scale(m, 1.0);
  std::vector<int> need_art;
  std::vector<double> slack_coef(m, 0.0);
  std::vector<int> row_sign(m, 1);
  for (int i = 0; i < m; ++i) {
    double mx = std::max(pb.constraint_matrix.row(i).cwiseAbs().maxCoeff(), std::abs(pb.rhs[i]));
    scale[i] = 1.0 / std::max(1.0, mx);
    row_sign[i] = (pb.rhs[i] * scale[i] < 0.0) ? -1 : 1;
    if (slack_col[i] >= 0) {
      slack_coef[i] = (pb.sense[i] == Sense::LessEq ? 1.0 : -1.0) * row_sign[i];
      if (slack_coef[i] < 0.0) need_art.push_back(i);
    } else {
      need_art.push_back(i);
    }
  }
  tb.art_begin = slack_end;
  tb.ncols = slack_end + static_cast<int>(need_art.size());

  tb.t = Eigen::MatrixXd::Zero(m, tb.ncols);
  tb.rhs.resize(m);
  tb.basis.assign(m, -1);
  for (int i = 0; i < m; ++i) {
    const double s = scale[i] * row_sign[i];
    for (int j = 0; j < p; ++j) {
      const double v = pb.constraint_matrix(i, j) * s;
      if (v == 0.0) continue;
      tb.t(i, tb.pos_col[j]) = v;
      if (tb.neg_col[j] >= 0) tb.t(i, tb.neg_col[j]) = -v;
    }
    if (slack_col[i] >= 0) tb.t(i, slack_col[i]) = slack_coef[i];
    tb.rhs[i] = pb.rhs[i] * s;
    if (slack_col[i] >= 0 && slack_coef[i] > 0.0) tb.basis[i] = slack_col[i];
  }
  int art = slack_end;
  for (int i : need_art) {
    tb.t(i, art) = 1.0;
    tb.basis[i] = art;
    ++art;
  }
  return tb;
}

void drop_rows(Tableau& tb, const std::vector<int>& rows_to_drop) {
  if (rows_to_drop.empty()) return;
  std::vector<char> drop(tb.m, 0);
  for (int r : rows_to_drop) drop[r] = 1;
  int keep = 0;
  for (int i = 0; i < tb.m; ++i) {
    if (drop[i]) continue;
    if (keep != i) {
      tb.t.row(keep) = tb.t.row(i);
      tb.rhs[keep] = tb.rhs[i];
      tb.basis[keep] = tb.basis[i];
    }
    ++keep;
  }
  tb.m = keep;
  tb.t.conservativeResize(keep, Eigen::NoChange);
  tb.rhs.conservativeResize(keep);
  tb.basis.resize(keep);
}

// Pivot basic artificials onto structural columns; rows that cannot be
// repaired are redundant and get dropped. Afterwards the artificial block is
// truncated away.
bool purge_artificials(Tableau& tb) {
  std::vector<int> redundant;
  for (int i = 0; i < tb.m; ++i) {
    if (tb.basis[i] < tb.art_begin) continue;
    int best_col = -1;
    double best_abs = 1e-7;
    for (int j = 0; j < tb.art_begin; ++j) {
      const double a = std::abs(tb.t(i, j));
      if (a > best_abs) {
        best_abs = a;
        best_col = j;
      }
    }
    if (best_col >= 0)
      pivot(tb, i, best_col);
    else
      redundant.push_back(i);
  }
  drop_rows(tb, redundant);
  for (int i = 0; i < tb.m; ++i)
    if (tb.basis[i] >= tb.art_begin) return false;
  tb.t.conservativeResize(Eigen::NoChange, tb.art_begin);
  tb.ncols = tb.art_begin;
  return true;
}

Eigen::VectorXd extract_witness(const Tableau& tb, int p) {
  Eigen::VectorXd vals = Eigen::VectorXd::Zero(tb.ncols);
  for (int i = 0; i < tb.m; ++i)
    if (tb.basis[i] < tb.ncols) vals[tb.basis[i]] = tb.rhs[i];
  Eigen::VectorXd x(p);
  for (int j = 0; j < p; ++j) {
    double v = vals[tb.pos_col[j]];
    if (tb.neg_col[j] >= 0) v -= vals[tb.neg_col[j]];
    x[j] = v;
  }
  return x;
}

struct SolveCore {
  LpStatus status = LpStatus::NumericalFailure;
  bool bounded = true;
  Eigen::VectorXd x;
  double residual = 0.0;
};

SolveCore solve_core(const LpFeasibilityProblem& pb, const Eigen::VectorXd* cost, double feas_tol) {
  validate_problem(pb);
  const int m = pb.num_rows();
  const int p = pb.num_vars();
  SolveCore out;

  if (m == 0 && (cost == nullptr || p == 0)) {
    out.status = LpStatus::Feasible;
    out.x = Eigen::VectorXd::Zero(p);
    out.residual = 0.0;
    return out;
  }

  Tableau tb = build_tableau(pb);

  if (tb.art_begin < tb.ncols) {
    Eigen::VectorXd c1 = Eigen::VectorXd::Zero(tb.ncols);
    for (int j = tb.art_begin; j < tb.ncols; ++j) c1[j] = 1.0;
    const PivotResult r1 = run_simplex(tb, c1, true);
    if (r1 == PivotResult::IterLimit) return out;
    const double infeas = basis_objective(tb, c1);
    if (infeas > 0.5 * feas_tol) {
      out.status = LpStatus::Infeasible;
      return out;
    }
    if (!purge_artificials(tb)) return out;
  } else {
    tb.ncols = tb.art_begin;
  }

  if (cost != nullptr) {
    Eigen::VectorXd c2 = Eigen::VectorXd::Zero(tb.ncols);
    for (int j = 0; j < p; ++j) {
      c2[tb.pos_col[j]] += (*cost)[j];
      if (tb.neg_col[j] >= 0) c2[tb.neg_col[j]] -= (*cost)[j];
    }
    const PivotResult r2 = run_simplex(tb, c2, false);
    if (r2 == PivotResult::IterLimit) return out;
    if (r2 == PivotResult::Unbounded) out.bounded = false;
  }

  out.x = extract_witness(tb, p);
  out.residual = lp_violation(pb, out.x);
  if (out.residual <= feas_tol)
    out.status = LpStatus::Feasible;
  else
    out.status = LpStatus::NumericalFailure;
  return out;
}

}  // namespace

double lp_violation(const LpFeasibilityProblem& pb, const Eigen::VectorXd& x) {
  const int m = pb.num_rows();
  const int p = pb.num_vars();
  if (x.size() != p) throw std::invalid_argument("lp_violation: point dimension mismatch");
  double worst = 0.0;
  for (int i = 0; i < m; ++i) {
    const double r = pb.constraint_matrix.row(i).dot(x);
    double v = 0.0;
    switch (pb.sense[i]) {
      case Sense::LessEq: v = r - pb.rhs[i]; break;
      case Sense::GreaterEq: v = pb.rhs[i] - r; break;
      case Sense::Equal: v = std::abs(r - pb.rhs[i]); break;
    }
    worst = std::max(worst, v);
  }
  for (int j = 0; j < p; ++j)
    if (pb.var_nonneg(j)) worst = std::max(worst, -x[j]);
  return worst;
}

LpOutcome lp_feasible(const LpFeasibilityProblem& pb, double feas_tol) {
  const SolveCore core = solve_core(pb, nullptr, feas_tol);
  LpOutcome out;
  out.status = core.status;
  if (core.status == LpStatus::Feasible) {
    out.witness = core.x;
    out.residual = core.residual;
  }
  return out;
}

LpOptimum lp_minimize(const LpFeasibilityProblem& pb, const Eigen::VectorXd& cost, double feas_tol) {
  if (cost.size() != pb.num_vars())
    throw std::invalid_argument("lp_minimize: cost dimension mismatch");
  const SolveCore core = solve_core(pb, &cost, feas_tol);
  LpOptimum out;
  out.status = core.status;
  out.bounded = core.bounded;
  if (core.status == LpStatus::Feasible) {
    out.x = core.x;
    out.objective = cost.dot(core.x);
    out.residual = core.residual;
  }
  return out;
}

Eigen::VectorXd symmetric_eigenvalues(const Eigen::MatrixXd& s) {
  if (s.rows() != s.cols()) throw std::invalid_argument("symmetric_eigenvalues: matrix not square");
  if (s.rows() == 0) return Eigen::VectorXd();
  if (!s.allFinite()) throw std::invalid_argument("symmetric_eigenvalues: non-finite entries");
  const double scale = std::max(1.0, s.cwiseAbs().maxCoeff());
  const double asym = (s - s.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-12 * scale)
    throw std::invalid_argument("symmetric_eigenvalues: relative asymmetry " +
                                std::to_string(asym / scale) + " exceeds 1e-12");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (s + s.transpose()),
                                                    Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw NumericalFailureError("symmetric_eigenvalues: eigensolver did not converge");
  return es.eigenvalues();
}

Eigen::MatrixXd AffineMatrixMap::at(const Eigen::VectorXd& theta) const {
  if (theta.size() != num_params())
    throw std::invalid_argument("AffineMatrixMap: parameter dimension mismatch");
  Eigen::MatrixXd a = constant;
  for (int k = 0; k < num_params(); ++k) {
    if (theta[k] != 0.0) a.noalias() += theta[k] * basis[static_cast<std::size_t>(k)];
  }
  return a;
}

Eigen::VectorXd AffineMatrixMap::quadratic_form_coeffs(const Eigen::VectorXd& u) const {
  Eigen::VectorXd c(num_params());
  for (int k = 0; k < num_params(); ++k)
    c[k] = u.dot(basis[static_cast<std::size_t>(k)] * u);
  return c;
}

double AffineMatrixMap::quadratic_form_constant(const Eigen::VectorXd& u) const {
  return u.dot(constant * u);
}

void CutPool::add(int band, Eigen::VectorXd direction) {
  const double norm = direction.norm();
  if (norm <= 0.0 || !direction.allFinite()) return;
  direction /= norm;
  for (const auto& [b, d] : dirs_) {
    if (b == band && std::abs(d.dot(direction)) > 1.0 - 1e-9) return;
  }
  dirs_.emplace_back(band, std::move(direction));
  while (dirs_.size() > capacity_) dirs_.pop_front();
}

}  // namespace mcinv

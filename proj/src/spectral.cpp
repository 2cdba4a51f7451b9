#include "mcinv/solver_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace mcinv {

namespace {

bool finite(double x) { return std::isfinite(x); }

void validate_band_problem(const BandFeasibilityProblem& pb) {
  const int p = pb.num_params;
  if (p < 0) throw std::invalid_argument("band_feasible: negative parameter count");
  if (pb.constraints.num_rows() > 0 && pb.constraints.num_vars() != p)
    throw std::invalid_argument("band_feasible: constraint matrix has " +
                                std::to_string(pb.constraints.num_vars()) +
                                " columns, expected " + std::to_string(p));
  if (pb.constraints.rhs.size() != pb.constraints.num_rows() ||
      static_cast<int>(pb.constraints.sense.size()) != pb.constraints.num_rows())
    throw std::invalid_argument("band_feasible: constraint rhs/sense size mismatch");
  if (!pb.constraints.nonneg.empty() && static_cast<int>(pb.constraints.nonneg.size()) != p)
    throw std::invalid_argument("band_feasible: nonneg mask size mismatch");
  for (const EigenBand& band : pb.bands) {
    if (band.map.num_params() != p)
      throw std::invalid_argument("band_feasible: band parametrization size mismatch");
    if (band.map.constant.rows() != band.map.dim || band.map.constant.cols() != band.map.dim)
      throw std::invalid_argument("band_feasible: band constant dimension mismatch");
    if (band.lo > band.hi) throw std::invalid_argument("band_feasible: band interval empty");
  }
}

double linear_violation(const LinearConstraintSet& lin, const Eigen::VectorXd& theta) {
  LpFeasibilityProblem pb{lin.matrix, lin.rhs, lin.sense, lin.nonneg};
  if (lin.num_rows() == 0) {
    double worst = 0.0;
    for (int j = 0; j < theta.size(); ++j)
      if (lin.nonneg.empty() || lin.nonneg[static_cast<std::size_t>(j)])
        worst = std::max(worst, -theta[j]);
    return worst;
  }
  return lp_violation(pb, theta);
}

struct BandCheck {
  double excess = 0.0;  // worst violation across all bands
  // violating directions per band, paired with signed violation
  std::vector<std::pair<int, Eigen::VectorXd>> cut_dirs;
};

BandCheck check_bands(const BandFeasibilityProblem& pb, const Eigen::VectorXd& theta,
                      double feas_tol, bool collect) {
  BandCheck out;
  for (std::size_t k = 0; k < pb.bands.size(); ++k) {
    const EigenBand& band = pb.bands[k];
    const Eigen::MatrixXd a = band.map.at(theta);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a + a.transpose()));
    if (es.info() != Eigen::Success)
      throw NumericalFailureError("band_feasible: eigensolver did not converge");
    const Eigen::VectorXd& ev = es.eigenvalues();
    for (int i = 0; i < ev.size(); ++i) {
      double viol = 0.0;
      if (finite(band.hi)) viol = std::max(viol, ev[i] - band.hi);
      if (finite(band.lo)) viol = std::max(viol, band.lo - ev[i]);
      out.excess = std::max(out.excess, viol);
      if (collect && viol > 0.25 * feas_tol)
        out.cut_dirs.emplace_back(static_cast<int>(k), es.eigenvectors().col(i));
    }
  }
  return out;
}

}  // namespace

BandOutcome band_feasible(const BandFeasibilityProblem& pb, const BandOptions& opt) {
  validate_band_problem(pb);
  const int p = pb.num_params;
  const double tol = opt.feas_tol;
  BandOutcome out;

  CutPool local_pool(512);
  CutPool& pool = opt.pool != nullptr ? *opt.pool : local_pool;

  auto verify = [&](const Eigen::VectorXd& theta, bool collect) -> BandCheck {
    BandCheck chk = check_bands(pb, theta, tol, collect);
    return chk;
  };

  const bool margin_mode = opt.objective == nullptr;

  if (opt.hint != nullptr && opt.hint->size() == p && opt.hint->allFinite()) {
    const double lin_res = linear_violation(pb.constraints, *opt.hint);
    BandCheck chk = verify(*opt.hint, true);
    // In objective mode a feasible hint is only a cut seed, never an answer.
    if (margin_mode && lin_res <= tol && chk.excess <= tol) {
      out.status = SpectralStatus::Feasible;
      out.theta = *opt.hint;
      out.linear_residual = lin_res;
      out.band_excess = chk.excess;
      return out;
    }
    for (auto& [band, dir] : chk.cut_dirs) pool.add(band, std::move(dir));
  }

  const int q0 = pb.constraints.num_rows();

  for (int round = 1; round <= opt.max_rounds; ++round) {
    out.rounds = round;

    // Assemble the linear relaxation: hard constraints plus one valid cut per
    // pooled direction and band side. The margin variable t pushes candidates
    // into the interior of the current cut set.
    int cut_rows = 0;
    std::vector<std::pair<int, const Eigen::VectorXd*>> active;
    active.reserve(pool.size());
    for (const auto& [band, dir] : pool.directions()) {
      const EigenBand& b = pb.bands[static_cast<std::size_t>(band)];
      active.emplace_back(band, &dir);
      if (finite(b.hi)) ++cut_rows;
      if (finite(b.lo)) ++cut_rows;
    }
    const int nvars = p + (margin_mode ? 1 : 0);
    const int nrows = q0 + cut_rows + (margin_mode ? 1 : 0);
    LpFeasibilityProblem lp;
    lp.constraint_matrix = Eigen::MatrixXd::Zero(nrows, nvars);
    lp.rhs.resize(nrows);
    lp.sense.resize(static_cast<std::size_t>(nrows));
    lp.nonneg_vars.assign(static_cast<std::size_t>(nvars), true);
    for (int j = 0; j < p; ++j)
      lp.nonneg_vars[static_cast<std::size_t>(j)] =
          pb.constraints.nonneg.empty() || pb.constraints.nonneg[static_cast<std::size_t>(j)];

    if (q0 > 0) {
      lp.constraint_matrix.block(0, 0, q0, p) = pb.constraints.matrix;
      lp.rhs.head(q0) = pb.constraints.rhs;
      std::copy(pb.constraints.sense.begin(), pb.constraints.sense.end(), lp.sense.begin());
    }
    int row = q0;
    for (const auto& [band, dir] : active) {
      const EigenBand& b = pb.bands[static_cast<std::size_t>(band)];
      const Eigen::VectorXd coeffs = b.map.quadratic_form_coeffs(*dir);
      const double c0 = b.map.quadratic_form_constant(*dir);
      if (finite(b.hi)) {
        lp.constraint_matrix.block(row, 0, 1, p) = coeffs.transpose();
        if (margin_mode) lp.constraint_matrix(row, p) = 1.0;
        lp.rhs[row] = b.hi + tol - c0;
        lp.sense[static_cast<std::size_t>(row)] = Sense::LessEq;
        ++row;
      }
      if (finite(b.lo)) {
        lp.constraint_matrix.block(row, 0, 1, p) = coeffs.transpose();
        if (margin_mode) lp.constraint_matrix(row, p) = -1.0;
        lp.rhs[row] = b.lo - tol - c0;
        lp.sense[static_cast<std::size_t>(row)] = Sense::GreaterEq;
        ++row;
      }
    }
    if (margin_mode) {
      lp.constraint_matrix(row, p) = 1.0;
      lp.rhs[row] = 1.0;
      lp.sense[static_cast<std::size_t>(row)] = Sense::LessEq;
      ++row;
    }

    Eigen::VectorXd cost = Eigen::VectorXd::Zero(nvars);
    if (margin_mode)
      cost[p] = -1.0;
    else
      cost.head(p) = -(*opt.objective);

    const LpOptimum sol = lp_minimize(lp, cost, std::min(tol, kLpFeasTol));
    if (sol.status == LpStatus::Infeasible) {
      out.status = SpectralStatus::Infeasible;
      return out;
    }
    if (sol.status == LpStatus::NumericalFailure || !sol.bounded) {
      out.status = SpectralStatus::NumericalFailure;
      return out;
    }

    const Eigen::VectorXd theta = sol.x.head(p);
    const double lin_res = linear_violation(pb.constraints, theta);
    BandCheck chk = verify(theta, true);
    out.theta = theta;
    out.linear_residual = lin_res;
    out.band_excess = chk.excess;
    if (lin_res <= tol && chk.excess <= tol) {
      out.status = SpectralStatus::Feasible;
      return out;
    }
    if (chk.cut_dirs.empty()) {
      // Violation sits in the linear part; cutting cannot improve on that.
      out.status = SpectralStatus::NumericalFailure;
      return out;
    }
    for (auto& [band, dir] : chk.cut_dirs) pool.add(band, std::move(dir));
  }
  out.status = SpectralStatus::NumericalFailure;
  return out;
}

SpectralOutcome spectral_feasible(const SpectralFeasibilityProblem& pb,
                                  const SpectralOptions& options) {
  if (pb.lambda < 0.0) throw std::invalid_argument("spectral_feasible: lambda must be nonnegative");
  if (pb.s_map.dim != pb.ambient_dim)
    throw std::invalid_argument("spectral_feasible: certificate matrix dimension mismatch");
  if (pb.m_map.num_params() != pb.s_map.num_params())
    throw std::invalid_argument("spectral_feasible: parametrization size mismatch");

  BandFeasibilityProblem band;
  band.num_params = pb.s_map.num_params();
  band.constraints = pb.constraints;
  band.bands.push_back(EigenBand{pb.s_map, -pb.lambda, pb.lambda});

  BandOptions bopt;
  bopt.feas_tol = options.feas_tol;
  bopt.max_rounds = options.max_rounds;
  bopt.pool = options.pool;
  bopt.hint = options.hint;

  const BandOutcome res = band_feasible(band, bopt);
  SpectralOutcome out;
  out.status = res.status;
  out.rounds = res.rounds;
  out.linear_residual = res.linear_residual;
  out.spectral_excess = res.band_excess;
  if (res.status == SpectralStatus::Feasible) {
    out.theta = res.theta;
    out.m = pb.m_map.at(res.theta);
    out.s = pb.s_map.at(res.theta);
    const Eigen::VectorXd ev = symmetric_eigenvalues(out.s);
    const double top = ev.size() > 0 ? std::max(std::abs(ev[0]), std::abs(ev[ev.size() - 1])) : 0.0;
    out.spectral_excess = std::max(0.0, top - pb.lambda);
    if (out.spectral_excess > options.feas_tol || out.linear_residual > options.feas_tol)
      out.status = SpectralStatus::NumericalFailure;
  }
  return out;
}

}  // namespace mcinv

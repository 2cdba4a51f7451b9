#include "mcinv/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <utility>

namespace mcinv {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void validate_graph(const Graph& graph, const char* who) {
  const Eigen::MatrixXi& a = graph.adjacency;
  if (a.rows() == 0 || a.rows() != a.cols())
    throw std::invalid_argument(std::string(who) + ": adjacency matrix must be square and nonempty");
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      if (a(i, j) != 0 && a(i, j) != 1)
        throw std::invalid_argument(std::string(who) + ": adjacency entries must be 0 or 1");
}

Eigen::VectorXd validated_target(const Graph& graph, const Eigen::VectorXd& v, const char* who) {
  if (v.size() != graph.size())
    throw std::invalid_argument(std::string(who) + ": target distribution has wrong dimension");
  if (!v.allFinite()) throw std::invalid_argument(std::string(who) + ": target distribution has non-finite entries");
  for (int i = 0; i < v.size(); ++i)
    if (v[i] <= 0.0)
      throw std::invalid_argument(std::string(who) + ": target distribution must be strictly positive");
  const double sum = v.sum();
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument(std::string(who) + ": target distribution must sum to 1");
  return v / sum;
}

void validate_bounds(const std::vector<EntryBound>& bounds, int n, const char* who) {
  for (const EntryBound& b : bounds) {
    if (b.row < 0 || b.row >= n || b.col < 0 || b.col >= n)
      throw std::invalid_argument(std::string(who) + ": entry bound index out of range");
    if (!std::isfinite(b.lo) || !std::isfinite(b.hi) || b.lo > b.hi)
      throw std::invalid_argument(std::string(who) + ": entry bound interval is invalid");
  }
}

std::string fmt(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

// ---------------------------------------------------------------------------
// Reversible parametrization. Parameters are the entries T_ij of the
// symmetric similarity transform T = Q^{-1} M Q on the symmetric part of the
// graph support; M_ij = T_ij r_i / r_j is then reversible for every theta,
// and T r = r encodes stochasticity and stationarity simultaneously.
// ---------------------------------------------------------------------------

struct ReversibleStructure {
  int n = 0;
  Eigen::VectorXd r;                        // elementwise sqrt of v
  std::vector<std::pair<int, int>> pairs;   // i <= j over the symmetric support
  Eigen::MatrixXi pair_of;                  // (i, j) -> parameter index or -1
  Eigen::VectorXd theta_lo;                 // per-parameter box from entry bounds
  Eigen::VectorXd theta_hi;
};

ReversibleStructure reversible_structure(const Graph& graph, const Eigen::VectorXd& v,
                                         const std::vector<EntryBound>& bounds) {
  ReversibleStructure st;
  st.n = graph.size();
  st.r = v.array().sqrt().matrix();
  st.pair_of = Eigen::MatrixXi::Constant(st.n, st.n, -1);
  for (int i = 0; i < st.n; ++i)
    for (int j = i; j < st.n; ++j)
      if (graph.adjacency(i, j) == 1 && graph.adjacency(j, i) == 1) {
        st.pair_of(i, j) = st.pair_of(j, i) = static_cast<int>(st.pairs.size());
        st.pairs.emplace_back(i, j);
      }
  const int p = static_cast<int>(st.pairs.size());
  st.theta_lo = Eigen::VectorXd::Zero(p);
  st.theta_hi = Eigen::VectorXd::Constant(p, kInf);
  for (const EntryBound& b : bounds) {
    const int k = st.pair_of(b.row, b.col);
    if (k < 0) continue;  // structurally-zero entry; the row builder handles contradictions
    const double scale = st.r[b.col] / st.r[b.row];  // theta = M(row, col) * r_col / r_row
    st.theta_lo[k] = std::max(st.theta_lo[k], b.lo * scale);
    st.theta_hi[k] = std::min(st.theta_hi[k], b.hi * scale);
  }
  return st;
}

AffineMatrixMap reversible_s_map(const ReversibleStructure& st) {
  AffineMatrixMap map;
  map.dim = st.n;
  map.constant = -(st.r * st.r.transpose());
  map.basis.reserve(st.pairs.size());
  for (const auto& [i, j] : st.pairs) {
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(st.n, st.n);
    b(i, j) = 1.0;
    b(j, i) = 1.0;
    map.basis.push_back(std::move(b));
  }
  return map;
}

AffineMatrixMap reversible_m_map(const ReversibleStructure& st) {
  AffineMatrixMap map;
  map.dim = st.n;
  map.constant = Eigen::MatrixXd::Zero(st.n, st.n);
  map.basis.reserve(st.pairs.size());
  for (const auto& [i, j] : st.pairs) {
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(st.n, st.n);
    if (i == j) {
      b(i, i) = 1.0;
    } else {
      b(i, j) = st.r[i] / st.r[j];
      b(j, i) = st.r[j] / st.r[i];
    }
    map.basis.push_back(std::move(b));
  }
  return map;
}

// T r = r rows; rank n because every state carries at least one parameter.
void reversible_equality_system(const ReversibleStructure& st, Eigen::MatrixXd& c,
                                Eigen::VectorXd& rhs) {
  const int p = static_cast<int>(st.pairs.size());
  c = Eigen::MatrixXd::Zero(st.n, p);
  rhs = st.r;
  for (int k = 0; k < p; ++k) {
    const auto& [i, j] = st.pairs[static_cast<std::size_t>(k)];
    c(i, k) += st.r[j];
    if (i != j) c(j, k) += st.r[i];
  }
}

LinearConstraintSet reversible_constraints(const ReversibleStructure& st,
                                           const std::vector<EntryBound>& bounds) {
  const int p = static_cast<int>(st.pairs.size());
  Eigen::MatrixXd eq;
  Eigen::VectorXd eq_rhs;
  reversible_equality_system(st, eq, eq_rhs);

  struct Row {
    Eigen::RowVectorXd coeffs;
    double rhs;
    Sense sense;
  };
  std::vector<Row> extra;
  for (const EntryBound& b : bounds) {
    const int k = st.pair_of(b.row, b.col);
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(p);
    if (k >= 0) {
      row[k] = st.r[b.row] / st.r[b.col];  // M(row, col) in theta units
      if (b.lo > 0.0) extra.push_back({row, b.lo, Sense::GreaterEq});
      if (b.hi < 1.0) extra.push_back({row, b.hi, Sense::LessEq});
    } else if (b.lo > 0.0) {
      // Positive lower bound on a structurally-zero entry: record an
      // unsatisfiable row so the contradiction surfaces as Infeasible.
      extra.push_back({row, b.lo, Sense::GreaterEq});
    }
  }

  LinearConstraintSet lin;
  const int q = st.n + static_cast<int>(extra.size());
  lin.matrix = Eigen::MatrixXd::Zero(q, p);
  lin.rhs.resize(q);
  lin.sense.assign(static_cast<std::size_t>(q), Sense::Equal);
  lin.matrix.topRows(st.n) = eq;
  lin.rhs.head(st.n) = eq_rhs;
  for (std::size_t e = 0; e < extra.size(); ++e) {
    const int row = st.n + static_cast<int>(e);
    lin.matrix.row(row) = extra[e].coeffs;
    lin.rhs[row] = extra[e].rhs;
    lin.sense[static_cast<std::size_t>(row)] = extra[e].sense;
  }
  return lin;  // nonneg empty: every theta is a nonnegative T entry
}

Eigen::VectorXd theta_from_matrix(const ReversibleStructure& st, const Eigen::MatrixXd& t) {
  Eigen::VectorXd theta(static_cast<int>(st.pairs.size()));
  for (std::size_t k = 0; k < st.pairs.size(); ++k) {
    const auto& [i, j] = st.pairs[k];
    theta[static_cast<int>(k)] = i == j ? t(i, i) : 0.5 * (t(i, j) + t(j, i));
  }
  return theta;
}

Eigen::MatrixXd matrix_from_theta(const ReversibleStructure& st, const Eigen::VectorXd& theta) {
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(st.n, st.n);
  for (std::size_t k = 0; k < st.pairs.size(); ++k) {
    const auto& [i, j] = st.pairs[k];
    t(i, j) = theta[static_cast<int>(k)];
    t(j, i) = theta[static_cast<int>(k)];
  }
  return t;
}

Eigen::VectorXd theta_from_chain(const ReversibleStructure& st, const Eigen::MatrixXd& m) {
  Eigen::VectorXd theta(static_cast<int>(st.pairs.size()));
  for (std::size_t k = 0; k < st.pairs.size(); ++k) {
    const auto& [i, j] = st.pairs[k];
    theta[static_cast<int>(k)] =
        i == j ? m(i, i) : 0.5 * (m(i, j) * st.r[j] / st.r[i] + m(j, i) * st.r[i] / st.r[j]);
  }
  return theta;
}

// Orthogonal projection onto a consistent affine system c theta = rhs.
struct EqualityProjector {
  Eigen::MatrixXd c;
  Eigen::VectorXd rhs;
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod;

  EqualityProjector(Eigen::MatrixXd c_in, Eigen::VectorXd rhs_in)
      : c(std::move(c_in)), rhs(std::move(rhs_in)) {
    cod.compute(c);
  }
  Eigen::VectorXd apply(const Eigen::VectorXd& theta) const {
    return theta - cod.solve(c * theta - rhs);
  }
  double residual(const Eigen::VectorXd& theta) const {
    return (c * theta - rhs).cwiseAbs().maxCoeff();
  }
};

// Alternate box clipping with the equality projection, then erase the
// roundoff-scale negatives the final projection leaves behind.
Eigen::VectorXd polish_box_equality(const EqualityProjector& proj, const Eigen::VectorXd& lo,
                                    const Eigen::VectorXd& hi, Eigen::VectorXd theta) {
  for (int round = 0; round < 4; ++round) {
    theta = theta.cwiseMax(lo).cwiseMin(hi);
    theta = proj.apply(theta);
  }
  for (int k = 0; k < theta.size(); ++k) {
    if (theta[k] < lo[k] && theta[k] > lo[k] - 1e-11) theta[k] = lo[k];
    if (theta[k] > hi[k] && theta[k] < hi[k] + 1e-11) theta[k] = hi[k];
  }
  return theta;
}

bool inside_box(const Eigen::VectorXd& theta, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                double slack) {
  for (int k = 0; k < theta.size(); ++k)
    if (theta[k] < lo[k] - slack || theta[k] > hi[k] + slack) return false;
  return true;
}

double spectral_radius_of(const AffineMatrixMap& s_map, const Eigen::VectorXd& theta) {
  const Eigen::VectorXd ev = symmetric_eigenvalues(s_map.at(theta));
  if (ev.size() == 0) return 0.0;
  return std::max(std::abs(ev[0]), std::abs(ev[ev.size() - 1]));
}

// Alternating projections in T space over three convex sets: the support box,
// the affine slice {T r = r}, and the spectral ball {|eig(T - r r')| <= lam}.
// Dykstra corrections make the limit the projection onto the intersection.
// Output is a hint: the caller always re-verifies.
struct HintResult {
  Eigen::VectorXd theta;
  bool verified = false;
};

std::optional<HintResult> dykstra_hint(const ReversibleStructure& st, const EqualityProjector& proj,
                                       const AffineMatrixMap& s_map, const Eigen::VectorXd& start,
                                       double lam, double feas_tol, int max_sweeps) {
  const int n = st.n;
  if (n == 0 || start.size() != static_cast<int>(st.pairs.size())) return std::nullopt;
  const Eigen::VectorXd& r = st.r;
  const Eigen::MatrixXd rr = r * r.transpose();
  const double rho2 = r.squaredNorm();

  auto support_clip = [&](const Eigen::MatrixXd& y) {
    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t k = 0; k < st.pairs.size(); ++k) {
      const auto& [i, j] = st.pairs[k];
      const int kk = static_cast<int>(k);
      double val = i == j ? y(i, i) : 0.5 * (y(i, j) + y(j, i));
      val = std::min(std::max(val, st.theta_lo[kk]), st.theta_hi[kk]);
      z(i, j) = val;
      z(j, i) = val;
    }
    return z;
  };
  auto affine_project = [&](const Eigen::MatrixXd& y) {
    const Eigen::VectorXd d = r - y * r;
    const Eigen::VectorXd a = d / rho2 - (d.dot(r) / (2.0 * rho2 * rho2)) * r;
    return Eigen::MatrixXd(y + a * r.transpose() + r * a.transpose());
  };
  auto spectral_clip = [&](const Eigen::MatrixXd& y) {
    Eigen::MatrixXd b = y - rr;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (b + b.transpose()));
    if (es.info() != Eigen::Success) return y;
    const Eigen::VectorXd clipped = es.eigenvalues().cwiseMax(-lam).cwiseMin(lam);
    return Eigen::MatrixXd(rr + es.eigenvectors() * clipped.asDiagonal() *
                                    es.eigenvectors().transpose());
  };

  Eigen::MatrixXd x = matrix_from_theta(st, start);
  Eigen::MatrixXd p1 = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd p2 = p1, p3 = p1;
  HintResult best;

  for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
    Eigen::MatrixXd y = x + p1;
    Eigen::MatrixXd z = support_clip(y);
    p1 = y - z;
    x = z;

    y = x + p2;
    z = affine_project(y);
    p2 = y - z;
    x = z;

    y = x + p3;
    z = spectral_clip(y);
    p3 = y - z;
    x = z;

    if (sweep % 10 == 0 || sweep == max_sweeps) {
      Eigen::VectorXd theta = polish_box_equality(proj, st.theta_lo, st.theta_hi,
                                                  theta_from_matrix(st, support_clip(x)));
      best.theta = theta;
      if (!inside_box(theta, st.theta_lo, st.theta_hi, 1e-12)) continue;
      if (proj.residual(theta) > 1e-10) continue;
      if (spectral_radius_of(s_map, theta) > lam + 0.5 * feas_tol) continue;
      best.verified = true;
      return best;
    }
  }
  if (best.theta.size() == 0) return std::nullopt;
  return best;  // unverified; still useful for seeding cuts
}

double linear_violation_of(const LinearConstraintSet& lin, const Eigen::VectorXd& theta) {
  LpFeasibilityProblem pb{lin.matrix, lin.rhs, lin.sense, lin.nonneg};
  return lp_violation(pb, theta);
}

SynthesisResiduals residuals_of(const Eigen::MatrixXd& m, const Eigen::VectorXd& v,
                                const Graph& graph) {
  SynthesisResiduals res;
  const int n = static_cast<int>(m.rows());
  for (int j = 0; j < n; ++j)
    res.stochasticity = std::max(res.stochasticity, std::abs(m.col(j).sum() - 1.0));
  res.stationarity = (m * v - v).cwiseAbs().maxCoeff();
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (graph.adjacency(i, j) == 0) res.sparsity = std::max(res.sparsity, std::abs(m(j, i)));
      if (i < j)
        res.reversibility =
            std::max(res.reversibility, std::abs(m(i, j) * v[j] - m(j, i) * v[i]));
    }
  return res;
}

struct EffortCaps {
  int rounds = 60;
  int pool = 300;
  int sweeps = 400;
};

EffortCaps effort_for(int n) {
  EffortCaps caps;
  if (n > 20) {
    caps.rounds = 24;
    caps.pool = 250;
    caps.sweeps = 250;
  }
  return caps;
}

void finalize_result(SynthesisResult& res, const Eigen::MatrixXd& m, const Eigen::VectorXd& v,
                     const Graph& graph, double lambda_cert, SynthesisObjective objective) {
  res.chain = MarkovChain::validate(m, 1e-8);
  res.lambda_star = lambda_cert;
  res.residuals = residuals_of(m, v, graph);
  res.rho_achieved = mixing_rho(m, v);
  res.ergodic_certified = is_ergodic(res.chain) && res.rho_achieved < 1.0 - 1e-9;
  if (!res.ergodic_certified)
    res.warnings.push_back(
        "result is not certified ergodic: the spectral bound did not separate from 1");
  if (objective == SynthesisObjective::MinTransitionFrequency)
    res.objective_value = objective_transition_frequency(m, v);
  else if (objective == SynthesisObjective::MaxSelfLoopMass)
    res.objective_value = m.diagonal().dot(v);
}

SynthesisResult synthesize_reversible(const SynthesisProblem& pb, const Eigen::VectorXd& v,
                                      const std::optional<MarkovChain>& mh, double baseline_rho) {
  const int n = pb.graph.size();
  SynthesisResult res;
  res.baseline_rho = baseline_rho;

  const ReversibleStructure st = reversible_structure(pb.graph, v, pb.entry_bounds);
  if (st.pairs.empty())
    throw std::invalid_argument("synthesize: the symmetric part of the graph has no edges");
  for (int a = 0; a < n; ++a) {
    bool touched = false;
    for (const auto& [i, j] : st.pairs) touched = touched || i == a || j == a;
    if (!touched)
      throw std::invalid_argument("synthesize: state " + std::to_string(a) +
                                  " has no symmetric edge, so no reversible chain exists");
  }

  const AffineMatrixMap s_map = reversible_s_map(st);
  const AffineMatrixMap m_map = reversible_m_map(st);
  const LinearConstraintSet lin = reversible_constraints(st, pb.entry_bounds);
  Eigen::MatrixXd eq;
  Eigen::VectorXd eq_rhs;
  reversible_equality_system(st, eq, eq_rhs);
  const EqualityProjector proj(eq, eq_rhs);

  const double tol = pb.feas_tol;
  const EffortCaps caps = effort_for(n);
  CutPool pool(static_cast<std::size_t>(caps.pool));

  SpectralFeasibilityProblem sp;
  sp.ambient_dim = n;
  sp.s_map = s_map;
  sp.m_map = m_map;
  sp.constraints = lin;

  double hi = 1.0;
  Eigen::VectorXd hi_theta;
  bool seeded = false;

  if (mh) {
    // The Metropolis-Hastings chain is itself a certificate at its own rho;
    // starting the bracket there guarantees the result never falls behind it.
    const Eigen::VectorXd theta = theta_from_chain(st, mh->matrix());
    const double cand = std::min(1.0, std::max(0.0, baseline_rho));
    if (linear_violation_of(lin, theta) <= tol &&
        spectral_radius_of(s_map, theta) <= cand + tol) {
      hi = cand;
      hi_theta = theta;
      seeded = true;
      res.trace.push_back({hi, SpectralStatus::Feasible});
    }
  }
  if (!seeded && pb.graph.has_all_self_loops()) {
    // Identity chain: trivially reversible and stationary, certified at 1.
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(static_cast<int>(st.pairs.size()));
    for (std::size_t k = 0; k < st.pairs.size(); ++k)
      if (st.pairs[k].first == st.pairs[k].second) theta[static_cast<int>(k)] = 1.0;
    if (linear_violation_of(lin, theta) <= tol) {
      hi = 1.0;
      hi_theta = theta;
      seeded = true;
      res.trace.push_back({1.0, SpectralStatus::Feasible});
    }
  }
  if (!seeded) {
    sp.lambda = 1.0;
    SpectralOptions so;
    so.feas_tol = tol;
    so.max_rounds = caps.rounds;
    so.pool = &pool;
    const SpectralOutcome out = spectral_feasible(sp, so);
    res.trace.push_back({1.0, out.status});
    if (out.status == SpectralStatus::Infeasible)
      throw InfeasibleAtLambdaOneError(
          "synthesize: constraints admit no reversible chain even at lambda = 1");
    if (out.status != SpectralStatus::Feasible)
      throw NumericalFailureError("synthesize: feasibility at lambda = 1 could not be decided");
    hi = 1.0;
    hi_theta = out.theta;
  }

  double lo = 0.0;
  while (hi - lo > pb.lambda_tol) {
    const double mid = 0.5 * (lo + hi);
    sp.lambda = mid;
    const std::optional<HintResult> hint =
        dykstra_hint(st, proj, s_map, hi_theta, mid, tol, caps.sweeps);
    SpectralOptions so;
    so.feas_tol = tol;
    so.max_rounds = caps.rounds;
    so.pool = &pool;
    if (hint) so.hint = &hint->theta;
    const SpectralOutcome out = spectral_feasible(sp, so);
    res.trace.push_back({mid, out.status});
    if (out.status == SpectralStatus::Feasible) {
      hi = mid;
      hi_theta = out.theta;
    } else {
      if (out.status == SpectralStatus::NumericalFailure)
        res.warnings.push_back("feasibility at lambda = " + fmt(mid) +
                               " undecided; treated as infeasible for bracketing");
      lo = mid;
    }
  }

  double lambda_cert = hi;
  Eigen::VectorXd theta = hi_theta;

  if (pb.objective != SynthesisObjective::None) {
    const double lam_obj = std::min(1.0, hi + pb.lambda_tol);
    Eigen::VectorXd cost = Eigen::VectorXd::Zero(static_cast<int>(st.pairs.size()));
    for (std::size_t k = 0; k < st.pairs.size(); ++k)
      if (st.pairs[k].first == st.pairs[k].second)
        cost[static_cast<int>(k)] = v[st.pairs[k].first];

    BandFeasibilityProblem bp;
    bp.num_params = static_cast<int>(st.pairs.size());
    bp.constraints = lin;
    bp.bands.push_back(EigenBand{s_map, -lam_obj, lam_obj});
    BandOptions bo;
    bo.feas_tol = tol;
    bo.max_rounds = caps.rounds;
    bo.objective = &cost;
    bo.pool = &pool;
    bo.hint = &theta;
    const BandOutcome out = band_feasible(bp, bo);
    if (out.status == SpectralStatus::Feasible) {
      theta = out.theta;
      lambda_cert = lam_obj;
      res.objective_optimized = true;
    } else {
      res.warnings.push_back(
          "objective optimization did not certify within the round cap; returning the plain "
          "bisection witness");
    }
  }

  // Sharpen stationarity to machine precision when that does not disturb the
  // certificate; otherwise keep the raw witness.
  {
    const Eigen::VectorXd polished = polish_box_equality(proj, st.theta_lo, st.theta_hi, theta);
    const bool ok = inside_box(polished, st.theta_lo, st.theta_hi, 1e-12) &&
                    polished.minCoeff() >= 0.0 && proj.residual(polished) <= 1e-10 &&
                    spectral_radius_of(s_map, polished) <= lambda_cert + tol;
    if (ok) theta = polished;
  }

  finalize_result(res, m_map.at(theta), v, pb.graph, lambda_cert, pb.objective);
  return res;
}

// ---------------------------------------------------------------------------
// Fixed-D path: joint linear search for (M, P) in the scaled block form
// [[lambda^2 P, E'D'], [D E, D + D' - P]] >= 0 with E = M - v 1'.
// ---------------------------------------------------------------------------

struct FixedDStructure {
  int n = 0;
  std::vector<std::pair<int, int>> m_params;  // (row, col): transition col -> row
  Eigen::MatrixXi m_index;                    // (row, col) -> parameter or -1
  std::vector<std::pair<int, int>> p_params;  // i <= j, symmetric slack matrix P
  int num_m = 0;

  int num_params() const { return num_m + static_cast<int>(p_params.size()); }
};

FixedDStructure fixed_d_structure(const Graph& graph) {
  FixedDStructure st;
  st.n = graph.size();
  st.m_index = Eigen::MatrixXi::Constant(st.n, st.n, -1);
  for (int a = 0; a < st.n; ++a)
    for (int b = 0; b < st.n; ++b)
      if (graph.adjacency(b, a) == 1) {
        st.m_index(a, b) = static_cast<int>(st.m_params.size());
        st.m_params.emplace_back(a, b);
      }
  st.num_m = static_cast<int>(st.m_params.size());
  for (int i = 0; i < st.n; ++i)
    for (int j = i; j < st.n; ++j) st.p_params.emplace_back(i, j);
  return st;
}

AffineMatrixMap fixed_d_z_map(const FixedDStructure& st, const Eigen::MatrixXd& d,
                              const Eigen::VectorXd& v, double lambda) {
  const int n = st.n;
  const int dim = 2 * n;
  AffineMatrixMap map;
  map.dim = dim;
  map.constant = Eigen::MatrixXd::Zero(dim, dim);
  const Eigen::VectorXd dv = d * v;
  map.constant.block(0, n, n, n) = -Eigen::VectorXd::Ones(n) * dv.transpose();
  map.constant.block(n, 0, n, n) = -dv * Eigen::RowVectorXd::Ones(n);
  map.constant.block(n, n, n, n) = d + d.transpose();
  map.basis.assign(static_cast<std::size_t>(st.num_params()), Eigen::MatrixXd::Zero(dim, dim));
  for (int k = 0; k < st.num_m; ++k) {
    const auto& [a, b] = st.m_params[static_cast<std::size_t>(k)];
    Eigen::MatrixXd& bb = map.basis[static_cast<std::size_t>(k)];
    for (int c = 0; c < n; ++c) {
      bb(b, n + c) += d(c, a);
      bb(n + c, b) += d(c, a);
    }
  }
  const double l2 = lambda * lambda;
  for (std::size_t kk = 0; kk < st.p_params.size(); ++kk) {
    const auto& [i, j] = st.p_params[kk];
    Eigen::MatrixXd& bb = map.basis[static_cast<std::size_t>(st.num_m) + kk];
    bb(i, j) += l2;
    if (i != j) bb(j, i) += l2;
    bb(n + i, n + j) -= 1.0;
    if (i != j) bb(n + j, n + i) -= 1.0;
  }
  return map;
}

AffineMatrixMap fixed_d_p_map(const FixedDStructure& st) {
  AffineMatrixMap map;
  map.dim = st.n;
  map.constant = Eigen::MatrixXd::Zero(st.n, st.n);
  map.basis.assign(static_cast<std::size_t>(st.num_params()),
                   Eigen::MatrixXd::Zero(st.n, st.n));
  for (std::size_t kk = 0; kk < st.p_params.size(); ++kk) {
    const auto& [i, j] = st.p_params[kk];
    Eigen::MatrixXd& bb = map.basis[static_cast<std::size_t>(st.num_m) + kk];
    bb(i, j) += 1.0;
    if (i != j) bb(j, i) += 1.0;
  }
  return map;
}

LinearConstraintSet fixed_d_constraints(const FixedDStructure& st, const Eigen::VectorXd& v,
                                        const Eigen::MatrixXd& d,
                                        const std::vector<EntryBound>& bounds) {
  const int p = st.num_params();
  struct Row {
    Eigen::RowVectorXd coeffs;
    double rhs;
    Sense sense;
  };
  std::vector<Row> rows;
  for (int b = 0; b < st.n; ++b) {  // column sums of M
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(p);
    for (int a = 0; a < st.n; ++a)
      if (st.m_index(a, b) >= 0) row[st.m_index(a, b)] = 1.0;
    rows.push_back({row, 1.0, Sense::Equal});
  }
  for (int a = 0; a < st.n; ++a) {  // stationarity M v = v
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(p);
    for (int b = 0; b < st.n; ++b)
      if (st.m_index(a, b) >= 0) row[st.m_index(a, b)] = v[b];
    rows.push_back({row, v[a], Sense::Equal});
  }
  for (const EntryBound& bd : bounds) {
    const int k = st.m_index(bd.row, bd.col);
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(p);
    if (k >= 0) {
      row[k] = 1.0;
      if (bd.lo > 0.0) rows.push_back({row, bd.lo, Sense::GreaterEq});
      if (bd.hi < 1.0) rows.push_back({row, bd.hi, Sense::LessEq});
    } else if (bd.lo > 0.0) {
      rows.push_back({row, bd.lo, Sense::GreaterEq});  // unsatisfiable on purpose
    }
  }
  // Valid box on diag(P): any feasible point has P <= D + D' on the diagonal,
  // so these rows never cut a feasible point but keep the relaxation bounded.
  const Eigen::MatrixXd dd = d + d.transpose();
  for (std::size_t kk = 0; kk < st.p_params.size(); ++kk) {
    const auto& [i, j] = st.p_params[kk];
    if (i != j) continue;
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(p);
    row[st.num_m + static_cast<int>(kk)] = 1.0;
    rows.push_back({row, dd(i, i) + 1.0, Sense::LessEq});
  }

  LinearConstraintSet lin;
  const int q = static_cast<int>(rows.size());
  lin.matrix = Eigen::MatrixXd::Zero(q, p);
  lin.rhs.resize(q);
  lin.sense.resize(static_cast<std::size_t>(q));
  for (int i = 0; i < q; ++i) {
    lin.matrix.row(i) = rows[static_cast<std::size_t>(i)].coeffs;
    lin.rhs[i] = rows[static_cast<std::size_t>(i)].rhs;
    lin.sense[static_cast<std::size_t>(i)] = rows[static_cast<std::size_t>(i)].sense;
  }
  lin.nonneg.assign(static_cast<std::size_t>(p), true);
  for (int k = st.num_m; k < p; ++k) lin.nonneg[static_cast<std::size_t>(k)] = false;
  return lin;
}

Eigen::MatrixXd chain_from_fixed_d_theta(const FixedDStructure& st, const Eigen::VectorXd& theta) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(st.n, st.n);
  for (int k = 0; k < st.num_m; ++k) {
    const auto& [a, b] = st.m_params[static_cast<std::size_t>(k)];
    m(a, b) = theta[k];
  }
  return m;
}

Eigen::MatrixXd validated_fixed_d(const Graph& graph, const Eigen::MatrixXd& d,
                                  const Eigen::VectorXd& v) {
  const int n = graph.size();
  if (d.size() == 0) {
    Eigen::MatrixXd def = Eigen::MatrixXd::Zero(n, n);
    def.diagonal() = v.cwiseInverse();
    return def;
  }
  if (d.rows() != n || d.cols() != n)
    throw std::invalid_argument("fixed_d_lmi_feasible: D must match the number of states");
  if (!d.allFinite())
    throw std::invalid_argument("fixed_d_lmi_feasible: D has non-finite entries");
  Eigen::FullPivLU<Eigen::MatrixXd> lu(d);
  if (!lu.isInvertible())
    throw std::invalid_argument("fixed_d_lmi_feasible: D must be nonsingular");
  return d;
}

SynthesisResult synthesize_fixed_d(const SynthesisProblem& pb, const Eigen::VectorXd& v,
                                   const std::optional<MarkovChain>& mh, double baseline_rho) {
  const int n = pb.graph.size();
  SynthesisResult res;
  res.baseline_rho = baseline_rho;

  const Eigen::MatrixXd d = validated_fixed_d(pb.graph, pb.fixed_d, v);
  const FixedDStructure st = fixed_d_structure(pb.graph);
  const LinearConstraintSet lin = fixed_d_constraints(st, v, d, pb.entry_bounds);
  const double tol = pb.feas_tol;
  const EffortCaps caps = effort_for(n);
  CutPool pool(static_cast<std::size_t>(caps.pool));

  // Projector onto the stochasticity + stationarity equalities (the first 2n
  // rows); P columns are zero there so the correction never touches P.
  const EqualityProjector proj(lin.matrix.topRows(2 * n), lin.rhs.head(2 * n));
  Eigen::VectorXd box_lo = Eigen::VectorXd::Zero(st.num_params());
  Eigen::VectorXd box_hi = Eigen::VectorXd::Constant(st.num_params(), kInf);
  box_lo.tail(static_cast<int>(st.p_params.size())).setConstant(-kInf);
  for (const EntryBound& b : pb.entry_bounds) {
    const int k = st.m_index(b.row, b.col);
    if (k < 0) continue;
    box_lo[k] = std::max(box_lo[k], b.lo);
    box_hi[k] = std::min(box_hi[k], b.hi);
  }

  auto probe = [&](double lambda, const Eigen::VectorXd* objective,
                   const Eigen::VectorXd* hint) {
    return fixed_d_lmi_feasible(pb.graph, v, d, lambda, tol, &pool, pb.entry_bounds, objective,
                                caps.rounds, hint);
  };

  SpectralOutcome out = probe(1.0, nullptr, nullptr);
  res.trace.push_back({1.0, out.status});
  if (out.status == SpectralStatus::Infeasible)
    throw InfeasibleAtLambdaOneError(
        "synthesize: the fixed-D relaxation admits no chain even at lambda = 1");
  if (out.status != SpectralStatus::Feasible)
    throw NumericalFailureError(
        "synthesize: feasibility of the fixed-D relaxation at lambda = 1 could not be decided");

  double hi = 1.0;
  double lo = 0.0;
  Eigen::VectorXd hi_theta = out.theta;
  while (hi - lo > pb.lambda_tol) {
    const double mid = 0.5 * (lo + hi);
    out = probe(mid, nullptr, &hi_theta);
    res.trace.push_back({mid, out.status});
    if (out.status == SpectralStatus::Feasible) {
      hi = mid;
      hi_theta = out.theta;
    } else {
      if (out.status == SpectralStatus::NumericalFailure)
        res.warnings.push_back("feasibility at lambda = " + fmt(mid) +
                               " undecided; treated as infeasible for bracketing");
      lo = mid;
    }
  }

  double lambda_cert = hi;
  Eigen::VectorXd theta = hi_theta;

  if (pb.objective != SynthesisObjective::None) {
    const double lam_obj = std::min(1.0, hi + pb.lambda_tol);
    Eigen::VectorXd cost = Eigen::VectorXd::Zero(st.num_params());
    for (int k = 0; k < st.num_m; ++k) {
      const auto& [a, b] = st.m_params[static_cast<std::size_t>(k)];
      if (a == b) cost[k] = v[a];
    }
    out = probe(lam_obj, &cost, &theta);
    if (out.status == SpectralStatus::Feasible) {
      theta = out.theta;
      lambda_cert = lam_obj;
      res.objective_optimized = true;
    } else {
      res.warnings.push_back(
          "objective optimization did not certify within the round cap; returning the plain "
          "bisection witness");
    }
  }

  {
    const Eigen::VectorXd polished = polish_box_equality(proj, box_lo, box_hi, theta);
    bool ok = inside_box(polished, box_lo, box_hi, 1e-12) &&
              polished.head(st.num_m).minCoeff() >= 0.0 && proj.residual(polished) <= 1e-10;
    if (ok) {
      const AffineMatrixMap z_map = fixed_d_z_map(st, d, v, lambda_cert);
      const AffineMatrixMap p_map = fixed_d_p_map(st);
      const Eigen::VectorXd ez = symmetric_eigenvalues(z_map.at(polished));
      const Eigen::VectorXd ep = symmetric_eigenvalues(p_map.at(polished));
      ok = ez[0] >= -tol && ep[0] >= -tol &&
           mixing_rho(chain_from_fixed_d_theta(st, polished), v) <= lambda_cert + 1e-6;
    }
    if (ok) theta = polished;
  }

  Eigen::MatrixXd m = chain_from_fixed_d_theta(st, theta);

  // The relaxation is conservative; never return something the plain
  // Metropolis-Hastings baseline beats when no objective was requested.
  if (pb.objective == SynthesisObjective::None && mh &&
      mixing_rho(m, v) > baseline_rho + 1e-6) {
    bool bounds_ok = true;
    for (const EntryBound& b : pb.entry_bounds)
      bounds_ok = bounds_ok && mh->matrix()(b.row, b.col) >= b.lo - 1e-12 &&
                  mh->matrix()(b.row, b.col) <= b.hi + 1e-12;
    if (bounds_ok) {
      m = mh->matrix();
      lambda_cert = std::min(1.0, std::max(0.0, baseline_rho));
      res.warnings.push_back(
          "fixed-D relaxation was beaten by the Metropolis-Hastings baseline; returning the "
          "baseline chain");
    }
  }

  finalize_result(res, m, v, pb.graph, lambda_cert, pb.objective);
  return res;
}

}  // namespace

double objective_transition_frequency(const Eigen::MatrixXd& m, const Eigen::VectorXd& v) {
  if (m.rows() != m.cols() || m.rows() != v.size())
    throw std::invalid_argument("objective_transition_frequency: dimension mismatch");
  double total = 0.0;
  for (int i = 0; i < v.size(); ++i) total += (1.0 - m(i, i)) * v[i];
  return total;
}

void require_strict_interior(const Eigen::MatrixXd& g_matrix, const Eigen::VectorXd& g_rhs,
                             const Eigen::VectorXd& v) {
  if (g_matrix.rows() != g_rhs.size() || g_matrix.cols() != v.size())
    throw std::invalid_argument("require_strict_interior: dimension mismatch");
  const Eigen::VectorXd slack = g_rhs - g_matrix * v;
  for (int i = 0; i < slack.size(); ++i)
    if (!(slack[i] > 0.0))
      throw std::invalid_argument("require_strict_interior: constraint row " + std::to_string(i) +
                                  " is not strictly satisfied by the target distribution (slack " +
                                  fmt(slack[i]) + ")");
}

Eigen::MatrixXd reversible_spectral_matrix(const Eigen::MatrixXd& m, const Eigen::VectorXd& v) {
  if (m.rows() != m.cols() || m.rows() != v.size())
    throw std::invalid_argument("reversible_spectral_matrix: dimension mismatch");
  for (int i = 0; i < v.size(); ++i)
    if (v[i] <= 0.0)
      throw std::invalid_argument("reversible_spectral_matrix: v must be strictly positive");
  const Eigen::VectorXd r = v.array().sqrt().matrix();
  Eigen::MatrixXd t = m;
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) t(i, j) = m(i, j) * r[j] / r[i];
  return t - r * r.transpose();
}

SpectralFeasibilityProblem reversible_feasibility_problem(const Graph& graph,
                                                          const Eigen::VectorXd& v, double lambda,
                                                          const std::vector<EntryBound>& bounds) {
  validate_graph(graph, "reversible_feasibility_problem");
  const Eigen::VectorXd vn = validated_target(graph, v, "reversible_feasibility_problem");
  validate_bounds(bounds, graph.size(), "reversible_feasibility_problem");
  if (!(lambda >= 0.0))
    throw std::invalid_argument("reversible_feasibility_problem: lambda must be nonnegative");
  const ReversibleStructure st = reversible_structure(graph, vn, bounds);
  SpectralFeasibilityProblem pb;
  pb.ambient_dim = graph.size();
  pb.s_map = reversible_s_map(st);
  pb.m_map = reversible_m_map(st);
  pb.constraints = reversible_constraints(st, bounds);
  pb.lambda = lambda;
  return pb;
}

SpectralOutcome fixed_d_lmi_feasible(const Graph& graph, const Eigen::VectorXd& v,
                                     const Eigen::MatrixXd& d, double lambda, double feas_tol,
                                     CutPool* pool, const std::vector<EntryBound>& entry_bounds,
                                     const Eigen::VectorXd* objective, int max_rounds,
                                     const Eigen::VectorXd* hint) {
  validate_graph(graph, "fixed_d_lmi_feasible");
  const Eigen::VectorXd vn = validated_target(graph, v, "fixed_d_lmi_feasible");
  validate_bounds(entry_bounds, graph.size(), "fixed_d_lmi_feasible");
  if (!(lambda >= 0.0) || lambda > 1.0 + 1e-12)
    throw std::invalid_argument("fixed_d_lmi_feasible: lambda must lie in [0, 1]");
  const Eigen::MatrixXd dd = validated_fixed_d(graph, d, vn);

  const FixedDStructure st = fixed_d_structure(graph);
  BandFeasibilityProblem bp;
  bp.num_params = st.num_params();
  bp.constraints = fixed_d_constraints(st, vn, dd, entry_bounds);
  bp.bands.push_back(EigenBand{fixed_d_p_map(st), 0.0, kInf});
  bp.bands.push_back(EigenBand{fixed_d_z_map(st, dd, vn, lambda), 0.0, kInf});

  BandOptions bo;
  bo.feas_tol = feas_tol;
  bo.max_rounds = max_rounds;
  bo.objective = objective;
  bo.pool = pool;
  bo.hint = hint;
  const BandOutcome out = band_feasible(bp, bo);

  SpectralOutcome res;
  res.status = out.status;
  res.rounds = out.rounds;
  res.linear_residual = out.linear_residual;
  res.spectral_excess = out.band_excess;
  if (out.status != SpectralStatus::Feasible) return res;

  res.theta = out.theta;
  res.m = chain_from_fixed_d_theta(st, out.theta);
  res.s = bp.bands[1].map.at(out.theta);
  // Independent check: the block certificate must actually bound the
  // non-stationary spectrum of the produced chain.
  if (mixing_rho(res.m, vn) > lambda + 1e-6) res.status = SpectralStatus::NumericalFailure;
  return res;
}

SynthesisResult synthesize(const SynthesisProblem& problem) {
  validate_graph(problem.graph, "synthesize");
  const Eigen::VectorXd v = validated_target(problem.graph, problem.v, "synthesize");
  validate_bounds(problem.entry_bounds, problem.graph.size(), "synthesize");
  if (!(problem.lambda_tol > 0.0) || problem.lambda_tol >= 1.0)
    throw std::invalid_argument("synthesize: lambda_tol must lie in (0, 1)");
  if (!(problem.feas_tol > 0.0))
    throw std::invalid_argument("synthesize: feas_tol must be positive");
  if (!pattern_primitive(problem.graph.adjacency.transpose()))
    throw std::invalid_argument(
        "synthesize: the graph pattern is not primitive (no single path length connects all "
        "state pairs), so no ergodic chain respects it");

  std::optional<MarkovChain> mh;
  double baseline_rho = std::numeric_limits<double>::quiet_NaN();
  if (problem.graph.symmetric() && problem.graph.has_all_self_loops()) {
    mh = metropolis_hastings(problem.graph, v);
    baseline_rho = mixing_rho(mh->matrix(), v);
  }

  if (problem.mode == SynthesisMode::ReversibleLMI)
    return synthesize_reversible(problem, v, mh, baseline_rho);
  return synthesize_fixed_d(problem, v, mh, baseline_rho);
}

}  // namespace mcinv

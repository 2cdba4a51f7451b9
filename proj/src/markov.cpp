#include "mcinv/markov.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace mcinv {

MarkovChain MarkovChain::validate(Eigen::MatrixXd m, double tol) {
  if (m.rows() != m.cols())
    throw std::invalid_argument("chain: matrix is " + std::to_string(m.rows()) + "x" +
                                std::to_string(m.cols()) + ", expected square");
  if (m.rows() == 0) throw std::invalid_argument("chain: empty matrix");
  if (!m.allFinite()) throw std::invalid_argument("chain: non-finite entries");
  for (int j = 0; j < m.cols(); ++j) {
    for (int i = 0; i < m.rows(); ++i) {
      if (m(i, j) < -1e-12)
        throw NegativeEntryError("chain: entry (" + std::to_string(i) + "," + std::to_string(j) +
                                 ") = " + std::to_string(m(i, j)) + " is negative");
    }
    const double col_sum = m.col(j).sum();
    if (std::abs(col_sum - 1.0) > tol)
      throw NotStochasticError("chain: column " + std::to_string(j) + " sums to " +
                               std::to_string(col_sum) + ", expected 1 within " +
                               std::to_string(tol));
  }
  return MarkovChain(std::move(m));
}

bool Graph::symmetric() const { return adjacency == adjacency.transpose().eval(); }

bool Graph::has_all_self_loops() const {
  for (int i = 0; i < size(); ++i)
    if (adjacency(i, i) == 0) return false;
  return true;
}

Graph Graph::complete(int n) {
  if (n <= 0) throw std::invalid_argument("graph: size must be positive");
  return Graph{Eigen::MatrixXi::Ones(n, n)};
}

Graph Graph::from_adjacency(Eigen::MatrixXi a) {
  if (a.rows() != a.cols()) throw std::invalid_argument("graph: adjacency must be square");
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      if (a(i, j) != 0 && a(i, j) != 1)
        throw std::invalid_argument("graph: adjacency entry (" + std::to_string(i) + "," +
                                    std::to_string(j) + ") must be 0 or 1");
  return Graph{std::move(a)};
}

namespace {

// Boolean matrix as bit rows for fast squaring.
struct BitMatrix {
  int n = 0;
  int words = 0;
  std::vector<std::uint64_t> rows;  // n * words

  std::uint64_t* row(int i) { return rows.data() + static_cast<std::size_t>(i) * words; }
  const std::uint64_t* row(int i) const {
    return rows.data() + static_cast<std::size_t>(i) * words;
  }
  bool get(int i, int j) const { return (row(i)[j >> 6] >> (j & 63)) & 1U; }
  void set(int i, int j) { row(i)[j >> 6] |= (std::uint64_t{1} << (j & 63)); }

  bool all_ones() const {
    const int full = n >> 6;
    const std::uint64_t tail_mask =
        (n & 63) == 0 ? 0 : ((std::uint64_t{1} << (n & 63)) - 1);
    for (int i = 0; i < n; ++i) {
      const std::uint64_t* r = row(i);
      for (int w = 0; w < full; ++w)
        if (r[w] != ~std::uint64_t{0}) return false;
      if (tail_mask != 0 && (r[full] & tail_mask) != tail_mask) return false;
    }
    return true;
  }
};

BitMatrix bit_square(const BitMatrix& a) {
  BitMatrix c;
  c.n = a.n;
  c.words = a.words;
  c.rows.assign(a.rows.size(), 0);
  for (int i = 0; i < a.n; ++i) {
    std::uint64_t* ci = c.row(i);
    for (int k = 0; k < a.n; ++k) {
      if (!a.get(i, k)) continue;
      const std::uint64_t* bk = a.row(k);
      for (int w = 0; w < a.words; ++w) ci[w] |= bk[w];
    }
  }
  return c;
}

}  // namespace

bool pattern_primitive(const Eigen::MatrixXi& pattern) {
  const int n = static_cast<int>(pattern.rows());
  if (n == 0 || pattern.cols() != n) return false;
  BitMatrix b;
  b.n = n;
  b.words = (n + 63) / 64;
  b.rows.assign(static_cast<std::size_t>(n) * b.words, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (pattern(i, j) != 0) b.set(i, j);

  // A primitive pattern is all-positive at every exponent past its index,
  // which is at most n^2 - 2n + 2, so checking powers 2^k up to that bound
  // decides the question.
  const long wielandt = static_cast<long>(n) * n - 2L * n + 2L;
  long exponent = 1;
  while (true) {
    if (b.all_ones()) return true;
    if (exponent > wielandt) return false;
    b = bit_square(b);
    exponent *= 2;
  }
}

bool respects_graph(const MarkovChain& chain, const Graph& graph, double tol) {
  if (chain.size() != graph.size())
    throw std::invalid_argument("respects_graph: chain has " + std::to_string(chain.size()) +
                                " states but graph has " + std::to_string(graph.size()));
  const Eigen::MatrixXd& m = chain.matrix();
  for (int i = 0; i < chain.size(); ++i)
    for (int j = 0; j < chain.size(); ++j)
      if (graph.adjacency(i, j) == 0 && std::abs(m(j, i)) > tol) return false;
  return true;
}

bool is_ergodic(const MarkovChain& chain) {
  const Eigen::MatrixXd& m = chain.matrix();
  Eigen::MatrixXi pattern(m.rows(), m.cols());
  for (int i = 0; i < m.rows(); ++i)
    for (int j = 0; j < m.cols(); ++j) pattern(i, j) = std::abs(m(i, j)) > kPatternTol ? 1 : 0;
  return pattern_primitive(pattern);
}

double mixing_rho(const Eigen::MatrixXd& m, const Eigen::VectorXd& v) {
  if (m.rows() != v.size())
    throw std::invalid_argument("mixing_rho: dimension mismatch");
  const Eigen::MatrixXd deflated = m - v * Eigen::RowVectorXd::Ones(v.size());
  Eigen::EigenSolver<Eigen::MatrixXd> es(deflated, false);
  if (es.info() != Eigen::Success)
    throw NumericalFailureError("mixing_rho: eigensolver did not converge");
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

StationaryInfo stationary(const MarkovChain& chain) {
  if (!is_ergodic(chain))
    throw NotErgodicError("stationary: chain pattern is not primitive");
  const int n = chain.size();
  const Eigen::MatrixXd& m = chain.matrix();

  Eigen::MatrixXd a(n + 1, n);
  a.topRows(n) = m - Eigen::MatrixXd::Identity(n, n);
  a.row(n) = Eigen::RowVectorXd::Ones(n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n + 1);
  b[n] = 1.0;

  const auto qr = a.colPivHouseholderQr();
  Eigen::VectorXd v = qr.solve(b);
  // One refinement step tightens the residual to working precision.
  v += qr.solve(b - a * v);

  const double res = (m * v - v).cwiseAbs().maxCoeff();
  const double sum_err = std::abs(v.sum() - 1.0);
  if (res > 1e-12 || sum_err > 1e-12 || v.minCoeff() < -1e-12)
    throw NumericalFailureError("stationary: solve residual " + std::to_string(res) +
                                " exceeds tolerance");
  v = v.cwiseMax(0.0);
  v /= v.sum();

  StationaryInfo info;
  info.v = v;
  info.rho = mixing_rho(m, v);
  return info;
}

bool is_reversible(const MarkovChain& chain, const Eigen::VectorXd& v, double tol) {
  if (v.size() != chain.size())
    throw std::invalid_argument("is_reversible: dimension mismatch");
  const Eigen::MatrixXd& m = chain.matrix();
  double worst = 0.0;
  for (int i = 0; i < chain.size(); ++i)
    for (int j = i + 1; j < chain.size(); ++j)
      worst = std::max(worst, std::abs(m(i, j) * v[j] - m(j, i) * v[i]));
  return worst <= tol;
}

MarkovChain metropolis_hastings(const Graph& graph, const Eigen::VectorXd& v) {
  const int n = graph.size();
  if (v.size() != n)
    throw std::invalid_argument("metropolis_hastings: target dimension mismatch");
  if (v.minCoeff() <= 0.0)
    throw std::invalid_argument("metropolis_hastings: target distribution must be positive");
  if (std::abs(v.sum() - 1.0) > kDistributionTol)
    throw std::invalid_argument("metropolis_hastings: target distribution must sum to 1");
  if (!graph.symmetric())
    throw std::invalid_argument("metropolis_hastings: graph must be symmetric");
  if (!graph.has_all_self_loops())
    throw std::invalid_argument("metropolis_hastings: graph must contain every self-loop");
  if (!pattern_primitive(graph.adjacency))
    throw std::invalid_argument("metropolis_hastings: graph pattern is not primitive");

  Eigen::VectorXd degree(n);
  for (int j = 0; j < n; ++j) degree[j] = graph.adjacency.row(j).sum();

  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j) {
    double off_mass = 0.0;
    for (int i = 0; i < n; ++i) {
      if (i == j || graph.adjacency(j, i) == 0) continue;
      m(i, j) = std::min(1.0 / degree[j], v[i] / (v[j] * degree[i]));
      off_mass += m(i, j);
    }
    m(j, j) = 1.0 - off_mass;
  }
  return MarkovChain::validate(std::move(m));
}

Eigen::VectorXd propagate(const MarkovChain& chain, const Eigen::VectorXd& x0, int k) {
  if (x0.size() != chain.size())
    throw std::invalid_argument("propagate: distribution dimension mismatch");
  if (k < 0) throw std::invalid_argument("propagate: negative step count");
  validate_distribution(x0);
  Eigen::VectorXd x = x0;
  for (int step = 0; step < k; ++step) x = chain.matrix() * x;
  return x;
}

MarkovChain lazy(const MarkovChain& chain) {
  const int n = chain.size();
  return MarkovChain::validate(0.5 * (chain.matrix() + Eigen::MatrixXd::Identity(n, n)));
}

void validate_distribution(const Eigen::VectorXd& x, double tol) {
  if (x.size() == 0) throw std::invalid_argument("distribution: empty vector");
  if (!x.allFinite()) throw std::invalid_argument("distribution: non-finite entries");
  if (x.minCoeff() < -tol)
    throw std::invalid_argument("distribution: entry " + std::to_string(x.minCoeff()) +
                                " is negative beyond tolerance");
  if (std::abs(x.sum() - 1.0) > tol)
    throw std::invalid_argument("distribution: sums to " + std::to_string(x.sum()) +
                                ", expected 1 within " + std::to_string(tol));
}

}  // namespace mcinv

#include "mcinv/gridworld.hpp"

#include <algorithm>
#include <deque>
#include <random>
#include <stdexcept>
#include <string>

namespace mcinv {

namespace {

std::string cell_str(const Cell& c) {
  return "(" + std::to_string(c.row) + ", " + std::to_string(c.col) + ")";
}

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Shard s draws from its own mt19937_64 stream; the golden-ratio stride plus
// the splitmix64 finalizer decorrelates neighboring shards.
std::uint64_t shard_seed(std::uint64_t seed, int shard) {
  return mix64(seed + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(shard) + 1));
}

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

int sample_from_cumulative(const Eigen::VectorXd& cum, double u) {
  const double* begin = cum.data();
  const double* end = begin + cum.size();
  const double* it = std::upper_bound(begin, end, u);
  if (it == end) --it;  // u landed beyond the last cumsum entry (roundoff)
  return static_cast<int>(it - begin);
}

constexpr int kShardSize = 4096;

}  // namespace

GridWorld GridWorld::canonical() {
  GridWorld g;
  g.width = 7;
  g.height = 7;
  g.obstacles = {{1, 3}, {3, 1}, {3, 3}, {3, 5}, {5, 3}};
  g.terminals = {{0, 0}, {0, 6}, {6, 0}, {6, 6}};
  g.density_cap = 0.3;
  g.terminal_mass = 0.225;
  return g;
}

GridModel build_grid(const GridWorld& grid) {
  if (grid.width <= 0 || grid.height <= 0)
    throw std::invalid_argument("build_grid: width and height must be positive");
  if (!(grid.density_cap > 0.0) || grid.density_cap > 1.0)
    throw std::invalid_argument("build_grid: density_cap must lie in (0, 1]");
  if (!(grid.terminal_mass > 0.0) || grid.terminal_mass >= 1.0)
    throw std::invalid_argument("build_grid: terminal_mass must lie in (0, 1)");

  GridModel model;
  model.grid = grid;
  model.cell_index = Eigen::MatrixXi::Constant(grid.height, grid.width, -1);

  Eigen::MatrixXi blocked = Eigen::MatrixXi::Zero(grid.height, grid.width);
  for (const Cell& c : grid.obstacles) {
    if (c.row < 0 || c.row >= grid.height || c.col < 0 || c.col >= grid.width)
      throw std::invalid_argument("build_grid: obstacle " + cell_str(c) + " is out of bounds");
    blocked(c.row, c.col) = 1;
  }
  for (std::size_t a = 0; a < grid.terminals.size(); ++a) {
    const Cell& c = grid.terminals[a];
    if (c.row < 0 || c.row >= grid.height || c.col < 0 || c.col >= grid.width)
      throw std::invalid_argument("build_grid: terminal " + cell_str(c) + " is out of bounds");
    if (blocked(c.row, c.col) == 1)
      throw std::invalid_argument("build_grid: terminal " + cell_str(c) + " is an obstacle");
    for (std::size_t b = a + 1; b < grid.terminals.size(); ++b)
      if (grid.terminals[b] == c)
        throw std::invalid_argument("build_grid: terminal " + cell_str(c) + " is listed twice");
  }
  if (grid.terminals.empty()) throw std::invalid_argument("build_grid: no terminals given");

  for (int r = 0; r < grid.height; ++r)
    for (int c = 0; c < grid.width; ++c)
      if (blocked(r, c) == 0) {
        model.cell_index(r, c) = static_cast<int>(model.free_cells.size());
        model.free_cells.push_back({r, c});
      }
  const int n = static_cast<int>(model.free_cells.size());
  const int t = static_cast<int>(grid.terminals.size());
  if (n <= t)
    throw std::invalid_argument("build_grid: need at least one non-terminal free cell");
  const double terminal_total = grid.terminal_mass * static_cast<double>(t);
  if (terminal_total >= 1.0)
    throw std::invalid_argument("build_grid: terminal mass " + std::to_string(terminal_total) +
                                " leaves nothing for the remaining cells");

  Eigen::MatrixXi adj = Eigen::MatrixXi::Identity(n, n);
  const int dr[4] = {-1, 1, 0, 0};
  const int dc[4] = {0, 0, -1, 1};
  for (int k = 0; k < n; ++k) {
    const Cell& c = model.free_cells[static_cast<std::size_t>(k)];
    for (int d = 0; d < 4; ++d) {
      const int rr = c.row + dr[d];
      const int cc = c.col + dc[d];
      if (rr < 0 || rr >= grid.height || cc < 0 || cc >= grid.width) continue;
      const int other = model.cell_index(rr, cc);
      if (other >= 0) adj(k, other) = 1;
    }
  }
  model.graph = Graph::from_adjacency(adj);

  // Connectivity via breadth-first search; a disconnected grid can never
  // carry an ergodic chain.
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::deque<int> frontier{0};
  seen[0] = 1;
  int reached = 1;
  while (!frontier.empty()) {
    const int cur = frontier.front();
    frontier.pop_front();
    for (int j = 0; j < n; ++j)
      if (adj(cur, j) == 1 && !seen[static_cast<std::size_t>(j)]) {
        seen[static_cast<std::size_t>(j)] = 1;
        ++reached;
        frontier.push_back(j);
      }
  }
  if (reached != n) {
    for (int k = 0; k < n; ++k)
      if (!seen[static_cast<std::size_t>(k)])
        throw std::invalid_argument("build_grid: free cell " +
                                    cell_str(model.free_cells[static_cast<std::size_t>(k)]) +
                                    " is unreachable; the grid is disconnected");
  }
  if (!pattern_primitive(adj))
    throw std::invalid_argument("build_grid: the grid pattern is not primitive");

  model.v = Eigen::VectorXd::Constant(n, (1.0 - terminal_total) / static_cast<double>(n - t));
  for (const Cell& c : grid.terminals) model.v[model.cell_index(c.row, c.col)] = grid.terminal_mass;

  model.safe.G = Eigen::MatrixXd::Identity(n, n);
  model.safe.g = Eigen::VectorXd::Constant(n, grid.density_cap);
  model.safe.on_simplex = true;

  for (int k = 0; k < n; ++k)
    if (model.v[k] >= grid.density_cap)
      throw std::invalid_argument(
          "build_grid: the target density " + std::to_string(model.v[k]) + " at cell " +
          cell_str(model.free_cells[static_cast<std::size_t>(k)]) +
          " is not strictly below the cap " + std::to_string(grid.density_cap));
  return model;
}

EnsembleRun simulate_ensemble(const MarkovChain& chain, const Eigen::VectorXd& x0, int agents,
                              int horizon, std::uint64_t seed, Exec exec) {
  const int n = chain.size();
  validate_distribution(x0);
  if (x0.size() != n)
    throw std::invalid_argument("simulate_ensemble: x0 dimension does not match the chain");
  if (agents <= 0) throw std::invalid_argument("simulate_ensemble: need at least one agent");
  if (horizon < 0) throw std::invalid_argument("simulate_ensemble: horizon must be nonnegative");

  Eigen::VectorXd cum0(n);
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    acc += x0[i];
    cum0[i] = acc;
  }
  Eigen::MatrixXd cum = chain.matrix();
  for (int j = 0; j < n; ++j)
    for (int i = 1; i < n; ++i) cum(i, j) += cum(i - 1, j);

  const int shards = (agents + kShardSize - 1) / kShardSize;
  std::vector<Eigen::MatrixXi> shard_hist(static_cast<std::size_t>(shards));

  detail::parallel_for(shards, exec, [&](int s) {
    const int lo = s * kShardSize;
    const int hi = std::min(agents, lo + kShardSize);
    Eigen::MatrixXi counts = Eigen::MatrixXi::Zero(horizon + 1, n);
    std::mt19937_64 rng(shard_seed(seed, s));
    for (int agent = lo; agent < hi; ++agent) {
      int state = sample_from_cumulative(cum0, uniform01(rng));
      counts(0, state) += 1;
      for (int k = 1; k <= horizon; ++k) {
        state = sample_from_cumulative(cum.col(state), uniform01(rng));
        counts(k, state) += 1;
      }
    }
    shard_hist[static_cast<std::size_t>(s)] = std::move(counts);
  });

  EnsembleRun run;
  run.agent_count = agents;
  run.horizon = horizon;
  run.seed = seed;
  run.histograms.assign(static_cast<std::size_t>(horizon + 1), Eigen::VectorXi::Zero(n));
  for (const Eigen::MatrixXi& counts : shard_hist)
    for (int k = 0; k <= horizon; ++k)
      run.histograms[static_cast<std::size_t>(k)] += counts.row(k).transpose();
  return run;
}

ScenarioReport scenario_report(const GridModel& model, const MarkovChain& chain,
                               const InvariantSetResult& result, const Eigen::VectorXd& x0) {
  if (result.status != InvariantStatus::Converged)
    throw std::invalid_argument("scenario_report: requires a Converged invariant set");
  validate_distribution(x0);
  if (x0.size() != chain.size() || chain.size() != model.v.size())
    throw std::invalid_argument("scenario_report: dimension mismatch");

  ScenarioReport report;
  report.member = membership(result, x0);

  const int last = std::max(1000, result.t_star);
  Eigen::VectorXd x = x0;
  report.horizon_max_density = 0.0;
  for (int k = 0; k <= last; ++k) {
    const double dens = x.maxCoeff();
    if (k <= result.t_star) {
      report.trajectory.push_back(x);
      report.max_density.push_back(dens);
    }
    if (k <= 1000) report.horizon_max_density = std::max(report.horizon_max_density, dens);
    if (k == 100 || k == 1000)
      report.checks.push_back({k, dens, dens <= model.grid.density_cap + 1e-8});
    if (k < last) x = chain.matrix() * x;
  }
  report.all_steps_within_cap = report.horizon_max_density <= model.grid.density_cap + 1e-8;
  return report;
}

}  // namespace mcinv

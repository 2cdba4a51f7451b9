#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "mcinv/exec.hpp"
#include "mcinv/invariant.hpp"
#include "mcinv/markov.hpp"
#include "mcinv/polytope.hpp"

namespace mcinv {

struct Cell {
  int row = 0;
  int col = 0;
  friend bool operator==(const Cell& a, const Cell& b) {
    return a.row == b.row && a.col == b.col;
  }
};

struct GridWorld {
  int width = 0;
  int height = 0;
  std::vector<Cell> obstacles;
  std::vector<Cell> terminals;
  double density_cap = 0.3;
  double terminal_mass = 0.225;

  // 7x7 grid with five obstacles in a plus pattern and terminals at the four
  // corners: 44 free cells, so the defaults put 0.225 on each terminal and
  // 0.0025 on each of the other 40 cells.
  static GridWorld canonical();
};

struct GridModel {
  GridWorld grid;
  std::vector<Cell> free_cells;  // state order: row-major over free cells
  Eigen::MatrixXi cell_index;    // height x width; -1 on obstacles
  Graph graph;                   // 4-neighbors plus self-loops
  Polyhedron safe;               // per-cell density caps, on the simplex
  Eigen::VectorXd v;             // terminal_mass at terminals, uniform rest
};

// Validates geometry, builds adjacency/caps/target, and checks the standing
// hypotheses (pattern primitivity, connectivity, strict interiority v < cap),
// throwing invalid_argument rather than degrading silently.
GridModel build_grid(const GridWorld& grid);

struct EnsembleRun {
  int agent_count = 0;
  int horizon = 0;
  std::uint64_t seed = 0;
  std::vector<Eigen::VectorXi> histograms;  // horizon + 1 vectors, each sums to agent_count
};

// Samples agent trajectories from the chain columns. Agents are sharded in
// blocks of 4096 with per-shard mt19937_64 streams derived from the seed by a
// splitmix64 step, and shard histograms merge as integer sums, so the output
// is identical for every worker count and for the serial policy.
EnsembleRun simulate_ensemble(const MarkovChain& chain, const Eigen::VectorXd& x0, int agents,
                              int horizon, std::uint64_t seed, Exec exec = Exec::Parallel);

struct LongHorizonCheck {
  int k = 0;
  double max_density = 0.0;
  bool within_cap = false;
};

struct ScenarioReport {
  bool member = false;
  std::vector<Eigen::VectorXd> trajectory;  // x_0 .. x_{t_star}
  std::vector<double> max_density;          // per trajectory step
  std::vector<LongHorizonCheck> checks;     // k = 100 and k = 1000
  double horizon_max_density = 0.0;         // max cell density over all k <= 1000
  bool all_steps_within_cap = false;        // caps hold at every k <= 1000
};

// Membership verdict plus the constraint trace the verdict promises: cap
// values over the first t_star steps and long-horizon checks at k = 100 and
// k = 1000.
ScenarioReport scenario_report(const GridModel& model, const MarkovChain& chain,
                               const InvariantSetResult& result, const Eigen::VectorXd& x0);

}  // namespace mcinv

// Timing harness for the two data-parallel kernels: the per-row containment
// LP sweep and the sharded ensemble simulation. Each kernel runs on the
// serial path and the OpenMP path and the outputs are compared bitwise.
#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <random>

#include <Eigen/Dense>

#include "mcinv/exec.hpp"
#include "mcinv/gridworld.hpp"
#include "mcinv/markov.hpp"
#include "mcinv/polytope.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

mcinv::MarkovChain random_chain(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.05, 1.0);
  Eigen::MatrixXd m(n, n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) m(i, j) = u(rng);
    m.col(j) /= m.col(j).sum();
  }
  return mcinv::MarkovChain::validate(m);
}

void bench_containment(int n, int depth) {
  const mcinv::MarkovChain chain = random_chain(n, 7);
  const double cap = 2.0 / static_cast<double>(n);
  mcinv::Polyhedron safe;
  safe.G = Eigen::MatrixXd::Identity(n, n);
  safe.g = Eigen::VectorXd::Constant(n, cap);
  safe.on_simplex = true;

  // Stack preimage blocks the way the invariant-set loop does, then time the
  // stopping-test containment query against the next preimage.
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(n, n);
  mcinv::Polyhedron stacked = safe;
  for (int t = 0; t < depth; ++t) {
    power = chain.matrix() * power;
    const mcinv::Polyhedron block = mcinv::preimage(safe, power);
    const Eigen::Index rows = stacked.G.rows();
    stacked.G.conservativeResize(rows + n, n);
    stacked.G.bottomRows(n) = block.G;
    stacked.g.conservativeResize(rows + n);
    stacked.g.tail(n) = block.g;
  }
  const mcinv::Polyhedron outer = mcinv::preimage(safe, chain.matrix() * power);

  const auto t0 = Clock::now();
  const mcinv::ContainmentResult serial =
      mcinv::contains_on_simplex(stacked, outer, mcinv::kLpFeasTol, mcinv::Exec::Serial);
  const double serial_s = seconds_since(t0);

  const auto t1 = Clock::now();
  const mcinv::ContainmentResult parallel =
      mcinv::contains_on_simplex(stacked, outer, mcinv::kLpFeasTol, mcinv::Exec::Parallel);
  const double parallel_s = seconds_since(t1);

  const bool same_verdict = serial.verdict == parallel.verdict;
  bool same_cert = serial.certificate.Y.rows() == parallel.certificate.Y.rows() &&
                   serial.certificate.Y.cols() == parallel.certificate.Y.cols();
  if (same_cert && serial.certificate.Y.size() > 0)
    same_cert = serial.certificate.Y == parallel.certificate.Y;
  std::printf("containment sweep  n=%d rows=%d  serial %.3fs  openmp %.3fs  speedup %.2fx  identical %s\n",
              n, static_cast<int>(stacked.G.rows()), serial_s, parallel_s,
              parallel_s > 0 ? serial_s / parallel_s : 0.0,
              same_verdict && same_cert ? "yes" : "NO");
}

void bench_ensemble(int n, int agents, int horizon) {
  const mcinv::MarkovChain chain = random_chain(n, 11);
  const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));

  const auto t0 = Clock::now();
  const mcinv::EnsembleRun serial =
      mcinv::simulate_ensemble(chain, x0, agents, horizon, 42, mcinv::Exec::Serial);
  const double serial_s = seconds_since(t0);

  const auto t1 = Clock::now();
  const mcinv::EnsembleRun parallel =
      mcinv::simulate_ensemble(chain, x0, agents, horizon, 42, mcinv::Exec::Parallel);
  const double parallel_s = seconds_since(t1);

  bool identical = serial.histograms.size() == parallel.histograms.size();
  for (std::size_t k = 0; identical && k < serial.histograms.size(); ++k)
    identical = serial.histograms[k] == parallel.histograms[k];
  std::printf("ensemble sim       n=%d agents=%d steps=%d  serial %.3fs  openmp %.3fs  speedup %.2fx  identical %s\n",
              n, agents, horizon, serial_s, parallel_s,
              parallel_s > 0 ? serial_s / parallel_s : 0.0, identical ? "yes" : "NO");
}

}  // namespace

int main(int argc, char** argv) {
  int n = 48;
  int depth = 6;
  int agents = 2000000;
  int horizon = 50;
  CLI::App app{"serial vs OpenMP benchmark for the containment sweep and the ensemble simulator"};
  app.add_option("--n", n, "state count");
  app.add_option("--depth", depth, "stacked preimage blocks for the containment query");
  app.add_option("--agents", agents, "ensemble agent count");
  app.add_option("--horizon", horizon, "ensemble steps");
  CLI11_PARSE(app, argc, argv);

  std::printf("threads available: %d\n", mcinv::max_threads());
  bench_containment(n, depth);
  bench_ensemble(n, agents, horizon);
  return 0;
}

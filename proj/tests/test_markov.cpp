#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <random>

#include "mcinv/markov.hpp"

using namespace mcinv;

namespace {

Eigen::MatrixXd three_state_matrix() {
  Eigen::MatrixXd m(3, 3);
  m << 0.8, 0.2, 0.0,  //
      0.2, 0.2, 0.9,   //
      0.0, 0.6, 0.1;
  return m;
}

MarkovChain three_state() { return MarkovChain::validate(three_state_matrix()); }

// Directed cycle with self-loops: ergodic but not reversible.
MarkovChain directed_cycle() {
  Eigen::MatrixXd m(3, 3);
  m << 0.5, 0.0, 0.5,  //
      0.5, 0.5, 0.0,   //
      0.0, 0.5, 0.5;
  return MarkovChain::validate(m);
}

}  // namespace

TEST_CASE("validate accepts column-stochastic matrices and rejects the rest") {
  CHECK(three_state().size() == 3);
  CHECK(three_state().matrix().isApprox(three_state_matrix()));

  Eigen::MatrixXd bad = three_state_matrix();
  bad(0, 0) = -0.1;
  bad(1, 0) = 0.9;  // columns still sum to one
  CHECK_THROWS_AS(MarkovChain::validate(bad), NegativeEntryError);

  bad = three_state_matrix();
  bad(0, 0) = 0.9;  // column 0 now sums to 1.1
  CHECK_THROWS_AS(MarkovChain::validate(bad), NotStochasticError);

  CHECK_THROWS_AS(MarkovChain::validate(Eigen::MatrixXd::Zero(2, 3)), std::invalid_argument);
  CHECK_THROWS_AS(MarkovChain::validate(Eigen::MatrixXd(0, 0)), std::invalid_argument);

  // Row-stochastic but not column-stochastic input must not slip through.
  Eigen::MatrixXd rowwise(2, 2);
  rowwise << 0.9, 0.1, 0.3, 0.7;
  CHECK_THROWS_AS(MarkovChain::validate(rowwise), NotStochasticError);

  SUBCASE("the tolerance is honored in both directions") {
    Eigen::MatrixXd near = three_state_matrix();
    near(0, 0) += 5e-11;
    CHECK_NOTHROW(MarkovChain::validate(near));
    near(0, 0) += 1e-9;
    CHECK_THROWS_AS(MarkovChain::validate(near), NotStochasticError);
  }
}

TEST_CASE("graph helpers expose structure") {
  const Graph k3 = Graph::complete(3);
  CHECK(k3.size() == 3);
  CHECK(k3.symmetric());
  CHECK(k3.has_all_self_loops());
  CHECK_THROWS_AS(Graph::complete(0), std::invalid_argument);

  Eigen::MatrixXi a(2, 2);
  a << 1, 1, 0, 1;
  const Graph asym = Graph::from_adjacency(a);
  CHECK_FALSE(asym.symmetric());
  CHECK(asym.has_all_self_loops());

  a << 1, 0, 0, 0;
  CHECK_FALSE(Graph::from_adjacency(a).has_all_self_loops());

  a << 1, 2, 0, 1;
  CHECK_THROWS_AS(Graph::from_adjacency(a), std::invalid_argument);
  CHECK_THROWS_AS(Graph::from_adjacency(Eigen::MatrixXi::Ones(2, 3)), std::invalid_argument);
}

TEST_CASE("pattern_primitive separates mixing patterns from periodic ones") {
  CHECK(pattern_primitive(Eigen::MatrixXi::Ones(3, 3)));
  CHECK(pattern_primitive(Eigen::MatrixXi::Ones(1, 1)));
  CHECK_FALSE(pattern_primitive(Eigen::MatrixXi::Identity(3, 3)));  // reducible

  Eigen::MatrixXi swap(2, 2);
  swap << 0, 1, 1, 0;
  CHECK_FALSE(pattern_primitive(swap));  // period two

  Eigen::MatrixXi cycle(3, 3);
  cycle << 0, 0, 1, 1, 0, 0, 0, 1, 0;
  CHECK_FALSE(pattern_primitive(cycle));  // period three
  cycle(0, 0) = 1;  // one self-loop breaks the period
  CHECK(pattern_primitive(cycle));

  CHECK_FALSE(pattern_primitive(Eigen::MatrixXi(0, 0)));
}

TEST_CASE("respects_graph reads edges in the transition direction") {
  const MarkovChain chain = three_state();
  CHECK(respects_graph(chain, Graph::complete(3)));

  // M(1, 2) = 0.9 moves mass from state 2 to state 1, so it needs edge 2->1.
  Eigen::MatrixXi a = Eigen::MatrixXi::Ones(3, 3);
  a(2, 1) = 0;
  CHECK_FALSE(respects_graph(chain, Graph::from_adjacency(a)));

  // Removing an edge the chain never uses changes nothing: M(0, 2) = 0.
  a = Eigen::MatrixXi::Ones(3, 3);
  a(2, 0) = 0;
  CHECK(respects_graph(chain, Graph::from_adjacency(a)));

  CHECK_THROWS_AS(respects_graph(chain, Graph::complete(2)), std::invalid_argument);
}

TEST_CASE("is_ergodic matches the pattern test on the support") {
  CHECK(is_ergodic(three_state()));
  CHECK(is_ergodic(directed_cycle()));
  CHECK_FALSE(is_ergodic(MarkovChain::validate(Eigen::MatrixXd::Identity(2, 2))));

  Eigen::MatrixXd swap(2, 2);
  swap << 0, 1, 1, 0;
  const MarkovChain periodic = MarkovChain::validate(swap);
  CHECK_FALSE(is_ergodic(periodic));
  CHECK(is_ergodic(lazy(periodic)));
}

TEST_CASE("stationary solves the three-state chain exactly") {
  const StationaryInfo info = stationary(three_state());
  CHECK(std::abs(info.v[0] - 0.375) <= 1e-9);
  CHECK(std::abs(info.v[1] - 0.375) <= 1e-9);
  CHECK(std::abs(info.v[2] - 0.25) <= 1e-9);
  CHECK(std::abs(info.rho - 0.7) <= 1e-9);
  CHECK((three_state().matrix() * info.v - info.v).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(info.v.sum() == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("stationary handles rank-one and two-state chains") {
  const MarkovChain flat = MarkovChain::validate(Eigen::MatrixXd::Constant(3, 3, 1.0 / 3.0));
  const StationaryInfo u = stationary(flat);
  CHECK(u.v.isApprox(Eigen::VectorXd::Constant(3, 1.0 / 3.0), 1e-12));
  CHECK(u.rho <= 1e-12);

  Eigen::MatrixXd two(2, 2);
  two << 0.9, 0.3, 0.1, 0.7;
  const StationaryInfo t = stationary(MarkovChain::validate(two));
  CHECK(t.v[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(t.v[1] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(t.rho == doctest::Approx(0.6).epsilon(1e-10));

  CHECK_THROWS_AS(stationary(MarkovChain::validate(Eigen::MatrixXd::Identity(2, 2))),
                  NotErgodicError);
}

TEST_CASE("mixing_rho deflates the stationary direction only") {
  const StationaryInfo info = stationary(three_state());
  CHECK(mixing_rho(three_state().matrix(), info.v) == doctest::Approx(0.7).epsilon(1e-9));
  // Any unit-sum deflation acts as the identity on ker(1') and so keeps the
  // non-unit spectrum; a vector that does not sum to 1 leaves rho(M) = 1.
  CHECK(mixing_rho(three_state().matrix(), Eigen::Vector3d(1.0, 0.0, 0.0)) ==
        doctest::Approx(0.7).epsilon(1e-9));
  CHECK(mixing_rho(three_state().matrix(), Eigen::Vector3d::Zero()) ==
        doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS_AS(mixing_rho(three_state().matrix(), Eigen::Vector2d(0.5, 0.5)),
                  std::invalid_argument);
}

TEST_CASE("is_reversible checks detailed balance") {
  const StationaryInfo info = stationary(three_state());
  CHECK(is_reversible(three_state(), info.v));

  const MarkovChain cyc = directed_cycle();
  const StationaryInfo cinfo = stationary(cyc);
  CHECK(cinfo.v.isApprox(Eigen::VectorXd::Constant(3, 1.0 / 3.0), 1e-9));
  CHECK_FALSE(is_reversible(cyc, cinfo.v));

  // Every ergodic two-state chain is reversible.
  Eigen::MatrixXd two(2, 2);
  two << 0.9, 0.3, 0.1, 0.7;
  const MarkovChain tc = MarkovChain::validate(two);
  CHECK(is_reversible(tc, stationary(tc).v));

  CHECK_THROWS_AS(is_reversible(tc, Eigen::Vector3d(0.5, 0.25, 0.25)), std::invalid_argument);
}

TEST_CASE("metropolis_hastings reproduces closed forms") {
  SUBCASE("uniform target on the complete graph gives the flat chain") {
    const MarkovChain mh =
        metropolis_hastings(Graph::complete(3), Eigen::VectorXd::Constant(3, 1.0 / 3.0));
    CHECK(mh.matrix().isApprox(Eigen::MatrixXd::Constant(3, 3, 1.0 / 3.0), 1e-12));
    CHECK(mixing_rho(mh.matrix(), Eigen::VectorXd::Constant(3, 1.0 / 3.0)) <= 1e-12);
  }

  SUBCASE("a single looped state is the identity") {
    const MarkovChain mh =
        metropolis_hastings(Graph::complete(1), Eigen::VectorXd::Constant(1, 1.0));
    CHECK(mh.matrix()(0, 0) == doctest::Approx(1.0));
  }

  SUBCASE("two states with a 2:1 target") {
    const MarkovChain mh = metropolis_hastings(Graph::complete(2),
                                               Eigen::Vector2d(2.0 / 3.0, 1.0 / 3.0));
    Eigen::MatrixXd expected(2, 2);
    expected << 0.75, 0.5, 0.25, 0.5;
    CHECK(mh.matrix().isApprox(expected, 1e-12));
  }

  SUBCASE("structural invariants hold for a skewed target") {
    const Graph k3 = Graph::complete(3);
    const Eigen::Vector3d v(0.5, 0.3, 0.2);
    const MarkovChain mh = metropolis_hastings(k3, v);
    CHECK(respects_graph(mh, k3));
    CHECK((mh.matrix() * v - v).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(is_reversible(mh, v));
    CHECK(is_ergodic(mh));
  }

  SUBCASE("invalid inputs are rejected") {
    Eigen::MatrixXi a(2, 2);
    a << 1, 1, 0, 1;
    CHECK_THROWS_AS(metropolis_hastings(Graph::from_adjacency(a), Eigen::Vector2d(0.5, 0.5)),
                    std::invalid_argument);
    a << 0, 1, 1, 0;
    CHECK_THROWS_AS(metropolis_hastings(Graph::from_adjacency(a), Eigen::Vector2d(0.5, 0.5)),
                    std::invalid_argument);
    CHECK_THROWS_AS(metropolis_hastings(Graph::complete(2), Eigen::Vector2d(1.0, 0.0)),
                    std::invalid_argument);
    CHECK_THROWS_AS(metropolis_hastings(Graph::complete(2), Eigen::Vector2d(0.5, 0.4)),
                    std::invalid_argument);
    CHECK_THROWS_AS(metropolis_hastings(Graph::complete(2), Eigen::Vector3d(0.5, 0.3, 0.2)),
                    std::invalid_argument);
  }
}

TEST_CASE("propagate multiplies step by step") {
  const MarkovChain chain = three_state();
  const Eigen::Vector3d x0(1.0, 0.0, 0.0);

  CHECK(propagate(chain, x0, 0).isApprox(x0));
  CHECK(propagate(chain, x0, 1).isApprox(chain.matrix().col(0)));

  const Eigen::VectorXd five = propagate(chain, x0, 5);
  Eigen::MatrixXd power = Eigen::MatrixXd::Identity(3, 3);
  for (int k = 0; k < 5; ++k) power = chain.matrix() * power;
  CHECK(five.isApprox(power * Eigen::VectorXd(x0), 1e-14));
  CHECK(five.sum() == doctest::Approx(1.0).epsilon(1e-12));

  const StationaryInfo info = stationary(chain);
  CHECK(propagate(chain, info.v, 10).isApprox(info.v, 1e-12));

  CHECK_THROWS_AS(propagate(chain, x0, -1), std::invalid_argument);
  CHECK_THROWS_AS(propagate(chain, Eigen::Vector2d(0.5, 0.5), 1), std::invalid_argument);
  CHECK_THROWS_AS(propagate(chain, Eigen::Vector3d(0.5, 0.5, 0.5), 1), std::invalid_argument);
}

TEST_CASE("distance to stationarity decays at the mixing rate") {
  const MarkovChain chain = three_state();
  const StationaryInfo info = stationary(chain);
  const Eigen::Vector3d x0(1.0, 0.0, 0.0);

  const double d10 = (propagate(chain, x0, 10) - info.v).lpNorm<1>();
  const double d40 = (propagate(chain, x0, 40) - info.v).lpNorm<1>();
  REQUIRE(d10 > 0.0);
  REQUIRE(d40 > 0.0);
  const double slope = (std::log(d40) - std::log(d10)) / 30.0;
  CHECK(slope <= std::log(info.rho) + 0.05);
}

TEST_CASE("powers of the deflated matrix track powers of the chain") {
  const MarkovChain chain = three_state();
  const StationaryInfo info = stationary(chain);
  const Eigen::MatrixXd rank_one = info.v * Eigen::RowVector3d::Ones();
  const Eigen::MatrixXd deflated = chain.matrix() - rank_one;

  Eigen::MatrixXd chain_power = Eigen::MatrixXd::Identity(3, 3);
  Eigen::MatrixXd defl_power = Eigen::MatrixXd::Identity(3, 3);
  for (int k = 1; k <= 50; ++k) {
    chain_power = chain.matrix() * chain_power;
    defl_power = deflated * defl_power;
    CHECK((chain_power - rank_one - defl_power).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("lazy halves the dynamics toward the identity") {
  const MarkovChain chain = three_state();
  const MarkovChain half = lazy(chain);
  CHECK(half.matrix().isApprox(0.5 * (chain.matrix() + Eigen::MatrixXd::Identity(3, 3))));

  // Eigenvalues shift as (1 + mu) / 2: the mixing factor becomes 0.85.
  const StationaryInfo info = stationary(half);
  CHECK(info.v.isApprox(stationary(chain).v, 1e-9));
  CHECK(info.rho == doctest::Approx(0.85).epsilon(1e-9));
}

TEST_CASE("validate_distribution enforces the simplex within tolerance") {
  CHECK_NOTHROW(validate_distribution(Eigen::Vector3d(0.375, 0.375, 0.25)));
  CHECK_NOTHROW(validate_distribution(Eigen::Vector2d(1.0 + 5e-10, -5e-10)));
  CHECK_THROWS_AS(validate_distribution(Eigen::Vector2d(0.5, 0.4)), std::invalid_argument);
  CHECK_THROWS_AS(validate_distribution(Eigen::Vector2d(1.1, -0.1)), std::invalid_argument);
  CHECK_THROWS_AS(validate_distribution(Eigen::VectorXd()), std::invalid_argument);
  Eigen::VectorXd nan(2);
  nan << 0.5, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(validate_distribution(nan), std::invalid_argument);
}

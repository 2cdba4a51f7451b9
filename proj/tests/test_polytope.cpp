#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include <limits>
#include <random>
#include <vector>

#include "mcinv/polytope.hpp"

using namespace mcinv;

namespace {

// Three-state chain used across the suite; columns sum to one.
Eigen::MatrixXd three_state_matrix() {
  Eigen::MatrixXd m(3, 3);
  m << 0.8, 0.2, 0.0,  //
      0.2, 0.2, 0.9,   //
      0.0, 0.6, 0.1;
  return m;
}

// Per-coordinate caps 0.6 / 0.5 / 0.5 read on the simplex.
Polyhedron three_state_box() {
  Polyhedron p;
  p.G = Eigen::MatrixXd::Identity(3, 3);
  p.g = Eigen::Vector3d(0.6, 0.5, 0.5);
  p.on_simplex = true;
  return p;
}

Eigen::VectorXd random_distribution(std::mt19937_64& rng, int n) {
  std::exponential_distribution<double> e(1.0);
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x[i] = e(rng);
  return x / x.sum();
}

Polyhedron stack_rows(const Polyhedron& a, const Polyhedron& b) {
  Polyhedron out;
  out.G.resize(a.num_rows() + b.num_rows(), a.dim());
  out.G << a.G, b.G;
  out.g.resize(a.num_rows() + b.num_rows());
  out.g << a.g, b.g;
  out.on_simplex = a.on_simplex;
  return out;
}

}  // namespace

TEST_CASE("contains respects the simplex reading") {
  const Polyhedron box = three_state_box();
  CHECK(box.contains(Eigen::Vector3d(0.375, 0.375, 0.25)));
  CHECK(box.contains(Eigen::Vector3d(0.6, 0.2, 0.2)));       // boundary of the cap
  CHECK_FALSE(box.contains(Eigen::Vector3d(0.7, 0.2, 0.1)));  // cap exceeded
  CHECK_FALSE(box.contains(Eigen::Vector3d(0.3, 0.3, 0.3)));  // mass 0.9, not a distribution
  CHECK_FALSE(box.contains(Eigen::Vector3d(0.6, 0.5, -0.1)));

  Polyhedron plain = box;
  plain.on_simplex = false;
  CHECK(plain.contains(Eigen::Vector3d(0.3, 0.3, 0.3)));  // only G x <= g applies
  CHECK_THROWS_AS(box.contains(Eigen::Vector2d(0.5, 0.5)), std::invalid_argument);
}

TEST_CASE("validate_polyhedron rejects malformed systems") {
  Polyhedron p = three_state_box();
  CHECK_NOTHROW(validate_polyhedron(p));
  p.g.resize(2);
  CHECK_THROWS_AS(validate_polyhedron(p), std::invalid_argument);
  p = three_state_box();
  p.G(0, 0) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(validate_polyhedron(p), std::invalid_argument);
}

TEST_CASE("preimage composes the constraint matrix with the map") {
  const Polyhedron box = three_state_box();
  const Eigen::MatrixXd m = three_state_matrix();

  const Polyhedron pre = preimage(box, m);
  CHECK(pre.G.isApprox(box.G * m));
  CHECK(pre.g.isApprox(box.g));
  CHECK_FALSE(pre.on_simplex);  // the caller reattaches the simplex reading

  SUBCASE("identity map leaves the system unchanged") {
    const Polyhedron same = preimage(box, Eigen::MatrixXd::Identity(3, 3));
    CHECK(same.G.isApprox(box.G));
    CHECK(same.g.isApprox(box.g));
  }

  SUBCASE("membership transports through the map") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 1000; ++trial) {
      const Eigen::VectorXd x = random_distribution(rng, 3);
      const Eigen::VectorXd mapped = m * x;
      bool in_pre = true;
      for (int i = 0; i < pre.num_rows(); ++i)
        in_pre = in_pre && pre.G.row(i).dot(x) <= pre.g[i] + 1e-12;
      bool in_box = true;
      for (int i = 0; i < box.num_rows(); ++i)
        in_box = in_box && box.G.row(i).dot(mapped) <= box.g[i] + 1e-12;
      CHECK(in_pre == in_box);
    }
  }

  SUBCASE("successive preimages compose like the matrix product") {
    const Polyhedron twice = preimage(pre, m);
    const Polyhedron direct = preimage(box, Eigen::MatrixXd(m * m));
    CHECK(twice.G.isApprox(direct.G, 1e-12));
    CHECK(twice.g.isApprox(direct.g));
  }

  Eigen::MatrixXd wrong(2, 3);
  CHECK_THROWS_AS(preimage(box, wrong), std::invalid_argument);
}

TEST_CASE("normalize_conical rewrites without changing the simplex subset") {
  const Polyhedron box = three_state_box();
  const Polyhedron conical = normalize_conical(box);
  CHECK(conical.g.isZero(0.0));
  CHECK(conical.on_simplex);
  CHECK(conical.G.isApprox(box.G - box.g * Eigen::RowVector3d::Ones()));

  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::VectorXd x = random_distribution(rng, 3);
    CHECK(box.contains(x) == conical.contains(x));
  }

  const Polyhedron again = normalize_conical(conical);
  CHECK(again.G.isApprox(conical.G));
  CHECK(again.g.isZero(0.0));

  Polyhedron plain = box;
  plain.on_simplex = false;
  CHECK_THROWS_AS(normalize_conical(plain), std::invalid_argument);
}

TEST_CASE("nonempty_on_simplex finds witnesses or proves emptiness") {
  const SimplexPoint inside = nonempty_on_simplex(three_state_box());
  REQUIRE(inside.verdict == Verdict::Holds);
  CHECK(three_state_box().contains(inside.witness, 1e-7));

  Polyhedron whole;
  whole.G.resize(0, 3);
  whole.g.resize(0);
  whole.on_simplex = true;
  CHECK(nonempty_on_simplex(whole).verdict == Verdict::Holds);

  Polyhedron short_mass;  // total mass capped below one
  short_mass.G = Eigen::RowVector3d::Ones();
  short_mass.g = Eigen::VectorXd::Constant(1, 0.5);
  short_mass.on_simplex = true;
  CHECK(nonempty_on_simplex(short_mass).verdict == Verdict::Fails);

  Polyhedron clash;  // x0 >= 0.7 and x0 <= 0.2
  clash.G.resize(2, 3);
  clash.G << -1, 0, 0, 1, 0, 0;
  clash.g = Eigen::Vector2d(-0.7, 0.2);
  clash.on_simplex = true;
  CHECK(nonempty_on_simplex(clash).verdict == Verdict::Fails);
}

TEST_CASE("contains_on_simplex certifies nested boxes") {
  Polyhedron small = three_state_box();
  small.g = Eigen::Vector3d(0.4, 0.4, 0.4);
  Polyhedron mid = three_state_box();
  mid.g = Eigen::Vector3d(0.5, 0.5, 0.5);
  Polyhedron large = three_state_box();

  const ContainmentResult ab = contains_on_simplex(small, mid);
  const ContainmentResult bc = contains_on_simplex(mid, large);
  const ContainmentResult ac = contains_on_simplex(small, large);
  REQUIRE(ab.verdict == Verdict::Holds);
  REQUIRE(bc.verdict == Verdict::Holds);
  REQUIRE(ac.verdict == Verdict::Holds);
  CHECK(certificate_violation_on_simplex(ab.certificate, small, mid) <= kLpFeasTol);
  CHECK(certificate_violation_on_simplex(ac.certificate, small, large) <= kLpFeasTol);
  CHECK(ab.certificate.Y.minCoeff() >= 0.0);

  // Containment is not symmetric: the larger box sticks out.
  CHECK(contains_on_simplex(mid, small).verdict == Verdict::Fails);
  // Witness for the failure: feasible for mid, violates small's cap.
  CHECK(mid.contains(Eigen::Vector3d(0.5, 0.5, 0.0)));
  CHECK_FALSE(small.contains(Eigen::Vector3d(0.5, 0.5, 0.0)));
}

TEST_CASE("every simplex subset lies inside simplex tautologies") {
  const Polyhedron box = three_state_box();
  Polyhedron tautology;
  tautology.G.resize(2, 3);
  tautology.G << 0, 0, 0, 1, 1, 1;
  tautology.g = Eigen::Vector2d(0.0, 1.0);  // 0 <= 0 and total mass <= 1
  const ContainmentResult res = contains_on_simplex(box, tautology);
  REQUIRE(res.verdict == Verdict::Holds);
  CHECK(res.certificate.residual <= kLpFeasTol);
}

TEST_CASE("one-step caps hold only after stacking the first preimage") {
  const Polyhedron box = three_state_box();
  const Eigen::MatrixXd m = three_state_matrix();

  Polyhedron pre1 = preimage(box, m);
  // Mass shifted onto the last state overloads state 1 after one step:
  // x = (0.5, 0, 0.5) satisfies the caps but M x = (0.4, 0.55, 0.05).
  CHECK(contains_on_simplex(box, pre1).verdict == Verdict::Fails);
  const Eigen::Vector3d leak(0.5, 0.0, 0.5);
  CHECK(box.contains(leak));
  CHECK_FALSE(box.contains(Eigen::VectorXd(m * leak)));

  Polyhedron pre1_simplex = pre1;
  pre1_simplex.on_simplex = true;
  const Polyhedron stacked = stack_rows(box, pre1_simplex);
  const Polyhedron pre2 = preimage(box, Eigen::MatrixXd(m * m));
  const ContainmentResult stopped = contains_on_simplex(stacked, pre2);
  REQUIRE(stopped.verdict == Verdict::Holds);
  CHECK(certificate_violation_on_simplex(stopped.certificate, stacked, pre2) <= kLpFeasTol);
}

TEST_CASE("contains_on_simplex validates inputs") {
  const Polyhedron box = three_state_box();
  Polyhedron plain = box;
  plain.on_simplex = false;
  CHECK_THROWS_AS(contains_on_simplex(plain, box), std::invalid_argument);

  Polyhedron empty;  // mass capped below one: empty on the simplex
  empty.G = Eigen::RowVector3d::Ones();
  empty.g = Eigen::VectorXd::Constant(1, 0.5);
  empty.on_simplex = true;
  CHECK_THROWS_AS(contains_on_simplex(empty, box), std::invalid_argument);
}

TEST_CASE("row_implied_on_simplex decides single halfspaces with multipliers") {
  const Polyhedron box = three_state_box();

  SUBCASE("slack above the reachable maximum holds") {
    // max of x0 over the box is 0.6, so 0.65 is implied but 0.55 is not.
    const RowImplication yes = row_implied_on_simplex(box, Eigen::Vector3d(1, 0, 0), 0.65);
    REQUIRE(yes.verdict == Verdict::Holds);
    CHECK(yes.y.minCoeff() >= 0.0);
    const Eigen::VectorXd lhs = (box.G - box.g * Eigen::RowVector3d::Ones()).transpose() * yes.y;
    const Eigen::VectorXd target = Eigen::Vector3d(1, 0, 0) - Eigen::Vector3d::Constant(0.65);
    CHECK((lhs - target).minCoeff() >= -kLpFeasTol);

    CHECK(row_implied_on_simplex(box, Eigen::Vector3d(1, 0, 0), 0.55).verdict == Verdict::Fails);
  }

  SUBCASE("simplex arithmetic is available to the certificate") {
    // Total mass is exactly one on the simplex.
    CHECK(row_implied_on_simplex(box, Eigen::Vector3d(1, 1, 1), 1.0).verdict == Verdict::Holds);
    CHECK(row_implied_on_simplex(box, Eigen::Vector3d(1, 1, 1), 0.99).verdict == Verdict::Fails);
  }

  Polyhedron plain = box;
  plain.on_simplex = false;
  CHECK_THROWS_AS(row_implied_on_simplex(plain, Eigen::Vector3d(1, 0, 0), 1.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(row_implied_on_simplex(box, Eigen::Vector2d(1, 0), 1.0), std::invalid_argument);
}

TEST_CASE("row implication agrees with the full containment sweep") {
  const Polyhedron box = three_state_box();
  const Eigen::MatrixXd m = three_state_matrix();
  const Polyhedron pre1 = preimage(box, m);
  Polyhedron pre1_simplex = pre1;
  pre1_simplex.on_simplex = true;
  const Polyhedron stacked = stack_rows(box, pre1_simplex);
  const Polyhedron pre2 = preimage(box, Eigen::MatrixXd(m * m));

  const ContainmentResult full = contains_on_simplex(stacked, pre2);
  REQUIRE(full.verdict == Verdict::Holds);
  for (int i = 0; i < pre2.num_rows(); ++i) {
    const RowImplication one =
        row_implied_on_simplex(stacked, pre2.G.row(i).transpose(), pre2.g[i]);
    CHECK(one.verdict == Verdict::Holds);
  }
  // And the failing sweep fails row-by-row somewhere.
  int failing_rows = 0;
  for (int i = 0; i < pre1.num_rows(); ++i) {
    if (row_implied_on_simplex(box, pre1.G.row(i).transpose(), pre1.g[i]).verdict ==
        Verdict::Fails)
      ++failing_rows;
  }
  CHECK(failing_rows > 0);
}

namespace {

Polyhedron unit_box3(double lo, double hi) {
  Polyhedron p;
  p.G.resize(6, 3);
  p.G << Eigen::MatrixXd::Identity(3, 3), -Eigen::MatrixXd::Identity(3, 3);
  p.g.resize(6);
  p.g << hi, hi, hi, -lo, -lo, -lo;
  return p;
}

std::vector<Eigen::Vector3d> enumerate_vertices(const Polyhedron& p) {
  std::vector<Eigen::Vector3d> verts;
  const int m = p.num_rows();
  for (int a = 0; a < m; ++a)
    for (int b = a + 1; b < m; ++b)
      for (int c = b + 1; c < m; ++c) {
        Eigen::Matrix3d basis;
        basis.row(0) = p.G.row(a);
        basis.row(1) = p.G.row(b);
        basis.row(2) = p.G.row(c);
        const Eigen::FullPivLU<Eigen::Matrix3d> lu(basis);
        if (!lu.isInvertible()) continue;
        const Eigen::Vector3d x = lu.solve(Eigen::Vector3d(p.g[a], p.g[b], p.g[c]));
        if ((p.G * x - p.g).maxCoeff() <= 1e-7) verts.push_back(x);
      }
  return verts;
}

}  // namespace

TEST_CASE("contains_general matches hand-built boxes") {
  const Polyhedron small = unit_box3(0.0, 1.0);
  const Polyhedron large = unit_box3(-1.0, 2.0);

  const ContainmentResult ok = contains_general(small, large);
  REQUIRE(ok.verdict == Verdict::Holds);
  CHECK_FALSE(ok.certificate.vacuous);
  CHECK(certificate_violation_general(ok.certificate, small, large) <= kLpFeasTol);
  CHECK(contains_general(large, small).verdict == Verdict::Fails);

  SUBCASE("an empty inner set is vacuously contained") {
    Polyhedron empty;
    empty.G.resize(2, 3);
    empty.G << 1, 0, 0, -1, 0, 0;
    empty.g = Eigen::Vector2d(0.0, -1.0);  // x0 <= 0 and x0 >= 1
    const ContainmentResult vac = contains_general(empty, small);
    REQUIRE(vac.verdict == Verdict::Holds);
    CHECK(vac.certificate.vacuous);
  }

  SUBCASE("unbounded inner sets are rejected") {
    Polyhedron slab;
    slab.G = Eigen::MatrixXd::Zero(1, 3);
    slab.G(0, 0) = 1.0;
    slab.g = Eigen::VectorXd::Constant(1, 1.0);
    CHECK_THROWS_AS(contains_general(slab, large), std::invalid_argument);
  }
}

TEST_CASE("contains_general agrees with vertex enumeration on random pairs") {
  std::mt19937_64 rng(20240712);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> slack(0.3, 0.8);
  std::uniform_real_distribution<double> offset(-0.3, 1.2);

  int done = 0;
  int guard = 0;
  while (done < 50 && guard < 500) {
    ++guard;
    Polyhedron inner = unit_box3(0.0, 1.0);
    const Eigen::Vector3d center(0.5, 0.5, 0.5);
    // Two extra random cuts through the box, kept loose around the center.
    inner.G.conservativeResize(8, Eigen::NoChange);
    inner.g.conservativeResize(8);
    for (int r = 6; r < 8; ++r) {
      Eigen::Vector3d dir(unit(rng), unit(rng), unit(rng));
      if (dir.norm() < 1e-3) dir = Eigen::Vector3d(1, 0, 0);
      dir.normalize();
      inner.G.row(r) = dir.transpose();
      inner.g[r] = dir.dot(center) + slack(rng);
    }

    Polyhedron outer;
    outer.G.resize(5, 3);
    outer.g.resize(5);
    for (int r = 0; r < 5; ++r) {
      Eigen::Vector3d dir(unit(rng), unit(rng), unit(rng));
      if (dir.norm() < 1e-3) dir = Eigen::Vector3d(0, 1, 0);
      dir.normalize();
      outer.G.row(r) = dir.transpose();
      outer.g[r] = dir.dot(center) + offset(rng);
    }

    const std::vector<Eigen::Vector3d> verts = enumerate_vertices(inner);
    if (verts.empty()) continue;
    double margin = -std::numeric_limits<double>::infinity();
    for (const Eigen::Vector3d& vert : verts)
      margin = std::max(margin, (outer.G * vert - outer.g).maxCoeff());
    if (std::abs(margin) < 1e-6) continue;  // too close to call either way

    const ContainmentResult res = contains_general(inner, outer);
    if (margin < 0.0) {
      REQUIRE(res.verdict == Verdict::Holds);
      CHECK(certificate_violation_general(res.certificate, inner, outer) <= kLpFeasTol);
    } else {
      REQUIRE(res.verdict == Verdict::Fails);
    }
    ++done;
  }
  CHECK(done == 50);
}

TEST_CASE("certificates transport to sampled points") {
  // A valid certificate implies every sampled inner point satisfies the outer
  // system; this cross-checks the residual definition against raw membership.
  const Polyhedron box = three_state_box();
  const Eigen::MatrixXd m = three_state_matrix();
  Polyhedron pre1 = preimage(box, m);
  pre1.on_simplex = true;
  const Polyhedron stacked = stack_rows(box, pre1);
  const Polyhedron pre2 = preimage(box, Eigen::MatrixXd(m * m));
  const ContainmentResult res = contains_on_simplex(stacked, pre2);
  REQUIRE(res.verdict == Verdict::Holds);

  std::mt19937_64 rng(77);
  int inside = 0;
  for (int trial = 0; trial < 10000; ++trial) {
    const Eigen::VectorXd x = random_distribution(rng, 3);
    if (!stacked.contains(x)) continue;
    ++inside;
    CHECK((pre2.G * x - pre2.g).maxCoeff() <= 1e-9);
  }
  CHECK(inside > 100);  // the sample actually exercised the inner set
}

TEST_CASE("eliminate_redundant_rows_on_simplex removes implied rows only") {
  Polyhedron padded;
  padded.G.resize(5, 3);
  padded.g.resize(5);
  padded.G.row(0) << 1, 0, 0;  // x0 <= 0.7, implied by the tighter cap below
  padded.g[0] = 0.7;
  padded.G.row(1) << 1, 1, 1;  // mass <= 2, implied by the simplex
  padded.g[1] = 2.0;
  padded.G.bottomRows(3) = Eigen::MatrixXd::Identity(3, 3);
  padded.g.tail(3) = Eigen::Vector3d(0.6, 0.5, 0.5);
  padded.on_simplex = true;

  const Polyhedron reduced = eliminate_redundant_rows_on_simplex(padded);
  REQUIRE(reduced.num_rows() == 3);
  CHECK(reduced.G.isApprox(Eigen::MatrixXd::Identity(3, 3)));
  CHECK(reduced.g.isApprox(Eigen::Vector3d(0.6, 0.5, 0.5)));

  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 500; ++trial) {
    const Eigen::VectorXd x = random_distribution(rng, 3);
    CHECK(padded.contains(x) == reduced.contains(x));
  }

  const Polyhedron twice = eliminate_redundant_rows_on_simplex(reduced);
  CHECK(twice.num_rows() == reduced.num_rows());
}

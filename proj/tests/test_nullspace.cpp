#include <doctest.h>

#include <vector>

#include "lcqp/datasets.hpp"
#include "lcqp/nullspace.hpp"
#include "support.hpp"

using lcqp::LcqpInstance;
using lcqp::NullspaceBasis;
using lcqp::SparseMatrix;

namespace {

SparseMatrix row_matrix(int cols, const std::vector<double>& row) {
  SparseMatrix a;
  a.rows = 1;
  a.cols = cols;
  for (int j = 0; j < cols; ++j)
    if (row[j] != 0.0) a.add(0, j, row[j]);
  a.sort_entries();
  return a;
}

Eigen::MatrixXd basis_matrix(const NullspaceBasis& basis) {
  Eigen::MatrixXd b(basis.n, basis.dim);
  for (int col = 0; col < basis.dim; ++col)
    for (int row = 0; row < basis.n; ++row) b(row, col) = basis.entry(row, col);
  return b;
}

}  // namespace

TEST_CASE("kernel of a single coordinate row spans the other axes") {
  const auto basis = lcqp::compute_nullspace(row_matrix(3, {1.0, 0.0, 0.0}));
  REQUIRE(basis.dim == 2);
  for (int col = 0; col < 2; ++col) CHECK(std::abs(basis.entry(0, col)) <= 1e-10);
  // e2 and e3 are untouched, e1 is annihilated.
  CHECK(testsupport::linf_diff(basis.project({0.0, 1.0, 0.0}), {0.0, 1.0, 0.0}) <= 1e-12);
  CHECK(testsupport::linf(basis.project({1.0, 0.0, 0.0})) <= 1e-12);
}

TEST_CASE("square full-rank matrix has an empty kernel") {
  SparseMatrix a;
  a.rows = a.cols = 3;
  for (int i = 0; i < 3; ++i) a.add(i, i, 1.0);
  const auto basis = lcqp::compute_nullspace(a);
  CHECK(basis.dim == 0);
  CHECK(testsupport::linf(basis.project({1.0, 2.0, 3.0})) == 0.0);
}

TEST_CASE("no constraints gives the identity projector") {
  SparseMatrix a;
  a.rows = 0;
  a.cols = 4;
  const auto basis = lcqp::compute_nullspace(a);
  CHECK(basis.dim == 4);
  const std::vector<double> d = {1.0, -2.0, 3.0, -4.0};
  CHECK(testsupport::linf_diff(basis.project(d), d) <= 1e-12);
}

TEST_CASE("basis columns lie in the kernel of a random wide matrix") {
  const LcqpInstance inst = testsupport::random_instance(10, 4, 55);
  const auto basis = lcqp::compute_nullspace(inst.a);
  REQUIRE(basis.dim == 6);
  const Eigen::MatrixXd a = testsupport::dense(inst.a);
  const Eigen::MatrixXd b = basis_matrix(basis);
  CHECK((a * b).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK((b.transpose() * b - Eigen::MatrixXd::Identity(6, 6)).cwiseAbs().maxCoeff() <=
        1e-10);
}

TEST_CASE("projection onto the kernel of a sum row") {
  const auto basis = lcqp::compute_nullspace(row_matrix(2, {1.0, 1.0}));
  const auto p = basis.project({1.0, 0.0});
  CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("kernel vectors project to themselves") {
  const auto basis = lcqp::compute_nullspace(row_matrix(2, {1.0, 1.0}));
  const auto p = basis.project({1.0, -1.0});
  CHECK(testsupport::linf_diff(p, {1.0, -1.0}) <= 1e-12);
}

TEST_CASE("projector invariants hold on random probes") {
  const LcqpInstance inst = testsupport::random_instance(9, 3, 77);
  const auto basis = lcqp::compute_nullspace(inst.a);
  const Eigen::MatrixXd a = testsupport::dense(inst.a);
  // Independent closed form: P = I - A'(AA')^{-1}A.
  const Eigen::MatrixXd p_ref =
      Eigen::MatrixXd::Identity(9, 9) -
      a.transpose() * (a * a.transpose()).ldlt().solve(a);

  lcqp::Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> d(9);
    for (double& v : d) v = rng.normal();
    const auto pd = basis.project(d);
    const auto ppd = basis.project(pd);
    CHECK(testsupport::linf(inst.a.multiply(pd)) <= 1e-10);
    CHECK(testsupport::linf_diff(ppd, pd) <= 1e-10);
    CHECK(testsupport::l2(pd) <= testsupport::l2(d) + 1e-12);
    const Eigen::VectorXd ref = p_ref * testsupport::dense_vec(d);
    CHECK(testsupport::linf_diff(pd, testsupport::to_std(ref)) <= 1e-8);
  }
}

TEST_CASE("equal inputs produce byte-equal bases") {
  const LcqpInstance inst = testsupport::random_instance(8, 3, 99);
  const auto b1 = lcqp::compute_nullspace(inst.a);
  const auto b2 = lcqp::compute_nullspace(inst.a);
  CHECK(b1.cols == b2.cols);
}

TEST_CASE("rank-deficient rows are rejected") {
  SparseMatrix a;
  a.rows = 2;
  a.cols = 3;
  a.add(0, 0, 1.0);
  a.add(0, 1, 1.0);
  a.add(1, 0, 2.0);
  a.add(1, 1, 2.0);
  a.sort_entries();
  try {
    lcqp::compute_nullspace(a);
    FAIL("expected a rank-deficiency error");
  } catch (const lcqp::SolveError& e) {
    CHECK(e.code() == lcqp::SolveError::Code::rank_deficient);
  }
}

TEST_CASE("feasible start on a sum constraint") {
  LcqpInstance inst;
  inst.n = 2;
  inst.m = 1;
  inst.q.rows = inst.q.cols = 2;
  inst.q.symmetric = true;
  inst.a = row_matrix(2, {1.0, 1.0});
  inst.b = {1.0};
  inst.c = {0.0, 0.0};
  const auto x0 = lcqp::feasible_initial_point(inst);
  CHECK(x0[0] > 0.0);
  CHECK(x0[1] > 0.0);
  CHECK(std::abs(x0[0] + x0[1] - 1.0) <= 1e-8);
}

TEST_CASE("feasible starts hold across fifty random instances") {
  lcqp::GenConfig cfg;
  cfg.n = 8;
  cfg.m = 4;
  cfg.seed = 1300;
  for (int k = 0; k < 50; ++k) {
    const LcqpInstance inst = lcqp::gen_instance(cfg, k);
    CAPTURE(k);
    const auto x0 = lcqp::feasible_initial_point(inst);
    CHECK(testsupport::linf_diff(inst.a.multiply(x0), inst.b) <= 1e-8);
    for (double v : x0) CHECK(v > 0.0);
  }
}

TEST_CASE("infeasible constraints are reported") {
  LcqpInstance inst;
  inst.n = 2;
  inst.m = 2;
  inst.q.rows = inst.q.cols = 2;
  inst.q.symmetric = true;
  inst.a.rows = 2;
  inst.a.cols = 2;
  inst.a.add(0, 0, 1.0);
  inst.a.add(1, 1, 1.0);
  inst.b = {-1.0, 1.0};
  inst.c = {0.0, 0.0};
  CHECK_THROWS_AS(lcqp::feasible_initial_point(inst), lcqp::SolveError);
}

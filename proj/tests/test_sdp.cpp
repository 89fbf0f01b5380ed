#include "reachsos/sdp.hpp"

#include <cmath>
#include <random>

#include "doctest.h"

using namespace reachsos;

namespace {

// min -log det P over 2x2 symmetric P with chosen pinned entries.
SdpProblem pinned_problem(const std::vector<std::tuple<int, int, double>>& pins) {
  SdpProblem prob;
  prob.blocks.push_back({BlockKind::Psd, 2, "P"});
  for (const auto& [r, c, rhs] : pins) {
    LinearRow row;
    row.block_terms.push_back({0, r, c, 1.0});
    row.rhs = rhs;
    prob.rows.push_back(row);
  }
  prob.objective.logdet_block = 0;
  prob.objective.logdet_weight = 1.0;
  return prob;
}

SolverSettings tight_settings() {
  SolverSettings s;
  s.tol_feas = 1e-10;
  s.tol_gap = 1e-10;
  s.max_iterations = 200;
  return s;
}

// Random known-optimum determinant-maximization instance built by choosing a
// strictly feasible primal/dual pair satisfying the KKT conditions exactly.
struct Fixture {
  SdpProblem prob;
  Eigen::MatrixXd xstar;
  Eigen::VectorXd vstar;
  double objective;
};

Fixture make_fixture(int n, int m, int p, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> cd(-1.0, 1.0);
  Fixture fx;
  fx.prob.blocks.push_back({BlockKind::Psd, n, "X"});
  fx.prob.num_free = p;
  fx.prob.objective.logdet_block = 0;
  fx.prob.objective.logdet_weight = 1.0;

  Eigen::MatrixXd R(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) R(i, j) = cd(rng);
  fx.xstar = R * R.transpose() + 0.5 * Eigen::MatrixXd::Identity(n, n);
  fx.vstar = Eigen::VectorXd::NullaryExpr(p, [&](int) { return cd(rng); });
  Eigen::VectorXd ystar = Eigen::VectorXd::NullaryExpr(m, [&](int) { return cd(rng); });

  // Rows with random symmetric sparse coefficients.
  std::vector<Eigen::MatrixXd> A(m, Eigen::MatrixXd::Zero(n, n));
  for (int i = 0; i < m; ++i) {
    LinearRow row;
    for (int r = 0; r < n; ++r) {
      for (int c = r; c < n; ++c) {
        if (rng() % 3 != 0) continue;
        const double val = cd(rng);
        row.block_terms.push_back({0, r, c, val});
        const double half = r == c ? val : 0.5 * val;
        A[i](r, c) += half;
        if (r != c) A[i](c, r) += half;
      }
    }
    if (row.block_terms.empty()) {
      row.block_terms.push_back({0, 0, 0, 1.0});
      A[i](0, 0) += 1.0;
    }
    for (int k = 0; k < p; ++k) {
      const double val = cd(rng);
      row.free_terms.push_back({k, val});
    }
    fx.prob.rows.push_back(row);
  }
  // b = A(X*) + B v*.
  for (int i = 0; i < m; ++i) {
    double rhs = (A[i].array() * fx.xstar.array()).sum();
    for (const auto& f : fx.prob.rows[i].free_terms) rhs += f.value * fx.vstar[f.index];
    fx.prob.rows[i].rhs = rhs;
  }
  // C = A^T(y*) + X*^{-1}  (so S* = X*^{-1} > 0), c_free = B^T y*.
  Eigen::MatrixXd Cmat = fx.xstar.inverse();
  for (int i = 0; i < m; ++i) Cmat += ystar[i] * A[i];
  for (int r = 0; r < n; ++r) {
    for (int c = r; c < n; ++c) {
      const double value = r == c ? Cmat(r, r) : 2.0 * Cmat(r, c);
      if (value != 0.0) fx.prob.objective.block_linear.push_back({0, r, c, value});
    }
  }
  Eigen::VectorXd cfree = Eigen::VectorXd::Zero(p);
  for (int i = 0; i < m; ++i) {
    for (const auto& f : fx.prob.rows[i].free_terms) cfree[f.index] += f.value * ystar[i];
  }
  for (int k = 0; k < p; ++k) fx.prob.objective.free_linear.push_back({k, cfree[k]});

  fx.objective = (Cmat.array() * fx.xstar.array()).sum() + cfree.dot(fx.vstar) -
                 std::log(fx.xstar.determinant());
  return fx;
}

}  // namespace

TEST_CASE("fully pinned identity: objective 0") {
  auto prob = pinned_problem({{0, 0, 1.0}, {1, 1, 1.0}, {0, 1, 0.0}});
  auto sol = solve(prob, tight_settings());
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(std::abs(sol.objective) <= 1e-6);
  CHECK((sol.blocks[0] - Eigen::MatrixXd::Identity(2, 2)).norm() <= 1e-6);
  auto kkt = check_kkt(prob, sol);
  CHECK(kkt.primal_residual <= 1e-8);
  CHECK(kkt.dual_residual <= 1e-8);
  CHECK(kkt.compl_residual <= 1e-8);
}

TEST_CASE("trace constraint: determinant maximized at equal eigenvalues") {
  SdpProblem prob;
  prob.blocks.push_back({BlockKind::Psd, 2, "P"});
  LinearRow row;
  row.block_terms.push_back({0, 0, 0, 1.0});
  row.block_terms.push_back({0, 1, 1, 1.0});
  row.rhs = 2.0;
  prob.rows.push_back(row);
  prob.objective.logdet_block = 0;
  auto sol = solve(prob, tight_settings());
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(std::abs(sol.objective) <= 1e-6);
  CHECK((sol.blocks[0] - Eigen::MatrixXd::Identity(2, 2)).norm() <= 1e-5);
}

TEST_CASE("pinned diagonal with free off-diagonal: P12 -> 0, objective -log 4") {
  auto prob = pinned_problem({{0, 0, 1.0}, {1, 1, 4.0}});
  auto sol = solve(prob, tight_settings());
  REQUIRE(sol.status == SolveStatus::Optimal);

  // Independent 1-d scan oracle: maximize det = 4 - q^2 over the free entry.
  double best_obj = 1e300;
  for (double q = -1.999; q <= 1.999; q += 1e-4) {
    const double det = 4.0 - q * q;
    best_obj = std::min(best_obj, -std::log(det));
  }
  CHECK(std::abs(best_obj - (-std::log(4.0))) <= 1e-6);
  CHECK(std::abs(sol.objective - best_obj) <= 1e-6);
  CHECK(std::abs(sol.blocks[0](0, 1)) <= 1e-6);
  auto kkt = check_kkt(prob, sol);
  CHECK(kkt.primal_residual <= 1e-8);
  CHECK(kkt.dual_residual <= 1e-8);
  CHECK(kkt.compl_residual <= 1e-8);
}

TEST_CASE("check_kkt on a hand-built exact solution") {
  auto prob = pinned_problem({{0, 0, 1.0}, {1, 1, 1.0}, {0, 1, 0.0}});
  SdpSolution sol;
  sol.status = SolveStatus::Optimal;
  sol.blocks = {Eigen::MatrixXd::Identity(2, 2)};
  sol.dual_blocks = {Eigen::MatrixXd::Identity(2, 2)};  // S = w X^{-1} = I
  sol.free_values = Eigen::VectorXd::Zero(0);
  sol.duals = Eigen::VectorXd::Zero(3);
  sol.duals << -1.0, -1.0, 0.0;  // C - A^T(y) = I
  auto kkt = check_kkt(prob, sol);
  CHECK(kkt.primal_residual <= 1e-14);
  CHECK(kkt.dual_residual <= 1e-14);
  CHECK(kkt.compl_residual <= 1e-14);
  CHECK(kkt.min_eigenvalue == doctest::Approx(1.0));
  CHECK(std::abs(kkt.objective) <= 1e-14);
}

TEST_CASE("check_kkt flags a corrupted solution") {
  auto prob = pinned_problem({{0, 0, 1.0}, {1, 1, 4.0}});
  auto sol = solve(prob, tight_settings());
  REQUIRE(sol.status == SolveStatus::Optimal);
  sol.blocks[0](0, 1) += 0.1;
  sol.blocks[0](1, 0) += 0.1;
  auto kkt = check_kkt(prob, sol);
  CHECK(kkt.compl_residual > 1e-2);
}

TEST_CASE("constructed known-optimum fixtures solve to the recorded objective") {
  // Objectives are pinned by KKT construction; agreement required to 1e-5.
  struct Case {
    int n, m, p;
    unsigned seed;
  };
  for (const Case& c : {Case{3, 4, 0, 11}, Case{4, 6, 2, 22}, Case{6, 10, 3, 33}}) {
    auto fx = make_fixture(c.n, c.m, c.p, c.seed);
    auto sol = solve(fx.prob, tight_settings());
    REQUIRE(sol.status == SolveStatus::Optimal);
    CHECK(std::abs(sol.objective - fx.objective) <= 1e-5 * (1.0 + std::abs(fx.objective)));
    CHECK((sol.blocks[0] - fx.xstar).norm() <= 1e-4 * (1.0 + fx.xstar.norm()));
    auto kkt = check_kkt(fx.prob, sol);
    CHECK(kkt.primal_residual <= 1e-7);
    CHECK(kkt.dual_residual <= 1e-7);
  }
}

TEST_CASE("scale covariance of log-det-only problems") {
  // Scaling b by c > 0 scales the optimizer by c (the objective only shifts),
  // so the optimizer shape is preserved.
  const double scale = 3.5;
  for (int which = 0; which < 3; ++which) {
    SdpProblem base = which == 0   ? pinned_problem({{0, 0, 1.0}, {1, 1, 1.0}, {0, 1, 0.0}})
                      : which == 1 ? pinned_problem({{0, 0, 1.0}, {1, 1, 4.0}})
                                   : SdpProblem{};
    if (which == 2) {
      base.blocks.push_back({BlockKind::Psd, 2, "P"});
      LinearRow row;
      row.block_terms.push_back({0, 0, 0, 1.0});
      row.block_terms.push_back({0, 1, 1, 1.0});
      row.rhs = 2.0;
      base.rows.push_back(row);
      base.objective.logdet_block = 0;
    }
    SdpProblem scaled = base;
    for (auto& row : scaled.rows) row.rhs *= scale;
    auto sol0 = solve(base, tight_settings());
    auto sol1 = solve(scaled, tight_settings());
    REQUIRE(sol0.status == SolveStatus::Optimal);
    REQUIRE(sol1.status == SolveStatus::Optimal);
    CHECK((sol1.blocks[0] - scale * sol0.blocks[0]).norm() <= 1e-5 * scale);
  }
}

TEST_CASE("deterministic: identical problem and settings give identical output") {
  auto fx = make_fixture(4, 6, 2, 5);
  auto a = solve(fx.prob, tight_settings());
  auto b = solve(fx.prob, tight_settings());
  REQUIRE(a.status == b.status);
  CHECK(a.iterations == b.iterations);
  CHECK(a.objective == b.objective);  // bitwise
  CHECK((a.blocks[0].array() == b.blocks[0].array()).all());
  CHECK((a.duals.array() == b.duals.array()).all());
}

TEST_CASE("infeasible problem is certified") {
  // Gram feasibility of the odd polynomial x1: G00 = 0, 2 G01 = 1, G11 = 0.
  SdpProblem prob;
  prob.blocks.push_back({BlockKind::Psd, 2, "G"});
  LinearRow r0, r1, r2;
  r0.block_terms.push_back({0, 0, 0, 1.0});
  r0.rhs = 0.0;
  r1.block_terms.push_back({0, 0, 1, 2.0});
  r1.rhs = 1.0;
  r2.block_terms.push_back({0, 1, 1, 1.0});
  r2.rhs = 0.0;
  prob.rows = {r0, r1, r2};
  auto sol = solve(prob);
  CHECK(sol.status == SolveStatus::Infeasible);
  CHECK(sol.infeasibility_measure > 0.0);
}

TEST_CASE("iteration limit reported as MAX_ITER") {
  auto fx = make_fixture(4, 6, 0, 17);
  SolverSettings s;
  s.max_iterations = 2;
  auto sol = solve(fx.prob, s);
  CHECK(sol.status == SolveStatus::MaxIter);
}

TEST_CASE("diagonal blocks behave like elementwise bounds") {
  // min <C,X> with X diag(2), rows x0 + x1 = 3, x0 - x1 = 1 -> x = (2,1).
  SdpProblem prob;
  prob.blocks.push_back({BlockKind::Diag, 2, "d"});
  LinearRow r0, r1;
  r0.block_terms.push_back({0, 0, 0, 1.0});
  r0.block_terms.push_back({0, 1, 1, 1.0});
  r0.rhs = 3.0;
  r1.block_terms.push_back({0, 0, 0, 1.0});
  r1.block_terms.push_back({0, 1, 1, -1.0});
  r1.rhs = 1.0;
  prob.rows = {r0, r1};
  prob.objective.block_linear.push_back({0, 0, 0, 1.0});
  auto sol = solve(prob, tight_settings());
  REQUIRE(sol.status == SolveStatus::Optimal);
  CHECK(sol.blocks[0](0, 0) == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(sol.blocks[0](1, 1) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("malformed problems are rejected") {
  SdpProblem prob;
  CHECK_THROWS(prob.validate());  // no blocks
  prob.blocks.push_back({BlockKind::Psd, 2, "P"});
  LinearRow row;
  prob.rows.push_back(row);
  CHECK_THROWS(prob.validate());  // empty row
  prob.rows[0].block_terms.push_back({0, 1, 0, 1.0});
  CHECK_THROWS(prob.validate());  // row > col
  prob.rows[0].block_terms[0] = {0, 0, 1, 1.0};
  prob.objective.logdet_block = 3;
  CHECK_THROWS(prob.validate());  // bad designated block
  prob.objective.logdet_block = 0;
  prob.validate();
}

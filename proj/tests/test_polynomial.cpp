#include "reachsos/polynomial.hpp"

#include <cmath>
#include <random>

#include "doctest.h"

using namespace reachsos;

namespace {

VarSet xy_vars() {
  return VarSet({"x1", "x2"}, {VarRole::State, VarRole::State});
}

VarSet xyt_vars() {
  return VarSet({"x1", "x2", "t"}, {VarRole::State, VarRole::State, VarRole::Time});
}

// Random polynomial with small integer coefficients (exact in doubles).
Polynomial random_int_poly(const VarSet& vars, int max_degree, std::mt19937& rng) {
  std::uniform_int_distribution<int> coeff(-4, 4);
  std::uniform_int_distribution<int> deg(0, max_degree);
  Polynomial p(vars);
  for (int trial = 0; trial < 8; ++trial) {
    Monomial m(vars.size());
    int budget = deg(rng);
    for (int v = 0; v < vars.size() && budget > 0; ++v) {
      std::uniform_int_distribution<int> e(0, budget);
      const int ev = e(rng);
      m.exp(v) = ev;
      budget -= ev;
    }
    p.add_term(m, static_cast<double>(coeff(rng)));
  }
  return p;
}

}  // namespace

TEST_CASE("monomial_basis enumerates graded-lex bases of the right size") {
  const VarSet vars = xy_vars();
  auto b1 = monomial_basis(vars, {0, 1}, 1);
  REQUIRE(b1.size() == 3);
  CHECK(b1[0].degree() == 0);
  CHECK(b1[1].exp(0) == 1);  // x1 before x2
  CHECK(b1[2].exp(1) == 1);

  CHECK(monomial_basis(vars, {0, 1}, 2).size() == 6);

  const VarSet v3({"x1", "x2", "x3"}, {VarRole::State, VarRole::State, VarRole::State});
  CHECK(monomial_basis(v3, {0, 1, 2}, 2).size() == 10);

  // Deterministic: repeated calls identical.
  auto a = monomial_basis(v3, {0, 1, 2}, 3);
  auto b = monomial_basis(v3, {0, 1, 2}, 3);
  REQUIRE(a.size() == b.size());
  CHECK(a.size() == static_cast<std::size_t>(binomial(6, 3)));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("arithmetic examples") {
  const VarSet vars = xy_vars();
  const Polynomial x1 = Polynomial::variable(vars, 0);
  const Polynomial x2 = Polynomial::variable(vars, 1);
  const Polynomial one(vars, 1.0);

  SUBCASE("difference of squares") {
    Polynomial lhs = (x1 + one) * (x1 - one);
    Polynomial rhs = x1 * x1 - one;
    CHECK(lhs == rhs);
  }
  SUBCASE("additive identity") {
    Polynomial p = x1 * x2 + one.scaled(3.0);
    CHECK(p + Polynomial(vars) == p);
  }
  SUBCASE("binomial expansion") {
    Polynomial sq = (x1 + x2) * (x1 + x2);
    Polynomial expect = x1 * x1 + (x1 * x2).scaled(2.0) + x2 * x2;
    CHECK(sq == expect);
  }
}

TEST_CASE("differentiate: power rule and edge cases") {
  const VarSet vars = xyt_vars();
  const Polynomial x1 = Polynomial::variable(vars, 0);
  const Polynomial x2 = Polynomial::variable(vars, 1);

  CHECK((x1 * x1 * x2).differentiate(0) == (x1 * x2).scaled(2.0));
  CHECK((x1 * x1).differentiate(2).is_zero());  // no t dependence
  Polynomial p = x1 * x1 + (x2 * x2 * x2).scaled(3.0);
  CHECK(p.differentiate(1) == (x2 * x2).scaled(9.0));
  CHECK_THROWS(p.differentiate(7));
}

TEST_CASE("Leibniz rule holds exactly on random integer polynomials") {
  const VarSet vars = xyt_vars();
  std::mt19937 rng(1234);
  for (int rep = 0; rep < 50; ++rep) {
    Polynomial p = random_int_poly(vars, 3, rng);
    Polynomial q = random_int_poly(vars, 3, rng);
    for (int v = 0; v < vars.size(); ++v) {
      Polynomial lhs = (p * q).differentiate(v);
      Polynomial rhs = p.differentiate(v) * q + p * q.differentiate(v);
      CHECK(lhs == rhs);
    }
  }
}

TEST_CASE("ring axioms on random integer polynomials") {
  const VarSet vars = xyt_vars();
  std::mt19937 rng(99);
  for (int rep = 0; rep < 40; ++rep) {
    Polynomial p = random_int_poly(vars, 2, rng);
    Polynomial q = random_int_poly(vars, 2, rng);
    Polynomial r = random_int_poly(vars, 2, rng);
    CHECK((p + q) + r == p + (q + r));
    CHECK(p * q == q * p);
    CHECK((p * q) * r == p * (q * r));
    CHECK(p * (q + r) == p * q + p * r);
    if (!p.is_zero() && !q.is_zero()) {
      // Leading terms of integer polynomials cannot cancel in the product.
      CHECK((p * q).degree() == p.degree() + q.degree());
    }
  }
}

TEST_CASE("evaluate") {
  const VarSet vars = xy_vars();
  const Polynomial x1 = Polynomial::variable(vars, 0);
  const Polynomial x2 = Polynomial::variable(vars, 1);
  Polynomial p = x1 * x1 + x2 * x2;
  const double pt[] = {3.0, 4.0};
  CHECK(p.evaluate(pt) == doctest::Approx(25.0).epsilon(1e-14));

  Polynomial q = p + Polynomial(vars, 7.5);
  const double zero[] = {0.0, 0.0};
  CHECK(q.evaluate(zero) == 7.5);

  // Independent term-by-term oracle on random degree-4 polynomials.
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> cd(-2.0, 2.0);
  for (int rep = 0; rep < 25; ++rep) {
    Polynomial f(vars);
    auto basis = monomial_basis(vars, {0, 1}, 4);
    for (const auto& m : basis) f.add_term(m, cd(rng));
    const double point[] = {cd(rng), cd(rng)};
    double oracle = 0.0;
    for (const auto& [m, c] : f.terms()) {
      oracle += c * std::pow(point[0], m.exp(0)) * std::pow(point[1], m.exp(1));
    }
    const double got = f.evaluate(point);
    CHECK(std::abs(got - oracle) <= 1e-12 * std::max(1.0, std::abs(oracle)));
  }
}

TEST_CASE("evaluate is additive within 1e-12 relative") {
  const VarSet vars = xy_vars();
  std::mt19937 rng(21);
  std::uniform_real_distribution<double> cd(-1.0, 1.0);
  for (int rep = 0; rep < 25; ++rep) {
    Polynomial p(vars), q(vars);
    for (const auto& m : monomial_basis(vars, {0, 1}, 3)) {
      p.add_term(m, cd(rng));
      q.add_term(m, cd(rng));
    }
    const double point[] = {cd(rng), cd(rng)};
    const double lhs = (p + q).evaluate(point);
    const double rhs = p.evaluate(point) + q.evaluate(point);
    CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(rhs)));
  }
}

TEST_CASE("substitute") {
  const VarSet vars = xyt_vars();
  const Polynomial x1 = Polynomial::variable(vars, 0);
  const Polynomial x2 = Polynomial::variable(vars, 1);
  const Polynomial t = Polynomial::variable(vars, 2);

  SUBCASE("t = 0 kills t-terms") {
    Polynomial p = Polynomial(vars, 1.0) + t * x1 * x1;
    CHECK(p.substitute(2, 0.0) == Polynomial(vars, 1.0));
  }
  SUBCASE("h(t) = t(T - t) vanishes exactly at t = T") {
    const double T = 2.7;
    Polynomial h = t.scaled(T) - t * t;
    CHECK(h.substitute(2, T).is_zero());
    CHECK(h.substitute(2, 0.0).is_zero());
  }
  SUBCASE("polynomial substitution") {
    Polynomial p = x1 * x2;
    CHECK(p.substitute(1, x1) == x1 * x1);
  }
}

TEST_CASE("gram_to_poly") {
  const VarSet vars = xy_vars();
  SUBCASE("identity gram over [1, x1]") {
    auto basis = monomial_basis(vars, {0}, 1);
    Polynomial p = gram_to_poly(vars, Eigen::MatrixXd::Identity(2, 2), basis);
    Polynomial x1 = Polynomial::variable(vars, 0);
    CHECK(p == Polynomial(vars, 1.0) + x1 * x1);
  }
  SUBCASE("rank-1 gram gives a perfect square") {
    std::vector<Monomial> basis;
    Monomial mx1(2), mx2(2);
    mx1.exp(0) = 1;
    mx2.exp(1) = 1;
    basis = {mx1, mx2};
    Polynomial p = gram_to_poly(vars, Eigen::MatrixXd::Ones(2, 2), basis);
    Polynomial x1 = Polynomial::variable(vars, 0);
    Polynomial x2 = Polynomial::variable(vars, 1);
    CHECK(p == (x1 + x2) * (x1 + x2));
  }
  SUBCASE("quadratic-form oracle at random points") {
    auto basis = monomial_basis(vars, {0, 1}, 2);
    const int n = static_cast<int>(basis.size());
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> cd(-1.0, 1.0);
    for (int rep = 0; rep < 20; ++rep) {
      Eigen::MatrixXd G(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) G(i, j) = G(j, i) = cd(rng);
      Polynomial p = gram_to_poly(vars, G, basis);
      const double point[] = {cd(rng), cd(rng)};
      Eigen::VectorXd z(n);
      for (int i = 0; i < n; ++i) {
        z[i] = std::pow(point[0], basis[i].exp(0)) * std::pow(point[1], basis[i].exp(1));
      }
      const double oracle = z.dot(G * z);
      CHECK(std::abs(p.evaluate(point) - oracle) <= 1e-12 * std::max(1.0, std::abs(oracle)));
    }
  }
  SUBCASE("linearity is exact on integer matrices") {
    auto basis = monomial_basis(vars, {0, 1}, 2);
    const int n = static_cast<int>(basis.size());
    std::mt19937 rng(4);
    std::uniform_int_distribution<int> ci(-3, 3);
    for (int rep = 0; rep < 10; ++rep) {
      Eigen::MatrixXd A(n, n), B(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = i; j < n; ++j) {
          A(i, j) = A(j, i) = ci(rng);
          B(i, j) = B(j, i) = ci(rng);
        }
      CHECK(gram_to_poly(vars, A + B, basis) ==
            gram_to_poly(vars, A, basis) + gram_to_poly(vars, B, basis));
    }
  }
  SUBCASE("size mismatch throws") {
    auto basis = monomial_basis(vars, {0}, 1);
    CHECK_THROWS(gram_to_poly(vars, Eigen::MatrixXd::Identity(3, 3), basis));
  }
}

TEST_CASE("VarSet invariants") {
  CHECK_THROWS(VarSet({"x", "x"}, {VarRole::State, VarRole::State}));
  CHECK_THROWS(VarSet({"t", "s"}, {VarRole::Time, VarRole::Time}));
  const VarSet vars = xyt_vars();
  CHECK(vars.time_index() == 2);
  CHECK(vars.index("x2") == 1);
  CHECK(vars.index("bogus") == -1);
  CHECK(vars.indices(VarRole::State) == std::vector<int>{0, 1});
}

TEST_CASE("operations reject VarSet mismatches") {
  const VarSet a = xy_vars();
  const VarSet b = xyt_vars();
  Polynomial pa(a, 1.0), pb(b, 1.0);
  CHECK_THROWS(pa + pb);
  CHECK_THROWS(pa * pb);
  const double pt[] = {1.0};
  CHECK_THROWS(pa.evaluate(pt));
}

TEST_CASE("parser handles the documented format including groups") {
  const VarSet vars = xy_vars();
  Polynomial p = parse_polynomial("0.25^2 - (x1 - 0.5)^2 - x2^2", vars);
  const Polynomial x1 = Polynomial::variable(vars, 0);
  const Polynomial x2 = Polynomial::variable(vars, 1);
  Polynomial expect = Polynomial(vars, 0.0625) - (x1 - Polynomial(vars, 0.5)) * (x1 - Polynomial(vars, 0.5)) - x2 * x2;
  CHECK(p == expect);

  CHECK(parse_polynomial("2 * x1 ^ 2 * x2", vars) == (x1 * x1 * x2).scaled(2.0));
  CHECK(parse_polynomial("-x1 + 1", vars) == Polynomial(vars, 1.0) - x1);
  CHECK(parse_polynomial("  0 ", vars).is_zero());
}

TEST_CASE("parser reports line and column") {
  const VarSet vars = xy_vars();
  try {
    parse_polynomial("x1 +\n  bogus", vars);
    FAIL("expected parse error");
  } catch (const PolyParseError& err) {
    CHECK(err.line == 2);
    CHECK(err.col == 3);
  }
  CHECK_THROWS_AS(parse_polynomial("x1 + + x2 2", vars), PolyParseError);
  CHECK_THROWS_AS(parse_polynomial("(x1", vars), PolyParseError);
}

TEST_CASE("printer and parser round-trip") {
  const VarSet vars = xyt_vars();
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> cd(-10.0, 10.0);
  for (int rep = 0; rep < 30; ++rep) {
    Polynomial p(vars);
    for (const auto& m : monomial_basis(vars, {0, 1, 2}, 3)) {
      if (rng() % 3 == 0) p.add_term(m, cd(rng));
    }
    const std::string text = to_string(p);
    Polynomial q = parse_polynomial(text, vars);
    CHECK(p == q);
    CHECK(to_string(q) == text);
  }
}

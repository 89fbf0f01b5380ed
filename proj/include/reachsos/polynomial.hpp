// Sparse multivariate polynomial arithmetic over a fixed, shared variable set.
//
// All polynomials of one problem live in a single ring whose variables carry
// roles (state, pointwise input, L2 disturbance, time).  Monomials are stored
// as exponent vectors ordered graded-lexicographically, which fixes a
// deterministic basis ordering for all downstream matrix indexing.
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace reachsos {

enum class VarRole { State, Input, Disturbance, Time };

std::string to_string(VarRole role);
VarRole var_role_from_string(const std::string& s);

// Immutable ordered list of named variables with roles.  Shared by every
// polynomial of a problem; cheap to copy.
class VarSet {
 public:
  VarSet() = default;
  VarSet(std::vector<std::string> names, std::vector<VarRole> roles);

  int size() const { return static_cast<int>(data_->names.size()); }
  const std::string& name(int i) const { return data_->names.at(i); }
  VarRole role(int i) const { return data_->roles.at(i); }

  // Index of a variable name, or -1.
  int index(const std::string& name) const;
  // Indices of all variables with the given role, in declaration order.
  std::vector<int> indices(VarRole role) const;
  // Index of the unique time variable, or -1 when none is declared.
  int time_index() const;

  bool operator==(const VarSet& other) const;
  bool operator!=(const VarSet& other) const { return !(*this == other); }

 private:
  struct Data {
    std::vector<std::string> names;
    std::vector<VarRole> roles;
  };
  std::shared_ptr<const Data> data_ = std::make_shared<Data>();
};

// Exponent vector over a VarSet.  Compared graded-lexicographically:
// lower total degree first; within a degree, larger exponent vector
// (lexicographically) first, so that x1 precedes x2.
class Monomial {
 public:
  Monomial() = default;
  explicit Monomial(int nvars) : exps_(nvars, 0) {}
  explicit Monomial(std::vector<int> exps) : exps_(std::move(exps)) {}

  int nvars() const { return static_cast<int>(exps_.size()); }
  int exp(int i) const { return exps_[i]; }
  int& exp(int i) { return exps_[i]; }
  const std::vector<int>& exps() const { return exps_; }
  int degree() const;

  Monomial operator*(const Monomial& other) const;

  bool operator==(const Monomial& other) const { return exps_ == other.exps_; }
  bool operator!=(const Monomial& other) const { return exps_ != other.exps_; }
  bool operator<(const Monomial& other) const;

 private:
  std::vector<int> exps_;
};

// Coefficients below this magnitude are dropped on store.
inline constexpr double kCoeffPruneTol = 1e-12;

class Polynomial {
 public:
  Polynomial() = default;
  explicit Polynomial(VarSet vars) : vars_(std::move(vars)) {}
  Polynomial(VarSet vars, double constant);

  static Polynomial variable(const VarSet& vars, int index, double coeff = 1.0);
  static Polynomial constant(const VarSet& vars, double c) { return Polynomial(vars, c); }

  const VarSet& vars() const { return vars_; }
  const std::map<Monomial, double>& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  // Max total degree; 0 for the zero polynomial.
  int degree() const;
  // Max exponent of one variable across all terms.
  int degree_in(int var) const;
  double coeff(const Monomial& m) const;
  double constant_term() const;

  // Accumulates into the stored coefficient, pruning results below tolerance.
  void add_term(const Monomial& m, double c);

  Polynomial operator+(const Polynomial& q) const;
  Polynomial operator-(const Polynomial& q) const;
  Polynomial operator*(const Polynomial& q) const;
  Polynomial operator-() const;
  Polynomial& operator+=(const Polynomial& q);
  Polynomial& operator-=(const Polynomial& q);

  Polynomial scaled(double c) const;
  Polynomial differentiate(int var) const;
  Polynomial substitute(int var, const Polynomial& r) const;
  Polynomial substitute(int var, double value) const;
  // p with variable `var` replaced by factor * var.
  Polynomial with_scaled_var(int var, double factor) const;

  // Term-by-term evaluation in graded-lex term order; per-term powers are
  // accumulated by repeated multiplication in variable order.  This fixed
  // order makes results reproducible across runs.
  double evaluate(std::span<const double> point) const;

  bool operator==(const Polynomial& q) const;

 private:
  void check_same_vars(const Polynomial& q) const;

  VarSet vars_;
  std::map<Monomial, double> terms_;
};

using PolyVec = std::vector<Polynomial>;

// Symmetric matrix of polynomials sharing one VarSet.  Stores the full
// square but writes through to both mirrored entries.
class PolyMatrix {
 public:
  PolyMatrix() = default;
  PolyMatrix(int n, const VarSet& vars);

  int size() const { return n_; }
  const Polynomial& operator()(int i, int j) const { return entries_[i * n_ + j]; }
  void set(int i, int j, const Polynomial& p);

 private:
  int n_ = 0;
  std::vector<Polynomial> entries_;
};

// All monomials of total degree <= d in the chosen variables (indices into
// `vars`), graded-lex ordered.  Length C(k + d, d) for k chosen variables.
std::vector<Monomial> monomial_basis(const VarSet& vars, const std::vector<int>& var_indices,
                                     int max_degree);

// z^T G z expanded over the given basis.  Linear in G entry-wise.
Polynomial gram_to_poly(const VarSet& vars, const Eigen::MatrixXd& G,
                        const std::vector<Monomial>& basis);

// Binomial coefficient as 64-bit integer; throws on overflow.
std::int64_t binomial(int n, int k);

struct PolyParseError : std::runtime_error {
  PolyParseError(const std::string& msg, int line, int col);
  int line;
  int col;
};

// Parses the textual polynomial format: a sum of terms, each a `*`-separated
// product of numeric literals and `var^power` factors; `(`...`)` groups are
// accepted and expanded.  Variables must exist in `vars`.
// line_offset/col_offset shift reported error positions when the text is
// embedded in a larger file.
Polynomial parse_polynomial(const std::string& text, const VarSet& vars, int line_offset = 1,
                            int col_offset = 1);

// Canonical printer: graded-lex term order, explicit coefficients with
// round-trip precision.  parse_polynomial(to_string(p)) == p.
std::string to_string(const Polynomial& p);

}  // namespace reachsos

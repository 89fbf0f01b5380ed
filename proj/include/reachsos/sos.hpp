// Sum-of-squares programming layer: declare polynomial decision variables
// (SOS polynomials with Gram-matrix parameterizations, free symmetric
// coefficient matrices) and SOS constraints over a shared variable ring,
// then compile everything into a block SdpProblem via coefficient matching.
#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "reachsos/polynomial.hpp"
#include "reachsos/sdp.hpp"

namespace reachsos {

// Affine function of scalar SDP decision variables.  Term coefficients are
// the row weights used directly in equality rows.
struct LinExpr {
  double constant = 0.0;
  std::vector<std::pair<int, double>> terms;  // (var id, coeff), sorted by id

  LinExpr& operator+=(const LinExpr& other);
  LinExpr scaled(double c) const;
  bool empty() const { return terms.empty() && constant == 0.0; }
};

// Polynomial whose coefficients are LinExpr: the currency for assembling
// constraints like k2 from decision polynomials and fixed problem data.
class AffinePoly {
 public:
  AffinePoly() = default;
  explicit AffinePoly(VarSet vars) : vars_(std::move(vars)) {}

  static AffinePoly from_poly(const Polynomial& p);

  const VarSet& vars() const { return vars_; }
  const std::map<Monomial, LinExpr>& coeffs() const { return coeffs_; }
  bool empty() const { return coeffs_.empty(); }
  int degree() const;

  void add_term(const Monomial& m, const LinExpr& le);
  void add_term(const Monomial& m, double c);

  AffinePoly operator+(const AffinePoly& q) const;
  AffinePoly operator-(const AffinePoly& q) const;
  AffinePoly& operator+=(const AffinePoly& q);
  AffinePoly scaled(double c) const;
  // Multiply by a fixed polynomial (affine closure does not allow products of
  // two decision expressions).
  AffinePoly operator*(const Polynomial& p) const;
  AffinePoly differentiate(int var) const;
  AffinePoly substitute(int var, double value) const;

 private:
  VarSet vars_;
  std::map<Monomial, LinExpr> coeffs_;
};

// SOS-constrained polynomial decision variable: p(x) = z(x)^T G z(x) with G
// a PSD Gram block over `basis`.
struct DecisionPoly {
  int block = -1;
  std::vector<Monomial> basis;
  AffinePoly expr;
};

// Free symmetric matrix of scalar decision variables (no PSD constraint).
struct FreeMatrix {
  int size = 0;
  std::vector<int> var_ids;  // upper triangle, row-major: (0,0),(0,1),...
  int var_id(int r, int c) const;
};

// Plain PSD matrix block handle (not tied to a polynomial).
struct PsdMatrix {
  int block = -1;
  int size = 0;
};

struct DegreeOverflowError : std::runtime_error {
  DegreeOverflowError(const std::string& constraint, const std::string& monomial, int max_degree);
  std::string constraint;
};

struct GramCertificate {
  std::string name;
  std::vector<Monomial> basis;
  Eigen::MatrixXd gram;
  double residual = 0.0;       // max abs coefficient reconstruction error
  double min_eigenvalue = 0.0;
  bool valid = false;
  Polynomial residual_poly;    // gram_to_poly(G) - target, exact difference
};

inline constexpr double kDefaultTolRes = 1e-6;
inline constexpr double kDefaultTolEig = 1e-8;

class SosProgram {
 public:
  explicit SosProgram(VarSet vars);

  const VarSet& vars() const { return vars_; }

  // SOS polynomial of degree `degree` (even, >= 0) in the chosen variables;
  // allocates one PSD block of size C(n' + d', d') with d' = degree / 2.
  DecisionPoly declare_sos(const std::string& name, const std::vector<int>& var_indices,
                           int degree);
  FreeMatrix declare_free_symmetric(const std::string& name, int size);
  PsdMatrix declare_psd_matrix(const std::string& name, int size);

  LinExpr free_entry(const FreeMatrix& fm, int r, int c) const;
  LinExpr gram_entry(const PsdMatrix& pm, int r, int c) const;

  // Constrain expr to be SOS, witnessed by a fresh Gram block over the full
  // monomial basis of the chosen variables at half of `degree`.
  // Throws DegreeOverflowError if expr contains unrepresentable monomials.
  DecisionPoly add_sos_constraint(const std::string& name, const AffinePoly& expr,
                                  const std::vector<int>& var_indices, int degree);
  void add_linear_equality(const LinExpr& lhs, double rhs);
  void set_logdet_objective(const PsdMatrix& block, double weight);

  // Equality rows tying expr coefficient-wise to the witness DecisionPoly.
  // One row per monomial in the union of both supports, in graded-lex order.
  std::vector<LinearRow> coefficient_match(const AffinePoly& expr, const DecisionPoly& witness,
                                           const std::string& name) const;

  // Deterministic: identical declarations produce byte-identical problems.
  SdpProblem compile() const;

  // Reconstruction residual and minimum eigenvalue for every SOS constraint
  // under the given solution.  Pure; usable on any solution of compile().
  std::vector<GramCertificate> verify_certificates(const SdpSolution& solution,
                                                   double tol_res = kDefaultTolRes,
                                                   double tol_eig = kDefaultTolEig) const;

  // Value of an affine expression under a solution.
  Polynomial eval_affine(const AffinePoly& expr, const SdpSolution& solution) const;
  double eval_linexpr(const LinExpr& le, const SdpSolution& solution) const;

  int num_blocks() const { return static_cast<int>(blocks_.size()); }

 private:
  struct VarInfo {
    int block = -1;  // -1: free variable
    int row = 0, col = 0;
    int free_index = -1;
  };
  struct SosConstraint {
    std::string name;
    AffinePoly expr;
    DecisionPoly witness;
  };

  int new_gram_block(const std::string& name, int size);
  AffinePoly gram_expansion(int block, const std::vector<Monomial>& basis) const;

  VarSet vars_;
  std::vector<SdpBlockSpec> blocks_;
  std::vector<VarInfo> var_infos_;
  std::vector<std::vector<int>> block_var_ids_;  // upper-triangle ids per block
  int num_free_ = 0;
  std::vector<SosConstraint> sos_constraints_;
  std::vector<std::pair<LinExpr, double>> raw_equalities_;
  int logdet_block_ = -1;
  double logdet_weight_ = 1.0;
};

}  // namespace reachsos

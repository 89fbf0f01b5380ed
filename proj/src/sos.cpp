#include "reachsos/sos.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace reachsos {

LinExpr& LinExpr::operator+=(const LinExpr& other) {
  constant += other.constant;
  if (other.terms.empty()) return *this;
  std::vector<std::pair<int, double>> merged;
  merged.reserve(terms.size() + other.terms.size());
  std::size_t i = 0, j = 0;
  while (i < terms.size() || j < other.terms.size()) {
    if (j == other.terms.size() || (i < terms.size() && terms[i].first < other.terms[j].first)) {
      merged.push_back(terms[i++]);
    } else if (i == terms.size() || other.terms[j].first < terms[i].first) {
      merged.push_back(other.terms[j++]);
    } else {
      const double c = terms[i].second + other.terms[j].second;
      if (c != 0.0) merged.emplace_back(terms[i].first, c);
      ++i;
      ++j;
    }
  }
  terms = std::move(merged);
  return *this;
}

LinExpr LinExpr::scaled(double c) const {
  LinExpr out;
  out.constant = constant * c;
  if (c == 0.0) return out;
  out.terms.reserve(terms.size());
  for (const auto& [id, v] : terms) out.terms.emplace_back(id, v * c);
  return out;
}

AffinePoly AffinePoly::from_poly(const Polynomial& p) {
  AffinePoly out(p.vars());
  for (const auto& [m, c] : p.terms()) {
    LinExpr le;
    le.constant = c;
    out.coeffs_.emplace(m, std::move(le));
  }
  return out;
}

int AffinePoly::degree() const {
  int d = 0;
  for (const auto& [m, le] : coeffs_) d = std::max(d, m.degree());
  return d;
}

void AffinePoly::add_term(const Monomial& m, const LinExpr& le) {
  auto it = coeffs_.find(m);
  if (it == coeffs_.end()) {
    if (!le.empty()) coeffs_.emplace(m, le);
    return;
  }
  it->second += le;
  if (it->second.empty()) coeffs_.erase(it);
}

void AffinePoly::add_term(const Monomial& m, double c) {
  LinExpr le;
  le.constant = c;
  add_term(m, le);
}

AffinePoly AffinePoly::operator+(const AffinePoly& q) const {
  AffinePoly out = *this;
  out += q;
  return out;
}

AffinePoly& AffinePoly::operator+=(const AffinePoly& q) {
  if (vars_ != q.vars_) throw std::invalid_argument("AffinePoly: VarSet mismatch");
  for (const auto& [m, le] : q.coeffs_) add_term(m, le);
  return *this;
}

AffinePoly AffinePoly::operator-(const AffinePoly& q) const { return *this + q.scaled(-1.0); }

AffinePoly AffinePoly::scaled(double c) const {
  AffinePoly out(vars_);
  if (c == 0.0) return out;
  for (const auto& [m, le] : coeffs_) out.coeffs_.emplace(m, le.scaled(c));
  return out;
}

AffinePoly AffinePoly::operator*(const Polynomial& p) const {
  if (vars_ != p.vars()) throw std::invalid_argument("AffinePoly: VarSet mismatch");
  AffinePoly out(vars_);
  for (const auto& [m1, le] : coeffs_) {
    for (const auto& [m2, c] : p.terms()) {
      out.add_term(m1 * m2, le.scaled(c));
    }
  }
  return out;
}

AffinePoly AffinePoly::differentiate(int var) const {
  AffinePoly out(vars_);
  for (const auto& [m, le] : coeffs_) {
    const int e = m.exp(var);
    if (e == 0) continue;
    Monomial dm = m;
    dm.exp(var) = e - 1;
    out.add_term(dm, le.scaled(static_cast<double>(e)));
  }
  return out;
}

AffinePoly AffinePoly::substitute(int var, double value) const {
  AffinePoly out(vars_);
  for (const auto& [m, le] : coeffs_) {
    const int e = m.exp(var);
    double factor = 1.0;
    for (int k = 0; k < e; ++k) factor *= value;
    if (factor == 0.0) continue;
    Monomial base = m;
    base.exp(var) = 0;
    out.add_term(base, le.scaled(factor));
  }
  return out;
}

int FreeMatrix::var_id(int r, int c) const {
  if (r > c) std::swap(r, c);
  // Upper-triangle row-major offset.
  const int offset = r * size - r * (r - 1) / 2 + (c - r);
  return var_ids.at(offset);
}

DegreeOverflowError::DegreeOverflowError(const std::string& constraint_, const std::string& monomial,
                                         int max_degree)
    : std::runtime_error("constraint '" + constraint_ + "': monomial " + monomial +
                         " is not representable by the witness basis (max degree " +
                         std::to_string(max_degree) + "); raise the multiplier or witness degree"),
      constraint(constraint_) {}

SosProgram::SosProgram(VarSet vars) : vars_(std::move(vars)) {}

int SosProgram::new_gram_block(const std::string& name, int size) {
  const int block = static_cast<int>(blocks_.size());
  blocks_.push_back({BlockKind::Psd, size, name});
  std::vector<int> ids;
  ids.reserve(size * (size + 1) / 2);
  for (int r = 0; r < size; ++r) {
    for (int c = r; c < size; ++c) {
      VarInfo info;
      info.block = block;
      info.row = r;
      info.col = c;
      ids.push_back(static_cast<int>(var_infos_.size()));
      var_infos_.push_back(info);
    }
  }
  block_var_ids_.push_back(std::move(ids));
  return block;
}

AffinePoly SosProgram::gram_expansion(int block, const std::vector<Monomial>& basis) const {
  AffinePoly out(vars_);
  const auto& ids = block_var_ids_[block];
  const int n = static_cast<int>(basis.size());
  int k = 0;
  for (int r = 0; r < n; ++r) {
    for (int c = r; c < n; ++c, ++k) {
      LinExpr le;
      le.terms.emplace_back(ids[k], r == c ? 1.0 : 2.0);
      out.add_term(basis[r] * basis[c], le);
    }
  }
  return out;
}

DecisionPoly SosProgram::declare_sos(const std::string& name,
                                     const std::vector<int>& var_indices, int degree) {
  if (degree < 0 || degree % 2 != 0) {
    throw std::invalid_argument("declare_sos: degree must be even and non-negative");
  }
  DecisionPoly dp;
  dp.basis = monomial_basis(vars_, var_indices, degree / 2);
  dp.block = new_gram_block(name, static_cast<int>(dp.basis.size()));
  dp.expr = gram_expansion(dp.block, dp.basis);
  return dp;
}

FreeMatrix SosProgram::declare_free_symmetric(const std::string&, int size) {
  FreeMatrix fm;
  fm.size = size;
  for (int r = 0; r < size; ++r) {
    for (int c = r; c < size; ++c) {
      VarInfo info;
      info.free_index = num_free_++;
      fm.var_ids.push_back(static_cast<int>(var_infos_.size()));
      var_infos_.push_back(info);
    }
  }
  return fm;
}

PsdMatrix SosProgram::declare_psd_matrix(const std::string& name, int size) {
  PsdMatrix pm;
  pm.size = size;
  pm.block = new_gram_block(name, size);
  return pm;
}

LinExpr SosProgram::free_entry(const FreeMatrix& fm, int r, int c) const {
  LinExpr le;
  le.terms.emplace_back(fm.var_id(r, c), 1.0);
  return le;
}

LinExpr SosProgram::gram_entry(const PsdMatrix& pm, int r, int c) const {
  if (r > c) std::swap(r, c);
  const int offset = r * pm.size - r * (r - 1) / 2 + (c - r);
  LinExpr le;
  le.terms.emplace_back(block_var_ids_[pm.block][offset], 1.0);
  return le;
}

DecisionPoly SosProgram::add_sos_constraint(const std::string& name, const AffinePoly& expr,
                                            const std::vector<int>& var_indices, int degree) {
  DecisionPoly witness = declare_sos(name, var_indices, degree);
  // Representability check up front so errors carry the constraint name.
  for (const auto& [m, le] : expr.coeffs()) {
    if (witness.expr.coeffs().find(m) == witness.expr.coeffs().end()) {
      std::ostringstream os;
      for (int v = 0; v < vars_.size(); ++v) {
        if (m.exp(v) > 0) os << vars_.name(v) << "^" << m.exp(v) << " ";
      }
      std::string desc = os.str();
      if (desc.empty()) desc = "1";
      throw DegreeOverflowError(name, desc, degree);
    }
  }
  sos_constraints_.push_back({name, expr, witness});
  return witness;
}

void SosProgram::add_linear_equality(const LinExpr& lhs, double rhs) {
  raw_equalities_.emplace_back(lhs, rhs);
}

void SosProgram::set_logdet_objective(const PsdMatrix& block, double weight) {
  logdet_block_ = block.block;
  logdet_weight_ = weight;
}

std::vector<LinearRow> SosProgram::coefficient_match(const AffinePoly& expr,
                                                     const DecisionPoly& witness,
                                                     const std::string& name) const {
  // Union of supports, graded-lex ordered by map iteration.
  std::map<Monomial, char> support;
  for (const auto& [m, le] : witness.expr.coeffs()) support[m] = 1;
  for (const auto& [m, le] : expr.coeffs()) {
    if (support.find(m) == support.end()) {
      std::ostringstream os;
      for (int v = 0; v < vars_.size(); ++v) {
        if (m.exp(v) > 0) os << vars_.name(v) << "^" << m.exp(v) << " ";
      }
      throw DegreeOverflowError(name, os.str().empty() ? "1" : os.str(),
                                (witness.basis.empty() ? 0 : 2 * witness.basis.back().degree()));
    }
  }

  std::vector<LinearRow> rows;
  rows.reserve(support.size());
  for (const auto& [m, tag] : support) {
    // witness coefficient minus expr decision part equals expr constant part.
    LinExpr le = witness.expr.coeffs().at(m);
    auto it = expr.coeffs().find(m);
    double rhs = 0.0;
    if (it != expr.coeffs().end()) {
      LinExpr vars_only = it->second;
      rhs = vars_only.constant;
      vars_only.constant = 0.0;
      le += vars_only.scaled(-1.0);
    }
    LinearRow row;
    row.rhs = rhs;
    for (const auto& [id, coeff] : le.terms) {
      const VarInfo& info = var_infos_[id];
      if (info.block >= 0) {
        row.block_terms.push_back({info.block, info.row, info.col, coeff});
      } else {
        row.free_terms.push_back({info.free_index, coeff});
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

SdpProblem SosProgram::compile() const {
  SdpProblem prob;
  prob.blocks = blocks_;
  prob.num_free = num_free_;
  for (const auto& sc : sos_constraints_) {
    auto rows = coefficient_match(sc.expr, sc.witness, sc.name);
    for (auto& row : rows) prob.rows.push_back(std::move(row));
  }
  for (const auto& [lhs, rhs] : raw_equalities_) {
    LinearRow row;
    row.rhs = rhs - lhs.constant;
    for (const auto& [id, coeff] : lhs.terms) {
      const VarInfo& info = var_infos_[id];
      if (info.block >= 0) {
        row.block_terms.push_back({info.block, info.row, info.col, coeff});
      } else {
        row.free_terms.push_back({info.free_index, coeff});
      }
    }
    prob.rows.push_back(std::move(row));
  }
  if (logdet_block_ >= 0) {
    prob.objective.logdet_block = logdet_block_;
    prob.objective.logdet_weight = logdet_weight_;
  }
  prob.validate();
  return prob;
}

double SosProgram::eval_linexpr(const LinExpr& le, const SdpSolution& solution) const {
  double acc = le.constant;
  for (const auto& [id, coeff] : le.terms) {
    const VarInfo& info = var_infos_[id];
    const double value = info.block >= 0 ? solution.blocks[info.block](info.row, info.col)
                                         : solution.free_values[info.free_index];
    acc += coeff * value;
  }
  return acc;
}

Polynomial SosProgram::eval_affine(const AffinePoly& expr, const SdpSolution& solution) const {
  Polynomial out(vars_);
  for (const auto& [m, le] : expr.coeffs()) out.add_term(m, eval_linexpr(le, solution));
  return out;
}

std::vector<GramCertificate> SosProgram::verify_certificates(const SdpSolution& solution,
                                                             double tol_res,
                                                             double tol_eig) const {
  if (static_cast<int>(solution.blocks.size()) != static_cast<int>(blocks_.size())) {
    throw std::invalid_argument("verify_certificates: block count mismatch");
  }
  std::vector<GramCertificate> certs;
  certs.reserve(sos_constraints_.size());
  for (const auto& sc : sos_constraints_) {
    GramCertificate cert;
    cert.name = sc.name;
    cert.basis = sc.witness.basis;
    cert.gram = solution.blocks[sc.witness.block];
    Polynomial reconstructed = gram_to_poly(vars_, cert.gram, cert.basis);
    Polynomial target = eval_affine(sc.expr, solution);
    cert.residual_poly = reconstructed - target;
    cert.residual = 0.0;
    for (const auto& [m, c] : cert.residual_poly.terms()) {
      cert.residual = std::max(cert.residual, std::abs(c));
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cert.gram, Eigen::EigenvaluesOnly);
    cert.min_eigenvalue = es.eigenvalues().minCoeff();
    cert.valid = cert.residual <= tol_res && cert.min_eigenvalue >= -tol_eig;
    certs.push_back(std::move(cert));
  }
  return certs;
}

}  // namespace reachsos

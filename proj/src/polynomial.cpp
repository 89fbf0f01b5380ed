#include "reachsos/polynomial.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace reachsos {

std::string to_string(VarRole role) {
  switch (role) {
    case VarRole::State: return "state";
    case VarRole::Input: return "input";
    case VarRole::Disturbance: return "disturbance";
    case VarRole::Time: return "time";
  }
  return "?";
}

VarRole var_role_from_string(const std::string& s) {
  if (s == "state") return VarRole::State;
  if (s == "input") return VarRole::Input;
  if (s == "disturbance") return VarRole::Disturbance;
  if (s == "time") return VarRole::Time;
  throw std::runtime_error("unknown variable role: " + s);
}

VarSet::VarSet(std::vector<std::string> names, std::vector<VarRole> roles) {
  if (names.size() != roles.size()) {
    throw std::invalid_argument("VarSet: names/roles length mismatch");
  }
  int time_count = 0;
  for (std::size_t i = 0; i < names.size(); ++i) {
    for (std::size_t j = i + 1; j < names.size(); ++j) {
      if (names[i] == names[j]) {
        throw std::invalid_argument("VarSet: duplicate variable name " + names[i]);
      }
    }
    if (roles[i] == VarRole::Time) ++time_count;
  }
  if (time_count > 1) throw std::invalid_argument("VarSet: more than one time variable");
  auto data = std::make_shared<Data>();
  data->names = std::move(names);
  data->roles = std::move(roles);
  data_ = std::move(data);
}

int VarSet::index(const std::string& name) const {
  for (int i = 0; i < size(); ++i) {
    if (data_->names[i] == name) return i;
  }
  return -1;
}

std::vector<int> VarSet::indices(VarRole role) const {
  std::vector<int> out;
  for (int i = 0; i < size(); ++i) {
    if (data_->roles[i] == role) out.push_back(i);
  }
  return out;
}

int VarSet::time_index() const {
  for (int i = 0; i < size(); ++i) {
    if (data_->roles[i] == VarRole::Time) return i;
  }
  return -1;
}

bool VarSet::operator==(const VarSet& other) const {
  if (data_ == other.data_) return true;
  return data_->names == other.data_->names && data_->roles == other.data_->roles;
}

int Monomial::degree() const {
  int d = 0;
  for (int e : exps_) d += e;
  return d;
}

Monomial Monomial::operator*(const Monomial& other) const {
  if (exps_.size() != other.exps_.size()) {
    throw std::invalid_argument("Monomial product: size mismatch");
  }
  Monomial out(static_cast<int>(exps_.size()));
  for (std::size_t i = 0; i < exps_.size(); ++i) out.exps_[i] = exps_[i] + other.exps_[i];
  return out;
}

bool Monomial::operator<(const Monomial& other) const {
  const int da = degree();
  const int db = other.degree();
  if (da != db) return da < db;
  // Within a degree, the lexicographically larger exponent vector comes
  // first so that x1 < x2 < ... as basis elements.
  return exps_ > other.exps_;
}

Polynomial::Polynomial(VarSet vars, double constant) : vars_(std::move(vars)) {
  add_term(Monomial(vars_.size()), constant);
}

Polynomial Polynomial::variable(const VarSet& vars, int index, double coeff) {
  if (index < 0 || index >= vars.size()) throw std::out_of_range("Polynomial::variable index");
  Polynomial p(vars);
  Monomial m(vars.size());
  m.exp(index) = 1;
  p.add_term(m, coeff);
  return p;
}

int Polynomial::degree() const {
  int d = 0;
  for (const auto& [m, c] : terms_) d = std::max(d, m.degree());
  return d;
}

int Polynomial::degree_in(int var) const {
  int d = 0;
  for (const auto& [m, c] : terms_) d = std::max(d, m.exp(var));
  return d;
}

double Polynomial::coeff(const Monomial& m) const {
  auto it = terms_.find(m);
  return it == terms_.end() ? 0.0 : it->second;
}

double Polynomial::constant_term() const { return coeff(Monomial(vars_.size())); }

void Polynomial::add_term(const Monomial& m, double c) {
  if (m.nvars() != vars_.size()) throw std::invalid_argument("add_term: monomial size mismatch");
  auto it = terms_.find(m);
  if (it == terms_.end()) {
    if (std::abs(c) > kCoeffPruneTol) terms_.emplace(m, c);
    return;
  }
  it->second += c;
  if (std::abs(it->second) <= kCoeffPruneTol) terms_.erase(it);
}

void Polynomial::check_same_vars(const Polynomial& q) const {
  if (vars_ != q.vars_) throw std::invalid_argument("polynomial VarSet mismatch");
}

Polynomial Polynomial::operator+(const Polynomial& q) const {
  Polynomial out = *this;
  out += q;
  return out;
}

Polynomial& Polynomial::operator+=(const Polynomial& q) {
  check_same_vars(q);
  for (const auto& [m, c] : q.terms_) add_term(m, c);
  return *this;
}

Polynomial Polynomial::operator-(const Polynomial& q) const {
  Polynomial out = *this;
  out -= q;
  return out;
}

Polynomial& Polynomial::operator-=(const Polynomial& q) {
  check_same_vars(q);
  for (const auto& [m, c] : q.terms_) add_term(m, -c);
  return *this;
}

Polynomial Polynomial::operator-() const { return scaled(-1.0); }

Polynomial Polynomial::operator*(const Polynomial& q) const {
  check_same_vars(q);
  Polynomial out(vars_);
  for (const auto& [ma, ca] : terms_) {
    for (const auto& [mb, cb] : q.terms_) {
      out.add_term(ma * mb, ca * cb);
    }
  }
  return out;
}

Polynomial Polynomial::scaled(double c) const {
  Polynomial out(vars_);
  for (const auto& [m, v] : terms_) out.add_term(m, v * c);
  return out;
}

Polynomial Polynomial::differentiate(int var) const {
  if (var < 0 || var >= vars_.size()) throw std::invalid_argument("differentiate: unknown variable");
  Polynomial out(vars_);
  for (const auto& [m, c] : terms_) {
    const int e = m.exp(var);
    if (e == 0) continue;
    Monomial dm = m;
    dm.exp(var) = e - 1;
    out.add_term(dm, c * e);
  }
  return out;
}

Polynomial Polynomial::substitute(int var, const Polynomial& r) const {
  if (var < 0 || var >= vars_.size()) throw std::invalid_argument("substitute: unknown variable");
  check_same_vars(r);
  Polynomial out(vars_);
  for (const auto& [m, c] : terms_) {
    const int e = m.exp(var);
    Monomial base = m;
    base.exp(var) = 0;
    Polynomial term(vars_);
    term.add_term(base, c);
    for (int k = 0; k < e; ++k) term = term * r;
    out += term;
  }
  return out;
}

Polynomial Polynomial::substitute(int var, double value) const {
  if (var < 0 || var >= vars_.size()) throw std::invalid_argument("substitute: unknown variable");
  Polynomial out(vars_);
  for (const auto& [m, c] : terms_) {
    const int e = m.exp(var);
    double factor = 1.0;
    for (int k = 0; k < e; ++k) factor *= value;
    Monomial base = m;
    base.exp(var) = 0;
    out.add_term(base, c * factor);
  }
  return out;
}

Polynomial Polynomial::with_scaled_var(int var, double factor) const {
  if (var < 0 || var >= vars_.size()) throw std::invalid_argument("with_scaled_var: unknown variable");
  Polynomial out(vars_);
  for (const auto& [m, c] : terms_) {
    double f = 1.0;
    for (int k = 0; k < m.exp(var); ++k) f *= factor;
    out.add_term(m, c * f);
  }
  return out;
}

double Polynomial::evaluate(std::span<const double> point) const {
  if (static_cast<int>(point.size()) != vars_.size()) {
    throw std::invalid_argument("evaluate: point dimension mismatch");
  }
  double acc = 0.0;
  for (const auto& [m, c] : terms_) {
    double term = c;
    for (int v = 0; v < vars_.size(); ++v) {
      for (int k = 0; k < m.exp(v); ++k) term *= point[v];
    }
    acc += term;
  }
  return acc;
}

bool Polynomial::operator==(const Polynomial& q) const {
  return vars_ == q.vars_ && terms_ == q.terms_;
}

PolyMatrix::PolyMatrix(int n, const VarSet& vars) : n_(n), entries_(n * n, Polynomial(vars)) {}

void PolyMatrix::set(int i, int j, const Polynomial& p) {
  entries_[i * n_ + j] = p;
  entries_[j * n_ + i] = p;
}

std::vector<Monomial> monomial_basis(const VarSet& vars, const std::vector<int>& var_indices,
                                     int max_degree) {
  if (max_degree < 0) throw std::invalid_argument("monomial_basis: negative degree");
  for (int idx : var_indices) {
    if (idx < 0 || idx >= vars.size()) throw std::invalid_argument("monomial_basis: bad index");
  }
  std::vector<Monomial> out;
  Monomial current(vars.size());
  // Depth-first enumeration; the final sort imposes the canonical order.
  std::vector<int> stack;
  auto recurse = [&](auto&& self, std::size_t pos, int remaining) -> void {
    if (pos == var_indices.size()) {
      out.push_back(current);
      return;
    }
    for (int e = 0; e <= remaining; ++e) {
      current.exp(var_indices[pos]) = e;
      self(self, pos + 1, remaining - e);
    }
    current.exp(var_indices[pos]) = 0;
  };
  recurse(recurse, 0, max_degree);
  std::sort(out.begin(), out.end());
  return out;
}

Polynomial gram_to_poly(const VarSet& vars, const Eigen::MatrixXd& G,
                        const std::vector<Monomial>& basis) {
  const int n = static_cast<int>(basis.size());
  if (G.rows() != n || G.cols() != n) throw std::invalid_argument("gram_to_poly: size mismatch");
  Polynomial out(vars);
  for (int i = 0; i < n; ++i) {
    out.add_term(basis[i] * basis[i], G(i, i));
    for (int j = i + 1; j < n; ++j) {
      out.add_term(basis[i] * basis[j], G(i, j) + G(j, i));
    }
  }
  return out;
}

std::int64_t binomial(int n, int k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  std::int64_t r = 1;
  for (int i = 1; i <= k; ++i) {
    r = r * (n - k + i);
    if (r < 0) throw std::overflow_error("binomial overflow");
    r /= i;
  }
  return r;
}

PolyParseError::PolyParseError(const std::string& msg, int line_, int col_)
    : std::runtime_error(msg + " (line " + std::to_string(line_) + ", column " +
                         std::to_string(col_) + ")"),
      line(line_),
      col(col_) {}

namespace {

// Recursive-descent parser over +, -, *, ^, parenthesised groups, numeric
// literals and registered variable names.  Everything expands to a
// Polynomial on the spot, so `(x1 - 0.5)^2` is legal input even though the
// printer only ever emits flat sums of terms.
class Parser {
 public:
  Parser(const std::string& text, const VarSet& vars, int line_offset, int col_offset)
      : text_(text), vars_(vars), line_(line_offset), col_(col_offset) {}

  Polynomial parse() {
    skip_ws();
    Polynomial p = parse_expr();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    return p;
  }

 private:
  [[noreturn]] void fail(const std::string& msg) const { throw PolyParseError(msg, line_, col_); }

  bool eof() const { return pos_ >= text_.size(); }
  char peek() const { return eof() ? '\0' : text_[pos_]; }

  void advance() {
    if (eof()) return;
    if (text_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }

  void skip_ws() {
    while (!eof() && std::isspace(static_cast<unsigned char>(peek()))) advance();
  }

  bool accept(char c) {
    if (peek() == c) {
      advance();
      return true;
    }
    return false;
  }

  Polynomial parse_expr() {
    Polynomial acc = parse_term();
    while (true) {
      skip_ws();
      if (accept('+')) {
        acc += parse_term();
      } else if (accept('-')) {
        acc -= parse_term();
      } else {
        return acc;
      }
    }
  }

  Polynomial parse_term() {
    Polynomial acc = parse_factor();
    while (true) {
      skip_ws();
      if (accept('*')) {
        acc = acc * parse_factor();
      } else {
        return acc;
      }
    }
  }

  Polynomial parse_factor() {
    skip_ws();
    int sign = 1;
    while (accept('-')) {
      sign = -sign;
      skip_ws();
    }
    Polynomial base = parse_base();
    skip_ws();
    if (accept('^')) {
      skip_ws();
      const int e = parse_uint();
      Polynomial powed(vars_, 1.0);
      for (int i = 0; i < e; ++i) powed = powed * base;
      base = powed;
    }
    return sign == 1 ? base : base.scaled(-1.0);
  }

  Polynomial parse_base() {
    skip_ws();
    if (accept('(')) {
      Polynomial inner = parse_expr();
      skip_ws();
      if (!accept(')')) fail("expected ')'");
      return inner;
    }
    const char c = peek();
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_variable();
    fail(eof() ? "unexpected end of input" : std::string("unexpected character '") + c + "'");
  }

  Polynomial parse_number() {
    const std::size_t start = pos_;
    const int tok_line = line_, tok_col = col_;
    while (!eof() && (std::isdigit(static_cast<unsigned char>(peek())) || peek() == '.')) advance();
    if (!eof() && (peek() == 'e' || peek() == 'E')) {
      advance();
      if (peek() == '+' || peek() == '-') advance();
      while (!eof() && std::isdigit(static_cast<unsigned char>(peek()))) advance();
    }
    const std::string tok = text_.substr(start, pos_ - start);
    try {
      return Polynomial(vars_, std::stod(tok));
    } catch (const std::exception&) {
      throw PolyParseError("invalid numeric literal '" + tok + "'", tok_line, tok_col);
    }
  }

  int parse_uint() {
    if (!std::isdigit(static_cast<unsigned char>(peek()))) fail("expected exponent");
    int v = 0;
    while (!eof() && std::isdigit(static_cast<unsigned char>(peek()))) {
      v = v * 10 + (peek() - '0');
      if (v > 1000) fail("exponent too large");
      advance();
    }
    return v;
  }

  Polynomial parse_variable() {
    const std::size_t start = pos_;
    const int tok_line = line_, tok_col = col_;
    while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_')) advance();
    const std::string name = text_.substr(start, pos_ - start);
    const int idx = vars_.index(name);
    if (idx < 0) throw PolyParseError("unknown variable '" + name + "'", tok_line, tok_col);
    return Polynomial::variable(vars_, idx);
  }

  const std::string& text_;
  const VarSet& vars_;
  std::size_t pos_ = 0;
  int line_;
  int col_;
};

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Polynomial parse_polynomial(const std::string& text, const VarSet& vars, int line_offset,
                            int col_offset) {
  return Parser(text, vars, line_offset, col_offset).parse();
}

std::string to_string(const Polynomial& p) {
  if (p.is_zero()) return "0";
  std::ostringstream os;
  bool first = true;
  for (const auto& [m, c] : p.terms()) {
    const double mag = std::abs(c);
    if (first) {
      if (c < 0) os << "-";
      first = false;
    } else {
      os << (c < 0 ? " - " : " + ");
    }
    os << format_double(mag);
    for (int v = 0; v < p.vars().size(); ++v) {
      const int e = m.exp(v);
      if (e == 0) continue;
      os << " * " << p.vars().name(v);
      if (e > 1) os << "^" << e;
    }
  }
  return os.str();
}

}  // namespace reachsos

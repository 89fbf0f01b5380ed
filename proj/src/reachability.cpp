#include "reachsos/reachability.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

namespace reachsos {

namespace {

int even_ceil(int d) { return d % 2 == 0 ? d : d + 1; }
int even_floor(int d) { return d < 0 ? 0 : (d % 2 == 0 ? d : d - 1); }

Polynomial normalized(const Polynomial& p) {
  double scale = 0.0;
  for (const auto& [m, c] : p.terms()) scale = std::max(scale, std::abs(c));
  return scale > 0 ? p.scaled(1.0 / scale) : p;
}

bool references(const Polynomial& p, const std::vector<int>& vars) {
  for (const auto& [m, c] : p.terms()) {
    for (int v : vars) {
      if (m.exp(v) > 0) return true;
    }
  }
  return false;
}

}  // namespace

bool ReachProblem::autonomous() const {
  return vars.indices(VarRole::Input).empty() && vars.indices(VarRole::Disturbance).empty();
}

void ReachProblem::validate() const {
  const auto states = vars.indices(VarRole::State);
  const auto inputs = vars.indices(VarRole::Input);
  const auto dists = vars.indices(VarRole::Disturbance);
  if (states.empty()) throw std::invalid_argument("ReachProblem: no state variables");
  if (vars.time_index() < 0) throw std::invalid_argument("ReachProblem: no time variable");
  if (dynamics.size() != states.size()) {
    throw std::invalid_argument("ReachProblem: dynamics must have one entry per state");
  }
  for (const auto& f : dynamics) {
    if (f.vars() != vars) throw std::invalid_argument("ReachProblem: dynamics VarSet mismatch");
    if (f.degree_in(vars.time_index()) > 0) {
      throw std::invalid_argument("ReachProblem: dynamics must not depend on time");
    }
  }
  if (!(horizon > 0)) throw std::invalid_argument("ReachProblem: horizon must be positive");
  if (gamma < 0) throw std::invalid_argument("ReachProblem: gamma must be nonnegative");
  if (degree < 1) throw std::invalid_argument("ReachProblem: degree must be at least 1");
  if (time_degree < 0) throw std::invalid_argument("ReachProblem: time_degree must be >= 0");
  if (g_x.is_zero()) throw std::invalid_argument("ReachProblem: g_X is required");
  if (gamma > 0 && dists.empty()) {
    throw std::invalid_argument(
        "ReachProblem: gamma > 0 without disturbance variables is inconsistent (the level 1 + "
        "gamma would be vacuously loose)");
  }
  if (!dists.empty() && gamma == 0) {
    throw std::invalid_argument(
        "ReachProblem: disturbance variables declared but gamma = 0 admits no disturbance");
  }
  if (!inputs.empty() && !g_u.has_value()) {
    throw std::invalid_argument("ReachProblem: input variables declared without g_U");
  }
  if (inputs.empty() && g_u.has_value()) {
    throw std::invalid_argument("ReachProblem: g_U given but no input variables declared");
  }
  if (inputs.empty()) {
    for (const auto& f : dynamics) {
      if (references(f, inputs)) throw std::invalid_argument("unreachable");
    }
  }
}

Polynomial time_window(const VarSet& vars, double horizon) {
  const int t = vars.time_index();
  if (t < 0) throw std::invalid_argument("time_window: no time variable");
  Polynomial tv = Polynomial::variable(vars, t);
  return tv.scaled(horizon) - tv * tv;
}

Polynomial default_region(const VarSet& vars) {
  Polynomial g(vars, kDefaultRegionRadius * kDefaultRegionRadius);
  for (int i : vars.indices(VarRole::State)) {
    Polynomial xi = Polynomial::variable(vars, i);
    g -= xi * xi;
  }
  return g;
}

AffinePoly build_k1(const AffinePoly& v, const AffinePoly& s1, const Polynomial& g_x) {
  const int t = v.vars().time_index();
  AffinePoly v0 = t >= 0 ? v.substitute(t, 0.0) : v;
  AffinePoly one = AffinePoly::from_poly(Polynomial(v.vars(), 1.0));
  return one - v0 - s1 * g_x;
}

AffinePoly build_k2(const AffinePoly& v, const AffinePoly* s2, const AffinePoly* s3,
                    const AffinePoly* s4, const PolyVec& dynamics, const Polynomial& g_c,
                    const Polynomial* g_u, const Polynomial& h, bool include_w_energy) {
  const VarSet& vars = v.vars();
  const int t = vars.time_index();
  const auto states = vars.indices(VarRole::State);

  AffinePoly rate = v.differentiate(t);
  for (std::size_t i = 0; i < states.size(); ++i) {
    rate += v.differentiate(states[i]) * dynamics[i];
  }
  if (include_w_energy) {
    Polynomial energy(vars);
    for (int wvar : vars.indices(VarRole::Disturbance)) {
      Polynomial wv = Polynomial::variable(vars, wvar);
      energy += wv * wv;
    }
    rate += AffinePoly::from_poly(energy.scaled(-1.0));
  }

  AffinePoly k2 = rate.scaled(-1.0);
  if (s2 != nullptr) k2 = k2 - (*s2) * g_c;
  if (s3 != nullptr) k2 = k2 - (*s3) * h;
  if (s4 != nullptr && g_u != nullptr) k2 = k2 - (*s4) * (*g_u);
  return k2;
}

namespace {

ReachCompilation build_program(const ReachProblem& rp, bool s1_form) {
  rp.validate();
  const VarSet& vars = rp.vars;
  const int t = vars.time_index();
  const auto states = vars.indices(VarRole::State);
  const auto inputs = vars.indices(VarRole::Input);
  const auto dists = vars.indices(VarRole::Disturbance);

  if (!s1_form) {
    for (const auto& f : rp.dynamics) {
      if (references(f, inputs) || references(f, dists)) {
        throw std::invalid_argument("build_s2_program: dynamics must be autonomous");
      }
    }
  }

  ReachCompilation comp{SosProgram(vars)};
  comp.is_s1 = s1_form;
  SosProgram& prog = comp.program;

  Polynomial g_c = rp.g_c;
  if (g_c.is_zero()) {
    g_c = default_region(vars);
    comp.g_c_defaulted = true;
  }

  // Precondition: rescale states so the computation region is O(1).  The
  // quadratic diagonal of g_C supplies the natural radius per state.  SOS
  // membership is invariant under this substitution, so the certificates
  // transfer exactly; P(t) is mapped back after the solve.
  comp.state_scale.assign(vars.size(), 1.0);
  const double c0 = g_c.constant_term();
  for (int i : states) {
    Monomial sq(vars.size());
    sq.exp(i) = 2;
    const double cii = g_c.coeff(sq);
    if (c0 > 0 && cii < 0) {
      comp.state_scale[i] = std::clamp(std::sqrt(c0 / -cii), 1e-9, 1e9);
    }
  }
  auto rescale = [&](Polynomial p) {
    for (int i : states) p = p.with_scaled_var(i, comp.state_scale[i]);
    return p;
  };
  PolyVec dynamics;
  for (std::size_t i = 0; i < states.size(); ++i) {
    dynamics.push_back(rescale(rp.dynamics[i]).scaled(1.0 / comp.state_scale[states[i]]));
  }
  const Polynomial g_x = normalized(rescale(rp.g_x));
  g_c = normalized(rescale(g_c));
  std::optional<Polynomial> g_u = rp.g_u;
  if (g_u) *g_u = normalized(*g_u);
  const Polynomial h = normalized(time_window(vars, rp.horizon));

  // V(x,t) = sum_k t^k z_d(x)' P_k z_d(x) with free symmetric P_k.
  comp.state_basis = monomial_basis(vars, states, rp.degree);
  const int nbasis = static_cast<int>(comp.state_basis.size());
  AffinePoly v(vars);
  Monomial tpow(vars.size());
  for (int k = 0; k <= rp.time_degree; ++k) {
    FreeMatrix pk = prog.declare_free_symmetric("P" + std::to_string(k), nbasis);
    tpow.exp(t) = k;
    for (int r = 0; r < nbasis; ++r) {
      for (int c = r; c < nbasis; ++c) {
        const Monomial m = comp.state_basis[r] * comp.state_basis[c] * tpow;
        v.add_term(m, prog.free_entry(pk, r, c).scaled(r == c ? 1.0 : 2.0));
      }
    }
    comp.p_coeffs.push_back(std::move(pk));
  }
  comp.v_expr = v;

  // Multiplier degrees.  Auto mode picks the largest even degree that keeps
  // s_i * g_i within the target degree of its constraint.
  ResolvedDegrees deg;
  const int dx2 = 2 * rp.degree;
  deg.s1 = rp.multipliers.s1 >= 0 ? rp.multipliers.s1 : even_floor(dx2 - g_x.degree());
  deg.k1_target = even_ceil(std::max(dx2, deg.s1 + g_x.degree()));

  // Fixed part of k2 determines the base target degree.
  AffinePoly rate_probe = v.differentiate(t);
  for (std::size_t i = 0; i < states.size(); ++i) {
    rate_probe += v.differentiate(states[i]) * dynamics[i];
  }
  int fixed_deg = rate_probe.degree();
  if (s1_form && !dists.empty()) fixed_deg = std::max(fixed_deg, 2);
  deg.k2_target = even_ceil(fixed_deg);
  deg.s2 = rp.multipliers.s2 >= 0 ? rp.multipliers.s2 : even_floor(deg.k2_target - g_c.degree());
  deg.s3 = rp.multipliers.s3 >= 0 ? rp.multipliers.s3 : even_floor(deg.k2_target - 2);
  if (s1_form && g_u.has_value()) {
    deg.s4 = rp.multipliers.s4 >= 0 ? rp.multipliers.s4 : even_floor(deg.k2_target - g_u->degree());
  }
  deg.k2_target = even_ceil(std::max(
      {fixed_deg, deg.s2 + g_c.degree(), deg.s3 + 2,
       deg.s4 >= 0 ? deg.s4 + g_u->degree() : 0}));

  const bool v_sos = rp.require_v_sos.value_or(s1_form);
  if (v_sos) {
    deg.v_target = even_ceil(dx2 + rp.time_degree);
    deg.s_v = rp.multipliers.s_v >= 0 ? rp.multipliers.s_v : even_floor(deg.v_target - 2);
  }
  comp.degrees = deg;

  // Multiplier variable sets: s1 over x; the k2 multipliers over every
  // variable k2 itself sees.
  std::vector<int> k2_vars = states;
  if (s1_form) {
    k2_vars.insert(k2_vars.end(), inputs.begin(), inputs.end());
    k2_vars.insert(k2_vars.end(), dists.begin(), dists.end());
  }
  k2_vars.push_back(t);
  std::sort(k2_vars.begin(), k2_vars.end());

  DecisionPoly s1 = prog.declare_sos("s1", states, deg.s1);
  DecisionPoly s2 = prog.declare_sos("s2", k2_vars, deg.s2);
  DecisionPoly s3 = prog.declare_sos("s3", k2_vars, deg.s3);
  std::optional<DecisionPoly> s4;
  if (deg.s4 >= 0) s4 = prog.declare_sos("s4", k2_vars, deg.s4);

  AffinePoly k1 = build_k1(v, s1.expr, g_x);
  prog.add_sos_constraint("k1", k1, states, deg.k1_target);

  AffinePoly k2 = build_k2(v, &s2.expr, &s3.expr, s4 ? &s4->expr : nullptr, dynamics, g_c,
                           g_u ? &*g_u : nullptr, h, s1_form && !dists.empty());
  prog.add_sos_constraint("k2", k2, k2_vars, deg.k2_target);

  if (v_sos) {
    std::vector<int> xt = states;
    xt.push_back(t);
    std::sort(xt.begin(), xt.end());
    DecisionPoly sv = prog.declare_sos("s_v", xt, deg.s_v);
    AffinePoly v_constraint = v - sv.expr * h;
    prog.add_sos_constraint("V_sos", v_constraint, xt, deg.v_target);
  }

  // P(T) as its own PSD block tied entry-wise to sum_k P_k T^k; the log-det
  // objective acts on this block.
  comp.p_terminal = prog.declare_psd_matrix("P_T", nbasis);
  double tk = 1.0;
  std::vector<double> tpowers(rp.time_degree + 1);
  for (int k = 0; k <= rp.time_degree; ++k) {
    tpowers[k] = tk;
    tk *= rp.horizon;
  }
  for (int r = 0; r < nbasis; ++r) {
    for (int c = r; c < nbasis; ++c) {
      LinExpr tie = prog.gram_entry(comp.p_terminal, r, c);
      for (int k = 0; k <= rp.time_degree; ++k) {
        tie += prog.free_entry(comp.p_coeffs[k], r, c).scaled(-tpowers[k]);
      }
      prog.add_linear_equality(tie, 0.0);
    }
  }
  prog.set_logdet_objective(comp.p_terminal, 1.0);

  comp.level = s1_form ? 1.0 + rp.gamma : 1.0;
  comp.sdp = prog.compile();
  return comp;
}

}  // namespace

ReachCompilation build_s1_program(const ReachProblem& rp) {
  if (rp.autonomous() && rp.gamma == 0.0) return build_s2_program(rp);
  return build_program(rp, true);
}

ReachCompilation build_s2_program(const ReachProblem& rp) { return build_program(rp, false); }

Eigen::MatrixXd ReachCertificate::p_at(double t) const {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(p_coeffs[0].rows(), p_coeffs[0].cols());
  double tk = 1.0;
  for (const auto& pk : p_coeffs) {
    p += tk * pk;
    tk *= t;
  }
  return p;
}

double ReachCertificate::eval_v(std::span<const double> state, double t) const {
  const auto states = vars.indices(VarRole::State);
  if (state.size() != states.size()) {
    throw std::invalid_argument("eval_v: state dimension mismatch");
  }
  std::vector<double> point(vars.size(), 0.0);
  for (std::size_t i = 0; i < states.size(); ++i) point[states[i]] = state[i];
  const int ti = vars.time_index();
  if (ti >= 0) point[ti] = t;
  return v.evaluate(point);
}

namespace {

ReachResult run_one(const ReachProblem& rp, const ReachSettings& settings) {
  ReachResult result;
  const auto t0 = std::chrono::steady_clock::now();

  ReachProblem attempt = rp;
  for (int round = 0; ; ++round) {
    ReachCompilation comp =
        attempt.autonomous() && attempt.gamma == 0.0 ? build_s2_program(attempt)
                                                     : build_s1_program(attempt);
    SdpSolution sol = solve(comp.sdp, settings.solver);
    result.status = sol.status;
    result.message = sol.message;
    result.attempts = round + 1;
    result.degrees = comp.degrees;
    result.g_c_defaulted = comp.g_c_defaulted;
    result.gram_certs = comp.program.verify_certificates(sol, settings.tol_res, settings.tol_eig);

    if (sol.status == SolveStatus::Infeasible && round < settings.escalation_rounds) {
      // The S-procedure may simply lack multiplier degrees; escalate and retry.
      auto bump = [](int& d, int resolved) { d = (d >= 0 ? d : resolved) + 2; };
      bump(attempt.multipliers.s2, comp.degrees.s2);
      bump(attempt.multipliers.s3, comp.degrees.s3);
      if (comp.degrees.s4 >= 0) bump(attempt.multipliers.s4, comp.degrees.s4);
      result.escalation_applied = round + 1;
      continue;
    }

    if (sol.status == SolveStatus::Optimal) {
      bool all_valid = true;
      for (const auto& cert : result.gram_certs) all_valid = all_valid && cert.valid;
      if (all_valid) {
        ReachCertificate cert;
        cert.vars = rp.vars;
        cert.state_basis = comp.state_basis;
        cert.state_scale = comp.state_scale;
        // Undo the preconditioning: V(x,t) = V~(x/s, t), so each P~_k maps to
        // D P~_k D with D the diagonal of basis-monomial scale factors.
        const int nb = static_cast<int>(comp.state_basis.size());
        Eigen::VectorXd dvec(nb);
        for (int r = 0; r < nb; ++r) {
          double f = 1.0;
          for (int i = 0; i < rp.vars.size(); ++i) {
            for (int k = 0; k < comp.state_basis[r].exp(i); ++k) f /= comp.state_scale[i];
          }
          dvec[r] = f;
        }
        for (const auto& pk : comp.p_coeffs) {
          const int n = pk.size;
          Eigen::MatrixXd P(n, n);
          for (int r = 0; r < n; ++r) {
            for (int c = r; c < n; ++c) {
              P(r, c) = P(c, r) = comp.program.eval_linexpr(
                  comp.program.free_entry(pk, r, c), sol);
            }
          }
          cert.p_coeffs.push_back(dvec.asDiagonal() * P * dvec.asDiagonal());
        }
        cert.horizon = attempt.horizon;
        cert.level = comp.level;
        {
          const int t_idx = rp.vars.time_index();
          Polynomial vpoly(rp.vars);
          Monomial tpow(rp.vars.size());
          for (int k = 0; k <= attempt.time_degree; ++k) {
            tpow.exp(t_idx) = k;
            const Eigen::MatrixXd& P = cert.p_coeffs[k];
            for (int r = 0; r < nb; ++r) {
              vpoly.add_term(comp.state_basis[r] * comp.state_basis[r] * tpow, P(r, r));
              for (int c = r + 1; c < nb; ++c) {
                vpoly.add_term(comp.state_basis[r] * comp.state_basis[c] * tpow,
                               2.0 * P(r, c));
              }
            }
          }
          cert.v = std::move(vpoly);
        }
        cert.gram_certs = result.gram_certs;
        cert.status = to_string(sol.status);
        // -log det of the original-coordinate P(T).
        {
          Eigen::MatrixXd pt = Eigen::MatrixXd::Zero(nb, nb);
          double tk = 1.0;
          for (const auto& P : cert.p_coeffs) {
            pt += tk * P;
            tk *= attempt.horizon;
          }
          Eigen::LLT<Eigen::MatrixXd> ch(pt);
          cert.objective = ch.info() == Eigen::Success
                               ? -2.0 * Eigen::MatrixXd(ch.matrixL()).diagonal().array().log().sum()
                               : sol.objective;
        }
        cert.primal_infeas = sol.primal_infeas;
        cert.dual_infeas = sol.dual_infeas;
        cert.rel_gap = sol.rel_gap;
        cert.iterations = sol.iterations;
        cert.degree = attempt.degree;
        cert.time_degree = attempt.time_degree;
        cert.resolved = comp.degrees;
        cert.is_s1 = comp.is_s1;
        result.certificate = std::move(cert);
        result.success = true;
      } else {
        result.message = "solver reported OPTIMAL but a Gram certificate failed verification";
      }
    } else if (sol.status == SolveStatus::Infeasible) {
      result.message =
          "SOS program infeasible; consider raising multiplier degrees or enlarging the "
          "computation region g_C";
    }
    break;
  }

  result.solve_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace

ReachResult solve_reach(const ReachProblem& rp, const ReachSettings& settings) {
  return run_one(rp, settings);
}

std::vector<ReachResult> sweep_time_grid(const ReachProblem& rp, const std::vector<double>& times,
                                         const ReachSettings& settings) {
  std::vector<ReachResult> results;
  results.reserve(times.size());
  for (double t : times) {
    if (!(t > 0)) throw std::invalid_argument("sweep_time_grid: times must be positive");
    ReachProblem rpt = rp;
    rpt.horizon = t;
    results.push_back(run_one(rpt, settings));
  }
  return results;
}

}  // namespace reachsos

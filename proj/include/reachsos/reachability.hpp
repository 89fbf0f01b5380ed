// Forward reachable set outer approximation for polynomial ODEs
//   xdot = f(x, u, w),  u(t) in { g_U >= 0 },  int_0^T w'w dt <= gamma,
// by sublevel sets { x : z_d(x)' P(T) z_d(x) <= level } of a storage
// function V(x,t) = z_d(x)' P(t) z_d(x) satisfying
//   V(x,0) <= 1           on { g_X >= 0 },
//   dV/dt + dV/dx . f <= w'w   on { g_C >= 0 } x [0,T] x { g_U >= 0 },
// certified through SOS multipliers and solved as a determinant-maximization
// SDP (objective -log det P(T)) to shrink the terminal sublevel set.
// Disturbed problems use level 1 + gamma; autonomous ones use level 1.
#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "reachsos/polynomial.hpp"
#include "reachsos/sdp.hpp"
#include "reachsos/sos.hpp"

namespace reachsos {

struct MultiplierDegrees {
  // -1 selects the largest even degree that keeps s_i * g_i within the
  // constraint's target degree.
  int s1 = -1;
  int s2 = -1;
  int s3 = -1;
  int s4 = -1;
  int s_v = -1;
};

struct ReachProblem {
  VarSet vars;
  PolyVec dynamics;                  // one entry per state variable
  Polynomial g_x;                    // initial set {g_x >= 0}
  Polynomial g_c;                    // computation region; empty => default ball
  std::optional<Polynomial> g_u;     // pointwise input set; required iff inputs exist
  double gamma = 0.0;                // L2 disturbance budget
  double horizon = 0.0;              // terminal time T
  int degree = 1;                    // d: state monomial basis degree
  int time_degree = 2;               // degree of P(t) in t
  MultiplierDegrees multipliers;
  std::optional<bool> require_v_sos;  // default: true for S1, false for S2

  bool autonomous() const;
  void validate() const;  // throws std::invalid_argument
};

// h(t) = t (T - t): nonnegative exactly on [0, T], zero at both endpoints.
Polynomial time_window(const VarSet& vars, double horizon);

// Default computation region R^2 - ||x||^2 with R = 50.  Containment of the
// reachable tube in this ball is an assumption, not a verified fact.
inline constexpr double kDefaultRegionRadius = 50.0;
Polynomial default_region(const VarSet& vars);

// (1 - V(x,0)) - s1(x) g_X(x)
AffinePoly build_k1(const AffinePoly& v, const AffinePoly& s1, const Polynomial& g_x);

// -(dV/dt + grad_x V . f - w'w) - s2 g_C - s3 h - s4 g_U ; the w'w and s4/g_U
// terms are omitted when the respective expressions are absent.
AffinePoly build_k2(const AffinePoly& v, const AffinePoly* s2, const AffinePoly* s3,
                    const AffinePoly* s4, const PolyVec& dynamics, const Polynomial& g_c,
                    const Polynomial* g_u, const Polynomial& h, bool include_w_energy);

struct ResolvedDegrees {
  int k1_target = 0;
  int k2_target = 0;
  int v_target = 0;  // 0 when the V-SOS constraint is off
  int s1 = 0, s2 = 0, s3 = 0;
  int s4 = -1;       // -1 when absent
  int s_v = -1;
};

// Compiled program plus the symbol table needed to extract certificates.
struct ReachCompilation {
  SosProgram program;
  SdpProblem sdp;
  bool is_s1 = false;
  double level = 1.0;
  std::vector<Monomial> state_basis;
  std::vector<FreeMatrix> p_coeffs;  // P_k, k = 0..time_degree
  PsdMatrix p_terminal;
  AffinePoly v_expr;
  ResolvedDegrees degrees;
  bool g_c_defaulted = false;
  // Internal preconditioning: states were rescaled x_i = scale_i * x~_i so
  // that the computation region is O(1).  The program and its Gram
  // certificates live in the scaled coordinates.
  std::vector<double> state_scale;
};

ReachCompilation build_s1_program(const ReachProblem& rp);
ReachCompilation build_s2_program(const ReachProblem& rp);

struct ReachCertificate {
  VarSet vars;
  std::vector<Monomial> state_basis;        // z_d over the state variables
  std::vector<Eigen::MatrixXd> p_coeffs;    // P(t) = sum_k P_k t^k, original coordinates
  std::vector<double> state_scale;          // per-state preconditioning scale (see gram_certs)
  double horizon = 0.0;
  double level = 1.0;                       // 1 + gamma (S1) or 1 (S2)
  Polynomial v;                             // expanded V(x,t)
  std::vector<GramCertificate> gram_certs;
  std::string status;
  double objective = 0.0;                   // -log det P(T)
  double primal_infeas = 0.0, dual_infeas = 0.0, rel_gap = 0.0;
  int iterations = 0;
  int degree = 0, time_degree = 0;
  ResolvedDegrees resolved;
  bool is_s1 = false;

  Eigen::MatrixXd p_at(double t) const;
  // V(x, t) for a state-space point (ring variables other than states and
  // time do not appear in V).
  double eval_v(std::span<const double> state, double t) const;
};

struct ReachSettings {
  SolverSettings solver;
  double tol_res = kDefaultTolRes;
  double tol_eig = kDefaultTolEig;
  int escalation_rounds = 2;  // +2 on auto multiplier degrees per INFEASIBLE
};

struct ReachResult {
  bool success = false;
  SolveStatus status = SolveStatus::NumericalFailure;
  std::string message;
  std::optional<ReachCertificate> certificate;  // present when success
  std::vector<GramCertificate> gram_certs;      // always present after a solve
  int attempts = 1;
  int escalation_applied = 0;
  ResolvedDegrees degrees;
  double solve_seconds = 0.0;
  bool g_c_defaulted = false;
};

ReachResult solve_reach(const ReachProblem& rp, const ReachSettings& settings = {});

// Independent solves, one per terminal time; per-entry failures do not abort
// the sweep.
std::vector<ReachResult> sweep_time_grid(const ReachProblem& rp, const std::vector<double>& times,
                                         const ReachSettings& settings = {});

}  // namespace reachsos

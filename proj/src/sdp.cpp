#include "reachsos/sdp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace reachsos {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Symmetric-matrix entry: `v` already carries the halved off-diagonal
// convention, so the full coefficient matrix is sum of v*(E_rc + E_cr) for
// r != c and v*E_rr on the diagonal.
struct SymEntry {
  int r, c;
  double v;
};

struct BlockRows {
  // Rows touching this block, ascending, with spans into `entries`.
  std::vector<int> row_ids;
  std::vector<int> offsets;  // row_ids.size()+1 offsets
  std::vector<SymEntry> entries;
};

double dot_full(const std::vector<SymEntry>& entries, int begin, int end,
                const Eigen::MatrixXd& M) {
  double acc = 0.0;
  for (int e = begin; e < end; ++e) {
    const SymEntry& s = entries[e];
    acc += s.r == s.c ? s.v * M(s.r, s.r) : s.v * (M(s.r, s.c) + M(s.c, s.r));
  }
  return acc;
}

struct BlockState {
  bool diag = false;
  int n = 0;
  double w = 0.0;  // log-det weight (0 unless designated)
  Eigen::MatrixXd X, S;
  Eigen::VectorXd xd, sd;  // diag storage
};

double max_step_psd(const Eigen::LLT<Eigen::MatrixXd>& chol, const Eigen::MatrixXd& delta) {
  // Largest alpha with Z + alpha*delta psd, from lambda_min of L^-1 delta L^-T.
  Eigen::MatrixXd tmp = chol.matrixL().solve(delta);
  Eigen::MatrixXd A = chol.matrixL().solve(tmp.transpose()).transpose();
  A = 0.5 * (A + A.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A, Eigen::EigenvaluesOnly);
  const double lmin = es.eigenvalues().minCoeff();
  if (lmin >= -1e-14) return kInf;
  return -1.0 / lmin;
}

double max_step_diag(const Eigen::VectorXd& z, const Eigen::VectorXd& dz) {
  double alpha = kInf;
  for (int i = 0; i < z.size(); ++i) {
    if (dz[i] < 0) alpha = std::min(alpha, -z[i] / dz[i]);
  }
  return alpha;
}

}  // namespace

std::string to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::Optimal: return "OPTIMAL";
    case SolveStatus::Infeasible: return "INFEASIBLE";
    case SolveStatus::MaxIter: return "MAX_ITER";
    case SolveStatus::NumericalFailure: return "NUMERICAL_FAILURE";
  }
  return "?";
}

void SdpProblem::validate() const {
  if (blocks.empty()) throw std::invalid_argument("SdpProblem: no blocks");
  for (const auto& blk : blocks) {
    if (blk.size < 1) throw std::invalid_argument("SdpProblem: block size < 1");
  }
  if (num_free < 0) throw std::invalid_argument("SdpProblem: negative free count");
  auto check_entry = [&](const BlockEntry& e) {
    if (e.block < 0 || e.block >= static_cast<int>(blocks.size()))
      throw std::invalid_argument("SdpProblem: entry block out of range");
    const auto& blk = blocks[e.block];
    if (e.row < 0 || e.col < e.row || e.col >= blk.size)
      throw std::invalid_argument("SdpProblem: entry indices out of range (need row <= col)");
    if (blk.kind == BlockKind::Diag && e.row != e.col)
      throw std::invalid_argument("SdpProblem: off-diagonal entry in diagonal block");
  };
  auto check_free = [&](const FreeEntry& f) {
    if (f.index < 0 || f.index >= num_free)
      throw std::invalid_argument("SdpProblem: free index out of range");
  };
  for (const auto& row : rows) {
    if (row.block_terms.empty() && row.free_terms.empty())
      throw std::invalid_argument("SdpProblem: empty equality row");
    for (const auto& e : row.block_terms) check_entry(e);
    for (const auto& f : row.free_terms) check_free(f);
  }
  for (const auto& e : objective.block_linear) check_entry(e);
  for (const auto& f : objective.free_linear) check_free(f);
  if (objective.logdet_block != -1) {
    if (objective.logdet_block < 0 ||
        objective.logdet_block >= static_cast<int>(blocks.size()))
      throw std::invalid_argument("SdpProblem: log-det block out of range");
    if (blocks[objective.logdet_block].kind != BlockKind::Psd)
      throw std::invalid_argument("SdpProblem: log-det block must be a PSD block");
    if (!(objective.logdet_weight > 0))
      throw std::invalid_argument("SdpProblem: log-det weight must be positive");
  }
}

SdpSolution solve(const SdpProblem& problem, const SolverSettings& settings) {
  problem.validate();
  const int nblocks = static_cast<int>(problem.blocks.size());
  const int m = static_cast<int>(problem.rows.size());
  const int p = problem.num_free;

  SdpSolution sol;
  sol.free_values = Eigen::VectorXd::Zero(p);
  sol.duals = Eigen::VectorXd::Zero(m);

  // --- Assemble scaled data ------------------------------------------------
  // Each row is normalized to unit Frobenius norm of its full coefficient
  // vector; multipliers are mapped back to the original scale on exit.
  std::vector<double> row_scale(m, 1.0);
  Eigen::VectorXd b(m);
  std::vector<BlockRows> ablocks(nblocks);
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(m, p);

  for (int i = 0; i < m; ++i) {
    const LinearRow& row = problem.rows[i];
    double norm2 = 0.0;
    for (const auto& e : row.block_terms) {
      norm2 += e.row == e.col ? e.value * e.value : 0.5 * e.value * e.value;
    }
    for (const auto& f : row.free_terms) norm2 += f.value * f.value;
    row_scale[i] = std::sqrt(norm2);
    if (!(row_scale[i] > 0)) row_scale[i] = 1.0;
  }
  for (int j = 0; j < nblocks; ++j) {
    BlockRows& br = ablocks[j];
    br.offsets.push_back(0);
    for (int i = 0; i < m; ++i) {
      bool touched = false;
      for (const auto& e : problem.rows[i].block_terms) {
        if (e.block != j) continue;
        const double half = e.row == e.col ? e.value : 0.5 * e.value;
        br.entries.push_back({e.row, e.col, half / row_scale[i]});
        touched = true;
      }
      if (touched) {
        br.row_ids.push_back(i);
        br.offsets.push_back(static_cast<int>(br.entries.size()));
      }
    }
  }
  for (int i = 0; i < m; ++i) {
    b[i] = problem.rows[i].rhs / row_scale[i];
    for (const auto& f : problem.rows[i].free_terms) B(i, f.index) += f.value / row_scale[i];
  }

  // Objective data (unscaled).
  std::vector<Eigen::MatrixXd> C(nblocks);
  for (int j = 0; j < nblocks; ++j) {
    C[j] = Eigen::MatrixXd::Zero(problem.blocks[j].size, problem.blocks[j].size);
  }
  for (const auto& e : problem.objective.block_linear) {
    const double half = e.row == e.col ? e.value : 0.5 * e.value;
    C[e.block](e.row, e.col) += half;
    if (e.row != e.col) C[e.block](e.col, e.row) += half;
  }
  Eigen::VectorXd cf = Eigen::VectorXd::Zero(p);
  for (const auto& f : problem.objective.free_linear) cf[f.index] += f.value;
  double normC = 0.0;
  for (int j = 0; j < nblocks; ++j) normC = std::max(normC, C[j].norm());

  // --- Initial point --------------------------------------------------------
  std::vector<BlockState> st(nblocks);
  int ntot = 0;
  double wtot = 0.0;
  for (int j = 0; j < nblocks; ++j) {
    BlockState& s = st[j];
    s.diag = problem.blocks[j].kind == BlockKind::Diag;
    s.n = problem.blocks[j].size;
    s.w = (j == problem.objective.logdet_block) ? problem.objective.logdet_weight : 0.0;
    ntot += s.n;
    wtot += s.w * s.n;

    double bscale = 1.0;
    const BlockRows& br = ablocks[j];
    for (std::size_t a = 0; a < br.row_ids.size(); ++a) {
      double fn = 0.0;
      for (int e = br.offsets[a]; e < br.offsets[a + 1]; ++e) {
        const SymEntry& se = br.entries[e];
        fn += se.r == se.c ? se.v * se.v : 2.0 * se.v * se.v;
      }
      bscale = std::max(bscale, (1.0 + std::abs(b[br.row_ids[a]])) / (1.0 + std::sqrt(fn)));
    }
    double xs = std::max({10.0, std::sqrt(static_cast<double>(s.n)), s.n * bscale});
    double ss = std::max({10.0, std::sqrt(static_cast<double>(s.n)), C[j].norm(), s.w});
    if (settings.init_scale > 0) xs = ss = settings.init_scale;
    if (s.diag) {
      s.xd = Eigen::VectorXd::Constant(s.n, xs);
      s.sd = Eigen::VectorXd::Constant(s.n, ss);
    } else {
      s.X = xs * Eigen::MatrixXd::Identity(s.n, s.n);
      s.S = ss * Eigen::MatrixXd::Identity(s.n, s.n);
    }
  }
  Eigen::VectorXd y = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(p);

  // --- Work buffers ----------------------------------------------------------
  std::vector<Eigen::MatrixXd> Sinv(nblocks), Rd(nblocks), Theta(nblocks), M(nblocks);
  std::vector<Eigen::MatrixXd> dX(nblocks), dS(nblocks), dXa(nblocks), dSa(nblocks);
  std::vector<Eigen::VectorXd> rd_d(nblocks), theta_d(nblocks), m_d(nblocks);
  std::vector<Eigen::VectorXd> dxd(nblocks), dsd(nblocks), dxad(nblocks), dsad(nblocks);
  std::vector<Eigen::LLT<Eigen::MatrixXd>> cholX(nblocks), cholS(nblocks);
  Eigen::MatrixXd H(m, m);
  Eigen::VectorXd rp(m), hrhs(m), rf(p);

  auto applyAT = [&](const Eigen::VectorXd& yy, int j) -> Eigen::MatrixXd {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(st[j].n, st[j].n);
    const BlockRows& br = ablocks[j];
    for (std::size_t a = 0; a < br.row_ids.size(); ++a) {
      const double yi = yy[br.row_ids[a]];
      if (yi == 0.0) continue;
      for (int e = br.offsets[a]; e < br.offsets[a + 1]; ++e) {
        const SymEntry& se = br.entries[e];
        out(se.r, se.c) += yi * se.v;
        if (se.r != se.c) out(se.c, se.r) += yi * se.v;
      }
    }
    return out;
  };

  auto compute_rp = [&]() {
    rp = b;
    if (p > 0) rp.noalias() -= B * v;
    for (int j = 0; j < nblocks; ++j) {
      const BlockRows& br = ablocks[j];
      for (std::size_t a = 0; a < br.row_ids.size(); ++a) {
        double acc = 0.0;
        if (st[j].diag) {
          for (int e = br.offsets[a]; e < br.offsets[a + 1]; ++e) {
            acc += br.entries[e].v * st[j].xd[br.entries[e].r];
          }
        } else {
          acc = dot_full(br.entries, br.offsets[a], br.offsets[a + 1], st[j].X);
        }
        rp[br.row_ids[a]] -= acc;
      }
    }
  };

  auto primal_objective = [&]() {
    double obj = cf.dot(v);
    for (int j = 0; j < nblocks; ++j) {
      if (st[j].diag) {
        obj += C[j].diagonal().dot(st[j].xd);
        if (st[j].w > 0) obj -= st[j].w * st[j].xd.array().log().sum();
      } else {
        obj += (C[j].array() * st[j].X.array()).sum();
        if (st[j].w > 0) {
          Eigen::LLT<Eigen::MatrixXd> ch(st[j].X);
          if (ch.info() == Eigen::Success) {
            obj -= 2.0 * st[j].w *
                   Eigen::MatrixXd(ch.matrixL()).diagonal().array().log().sum();
          }
        }
      }
    }
    return obj;
  };

  auto dual_objective = [&]() {
    double obj = b.dot(y);
    for (int j = 0; j < nblocks; ++j) {
      if (st[j].w <= 0) continue;
      Eigen::LLT<Eigen::MatrixXd> ch(st[j].S);
      if (ch.info() != Eigen::Success) continue;
      const double logdetS =
          2.0 * Eigen::MatrixXd(ch.matrixL()).diagonal().array().log().sum();
      obj += st[j].w * (st[j].n - st[j].n * std::log(st[j].w) + logdetS);
    }
    return obj;
  };

  // Farkas-style primal infeasibility certificate test on the current dual
  // ray: A^T(y) <= 0 on every cone, B^T y = 0, b^T y > 0.
  auto certify_infeasible = [&](double* measure, double quality) {
    const double ynorm = y.norm();
    if (!(ynorm > 0) || !y.allFinite()) return false;
    Eigen::VectorXd yn = y / ynorm;
    const double bty = b.dot(yn);
    if (!(bty > 1e-10)) return false;
    double viol = 0.0;
    for (int j = 0; j < nblocks; ++j) {
      Eigen::MatrixXd Aty = applyAT(yn, j);
      if (st[j].diag) {
        viol = std::max(viol, Aty.diagonal().maxCoeff());
      } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Aty, Eigen::EigenvaluesOnly);
        viol = std::max(viol, es.eigenvalues().maxCoeff());
      }
    }
    if (p > 0) viol = std::max(viol, (B.transpose() * yn).cwiseAbs().maxCoeff());
    if (viol <= quality * bty) {
      *measure = bty;
      return true;
    }
    return false;
  };

  const double bnorm = m > 0 ? b.cwiseAbs().maxCoeff() : 0.0;
  const double cfnorm = p > 0 ? cf.cwiseAbs().maxCoeff() : 0.0;
  double best_merit = kInf;
  int stall_count = 0;
  int no_progress = 0;

  // Best iterate seen so far; returned when the iteration stalls or breaks
  // down so callers always get the most accurate point reached.
  struct Snapshot {
    std::vector<BlockState> st;
    Eigen::VectorXd y, v;
    double pobj = 0, dobj = 0, rp_rel = kInf, rd_rel = kInf, relgap = kInf, nu = kInf;
    int iter = 0;
    bool set = false;
  } best;

  auto finish = [&](SolveStatus status, const std::string& message, double pobj, double dobj,
                    double rp_rel, double rd_rel, double relgap, int iter) {
    sol.status = status;
    sol.message = message;
    sol.objective = pobj;
    sol.dual_objective = dobj;
    sol.primal_infeas = rp_rel;
    sol.dual_infeas = rd_rel;
    sol.rel_gap = relgap;
    sol.iterations = iter;
    sol.blocks.resize(nblocks);
    sol.dual_blocks.resize(nblocks);
    for (int j = 0; j < nblocks; ++j) {
      if (st[j].diag) {
        sol.blocks[j] = st[j].xd.asDiagonal();
        sol.dual_blocks[j] = st[j].sd.asDiagonal();
      } else {
        sol.blocks[j] = st[j].X;
        sol.dual_blocks[j] = st[j].S;
      }
    }
    sol.free_values = v;
    for (int i = 0; i < m; ++i) sol.duals[i] = y[i] / row_scale[i];
    return sol;
  };

  double pobj = 0, dobj = 0, rp_rel = 0, rd_rel = 0, relgap = 0, nu = 0;
  double path_ratio = 0.0;  // nu_0 / max(rp_0, rd_0): ties mu to infeasibility

  // Failure exits first try to certify infeasibility: a diverging dual ray is
  // the usual way an infeasible instance surfaces numerically.
  auto finish_or_infeasible = [&](SolveStatus status, const std::string& message, int iter) {
    double measure = 0.0;
    if (m > 0 && certify_infeasible(&measure, 1e-5)) {
      sol.infeasibility_measure = measure;
      return finish(SolveStatus::Infeasible, "Farkas certificate found (" + message + ")", pobj,
                    dobj, rp_rel, rd_rel, relgap, iter);
    }
    if (best.set) {
      st = best.st;
      y = best.y;
      v = best.v;
      const double nu_rel = std::abs(best.nu) / (1.0 + std::abs(best.pobj) + std::abs(best.dobj));
      if (best.rp_rel <= settings.tol_feas && best.rd_rel <= settings.tol_feas &&
          (best.relgap <= settings.tol_gap || nu_rel <= 0.1 * settings.tol_gap)) {
        return finish(SolveStatus::Optimal, "converged (best iterate)", best.pobj, best.dobj,
                      best.rp_rel, best.rd_rel, best.relgap, iter);
      }
      return finish(status, message + " (best iterate returned)", best.pobj, best.dobj,
                    best.rp_rel, best.rd_rel, best.relgap, iter);
    }
    return finish(status, message, pobj, dobj, rp_rel, rd_rel, relgap, iter);
  };

  for (int iter = 0; iter <= settings.max_iterations; ++iter) {
    // Residuals and convergence measures.
    compute_rp();
    double rd_max = 0.0;
    for (int j = 0; j < nblocks; ++j) {
      if (st[j].diag) {
        Eigen::MatrixXd Aty = applyAT(y, j);
        rd_d[j] = C[j].diagonal() - Aty.diagonal() - st[j].sd;
        rd_max = std::max(rd_max, rd_d[j].norm());
      } else {
        Rd[j] = C[j] - applyAT(y, j) - st[j].S;
        rd_max = std::max(rd_max, Rd[j].norm());
      }
    }
    double rf_max = 0.0;
    if (p > 0) {
      rf = cf - B.transpose() * y;
      rf_max = rf.cwiseAbs().maxCoeff();
    }

    double ip_xs = 0.0;
    for (int j = 0; j < nblocks; ++j) {
      ip_xs += st[j].diag ? st[j].xd.dot(st[j].sd)
                          : (st[j].X.array() * st[j].S.array()).sum();
    }
    nu = (ip_xs - wtot) / ntot;

    pobj = primal_objective();
    dobj = dual_objective();
    rp_rel = (m > 0 ? rp.cwiseAbs().maxCoeff() : 0.0) / (1.0 + bnorm);
    rd_rel = std::max(rd_max / (1.0 + normC), rf_max / (1.0 + cfnorm));
    relgap = std::abs(pobj - dobj) / (1.0 + std::abs(pobj) + std::abs(dobj));

    if (iter == 0) {
      path_ratio = nu / std::max({rp_rel, rd_rel, 1e-8});
    }
    if (settings.verbosity > 0) {
      std::printf("iter %3d  pobj % .6e  dobj % .6e  gap %.2e  rp %.2e  rd %.2e  nu %.2e\n",
                  iter, pobj, dobj, relgap, rp_rel, rd_rel, nu);
    }

    const double nu_rel = std::abs(nu) / (1.0 + std::abs(pobj) + std::abs(dobj));
    const double merit = std::max({rp_rel, rd_rel, std::min(relgap, nu_rel)});
    if (merit < 0.9 * best_merit) {
      best_merit = merit;
      no_progress = 0;
    } else {
      ++no_progress;
    }
    if (!best.set || merit <= best_merit) {
      best.st = st;
      best.y = y;
      best.v = v;
      best.pobj = pobj;
      best.dobj = dobj;
      best.rp_rel = rp_rel;
      best.rd_rel = rd_rel;
      best.relgap = relgap;
      best.nu = nu;
      best.iter = iter;
      best.set = true;
    }

    if (rp_rel <= settings.tol_feas && rd_rel <= settings.tol_feas &&
        (relgap <= settings.tol_gap || nu_rel <= 0.1 * settings.tol_gap)) {
      return finish(SolveStatus::Optimal, "converged", pobj, dobj, rp_rel, rd_rel, relgap, iter);
    }
    double measure = 0.0;
    const bool try_cert =
        m > 0 && b.dot(y) > 0 &&
        (iter % 5 == 0 || y.cwiseAbs().maxCoeff() > 1e5 || dobj > 1e9);
    if (try_cert && certify_infeasible(&measure, 1e-7)) {
      sol.infeasibility_measure = measure;
      return finish(SolveStatus::Infeasible, "Farkas certificate found", pobj, dobj, rp_rel,
                    rd_rel, relgap, iter);
    }
    if (iter == settings.max_iterations) {
      return finish_or_infeasible(SolveStatus::MaxIter, "iteration limit reached", iter);
    }
    if (no_progress >= 12) {
      return finish_or_infeasible(SolveStatus::MaxIter, "progress stalled", iter);
    }

    // Factor current iterates.
    bool factor_ok = true;
    for (int j = 0; j < nblocks && factor_ok; ++j) {
      if (st[j].diag) {
        if (st[j].xd.minCoeff() <= 0 || st[j].sd.minCoeff() <= 0) factor_ok = false;
        continue;
      }
      cholX[j].compute(st[j].X);
      cholS[j].compute(st[j].S);
      if (cholX[j].info() != Eigen::Success || cholS[j].info() != Eigen::Success) {
        factor_ok = false;
      } else {
        Sinv[j] = cholS[j].solve(Eigen::MatrixXd::Identity(st[j].n, st[j].n));
      }
    }
    if (!factor_ok) {
      return finish_or_infeasible(SolveStatus::NumericalFailure, "iterate factorization failed",
                                  iter);
    }

    // Schur complement H_ik = sum_j tr(A_ij X_j A_kj S_j^-1).
    H.setZero();
    for (int j = 0; j < nblocks; ++j) {
      const BlockRows& br = ablocks[j];
      const int nrows = static_cast<int>(br.row_ids.size());
      if (st[j].diag) {
        Eigen::VectorXd ratio = st[j].xd.array() / st[j].sd.array();
        for (int a = 0; a < nrows; ++a) {
          for (int bb = a; bb < nrows; ++bb) {
            double acc = 0.0;
            for (int e = br.offsets[a]; e < br.offsets[a + 1]; ++e) {
              for (int f = br.offsets[bb]; f < br.offsets[bb + 1]; ++f) {
                if (br.entries[e].r == br.entries[f].r) {
                  acc += br.entries[e].v * br.entries[f].v * ratio[br.entries[e].r];
                }
              }
            }
            H(br.row_ids[a], br.row_ids[bb]) += acc;
          }
        }
        continue;
      }
      const Eigen::MatrixXd& X = st[j].X;
      const Eigen::MatrixXd& Si = Sinv[j];
      // tr(E_ab X E_rc S^-1) = X(b,r) * S^-1(c,a), expanded over the mirrored
      // entry patterns; each mirror image exists only off the diagonal.
      for (int a = 0; a < nrows; ++a) {
        for (int bb = a; bb < nrows; ++bb) {
          double acc = 0.0;
          for (int e = br.offsets[a]; e < br.offsets[a + 1]; ++e) {
            const SymEntry& se = br.entries[e];
            for (int f = br.offsets[bb]; f < br.offsets[bb + 1]; ++f) {
              const SymEntry& sf = br.entries[f];
              double term = X(se.c, sf.r) * Si(sf.c, se.r);
              if (sf.r != sf.c) term += X(se.c, sf.c) * Si(sf.r, se.r);
              if (se.r != se.c) {
                term += X(se.r, sf.r) * Si(sf.c, se.c);
                if (sf.r != sf.c) term += X(se.r, sf.c) * Si(sf.r, se.c);
              }
              acc += se.v * sf.v * term;
            }
          }
          H(br.row_ids[a], br.row_ids[bb]) += acc;
        }
      }
    }
    H.triangularView<Eigen::StrictlyLower>() = H.transpose().triangularView<Eigen::StrictlyLower>();

    Eigen::LLT<Eigen::MatrixXd> cholH;
    double reg = 0.0;
    for (int attempt = 0; attempt < 4; ++attempt) {
      if (attempt > 0) {
        reg = (reg == 0.0) ? 1e-12 * (1.0 + H.diagonal().maxCoeff()) : reg * 1e3;
        H.diagonal().array() += reg;
      }
      cholH.compute(H);
      if (cholH.info() == Eigen::Success) break;
    }
    if (cholH.info() != Eigen::Success) {
      return finish_or_infeasible(SolveStatus::NumericalFailure,
                                  "Schur complement factorization failed", iter);
    }
    Eigen::MatrixXd K;
    Eigen::LLT<Eigen::MatrixXd> cholW;
    if (p > 0) {
      K = cholH.solve(B);
      Eigen::MatrixXd W = B.transpose() * K;
      for (int attempt = 0; attempt < 4; ++attempt) {
        if (attempt > 0) W.diagonal().array() += 1e-12 * (1.0 + W.diagonal().maxCoeff());
        cholW.compute(W);
        if (cholW.info() == Eigen::Success) break;
      }
      if (cholW.info() != Eigen::Success) {
        return finish_or_infeasible(SolveStatus::NumericalFailure,
                                    "free-variable system factorization failed", iter);
      }
    }

    // One Newton solve for a given complementarity target matrix per block.
    auto newton_solve = [&](bool corrector, Eigen::VectorXd& dy, Eigen::VectorXd& dv) {
      hrhs = rp;
      for (int j = 0; j < nblocks; ++j) {
        const BlockRows& br = ablocks[j];
        if (st[j].diag) {
          theta_d[j] = (m_d[j].array() - st[j].xd.array() * rd_d[j].array()) / st[j].sd.array();
          for (std::size_t a = 0; a < br.row_ids.size(); ++a) {
            double acc = 0.0;
            for (int e = br.offsets[a]; e < br.offsets[a + 1]; ++e) {
              acc += br.entries[e].v * theta_d[j][br.entries[e].r];
            }
            hrhs[br.row_ids[a]] -= acc;
          }
        } else {
          Theta[j].noalias() = (M[j] - st[j].X * Rd[j]) * Sinv[j];
          for (std::size_t a = 0; a < br.row_ids.size(); ++a) {
            hrhs[br.row_ids[a]] -= dot_full(br.entries, br.offsets[a], br.offsets[a + 1], Theta[j]);
          }
        }
      }
      auto saddle_solve = [&](const Eigen::VectorXd& r1, const Eigen::VectorXd& r2,
                              Eigen::VectorXd* oy, Eigen::VectorXd* ov) {
        Eigen::VectorXd t1 = cholH.solve(r1);
        if (p > 0) {
          *ov = cholW.solve(B.transpose() * t1 - r2);
          *oy = t1 - K * *ov;
        } else {
          ov->resize(0);
          *oy = t1;
        }
      };
      saddle_solve(hrhs, rf, &dy, &dv);
      // Iterative refinement: the Schur complement turns severely
      // ill-conditioned near the optimum and the eliminated system loses
      // feasibility digits without it.
      for (int pass = 0; pass < 2; ++pass) {
        Eigen::VectorXd res1 = hrhs - H * dy;
        if (p > 0) res1 -= B * dv;
        Eigen::VectorXd res2 = p > 0 ? (rf - B.transpose() * dy).eval() : Eigen::VectorXd();
        const double rn = res1.cwiseAbs().maxCoeff() +
                          (p > 0 ? res2.cwiseAbs().maxCoeff() : 0.0);
        if (rn < 1e-13 * (1.0 + hrhs.cwiseAbs().maxCoeff())) break;
        Eigen::VectorXd cy, cv;
        saddle_solve(res1, res2, &cy, &cv);
        dy += cy;
        if (p > 0) dv += cv;
      }
      for (int j = 0; j < nblocks; ++j) {
        if (st[j].diag) {
          Eigen::MatrixXd Atdy = applyAT(dy, j);
          Eigen::VectorXd ds = rd_d[j] - Atdy.diagonal();
          Eigen::VectorXd dx =
              (m_d[j].array() - st[j].xd.array() * ds.array()) / st[j].sd.array();
          if (corrector) {
            dxd[j] = dx;
            dsd[j] = ds;
          } else {
            dxad[j] = dx;
            dsad[j] = ds;
          }
        } else {
          Eigen::MatrixXd ds = Rd[j] - applyAT(dy, j);
          Eigen::MatrixXd dx = (M[j] - st[j].X * ds) * Sinv[j];
          dx = 0.5 * (dx + dx.transpose()).eval();
          if (corrector) {
            dX[j] = dx;
            dS[j] = ds;
          } else {
            dXa[j] = dx;
            dSa[j] = ds;
          }
        }
      }
    };

    auto step_lengths = [&](bool corrector, double* ap, double* ad) {
      double amax_p = kInf, amax_d = kInf;
      int limit_p = -1, limit_d = -1;
      for (int j = 0; j < nblocks; ++j) {
        double sp, sd;
        if (st[j].diag) {
          const Eigen::VectorXd& dx = corrector ? dxd[j] : dxad[j];
          const Eigen::VectorXd& ds = corrector ? dsd[j] : dsad[j];
          sp = max_step_diag(st[j].xd, dx);
          sd = max_step_diag(st[j].sd, ds);
        } else {
          const Eigen::MatrixXd& dx = corrector ? dX[j] : dXa[j];
          const Eigen::MatrixXd& ds = corrector ? dS[j] : dSa[j];
          if (st[j].w > 0 && settings.interior_floor > 0) {
            // Keep the designated block an epsilon inside the cone.
            Eigen::MatrixXd shifted =
                st[j].X - settings.interior_floor * Eigen::MatrixXd::Identity(st[j].n, st[j].n);
            Eigen::LLT<Eigen::MatrixXd> ch(shifted);
            sp = ch.info() == Eigen::Success ? max_step_psd(ch, dx) : max_step_psd(cholX[j], dx);
          } else {
            sp = max_step_psd(cholX[j], dx);
          }
          sd = max_step_psd(cholS[j], ds);
        }
        if (sp < amax_p) {
          amax_p = sp;
          limit_p = j;
        }
        if (sd < amax_d) {
          amax_d = sd;
          limit_d = j;
        }
      }
      if (settings.verbosity > 2) {
        std::printf("        limit_p block %d (%s)  limit_d block %d (%s)\n", limit_p,
                    limit_p >= 0 ? problem.blocks[limit_p].name.c_str() : "-", limit_d,
                    limit_d >= 0 ? problem.blocks[limit_d].name.c_str() : "-");
      }
      *ap = std::min(1.0, settings.step_fraction * amax_p);
      *ad = std::min(1.0, settings.step_fraction * amax_d);
    };

    // Predictor: aim straight at the limit target w_j * I.
    for (int j = 0; j < nblocks; ++j) {
      if (st[j].diag) {
        m_d[j] = -(st[j].xd.array() * st[j].sd.array());
      } else {
        M[j].noalias() = -st[j].X * st[j].S;
        if (st[j].w > 0) M[j].diagonal().array() += st[j].w;
      }
    }
    Eigen::VectorXd dy_a, dv_a;
    newton_solve(false, dy_a, dv_a);
    double ap_a, ad_a;
    step_lengths(false, &ap_a, &ad_a);

    // Predicted complementarity after stepping along the corrector buffers.
    auto predicted_nu = [&](bool corrector, double sp, double sd_) {
      double ip = 0.0;
      for (int j = 0; j < nblocks; ++j) {
        if (st[j].diag) {
          const Eigen::VectorXd& ddx = corrector ? dxd[j] : dxad[j];
          const Eigen::VectorXd& dds = corrector ? dsd[j] : dsad[j];
          ip += (st[j].xd + sp * ddx).dot(st[j].sd + sd_ * dds);
        } else {
          const Eigen::MatrixXd& ddx = corrector ? dX[j] : dXa[j];
          const Eigen::MatrixXd& dds = corrector ? dS[j] : dSa[j];
          ip += ((st[j].X + sp * ddx).array() * (st[j].S + sd_ * dds).array()).sum();
        }
      }
      return (ip - wtot) / ntot;
    };

    const double nu_aff = std::max(0.0, predicted_nu(false, ap_a, ad_a));
    const double nu_pos = std::max(nu, 1e-16);
    double sigma = std::pow(std::min(1.0, std::max(0.0, nu_aff / nu_pos)), 3.0);
    sigma = std::min(0.9999, std::max(1e-6, sigma));

    // Complementarity must not outrun feasibility: without interior room the
    // Newton directions turn tangent and the iteration stalls.  Keep the
    // centering target at least proportional to the remaining infeasibility,
    // with the proportionality taken from the initial point.
    double center_target = sigma * nu_pos;
    const double feas_scale = std::max(rp_rel, rd_rel);
    if (path_ratio > 0.0 && feas_scale > settings.tol_feas) {
      const double floor = 0.3 * feas_scale * path_ratio;
      center_target = std::max(center_target, std::min(floor, 100.0 * nu_pos));
    }

    // Corrector.  The Mehrotra second-order term speeds convergence on
    // centered iterates but can blow up badly centered ones, so try it
    // first and fall back to the plain centering right-hand side whenever
    // it predicts worse progress.
    Eigen::VectorXd dy, dv;
    double ap = 0.0, ad = 0.0;
    double best_score = kInf;
    std::vector<Eigen::MatrixXd> bX(nblocks), bS(nblocks);
    std::vector<Eigen::VectorXd> bxd(nblocks), bsd(nblocks);
    for (int use_soc = 1; use_soc >= 0; --use_soc) {
      for (int j = 0; j < nblocks; ++j) {
        const double target = st[j].w + center_target;
        if (st[j].diag) {
          m_d[j] = (target - st[j].xd.array() * st[j].sd.array()).matrix();
          if (use_soc) m_d[j] -= (dxad[j].array() * dsad[j].array()).matrix();
        } else {
          M[j].noalias() = -st[j].X * st[j].S;
          if (use_soc) M[j].noalias() -= dXa[j] * dSa[j];
          M[j].diagonal().array() += target;
        }
      }
      Eigen::VectorXd dy_c, dv_c;
      newton_solve(true, dy_c, dv_c);
      double ap_c, ad_c;
      step_lengths(true, &ap_c, &ad_c);
      const double nu_next = std::abs(predicted_nu(true, ap_c, ad_c));
      const double score = nu_next + nu_pos * (2.0 - ap_c - ad_c) * 0.05;
      if (settings.verbosity > 1) {
        std::printf("      soc %d  sigma %.3e  ap %.3e ad %.3e  nu_next %.3e\n", use_soc, sigma,
                    ap_c, ad_c, nu_next);
      }
      if (score < best_score) {
        best_score = score;
        ap = ap_c;
        ad = ad_c;
        dy = dy_c;
        dv = dv_c;
        for (int j = 0; j < nblocks; ++j) {
          if (st[j].diag) {
            bxd[j] = dxd[j];
            bsd[j] = dsd[j];
          } else {
            bX[j] = dX[j];
            bS[j] = dS[j];
          }
        }
        // A healthy second-order step needs no fallback evaluation.
        if (use_soc == 1 && ap_c > 0.3 && ad_c > 0.3 && nu_next < 0.9 * nu_pos) break;
      }
    }

    if (ap < 1e-10 && ad < 1e-10) {
      if (++stall_count >= 5) {
        return finish_or_infeasible(SolveStatus::NumericalFailure, "step lengths collapsed", iter);
      }
    } else {
      stall_count = 0;
    }

    for (int j = 0; j < nblocks; ++j) {
      if (st[j].diag) {
        st[j].xd += ap * bxd[j];
        st[j].sd += ad * bsd[j];
      } else {
        st[j].X += ap * bX[j];
        st[j].S += ad * bS[j];
        st[j].X = 0.5 * (st[j].X + st[j].X.transpose()).eval();
        st[j].S = 0.5 * (st[j].S + st[j].S.transpose()).eval();
      }
    }
    y += ad * dy;
    if (p > 0) v += ap * dv;
  }

  return finish_or_infeasible(SolveStatus::MaxIter, "iteration limit reached",
                              settings.max_iterations);
}

KktReport check_kkt(const SdpProblem& problem, const SdpSolution& solution) {
  problem.validate();
  const int nblocks = static_cast<int>(problem.blocks.size());
  const int m = static_cast<int>(problem.rows.size());
  const int p = problem.num_free;
  if (static_cast<int>(solution.blocks.size()) != nblocks ||
      static_cast<int>(solution.dual_blocks.size()) != nblocks) {
    throw std::invalid_argument("check_kkt: block count mismatch");
  }
  for (int j = 0; j < nblocks; ++j) {
    if (solution.blocks[j].rows() != problem.blocks[j].size ||
        solution.dual_blocks[j].rows() != problem.blocks[j].size) {
      throw std::invalid_argument("check_kkt: block size mismatch");
    }
  }
  if (solution.duals.size() != m || solution.free_values.size() != p) {
    throw std::invalid_argument("check_kkt: multiplier size mismatch");
  }

  KktReport rep;

  auto entry_dot = [&](const std::vector<BlockEntry>& terms, int block,
                       const Eigen::MatrixXd& X) {
    double acc = 0.0;
    for (const auto& e : terms) {
      if (e.block != block) continue;
      acc += e.value * X(e.row, e.col);
    }
    return acc;
  };

  double bnorm = 0.0;
  double rp_max = 0.0;
  for (int i = 0; i < m; ++i) {
    const LinearRow& row = problem.rows[i];
    double lhs = 0.0;
    for (int j = 0; j < nblocks; ++j) lhs += entry_dot(row.block_terms, j, solution.blocks[j]);
    for (const auto& f : row.free_terms) lhs += f.value * solution.free_values[f.index];
    rp_max = std::max(rp_max, std::abs(lhs - row.rhs));
    bnorm = std::max(bnorm, std::abs(row.rhs));
  }
  rep.primal_residual = rp_max / (1.0 + bnorm);

  // Dual residual per block: C_j - A_j^T(y) - S_j.
  double normC = 0.0;
  double rd_max = 0.0;
  for (int j = 0; j < nblocks; ++j) {
    const int n = problem.blocks[j].size;
    Eigen::MatrixXd R = Eigen::MatrixXd::Zero(n, n);
    auto add_sym = [&](const BlockEntry& e, double scale) {
      const double half = e.row == e.col ? e.value : 0.5 * e.value;
      R(e.row, e.col) += scale * half;
      if (e.row != e.col) R(e.col, e.row) += scale * half;
    };
    for (const auto& e : problem.objective.block_linear) {
      if (e.block == j) add_sym(e, 1.0);
    }
    normC = std::max(normC, R.norm());
    for (int i = 0; i < m; ++i) {
      for (const auto& e : problem.rows[i].block_terms) {
        if (e.block == j) add_sym(e, -solution.duals[i]);
      }
    }
    R -= solution.dual_blocks[j];
    rd_max = std::max(rd_max, R.norm());
  }
  double rf_max = 0.0;
  if (p > 0) {
    Eigen::VectorXd rfv = Eigen::VectorXd::Zero(p);
    for (const auto& f : problem.objective.free_linear) rfv[f.index] += f.value;
    for (int i = 0; i < m; ++i) {
      for (const auto& f : problem.rows[i].free_terms) {
        rfv[f.index] -= f.value * solution.duals[i];
      }
    }
    rf_max = rfv.cwiseAbs().maxCoeff();
  }
  rep.dual_residual = std::max(rd_max / (1.0 + normC), rf_max);

  double compl_max = 0.0;
  double min_eig = kInf;
  for (int j = 0; j < nblocks; ++j) {
    const double w =
        (j == problem.objective.logdet_block) ? problem.objective.logdet_weight : 0.0;
    Eigen::MatrixXd XS = solution.blocks[j] * solution.dual_blocks[j];
    XS.diagonal().array() -= w;
    compl_max = std::max(compl_max, XS.norm() / (1.0 + problem.blocks[j].size));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ex(solution.blocks[j], Eigen::EigenvaluesOnly);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(solution.dual_blocks[j],
                                                      Eigen::EigenvaluesOnly);
    min_eig = std::min({min_eig, ex.eigenvalues().minCoeff(), es.eigenvalues().minCoeff()});
  }
  rep.compl_residual = compl_max;
  rep.min_eigenvalue = min_eig;

  double obj = 0.0;
  for (int j = 0; j < nblocks; ++j) obj += entry_dot(problem.objective.block_linear, j, solution.blocks[j]);
  for (const auto& f : problem.objective.free_linear) obj += f.value * solution.free_values[f.index];
  if (problem.objective.logdet_block >= 0) {
    Eigen::LLT<Eigen::MatrixXd> ch(solution.blocks[problem.objective.logdet_block]);
    if (ch.info() == Eigen::Success) {
      obj -= 2.0 * problem.objective.logdet_weight *
             Eigen::MatrixXd(ch.matrixL()).diagonal().array().log().sum();
    } else {
      obj = kInf;
    }
  }
  rep.objective = obj;
  return rep;
}

}  // namespace reachsos

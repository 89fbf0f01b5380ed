// Block-structured semidefinite programming with linear equalities, free
// scalar variables, and an optional log-determinant objective term on one
// designated PSD block:
//
//   minimize   <C, X> + c^T v  -  w * log det X_L
//   subject to sum_j <A_ij, X_j> + B_i . v = b_i     (i = 1..m)
//              X_j >= 0 (PSD or elementwise for diagonal blocks), v free.
//
// Solved by an infeasible-start primal-dual path-following method.  The
// log-det term is folded into the barrier of the designated block: the
// central-path complementarity target for that block is (w + mu) I instead
// of mu I, so at mu -> 0 the KKT condition S_L = w * X_L^{-1} of the
// determinant-maximization problem holds exactly.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace reachsos {

enum class BlockKind { Psd, Diag };

struct SdpBlockSpec {
  BlockKind kind = BlockKind::Psd;
  int size = 0;
  std::string name;
};

// One coefficient on a symmetric block entry (row <= col).  `value` is the
// total weight multiplying X(row,col) (which equals X(col,row)); the
// equivalent symmetric coefficient matrix carries value/2 in each of the two
// mirrored off-diagonal entries and value on the diagonal.
struct BlockEntry {
  int block = 0;
  int row = 0;
  int col = 0;
  double value = 0.0;
};

struct FreeEntry {
  int index = 0;
  double value = 0.0;
};

struct LinearRow {
  std::vector<BlockEntry> block_terms;
  std::vector<FreeEntry> free_terms;
  double rhs = 0.0;
};

struct SdpObjective {
  std::vector<BlockEntry> block_linear;  // <C, X>
  std::vector<FreeEntry> free_linear;    // c^T v
  int logdet_block = -1;                 // -1: no log-det term
  double logdet_weight = 1.0;
};

struct SdpProblem {
  std::vector<SdpBlockSpec> blocks;
  int num_free = 0;
  std::vector<LinearRow> rows;
  SdpObjective objective;

  void validate() const;  // throws std::invalid_argument on malformed data
};

enum class SolveStatus { Optimal, Infeasible, MaxIter, NumericalFailure };

std::string to_string(SolveStatus status);

struct SolverSettings {
  int max_iterations = 100;
  double tol_feas = 1e-8;         // primal/dual residual tolerance (relative)
  double tol_gap = 1e-8;          // duality gap tolerance (relative)
  double step_fraction = 0.98;    // fraction-to-boundary
  double interior_floor = 1e-9;   // epsilon floor kept on the log-det block
  double init_scale = 0.0;        // 0 = automatic
  int verbosity = 0;
  std::uint64_t seed = 0;         // recorded; the method itself is deterministic
};

struct SdpSolution {
  SolveStatus status = SolveStatus::NumericalFailure;
  std::vector<Eigen::MatrixXd> blocks;       // primal X_j (diag blocks: diagonal matrices)
  std::vector<Eigen::MatrixXd> dual_blocks;  // dual slacks S_j
  Eigen::VectorXd free_values;               // v
  Eigen::VectorXd duals;                     // y, one per row (original row scale)
  double objective = 0.0;                    // primal objective incl. log-det term
  double dual_objective = 0.0;
  double primal_infeas = 0.0;                // relative residuals at exit
  double dual_infeas = 0.0;
  double rel_gap = 0.0;
  double infeasibility_measure = 0.0;        // Farkas certificate strength when Infeasible
  int iterations = 0;
  std::string message;
};

SdpSolution solve(const SdpProblem& problem, const SolverSettings& settings = {});

// Residuals recomputed directly from the problem data, independently of any
// solver internals.
struct KktReport {
  double primal_residual = 0.0;   // ||A(X)+Bv-b||_inf / (1+||b||_inf)
  double dual_residual = 0.0;     // max block ||C_j - A_j^T(y) - S_j||_F / (1+||C||_F), free rows included
  double compl_residual = 0.0;    // max block ||X_j S_j - w_j I||_F / (1 + n_j)
  double min_eigenvalue = 0.0;    // min over all blocks of lambda_min
  double objective = 0.0;
};

KktReport check_kkt(const SdpProblem& problem, const SdpSolution& solution);

}  // namespace reachsos

#pragma once

#include "upca/types.hpp"

#include <functional>
#include <string>
#include <vector>

namespace upca::stage1 {

struct DpcpConfig {
    int max_iter = 1000;
    double eps = 1e-9;       // stop when the objective decrease falls below this
    double delta = 1e-15;    // residual floor in IRLS weights / subgradient guard
    double mu0 = 0.01;       // initial RSGM step size
    double beta = 0.5;       // RSGM step shrink factor
    double mu_floor = 1e-15;
    double stall_factor = 0.001;

    void validate() const;
};

enum class Method { Cop, DpcpIrls, DpcpRsgm };

std::string method_name(Method method);
Method method_from_name(const std::string& name);

struct SubspaceEstimate {
    SubspaceBasis s_hat;
    Method method = Method::Cop;
    int iterations_used = 0;
    double final_objective = 0.0;
    std::vector<double> scores;             // CoP only
    std::vector<double> objective_history;  // DPCP solvers, entry 0 = initialization
};

/// Coherence of each column with the rest of the dataset, computed on
/// unit-normalized columns; zero columns score 0.
Vector cop_scores(const Matrix& x_tilde);

/// Scans columns by decreasing coherence score, greedily keeping those that
/// raise the numerical rank of the kept set, until r independent columns
/// span the estimate. The rank guard is what survives duplicated columns.
SubspaceEstimate cop_subspace(const Matrix& x_tilde, int r);

/// Minimizes sum_j ||B^T x_j|| over orthonormal m x (m-r) B by iteratively
/// reweighted least squares (weights 1/max(delta, ||B^T x_j||), B updated to
/// the bottom eigenvectors of the weighted scatter). The returned subspace
/// is the orthogonal complement of the minimizer. The objective history is
/// monotone nonincreasing; a violation beyond rounding slack throws.
SubspaceEstimate dpcp_irls(const Matrix& x_tilde, int r, const DpcpConfig& cfg = {});

/// Same objective, solved by Riemannian subgradient descent: step of length
/// mu_k along the normalized tangent direction, QR retraction, and mu shrunk
/// by beta only when the objective change stalls below
/// stall_factor * mu_k * ||G||_F. Runs the full iteration cap and returns
/// the best iterate seen.
SubspaceEstimate dpcp_rsgm(const Matrix& x_tilde, int r, const DpcpConfig& cfg = {});

using InnerSolver = std::function<SubspaceEstimate(const Matrix&, int)>;

/// High-ambient-dimension reduction: with X = U S V^T thin, fits the inner
/// solver on U^T X (a min(m,n)-dimensional problem) and embeds the estimate
/// back through U.
SubspaceEstimate project_reduce(const Matrix& x_tilde, const InnerSolver& inner, int r);

}  // namespace upca::stage1

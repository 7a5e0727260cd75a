#pragma once

#include "upca/types.hpp"

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace upca::stage2 {

enum class Method { Lsrf, L1rr, SortingEm, BruteForce };

std::string method_name(Method method);
Method method_from_name(const std::string& name);

struct RestorationResult {
    Vector x_hat;      // always basis * theta_hat
    Vector theta_hat;  // coefficients in the supplied basis
    // LSRF: removed coordinates; l1-RR: support of the corruption estimate e;
    // sorting-EM / brute force: moved coordinates of the best permutation.
    std::vector<int> support;
    // ||x - Pi x_hat|| when a permutation is produced, the final least-squares
    // residual norm otherwise (l1-RR records its composite objective).
    double objective = 0.0;
    Method method = Method::Lsrf;
    int iterations_used = 0;
    std::vector<double> objective_history;
};

struct OutlierReport {
    std::vector<double> residual_fractions;  // ||x_j - proj_S(x_j)|| / ||x_j||
    double threshold = 0.05;
    std::vector<int> outlier_indices;  // exactly { j : fraction_j > threshold }
};

/// Flags columns whose relative projection residual exceeds the threshold;
/// zero-norm columns count as inliers.
OutlierReport detect_outliers(const Matrix& x_tilde, const SubspaceBasis& s_hat,
                              double threshold = 0.05);

/// Thrown by lsrf when the surviving r x r system is rank-deficient; carries
/// the last well-posed solution (from the r+1 surviving rows) as a fallback.
struct DegenerateFiltration : std::runtime_error {
    explicit DegenerateFiltration(RestorationResult last_good)
        : std::runtime_error("degenerate-filtration"), fallback(std::move(last_good)) {}
    RestorationResult fallback;
};

/// Least Squares with Recursive Filtration: repeatedly solve on the active
/// coordinates and drop the one with the largest absolute residual (ties go
/// to the smallest index) until r coordinates survive, then solve the square
/// system on the survivors. Parameter-free.
RestorationResult lsrf(const Vector& x, const SubspaceBasis& basis);

/// l1 robust regression: min over (theta, e) of
/// (1/2m)||x - B theta - e||^2 + lambda ||e||_1, solved by exact alternating
/// minimization (least squares in theta, soft threshold at lambda*m in e).
RestorationResult l1_rr(const Vector& x, const SubspaceBasis& basis, double lambda);

/// The lambda default used by the experiment harness:
/// 0.01 sqrt(log(n)/n) / sqrt(m), with n the number of dataset columns and
/// m the ambient dimension. The calibration this follows scales the
/// corruption variable by sqrt(sample count); dividing by sqrt(m) maps it
/// into this solver's normalization. The lambda*m threshold that plain
/// 0.01 sqrt(log(n)/n) would give over-shrinks every corrupted entry by
/// ~0.06 here, an order of magnitude above the noise floor.
double default_l1rr_lambda(int n_columns, int m_rows);

/// Alternating minimization over (permutation, coefficients) with the
/// permutation step solved exactly by sorting. First restart starts from the
/// plain least-squares solution, the rest from Gaussian coefficients; keeps
/// the restart with the smallest objective.
RestorationResult sorting_em(const Vector& x, const SubspaceBasis& basis, int restarts,
                             int max_iter, std::uint64_t seed);

/// Exact oracle: enumerates all m! permutations (m <= 8) and returns the
/// global minimizer, ties broken by lexicographically smallest image.
RestorationResult brute_force_slr(const Vector& x, const SubspaceBasis& basis);

struct RestoreOptions {
    Method method = Method::Lsrf;
    double threshold = 0.05;
    std::optional<double> lambda;  // l1-RR; default derived from column count
    int restarts = 20;
    int max_iter = 1000;
    std::uint64_t seed = 0;
    bool project_inliers = true;  // false = pass inlier columns through
};

struct RestoreOutcome {
    Matrix x_hat;
    OutlierReport report;
};

/// Detected outlier columns are replaced by the solver's estimate; inlier
/// columns are projected onto the subspace (or passed through).
RestoreOutcome restore_matrix(const Matrix& x_tilde, const SubspaceBasis& s_hat,
                              const RestoreOptions& options);

double relative_frobenius_error(const Matrix& estimate, const Matrix& truth);

}  // namespace upca::stage2

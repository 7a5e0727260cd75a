#pragma once

#include "upca/datagen.hpp"
#include "upca/types.hpp"

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace upca::theory {

/// sums[l-1] = sum_i x_i^l for l = 1..length, accumulated pairwise.
struct PowerSumSignature {
    std::vector<double> sums;
    int length() const { return int(sums.size()); }
};

PowerSumSignature power_sums(const Vector& x, int max_degree);

/// True iff the first m power sums agree within tol scaled per degree by
/// m * max(1, ||x||_inf)^l; equivalent to multiset equality of the entries.
bool multisets_equal_via_power_sums(const Vector& x1, const Vector& x2,
                                    double tol = 1e-8);

/// One column-permutation tuple: entry j is the image vector applied to
/// column j (position i moves to image[i]).
using PermutationTuple = std::vector<std::vector<int>>;

struct RankIdentifiabilityReport {
    long long total_tuples_checked = 0;
    int min_rank_found = 0;
    std::vector<PermutationTuple> equality_tuples;  // tuples reaching rank r
    bool all_equality_tuples_are_global = false;
    std::vector<PermutationTuple> counterexamples;  // rank-r tuples that are
                                                    // not a global row permutation
    // Auditability margins: how decisively rank-r tuples sit below the
    // threshold and rank-exceeding tuples above it (ratios sigma_{r+1}/sigma_1).
    double worst_equality_margin = 0.0;
    double best_excess_margin = std::numeric_limits<double>::infinity();

    bool passed() const {
        return all_equality_tuples_are_global && !equality_tuples.empty();
    }
};

/// Exhaustively permutes every column independently ((m!)^n tuples, guarded
/// at 1e6), asserting rank >= r throughout and checking that each rank-r
/// tuple equals one global row permutation of x_star.
RankIdentifiabilityReport verify_rank_identifiability(const Matrix& x_star, int r);

/// Rank-r factorization with the identity occupying the top r x r block of b.
struct Factorization {
    Matrix b;  // m x r, top block bit-equal to the identity
    Matrix c;  // r x n
};

/// Unique canonical factorization of a rank-r matrix whose column space
/// survives projection onto the first r coordinates; throws
/// "projection-drops-dimension" otherwise.
Factorization canonical_factorization(const Matrix& x, int r);

/// residual(l-1, j) = sum_i (b_i^T c_j)^l - sum_i x_ij^l for l = 1..m.
Matrix power_sum_residual(const Factorization& fact, const Matrix& x_tilde);

/// max over (l, j) of |residual| / max(1, sum_i |x_ij|^l, sum_i |(bc)_ij|^l).
double max_scaled_power_sum_residual(const Factorization& fact, const Matrix& x_tilde);

struct UnlabeledFactorization {
    PermutationTuple tuple;
    Factorization fact;
};

struct EnumerationResult {
    std::vector<UnlabeledFactorization> distinct;  // deduplicated, scan order
    long long tuples_scanned = 0;
    long long tuples_within_rank = 0;
    std::vector<PermutationTuple> canonical_failures;  // top minor singular
};

/// Scans every permutation tuple, keeps those with numerical rank <= r, and
/// canonically factors them; factorizations equal within 1e-8 (scaled) are
/// merged. Same (m!)^n <= 1e6 guard as verify_rank_identifiability.
EnumerationResult enumerate_unlabeled_factorizations(const Matrix& x_tilde, int r);

struct SlmfResult {
    bool is_slmf = false;
    bool equality_at_full = false;
    std::optional<std::vector<int>> violating_rows;  // first failing row set
};

/// Checks, for every row subset I with |I| >= r+1, that
/// sum_j max(|omega_j ∩ I| - r, 0) <= |I| - r, with equality at I = [m].
/// Exhaustive over 2^m subsets; m is guarded at 22.
SlmfResult is_relaxed_slmf(const datagen::ObservationPattern& pattern, int r);

struct UmcSubPattern {
    std::vector<int> columns;                // indices into the original pattern
    std::vector<std::vector<int>> omegas;    // chosen subsets, aligned with columns
};

struct UmcWitness {
    std::vector<std::vector<int>> groups;    // partition of [n] into r groups
    std::vector<UmcSubPattern> sub_patterns; // one contained witness per group
};

struct UmcResult {
    bool satisfied = false;
    std::string reason;
    std::optional<UmcWitness> witness;
};

/// Checks |omega_j| >= r for all j and searches for a partition of the
/// columns into r groups, each containing a sub-pattern (subset of columns,
/// subset of each omega_j) that is a relaxed SLMF. Guards: n <= 12, m <= 22.
UmcResult check_umc_hypothesis(const datagen::ObservationPattern& pattern, int r);

/// Per-column residuals of the pattern-supported power-sum system:
/// entry [j][l-1] = sum_{i in omega_j} (b_i^T c_j)^l - sum_{i in omega_j} x_ij^l
/// for l = 1..|omega_j|.
std::vector<std::vector<double>> omega_power_sum_residual(
    const Factorization& fact, const Matrix& x_tilde,
    const datagen::ObservationPattern& pattern);

double max_scaled_omega_residual(const Factorization& fact, const Matrix& x_tilde,
                                 const datagen::ObservationPattern& pattern);

/// (r(m+n-r), mn); also checks the bookkeeping identity
/// (m-r)r + rn = r(m+n-r).
std::pair<long long, long long> degrees_of_freedom(int m, int n, int r);

}  // namespace upca::theory

#include "upca/theory.hpp"

#include "upca/kernels.hpp"
#include "upca/numerics.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace upca::theory {

PowerSumSignature power_sums(const Vector& x, int max_degree) {
    if (max_degree < 1) throw std::invalid_argument("power_sums: max_degree >= 1");
    PowerSumSignature signature;
    signature.sums.resize(static_cast<std::size_t>(max_degree));
    Vector powers = Vector::Ones(x.size());
    for (int degree = 1; degree <= max_degree; ++degree) {
        powers = powers.cwiseProduct(x);
        signature.sums[static_cast<std::size_t>(degree - 1)] = kernels::pairwise_sum(powers);
    }
    return signature;
}

bool multisets_equal_via_power_sums(const Vector& x1, const Vector& x2, double tol) {
    if (x1.size() != x2.size())
        throw std::invalid_argument("multisets_equal_via_power_sums: length mismatch");
    const int m = int(x1.size());
    if (m == 0) return true;
    const auto p1 = power_sums(x1, m);
    const auto p2 = power_sums(x2, m);
    const double base =
        std::max({1.0, x1.cwiseAbs().maxCoeff(), x2.cwiseAbs().maxCoeff()});
    double scale = double(m);
    for (int degree = 1; degree <= m; ++degree) {
        scale *= base;  // m * base^degree
        if (std::abs(p1.sums[static_cast<std::size_t>(degree - 1)] - p2.sums[static_cast<std::size_t>(degree - 1)]) >
            tol * scale)
            return false;
    }
    return true;
}

namespace {

long long factorial(int m) {
    long long f = 1;
    for (int i = 2; i <= m; ++i) f *= i;
    return f;
}

std::vector<std::vector<int>> all_permutations(int m) {
    std::vector<int> image(static_cast<std::size_t>(m));
    std::iota(image.begin(), image.end(), 0);
    std::vector<std::vector<int>> perms;
    perms.reserve(static_cast<std::size_t>(factorial(m)));
    do {
        perms.push_back(image);
    } while (std::next_permutation(image.begin(), image.end()));
    return perms;
}

long long checked_tuple_count(int m, int n) {
    if (m > 9 || n < 1)  // 10! alone already exceeds the guard
        throw std::invalid_argument("enumeration guard: (m!)^n exceeds 1e6");
    const long long per_column = factorial(m);
    long long total = 1;
    for (int j = 0; j < n; ++j) {
        total *= per_column;
        if (total > 1000000)
            throw std::invalid_argument("enumeration guard: (m!)^n exceeds 1e6");
    }
    return total;
}

// Decode a tuple index into per-column permutation choices (base m! digits).
void decode_tuple(long long index, long long per_column, int n, std::vector<int>& digits) {
    for (int j = 0; j < n; ++j) {
        digits[static_cast<std::size_t>(j)] = int(index % per_column);
        index /= per_column;
    }
}

void build_permuted(const Matrix& x, const std::vector<std::vector<int>>& perms,
                    const std::vector<int>& digits, Matrix& out) {
    for (Index j = 0; j < x.cols(); ++j) {
        const auto& image = perms[static_cast<std::size_t>(digits[static_cast<std::size_t>(j)])];
        for (Index i = 0; i < x.rows(); ++i) out(image[static_cast<std::size_t>(i)], j) = x(i, j);
    }
}

PermutationTuple tuple_from_digits(const std::vector<std::vector<int>>& perms,
                                   const std::vector<int>& digits) {
    PermutationTuple tuple;
    tuple.reserve(digits.size());
    for (int digit : digits) tuple.push_back(perms[static_cast<std::size_t>(digit)]);
    return tuple;
}

// Row-matching check: does y equal one single global row permutation of x?
bool is_global_row_permutation(const Matrix& y, const Matrix& x, double abs_tol) {
    const Index m = x.rows();
    std::vector<int> match(static_cast<std::size_t>(m), -1);
    std::vector<bool> used(static_cast<std::size_t>(m), false);
    for (Index i = 0; i < m; ++i) {
        for (Index t = 0; t < m; ++t) {
            if (used[static_cast<std::size_t>(t)]) continue;
            if ((y.row(t) - x.row(i)).cwiseAbs().maxCoeff() <= abs_tol) {
                match[static_cast<std::size_t>(i)] = int(t);
                used[static_cast<std::size_t>(t)] = true;
                break;
            }
        }
        if (match[static_cast<std::size_t>(i)] < 0) return false;
    }
    return true;
}

}  // namespace

RankIdentifiabilityReport verify_rank_identifiability(const Matrix& x_star, int r) {
    const int m = int(x_star.rows());
    const int n = int(x_star.cols());
    const long long total = checked_tuple_count(m, n);
    if (numerics::numerical_rank(x_star) != r)
        throw std::invalid_argument("verify_rank_identifiability: numerical_rank(x_star) != r");

    const auto perms = all_permutations(m);
    const long long per_column = static_cast<long long>(perms.size());
    const double abs_tol = 1e-9 * std::max(1.0, x_star.cwiseAbs().maxCoeff());

    RankIdentifiabilityReport report;
    report.total_tuples_checked = total;
    report.min_rank_found = std::min(m, n);

    struct Partial {
        int min_rank;
        std::vector<PermutationTuple> equality;
        std::vector<PermutationTuple> counter;
        double worst_equality_margin = 0.0;
        double best_excess_margin = std::numeric_limits<double>::infinity();
    };

    constexpr long long kChunk = 4096;
    const long long chunks = (total + kChunk - 1) / kChunk;
    std::vector<Partial> parts(static_cast<std::size_t>(chunks));

#pragma omp parallel for schedule(dynamic)
    for (long long chunk = 0; chunk < chunks; ++chunk) {
        Partial part;
        part.min_rank = std::min(m, n);
        Matrix permuted(m, n);
        std::vector<int> digits(static_cast<std::size_t>(n));
        const long long hi = std::min(total, (chunk + 1) * kChunk);
        for (long long index = chunk * kChunk; index < hi; ++index) {
            decode_tuple(index, per_column, n, digits);
            build_permuted(x_star, perms, digits, permuted);
            const Vector sigma = numerics::singular_values(permuted);
            const double cut = 1e-9 * sigma[0];
            int rank = 0;
            for (Index k = 0; k < sigma.size(); ++k)
                if (sigma[k] > cut) ++rank;
            part.min_rank = std::min(part.min_rank, rank);
            const double margin =
                Index(r) < sigma.size() ? sigma[r] / std::max(sigma[0], 1e-300) : 0.0;
            if (rank == r) {
                part.worst_equality_margin = std::max(part.worst_equality_margin, margin);
                auto tuple = tuple_from_digits(perms, digits);
                if (!is_global_row_permutation(permuted, x_star, abs_tol))
                    part.counter.push_back(tuple);
                part.equality.push_back(std::move(tuple));
            } else if (rank > r) {
                part.best_excess_margin = std::min(part.best_excess_margin, margin);
            }
        }
        parts[static_cast<std::size_t>(chunk)] = std::move(part);
    }

    for (auto& part : parts) {
        report.min_rank_found = std::min(report.min_rank_found, part.min_rank);
        report.worst_equality_margin =
            std::max(report.worst_equality_margin, part.worst_equality_margin);
        report.best_excess_margin =
            std::min(report.best_excess_margin, part.best_excess_margin);
        for (auto& tuple : part.equality) report.equality_tuples.push_back(std::move(tuple));
        for (auto& tuple : part.counter) report.counterexamples.push_back(std::move(tuple));
    }
    if (report.min_rank_found < r)
        throw std::runtime_error("verify_rank_identifiability: found a tuple of rank below r");
    report.all_equality_tuples_are_global = report.counterexamples.empty();
    return report;
}

Factorization canonical_factorization(const Matrix& x, int r) {
    const Index m = x.rows();
    if (r < 1 || r > m) throw std::invalid_argument("canonical_factorization: bad r");
    const auto svd = numerics::thin_svd(x);
    const Matrix basis = svd.u.leftCols(r);
    const Matrix top = basis.topRows(r);
    if (numerics::numerical_rank(top) < r)
        throw std::runtime_error(
            "projection-drops-dimension: top r x r block is singular");

    Factorization fact;
    fact.b = basis * top.inverse();
    fact.b.topRows(r) = Matrix::Identity(r, r);  // exact canonical form
    const numerics::LeastSquaresSolver solver(fact.b);
    fact.c.resize(r, x.cols());
    for (Index j = 0; j < x.cols(); ++j) fact.c.col(j) = solver.solve(x.col(j));
    return fact;
}

Matrix power_sum_residual(const Factorization& fact, const Matrix& x_tilde) {
    const Index m = x_tilde.rows();
    const Index n = x_tilde.cols();
    if (fact.b.rows() != m || fact.c.cols() != n || fact.b.cols() != fact.c.rows())
        throw std::invalid_argument("power_sum_residual: dimension mismatch");
    const Matrix reconstruction = fact.b * fact.c;
    Matrix residual(m, n);
    for (Index j = 0; j < n; ++j) {
        const auto lhs = power_sums(reconstruction.col(j), int(m));
        const auto rhs = power_sums(x_tilde.col(j), int(m));
        for (Index degree = 0; degree < m; ++degree)
            residual(degree, j) =
                lhs.sums[static_cast<std::size_t>(degree)] - rhs.sums[static_cast<std::size_t>(degree)];
    }
    return residual;
}

double max_scaled_power_sum_residual(const Factorization& fact, const Matrix& x_tilde) {
    const Index m = x_tilde.rows();
    const Matrix reconstruction = fact.b * fact.c;
    const Matrix residual = power_sum_residual(fact, x_tilde);
    double worst = 0.0;
    for (Index j = 0; j < x_tilde.cols(); ++j) {
        const auto data_abs = power_sums(x_tilde.col(j).cwiseAbs(), int(m));
        const auto fit_abs = power_sums(reconstruction.col(j).cwiseAbs(), int(m));
        for (Index degree = 0; degree < m; ++degree) {
            const double scale = std::max({1.0, data_abs.sums[static_cast<std::size_t>(degree)],
                                           fit_abs.sums[static_cast<std::size_t>(degree)]});
            worst = std::max(worst, std::abs(residual(degree, j)) / scale);
        }
    }
    return worst;
}

EnumerationResult enumerate_unlabeled_factorizations(const Matrix& x_tilde, int r) {
    const int m = int(x_tilde.rows());
    const int n = int(x_tilde.cols());
    const long long total = checked_tuple_count(m, n);
    const auto perms = all_permutations(m);
    const long long per_column = static_cast<long long>(perms.size());

    EnumerationResult result;
    result.tuples_scanned = total;

    Matrix permuted(m, n);
    std::vector<int> digits(static_cast<std::size_t>(n));

    auto same_factorization = [](const Factorization& a, const Factorization& b) {
        const double tol_b =
            1e-8 * std::max({1.0, a.b.cwiseAbs().maxCoeff(), b.b.cwiseAbs().maxCoeff()});
        const double tol_c =
            1e-8 * std::max({1.0, a.c.cwiseAbs().maxCoeff(), b.c.cwiseAbs().maxCoeff()});
        return (a.b - b.b).cwiseAbs().maxCoeff() <= tol_b &&
               (a.c - b.c).cwiseAbs().maxCoeff() <= tol_c;
    };

    for (long long index = 0; index < total; ++index) {
        decode_tuple(index, per_column, n, digits);
        build_permuted(x_tilde, perms, digits, permuted);
        if (numerics::numerical_rank(permuted) > r) continue;
        ++result.tuples_within_rank;
        Factorization fact;
        try {
            fact = canonical_factorization(permuted, r);
        } catch (const std::runtime_error&) {
            result.canonical_failures.push_back(tuple_from_digits(perms, digits));
            continue;
        }
        bool duplicate = false;
        for (const auto& known : result.distinct) {
            if (same_factorization(known.fact, fact)) {
                duplicate = true;
                break;
            }
        }
        if (!duplicate)
            result.distinct.push_back({tuple_from_digits(perms, digits), std::move(fact)});
    }
    return result;
}

namespace {

std::uint32_t omega_mask(const std::vector<int>& omega) {
    std::uint32_t mask = 0;
    for (int i : omega) mask |= std::uint32_t(1) << i;
    return mask;
}

std::vector<int> mask_to_rows(std::uint32_t mask) {
    std::vector<int> rows;
    for (int i = 0; i < 32; ++i)
        if (mask & (std::uint32_t(1) << i)) rows.push_back(i);
    return rows;
}

SlmfResult slmf_from_masks(const std::vector<std::uint32_t>& omegas, int m, int r) {
    SlmfResult result;
    const std::uint32_t full = (std::uint32_t(1) << m) - 1;  // m <= 22, no overflow

    long long full_excess = 0;
    for (auto omega : omegas)
        full_excess += std::max(int(std::popcount(omega)) - r, 0);
    result.equality_at_full = (full_excess == m - r);

    for (std::uint32_t subset = 0; subset <= full; ++subset) {
        const int size = int(std::popcount(subset));
        if (size < r + 1) continue;
        long long excess = 0;
        for (auto omega : omegas)
            excess += std::max(int(std::popcount(omega & subset)) - r, 0);
        if (excess > size - r) {
            result.violating_rows = mask_to_rows(subset);
            result.is_slmf = false;
            return result;
        }
    }
    result.is_slmf = result.equality_at_full;
    return result;
}

}  // namespace

SlmfResult is_relaxed_slmf(const datagen::ObservationPattern& pattern, int r) {
    if (r < 1) throw std::invalid_argument("is_relaxed_slmf: r >= 1");
    if (pattern.m > 22) throw std::invalid_argument("is_relaxed_slmf: m > 22 guard");
    pattern.validate();
    std::vector<std::uint32_t> masks;
    masks.reserve(pattern.omegas.size());
    for (const auto& omega : pattern.omegas) masks.push_back(omega_mask(omega));
    return slmf_from_masks(masks, pattern.m, r);
}

namespace {

// Sub-pattern search: can a subset of the given columns, with per-column
// coordinate subsets of size >= r+1, reach total excess m-r while staying a
// relaxed SLMF? Zero-excess columns never help, so they are skipped outright.
struct ContainmentSearch {
    const std::vector<std::uint32_t>& omegas;
    int m;
    int r;
    std::vector<std::uint32_t> chosen_masks;
    std::vector<int> chosen_columns;

    bool search(std::size_t next, int needed) {
        if (needed == 0) {
            const auto verdict = slmf_from_masks(chosen_masks, m, r);
            return verdict.is_slmf;
        }
        if (next == omegas.size()) return false;

        // Remaining achievable excess bound.
        long long available = 0;
        for (std::size_t j = next; j < omegas.size(); ++j)
            available += std::max(int(std::popcount(omegas[j])) - r, 0);
        if (available < needed) return false;

        // Option 1: use column `next` with some subset of size r + excess.
        const std::uint32_t omega = omegas[next];
        const int budget = std::min(int(std::popcount(omega)) - r, needed);
        for (int excess = budget; excess >= 1; --excess) {
            const bool found = enumerate_subsets(omega, r + excess, [&](std::uint32_t sub) {
                chosen_masks.push_back(sub);
                chosen_columns.push_back(int(next));
                if (search(next + 1, needed - excess)) return true;
                chosen_masks.pop_back();
                chosen_columns.pop_back();
                return false;
            });
            if (found) return true;
        }
        // Option 2: skip column `next`.
        return search(next + 1, needed);
    }

    // Calls fn on every `take`-subset of mask until fn returns true.
    template <typename Fn>
    static bool enumerate_subsets(std::uint32_t mask, int take, Fn&& fn) {
        std::vector<int> bits = mask_to_rows(mask);
        const int n_bits = int(bits.size());
        if (take > n_bits) return false;
        std::vector<int> pick(static_cast<std::size_t>(take));
        std::iota(pick.begin(), pick.end(), 0);
        while (true) {
            std::uint32_t sub = 0;
            for (int p : pick) sub |= std::uint32_t(1) << bits[static_cast<std::size_t>(p)];
            if (fn(sub)) return true;
            int cursor = take - 1;
            while (cursor >= 0 && pick[static_cast<std::size_t>(cursor)] == n_bits - take + cursor)
                --cursor;
            if (cursor < 0) return false;
            ++pick[static_cast<std::size_t>(cursor)];
            for (int p = cursor + 1; p < take; ++p)
                pick[static_cast<std::size_t>(p)] = pick[static_cast<std::size_t>(p - 1)] + 1;
        }
    }
};

}  // namespace

UmcResult check_umc_hypothesis(const datagen::ObservationPattern& pattern, int r) {
    if (pattern.n > 12 || pattern.m > 22)
        throw std::invalid_argument("check_umc_hypothesis: guards are n <= 12, m <= 22");
    if (r < 1) throw std::invalid_argument("check_umc_hypothesis: r >= 1");
    pattern.validate();

    UmcResult result;
    for (int j = 0; j < pattern.n; ++j) {
        if (int(pattern.omegas[static_cast<std::size_t>(j)].size()) < r) {
            result.reason = "column " + std::to_string(j + 1) + " observes fewer than r rows";
            return result;
        }
    }
    if (pattern.n < r) {
        result.reason = "fewer columns than groups required";
        return result;
    }

    std::vector<std::uint32_t> masks;
    for (const auto& omega : pattern.omegas) masks.push_back(omega_mask(omega));

    // Memoized per-group containment over column subsets; the groups of any
    // partition are drawn from at most 2^n masks.
    const std::uint32_t all_columns = (std::uint32_t(1) << pattern.n) - 1;
    std::vector<signed char> contains(static_cast<std::size_t>(all_columns) + 1, -1);
    std::vector<UmcSubPattern> witness_for(static_cast<std::size_t>(all_columns) + 1);

    auto group_contains_slmf = [&](std::uint32_t group) {
        signed char& memo = contains[group];
        if (memo >= 0) return memo == 1;
        std::vector<std::uint32_t> group_masks;
        std::vector<int> group_columns;
        for (int j = 0; j < pattern.n; ++j) {
            if (group & (std::uint32_t(1) << j)) {
                group_masks.push_back(masks[static_cast<std::size_t>(j)]);
                group_columns.push_back(j);
            }
        }
        // Shortcut: one fully observed column is already a witness.
        const std::uint32_t full_rows = (std::uint32_t(1) << pattern.m) - 1;
        for (std::size_t k = 0; k < group_masks.size(); ++k) {
            if (group_masks[k] == full_rows && pattern.m >= r) {
                UmcSubPattern sub;
                sub.columns = {group_columns[k]};
                sub.omegas = {mask_to_rows(full_rows)};
                witness_for[group] = std::move(sub);
                memo = 1;
                return true;
            }
        }
        ContainmentSearch search{group_masks, pattern.m, r, {}, {}};
        if (search.search(0, pattern.m - r)) {
            UmcSubPattern sub;
            for (std::size_t k = 0; k < search.chosen_columns.size(); ++k) {
                sub.columns.push_back(group_columns[static_cast<std::size_t>(search.chosen_columns[k])]);
                sub.omegas.push_back(mask_to_rows(search.chosen_masks[k]));
            }
            witness_for[group] = std::move(sub);
            memo = 1;
            return true;
        }
        memo = 0;
        return false;
    };

    // Partition [n] into exactly r nonempty groups that all contain a
    // relaxed SLMF: subset DP over column masks.
    // dp[k] = set of masks coverable by k good blocks; store predecessor block.
    std::vector<std::vector<signed char>> dp(
        static_cast<std::size_t>(r) + 1, std::vector<signed char>(static_cast<std::size_t>(all_columns) + 1, 0));
    std::vector<std::vector<std::uint32_t>> pred(
        static_cast<std::size_t>(r) + 1, std::vector<std::uint32_t>(static_cast<std::size_t>(all_columns) + 1, 0));
    dp[0][0] = 1;
    for (int k = 1; k <= r; ++k) {
        for (std::uint32_t mask = 1; mask <= all_columns; ++mask) {
            if (int(std::popcount(mask)) < k) continue;
            // Fix the block containing the lowest set column to avoid
            // enumerating permutations of the same partition.
            const std::uint32_t low = mask & (~mask + 1);
            for (std::uint32_t sub = mask; sub; sub = (sub - 1) & mask) {
                if (!(sub & low)) continue;
                if (!dp[static_cast<std::size_t>(k - 1)][mask ^ sub]) continue;
                if (!group_contains_slmf(sub)) continue;
                dp[static_cast<std::size_t>(k)][mask] = 1;
                pred[static_cast<std::size_t>(k)][mask] = sub;
                break;
            }
        }
    }

    if (!dp[static_cast<std::size_t>(r)][all_columns]) {
        result.reason = "no partition into r groups each containing a relaxed SLMF";
        return result;
    }

    UmcWitness witness;
    std::uint32_t remaining = all_columns;
    for (int k = r; k >= 1; --k) {
        const std::uint32_t block = pred[static_cast<std::size_t>(k)][remaining];
        witness.groups.push_back(mask_to_rows(block));
        witness.sub_patterns.push_back(witness_for[block]);
        remaining ^= block;
    }
    std::reverse(witness.groups.begin(), witness.groups.end());
    std::reverse(witness.sub_patterns.begin(), witness.sub_patterns.end());
    result.satisfied = true;
    result.witness = std::move(witness);
    return result;
}

std::vector<std::vector<double>> omega_power_sum_residual(
    const Factorization& fact, const Matrix& x_tilde,
    const datagen::ObservationPattern& pattern) {
    if (int(x_tilde.rows()) != pattern.m || int(x_tilde.cols()) != pattern.n)
        throw std::invalid_argument("omega_power_sum_residual: shape mismatch");
    pattern.validate();
    const Matrix reconstruction = fact.b * fact.c;
    std::vector<std::vector<double>> residuals(static_cast<std::size_t>(pattern.n));
    for (int j = 0; j < pattern.n; ++j) {
        const auto& omega = pattern.omegas[static_cast<std::size_t>(j)];
        const int degrees = int(omega.size());
        if (degrees == 0) continue;
        Vector data(degrees), fit(degrees);
        for (int k = 0; k < degrees; ++k) {
            data[k] = x_tilde(omega[static_cast<std::size_t>(k)], j);
            fit[k] = reconstruction(omega[static_cast<std::size_t>(k)], j);
        }
        const auto lhs = power_sums(fit, degrees);
        const auto rhs = power_sums(data, degrees);
        auto& column = residuals[static_cast<std::size_t>(j)];
        column.resize(static_cast<std::size_t>(degrees));
        for (int degree = 0; degree < degrees; ++degree)
            column[static_cast<std::size_t>(degree)] =
                lhs.sums[static_cast<std::size_t>(degree)] - rhs.sums[static_cast<std::size_t>(degree)];
    }
    return residuals;
}

double max_scaled_omega_residual(const Factorization& fact, const Matrix& x_tilde,
                                 const datagen::ObservationPattern& pattern) {
    const Matrix reconstruction = fact.b * fact.c;
    const auto residuals = omega_power_sum_residual(fact, x_tilde, pattern);
    double worst = 0.0;
    for (int j = 0; j < pattern.n; ++j) {
        const auto& omega = pattern.omegas[static_cast<std::size_t>(j)];
        const int degrees = int(omega.size());
        if (degrees == 0) continue;
        Vector data(degrees), fit(degrees);
        for (int k = 0; k < degrees; ++k) {
            data[k] = std::abs(x_tilde(omega[static_cast<std::size_t>(k)], j));
            fit[k] = std::abs(reconstruction(omega[static_cast<std::size_t>(k)], j));
        }
        const auto data_abs = power_sums(data, degrees);
        const auto fit_abs = power_sums(fit, degrees);
        for (int degree = 0; degree < degrees; ++degree) {
            const double scale = std::max({1.0, data_abs.sums[static_cast<std::size_t>(degree)],
                                           fit_abs.sums[static_cast<std::size_t>(degree)]});
            worst = std::max(
                worst, std::abs(residuals[static_cast<std::size_t>(j)][static_cast<std::size_t>(degree)]) / scale);
        }
    }
    return worst;
}

std::pair<long long, long long> degrees_of_freedom(int m, int n, int r) {
    if (r < 1 || r >= std::min(m, n))
        throw std::invalid_argument("degrees_of_freedom: need 1 <= r < min(m,n)");
    const long long variety_dim = (long long)(r) * (m + n - r);
    const long long equations = (long long)(m)*n;
    const long long unknowns = (long long)(m - r) * r + (long long)(r)*n;
    if (unknowns != variety_dim)
        throw std::logic_error("degrees_of_freedom: bookkeeping identity failed");
    return {variety_dim, equations};
}

}  // namespace upca::theory

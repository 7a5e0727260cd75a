#include "upca/stage2.hpp"

#include "upca/numerics.hpp"
#include "upca/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace upca::stage2 {

std::string method_name(Method method) {
    switch (method) {
        case Method::Lsrf: return "lsrf";
        case Method::L1rr: return "l1rr";
        case Method::SortingEm: return "em";
        case Method::BruteForce: return "brute";
    }
    throw std::logic_error("method_name");
}

Method method_from_name(const std::string& name) {
    if (name == "lsrf") return Method::Lsrf;
    if (name == "l1rr") return Method::L1rr;
    if (name == "em") return Method::SortingEm;
    if (name == "brute") return Method::BruteForce;
    throw std::invalid_argument("unknown stage-2 method: " + name);
}

OutlierReport detect_outliers(const Matrix& x_tilde, const SubspaceBasis& s_hat,
                              double threshold) {
    if (threshold <= 0.0 || threshold >= 1.0)
        throw std::invalid_argument("detect_outliers: threshold in (0,1)");
    if (x_tilde.rows() != s_hat.ambient_dim())
        throw std::invalid_argument("detect_outliers: dimension mismatch");
    OutlierReport report;
    report.threshold = threshold;
    report.residual_fractions.resize(static_cast<std::size_t>(x_tilde.cols()));
    for (Index j = 0; j < x_tilde.cols(); ++j) {
        const double norm = x_tilde.col(j).norm();
        double fraction = 0.0;
        if (norm > 0.0)
            fraction = numerics::project_onto(s_hat, x_tilde.col(j)).residual_norm / norm;
        report.residual_fractions[static_cast<std::size_t>(j)] = fraction;
        if (fraction > threshold) report.outlier_indices.push_back(int(j));
    }
    return report;
}

RestorationResult lsrf(const Vector& x, const SubspaceBasis& basis) {
    const Index m = basis.ambient_dim();
    const Index r = basis.dim();
    if (x.size() != m) throw std::invalid_argument("lsrf: dimension mismatch");
    if (m <= r) throw std::invalid_argument("lsrf: need m > r");

    std::vector<int> active(static_cast<std::size_t>(m));
    std::iota(active.begin(), active.end(), 0);
    std::vector<int> removed;

    auto solve_on = [&](const std::vector<int>& rows) {
        Matrix sub(Index(rows.size()), r);
        Vector rhs(Index(rows.size()));
        for (Index k = 0; k < Index(rows.size()); ++k) {
            sub.row(k) = basis.basis.row(rows[static_cast<std::size_t>(k)]);
            rhs[k] = x[rows[static_cast<std::size_t>(k)]];
        }
        return std::pair<Matrix, Vector>(std::move(sub), std::move(rhs));
    };

    Vector theta;
    while (Index(active.size()) > r) {
        auto [sub, rhs] = solve_on(active);
        theta = numerics::least_squares(sub, rhs);
        const Vector residual = (sub * theta - rhs).cwiseAbs();
        Index worst = 0;
        for (Index k = 1; k < residual.size(); ++k)
            if (residual[k] > residual[worst]) worst = k;  // ties: smallest index
        removed.push_back(active[static_cast<std::size_t>(worst)]);
        active.erase(active.begin() + worst);
    }

    // Final refit on the surviving square system.
    auto [square, rhs] = solve_on(active);
    if (numerics::numerical_rank(square) < r) {
        RestorationResult last_good;
        last_good.theta_hat = theta;
        last_good.x_hat = basis.basis * theta;
        last_good.support = removed;
        last_good.support.pop_back();
        last_good.method = Method::Lsrf;
        // fallback objective: residual of the last well-posed solve (r+1 rows)
        std::vector<int> previous = active;
        previous.push_back(removed.back());
        std::sort(previous.begin(), previous.end());
        auto [prev_sub, prev_rhs] = solve_on(previous);
        last_good.objective = (prev_sub * theta - prev_rhs).norm();
        throw DegenerateFiltration(std::move(last_good));
    }
    theta = numerics::least_squares(square, rhs);

    RestorationResult result;
    result.theta_hat = theta;
    result.x_hat = basis.basis * theta;
    result.support = std::move(removed);
    result.objective = (square * theta - rhs).norm();
    result.method = Method::Lsrf;
    result.iterations_used = int(m - r);
    return result;
}

double default_l1rr_lambda(int n_columns, int m_rows) {
    if (n_columns < 2 || m_rows < 1)
        throw std::invalid_argument("default_l1rr_lambda: need n >= 2 and m >= 1");
    return 0.01 * std::sqrt(std::log(double(n_columns)) / double(n_columns)) /
           std::sqrt(double(m_rows));
}

RestorationResult l1_rr(const Vector& x, const SubspaceBasis& basis, double lambda) {
    if (lambda <= 0.0) throw std::invalid_argument("l1_rr: lambda > 0 required");
    const Index m = basis.ambient_dim();
    if (x.size() != m) throw std::invalid_argument("l1_rr: dimension mismatch");

    const double threshold = lambda * double(m);
    const numerics::LeastSquaresSolver solver(basis.basis);
    auto soft = [&](double v) {
        if (v > threshold) return v - threshold;
        if (v < -threshold) return v + threshold;
        return 0.0;
    };
    auto objective_of = [&](const Vector& theta, const Vector& e) {
        const double quad = (x - basis.basis * theta - e).squaredNorm() / (2.0 * double(m));
        return quad + lambda * e.lpNorm<1>();
    };

    Vector e = Vector::Zero(m);
    Vector theta = solver.solve(x);
    RestorationResult result;
    result.method = Method::L1rr;
    result.objective_history.push_back(objective_of(theta, e));

    constexpr int kMaxIter = 10000;
    int iterations = 0;
    for (int k = 1; k <= kMaxIter; ++k) {
        const Vector z = x - basis.basis * theta;
        for (Index i = 0; i < m; ++i) e[i] = soft(z[i]);
        const Vector theta_next = solver.solve(x - e);
        const double step = (theta_next - theta).norm();
        theta = theta_next;
        result.objective_history.push_back(objective_of(theta, e));
        iterations = k;
        if (step <= 1e-10 * (1.0 + theta.norm())) break;
    }

    result.theta_hat = theta;
    result.x_hat = basis.basis * theta;
    for (Index i = 0; i < m; ++i)
        if (e[i] != 0.0) result.support.push_back(int(i));
    result.objective = objective_of(theta, e);
    result.iterations_used = iterations;
    return result;
}

namespace {

// Permutation image pairing sorted entries of x with sorted entries of y:
// the exact minimizer of ||x - P y|| over all permutation matrices.
std::vector<int> sorting_match(const Vector& x, const Vector& y) {
    const Index m = x.size();
    std::vector<int> by_x(static_cast<std::size_t>(m)), by_y(static_cast<std::size_t>(m));
    std::iota(by_x.begin(), by_x.end(), 0);
    std::iota(by_y.begin(), by_y.end(), 0);
    std::stable_sort(by_x.begin(), by_x.end(),
                     [&](int a, int b) { return x[a] < x[b]; });
    std::stable_sort(by_y.begin(), by_y.end(),
                     [&](int a, int b) { return y[a] < y[b]; });
    // image[i] = destination of position i of y
    std::vector<int> image(static_cast<std::size_t>(m));
    for (Index k = 0; k < m; ++k)
        image[static_cast<std::size_t>(by_y[static_cast<std::size_t>(k)])] = by_x[static_cast<std::size_t>(k)];
    return image;
}

std::vector<int> permutation_support(const std::vector<int>& image) {
    std::vector<int> moved;
    for (int i = 0; i < int(image.size()); ++i)
        if (image[static_cast<std::size_t>(i)] != i) moved.push_back(i);
    return moved;
}

}  // namespace

RestorationResult sorting_em(const Vector& x, const SubspaceBasis& basis, int restarts,
                             int max_iter, std::uint64_t seed) {
    if (restarts < 1) throw std::invalid_argument("sorting_em: restarts >= 1");
    if (max_iter < 1) throw std::invalid_argument("sorting_em: max_iter >= 1");
    const Index m = basis.ambient_dim();
    const Index r = basis.dim();
    if (x.size() != m) throw std::invalid_argument("sorting_em: dimension mismatch");

    const numerics::LeastSquaresSolver solver(basis.basis);

    RestorationResult best;
    best.method = Method::SortingEm;
    double best_objective = std::numeric_limits<double>::infinity();

    for (int restart = 0; restart < restarts; ++restart) {
        Vector theta;
        if (restart == 0) {
            theta = solver.solve(x);
        } else {
            Rng rng(derive_seed(seed, std::uint64_t(restart)));
            theta.resize(r);
            for (Index k = 0; k < r; ++k) theta[k] = rng.gaussian();
        }

        std::vector<int> image;
        std::vector<double> history;
        int iterations = 0;
        for (int k = 1; k <= max_iter; ++k) {
            const Vector y = basis.basis * theta;
            std::vector<int> next_image = sorting_match(x, y);
            // theta step: ||x - P B theta|| = ||P^T x - B theta||
            Vector unpermuted(m);
            for (Index i = 0; i < m; ++i) unpermuted[i] = x[next_image[static_cast<std::size_t>(i)]];
            theta = solver.solve(unpermuted);
            const Vector fitted = basis.basis * theta;
            Vector permuted(m);
            for (Index i = 0; i < m; ++i) permuted[next_image[static_cast<std::size_t>(i)]] = fitted[i];
            history.push_back((x - permuted).norm());
            iterations = k;
            const bool stable = (next_image == image);
            image = std::move(next_image);
            if (stable) break;
        }

        const double objective = history.back();
        if (objective < best_objective) {
            best_objective = objective;
            best.theta_hat = theta;
            best.x_hat = basis.basis * theta;
            best.support = permutation_support(image);
            best.objective = objective;
            best.iterations_used = iterations;
            best.objective_history = std::move(history);
        }
    }
    return best;
}

RestorationResult brute_force_slr(const Vector& x, const SubspaceBasis& basis) {
    const Index m = basis.ambient_dim();
    if (x.size() != m) throw std::invalid_argument("brute_force_slr: dimension mismatch");
    if (m > 8) throw std::invalid_argument("brute_force_slr: m > 8 exceeds the m! guard");

    const numerics::LeastSquaresSolver solver(basis.basis);

    std::vector<int> image(static_cast<std::size_t>(m));
    std::iota(image.begin(), image.end(), 0);

    RestorationResult best;
    best.method = Method::BruteForce;
    double best_objective = std::numeric_limits<double>::infinity();

    // Lexicographic enumeration; strict improvement keeps the first minimizer.
    do {
        Vector unpermuted(m);
        for (Index i = 0; i < m; ++i) unpermuted[i] = x[image[static_cast<std::size_t>(i)]];
        const Vector theta = solver.solve(unpermuted);
        const Vector fitted = basis.basis * theta;
        Vector permuted(m);
        for (Index i = 0; i < m; ++i) permuted[image[static_cast<std::size_t>(i)]] = fitted[i];
        const double objective = (x - permuted).norm();
        if (objective < best_objective) {
            best_objective = objective;
            best.theta_hat = theta;
            best.x_hat = basis.basis * theta;
            best.support = permutation_support(image);
            best.objective = objective;
        }
    } while (std::next_permutation(image.begin(), image.end()));

    return best;
}

RestoreOutcome restore_matrix(const Matrix& x_tilde, const SubspaceBasis& s_hat,
                              const RestoreOptions& options) {
    const Index n = x_tilde.cols();
    RestoreOutcome outcome;
    outcome.report = detect_outliers(x_tilde, s_hat, options.threshold);
    outcome.x_hat = x_tilde;

    std::vector<bool> is_outlier(static_cast<std::size_t>(n), false);
    for (int j : outcome.report.outlier_indices) is_outlier[static_cast<std::size_t>(j)] = true;

    const double lambda =
        options.lambda ? *options.lambda : default_l1rr_lambda(int(n), int(x_tilde.rows()));

    std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
    for (Index j = 0; j < n; ++j) {
        try {
            if (!is_outlier[static_cast<std::size_t>(j)]) {
                if (options.project_inliers)
                    outcome.x_hat.col(j) =
                        numerics::project_onto(s_hat, x_tilde.col(j)).projection;
                continue;
            }
            RestorationResult restored;
            switch (options.method) {
                case Method::Lsrf:
                    restored = lsrf(x_tilde.col(j), s_hat);
                    break;
                case Method::L1rr:
                    restored = l1_rr(x_tilde.col(j), s_hat, lambda);
                    break;
                case Method::SortingEm:
                    restored = sorting_em(x_tilde.col(j), s_hat, options.restarts,
                                          options.max_iter,
                                          derive_seed(options.seed, std::uint64_t(j)));
                    break;
                case Method::BruteForce:
                    restored = brute_force_slr(x_tilde.col(j), s_hat);
                    break;
            }
            outcome.x_hat.col(j) = restored.x_hat;
        } catch (...) {
#pragma omp critical
            if (!failure) failure = std::current_exception();
        }
    }
    if (failure) std::rethrow_exception(failure);
    return outcome;
}

double relative_frobenius_error(const Matrix& estimate, const Matrix& truth) {
    const double scale = truth.norm();
    if (scale == 0.0) throw std::invalid_argument("relative_frobenius_error: zero truth");
    return (estimate - truth).norm() / scale;
}

}  // namespace upca::stage2

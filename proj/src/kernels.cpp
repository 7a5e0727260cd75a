#include "upca/kernels.hpp"

#include <omp.h>

#include <vector>

namespace upca::kernels {

namespace {

// Chunk width is a fixed constant, never a function of the thread count;
// that is what makes the parallel reductions thread-count invariant.
constexpr Index kChunk = 64;

Index chunk_count(Index n) { return (n + kChunk - 1) / kChunk; }

// Reduce chunk partials in a fixed pairwise tree.
template <typename T>
T pairwise_reduce(std::vector<T>& parts, Index lo, Index hi) {
    if (hi - lo == 1) return std::move(parts[lo]);
    const Index mid = lo + (hi - lo) / 2;
    T left = pairwise_reduce(parts, lo, mid);
    T right = pairwise_reduce(parts, mid, hi);
    left += right;
    return left;
}

}  // namespace

double pairwise_sum(const double* x, std::size_t n) {
    if (n == 0) return 0.0;
    if (n <= 32) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += x[i];
        return acc;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(x, half) + pairwise_sum(x + half, n - half);
}

double pairwise_sum(const Vector& x) {
    return pairwise_sum(x.data(), static_cast<std::size_t>(x.size()));
}

Matrix weighted_scatter_serial(const Matrix& x, const Vector& w) {
    const Index m = x.rows();
    Matrix scatter = Matrix::Zero(m, m);
    for (Index j = 0; j < x.cols(); ++j)
        scatter.selfadjointView<Eigen::Lower>().rankUpdate(x.col(j), w[j]);
    return scatter.selfadjointView<Eigen::Lower>();
}

Matrix weighted_scatter(const Matrix& x, const Vector& w) {
    const Index m = x.rows();
    const Index n = x.cols();
    if (n == 0) return Matrix::Zero(m, m);
    const Index chunks = chunk_count(n);
    std::vector<Matrix> parts(static_cast<std::size_t>(chunks));
#pragma omp parallel for schedule(static)
    for (Index c = 0; c < chunks; ++c) {
        Matrix acc = Matrix::Zero(m, m);
        const Index hi = std::min(n, (c + 1) * kChunk);
        for (Index j = c * kChunk; j < hi; ++j)
            acc.selfadjointView<Eigen::Lower>().rankUpdate(x.col(j), w[j]);
        parts[static_cast<std::size_t>(c)] = std::move(acc);
    }
    Matrix scatter = pairwise_reduce(parts, 0, chunks);
    return scatter.selfadjointView<Eigen::Lower>();
}

namespace {

// Shared per-column term so the serial and parallel objective agree bitwise.
double column_objective_term(const Matrix& x, const Matrix& b, Index j) {
    return (b.transpose() * x.col(j)).norm();
}

}  // namespace

double l12_objective_serial(const Matrix& x, const Matrix& b) {
    Vector terms(x.cols());
    for (Index j = 0; j < x.cols(); ++j) terms[j] = column_objective_term(x, b, j);
    return pairwise_sum(terms);
}

double l12_objective(const Matrix& x, const Matrix& b) {
    Vector terms(x.cols());
#pragma omp parallel for schedule(static)
    for (Index j = 0; j < x.cols(); ++j) terms[j] = column_objective_term(x, b, j);
    return pairwise_sum(terms);
}

Matrix dpcp_subgradient_serial(const Matrix& x, const Matrix& b, double delta) {
    Matrix grad = Matrix::Zero(b.rows(), b.cols());
    for (Index j = 0; j < x.cols(); ++j) {
        const Vector proj = b.transpose() * x.col(j);
        const double norm = proj.norm();
        if (norm < delta) continue;
        grad.noalias() += x.col(j) * (proj / norm).transpose();
    }
    return grad;
}

Matrix dpcp_subgradient(const Matrix& x, const Matrix& b, double delta) {
    const Index n = x.cols();
    if (n == 0) return Matrix::Zero(b.rows(), b.cols());
    const Index chunks = chunk_count(n);
    std::vector<Matrix> parts(static_cast<std::size_t>(chunks));
#pragma omp parallel for schedule(static)
    for (Index c = 0; c < chunks; ++c) {
        Matrix acc = Matrix::Zero(b.rows(), b.cols());
        const Index hi = std::min(n, (c + 1) * kChunk);
        for (Index j = c * kChunk; j < hi; ++j) {
            const Vector proj = b.transpose() * x.col(j);
            const double norm = proj.norm();
            if (norm < delta) continue;
            acc.noalias() += x.col(j) * (proj / norm).transpose();
        }
        parts[static_cast<std::size_t>(c)] = std::move(acc);
    }
    return pairwise_reduce(parts, 0, chunks);
}

namespace {

double coherence_term(const Matrix& normalized, Index j) {
    const Index n = normalized.cols();
    Vector sq(n);
    for (Index k = 0; k < n; ++k) {
        if (k == j) {
            sq[k] = 0.0;
            continue;
        }
        const double dot = normalized.col(k).dot(normalized.col(j));
        sq[k] = dot * dot;
    }
    return std::sqrt(pairwise_sum(sq));
}

}  // namespace

Vector coherence_norms_serial(const Matrix& normalized) {
    Vector scores(normalized.cols());
    for (Index j = 0; j < normalized.cols(); ++j)
        scores[j] = coherence_term(normalized, j);
    return scores;
}

Vector coherence_norms(const Matrix& normalized) {
    Vector scores(normalized.cols());
#pragma omp parallel for schedule(static)
    for (Index j = 0; j < normalized.cols(); ++j)
        scores[j] = coherence_term(normalized, j);
    return scores;
}

}  // namespace upca::kernels

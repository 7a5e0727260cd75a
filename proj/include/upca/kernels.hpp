#pragma once

#include "upca/types.hpp"

#include <cstddef>

namespace upca::kernels {

// Data-parallel inner loops, each in two flavours:
//   *_serial  - plain reference loop, kept for tests and benchmarks;
//   unsuffixed - OpenMP version over fixed-width column chunks reduced in
//                a fixed pairwise order, so the result is bit-identical for
//                any thread count (including one).

/// Pairwise (tree) summation; error grows like O(log n) instead of O(n).
double pairwise_sum(const double* x, std::size_t n);
double pairwise_sum(const Vector& x);

/// sum_j w_j x_j x_j^T for the columns x_j of X.
Matrix weighted_scatter_serial(const Matrix& x, const Vector& w);
Matrix weighted_scatter(const Matrix& x, const Vector& w);

/// sum_j ||B^T x_j||_2 (column-wise L1/L2 norm of B^T X).
double l12_objective_serial(const Matrix& x, const Matrix& b);
double l12_objective(const Matrix& x, const Matrix& b);

/// sum_j x_j (B^T x_j)^T / ||B^T x_j||_2, dropping columns with
/// ||B^T x_j|| < delta where the objective is non-smooth.
Matrix dpcp_subgradient_serial(const Matrix& x, const Matrix& b, double delta);
Matrix dpcp_subgradient(const Matrix& x, const Matrix& b, double delta);

/// Per-column coherence norms ||N_{-j}^T n_j||_2 of a column-normalized N.
Vector coherence_norms_serial(const Matrix& normalized);
Vector coherence_norms(const Matrix& normalized);

}  // namespace upca::kernels

#pragma once

#include "upca/types.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace upca::numerics {

struct ThinSvdResult {
    Matrix u;                // m x k, orthonormal columns
    Vector singular_values;  // length k = min(m, n), nonincreasing
    Matrix v;                // n x k, orthonormal columns
};

/// Thin SVD with a fixed sign convention: the first nonzero entry of every
/// left singular vector is nonnegative, so repeated runs are bit-stable.
ThinSvdResult thin_svd(const Matrix& x);

/// Singular values only (no vectors); same ordering guarantees.
Vector singular_values(const Matrix& x);

/// Count of singular values above rel_tol * sigma_1; 0 for the zero matrix.
int numerical_rank(const Matrix& x, double rel_tol = 1e-9);

/// Principal angles in radians, ascending. Cosines are clamped to [0, 1]
/// before acos so floating-point overshoot cannot produce NaN.
std::vector<double> principal_angles(const SubspaceBasis& a, const SubspaceBasis& b);
double max_principal_angle(const SubspaceBasis& a, const SubspaceBasis& b);

/// Minimum-norm least-squares solution via the SVD pseudoinverse
/// (singular values below 1e-9 * sigma_1 are treated as zero).
Vector least_squares(const Matrix& a, const Vector& b);

/// Reusable pseudoinverse for repeated solves against a fixed matrix.
class LeastSquaresSolver {
public:
    explicit LeastSquaresSolver(const Matrix& a, double rel_tol = 1e-9);
    Vector solve(const Vector& b) const;

private:
    Matrix u_, v_;
    Vector inv_sigma_;
};

struct Projection {
    Vector projection;
    double residual_norm;
};

Projection project_onto(const SubspaceBasis& s, const Vector& x);

/// Thin-QR orthonormalization with the R diagonal forced nonnegative.
Matrix orthonormalize(const Matrix& a);

/// Orthonormal basis of the orthogonal complement of an orthonormal m x c
/// matrix; result is m x (m - c).
Matrix orthonormal_complement(const Matrix& b);

// Matrix text format: first line "rows cols", then one line per row of
// space-separated entries printed with 17 significant digits, which
// round-trips doubles exactly. Indices in this format are 1-based.
void write_matrix_text(const Matrix& x, std::ostream& out);
void write_matrix_text(const Matrix& x, const std::string& path);
Matrix read_matrix_text(std::istream& in, const std::string& name = "<stream>");
Matrix read_matrix_text(const std::string& path);

}  // namespace upca::numerics

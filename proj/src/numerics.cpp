#include "upca/numerics.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace upca::numerics {

namespace {

void apply_sign_convention(Matrix& u, Matrix& v) {
    for (Index k = 0; k < u.cols(); ++k) {
        double lead = 0.0;
        for (Index i = 0; i < u.rows(); ++i) {
            if (u(i, k) != 0.0) {
                lead = u(i, k);
                break;
            }
        }
        if (lead < 0.0) {
            u.col(k) = -u.col(k);
            v.col(k) = -v.col(k);
        }
    }
}

}  // namespace

ThinSvdResult thin_svd(const Matrix& x) {
    require_finite(x, "thin_svd");
    Eigen::JacobiSVD<Matrix> svd(x, Eigen::ComputeThinU | Eigen::ComputeThinV);
    ThinSvdResult result{svd.matrixU(), svd.singularValues(), svd.matrixV()};
    if (!result.u.allFinite() || !result.singular_values.allFinite() ||
        !result.v.allFinite())
        throw std::runtime_error("thin_svd: decomposition did not converge");
    apply_sign_convention(result.u, result.v);
    return result;
}

Vector singular_values(const Matrix& x) {
    require_finite(x, "singular_values");
    Eigen::JacobiSVD<Matrix> svd(x);
    if (!svd.singularValues().allFinite())
        throw std::runtime_error("singular_values: decomposition did not converge");
    return svd.singularValues();
}

int numerical_rank(const Matrix& x, double rel_tol) {
    if (rel_tol <= 0.0 || rel_tol >= 1.0)
        throw std::invalid_argument("numerical_rank: rel_tol must be in (0,1)");
    const Vector sigma = singular_values(x);
    if (sigma.size() == 0 || sigma[0] == 0.0) return 0;
    const double cut = rel_tol * sigma[0];
    int rank = 0;
    for (Index i = 0; i < sigma.size(); ++i)
        if (sigma[i] > cut) ++rank;
    return rank;
}

std::vector<double> principal_angles(const SubspaceBasis& a, const SubspaceBasis& b) {
    if (a.ambient_dim() != b.ambient_dim() || a.dim() != b.dim())
        throw std::invalid_argument("principal_angles: dimension mismatch");
    const Vector sigma = singular_values(a.basis.transpose() * b.basis);
    std::vector<double> angles(static_cast<std::size_t>(sigma.size()));
    for (Index k = 0; k < sigma.size(); ++k)
        angles[static_cast<std::size_t>(k)] = std::acos(std::clamp(sigma[k], 0.0, 1.0));
    std::sort(angles.begin(), angles.end());
    return angles;
}

double max_principal_angle(const SubspaceBasis& a, const SubspaceBasis& b) {
    return principal_angles(a, b).back();
}

Vector least_squares(const Matrix& a, const Vector& b) {
    if (a.rows() != b.size())
        throw std::invalid_argument("least_squares: dimension mismatch");
    return LeastSquaresSolver(a).solve(b);
}

LeastSquaresSolver::LeastSquaresSolver(const Matrix& a, double rel_tol) {
    Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    u_ = svd.matrixU();
    v_ = svd.matrixV();
    const Vector& sigma = svd.singularValues();
    inv_sigma_ = Vector::Zero(sigma.size());
    const double cut = sigma.size() > 0 ? rel_tol * sigma[0] : 0.0;
    for (Index i = 0; i < sigma.size(); ++i)
        if (sigma[i] > cut) inv_sigma_[i] = 1.0 / sigma[i];
}

Vector LeastSquaresSolver::solve(const Vector& b) const {
    return v_ * inv_sigma_.cwiseProduct(u_.transpose() * b);
}

Projection project_onto(const SubspaceBasis& s, const Vector& x) {
    if (x.size() != s.ambient_dim())
        throw std::invalid_argument("project_onto: dimension mismatch");
    Vector projection = s.basis * (s.basis.transpose() * x);
    const double residual = (x - projection).norm();
    return {std::move(projection), residual};
}

Matrix orthonormalize(const Matrix& a) {
    const Index k = a.cols();
    Eigen::HouseholderQR<Matrix> qr(a);
    Matrix q = qr.householderQ() * Matrix::Identity(a.rows(), k);
    const Matrix r = qr.matrixQR().topRows(k).triangularView<Eigen::Upper>();
    for (Index j = 0; j < k; ++j)
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    return q;
}

Matrix orthonormal_complement(const Matrix& b) {
    const Index m = b.rows();
    const Index c = b.cols();
    if (c >= m) throw std::invalid_argument("orthonormal_complement: no room left");
    Eigen::HouseholderQR<Matrix> qr(b);
    const Matrix full_q = qr.householderQ() * Matrix::Identity(m, m);
    return full_q.rightCols(m - c);
}

void write_matrix_text(const Matrix& x, std::ostream& out) {
    out << x.rows() << ' ' << x.cols() << '\n';
    char buffer[64];
    for (Index i = 0; i < x.rows(); ++i) {
        for (Index j = 0; j < x.cols(); ++j) {
            std::snprintf(buffer, sizeof buffer, "%.17g", x(i, j));
            if (j) out << ' ';
            out << buffer;
        }
        out << '\n';
    }
}

void write_matrix_text(const Matrix& x, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    write_matrix_text(x, out);
    if (!out) throw std::runtime_error("write failed: " + path);
}

namespace {

[[noreturn]] void parse_fail(const std::string& name, int line, const std::string& why) {
    throw std::runtime_error(name + ":" + std::to_string(line) + ": " + why);
}

}  // namespace

Matrix read_matrix_text(std::istream& in, const std::string& name) {
    std::string line;
    int line_no = 0;
    if (!std::getline(in, line)) parse_fail(name, 1, "empty input, expected 'rows cols'");
    ++line_no;
    std::istringstream header(line);
    long long rows = 0, cols = 0;
    if (!(header >> rows >> cols) || rows < 1 || cols < 1)
        parse_fail(name, line_no, "expected 'rows cols' with positive integers");
    Matrix x(rows, cols);
    for (long long i = 0; i < rows; ++i) {
        if (!std::getline(in, line))
            parse_fail(name, line_no + 1, "unexpected end of input, expected row " +
                                              std::to_string(i + 1));
        ++line_no;
        std::istringstream row(line);
        for (long long j = 0; j < cols; ++j) {
            double value;
            if (!(row >> value))
                parse_fail(name, line_no,
                           "expected " + std::to_string(cols) + " entries in row " +
                               std::to_string(i + 1));
            x(i, j) = value;
        }
        double extra;
        if (row >> extra)
            parse_fail(name, line_no, "trailing entries in row " + std::to_string(i + 1));
    }
    if (!x.allFinite()) parse_fail(name, line_no, "non-finite entry");
    return x;
}

Matrix read_matrix_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path);
    return read_matrix_text(in, path);
}

}  // namespace upca::numerics

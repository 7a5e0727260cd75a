#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace upca {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline void require_finite(const Matrix& x, const char* what) {
    if (!x.allFinite())
        throw std::invalid_argument(std::string(what) + ": non-finite entries");
}

inline void require_finite(const Vector& x, const char* what) {
    if (!x.allFinite())
        throw std::invalid_argument(std::string(what) + ": non-finite entries");
}

/// Orthonormal m x r basis of an r-dimensional subspace of R^m.
/// Construction rejects anything whose Gram matrix strays from the identity
/// by more than 1e-10.
struct SubspaceBasis {
    Matrix basis;

    SubspaceBasis() = default;

    explicit SubspaceBasis(Matrix b) : basis(std::move(b)) {
        if (basis.rows() < 1 || basis.cols() < 1 || basis.cols() > basis.rows())
            throw std::invalid_argument("SubspaceBasis: need 1 <= dim <= ambient_dim");
        require_finite(basis, "SubspaceBasis");
        const Matrix gram = basis.transpose() * basis;
        const Matrix eye = Matrix::Identity(basis.cols(), basis.cols());
        if ((gram - eye).cwiseAbs().maxCoeff() > 1e-10)
            throw std::invalid_argument("SubspaceBasis: columns not orthonormal");
    }

    Index ambient_dim() const { return basis.rows(); }
    Index dim() const { return basis.cols(); }
};

}  // namespace upca

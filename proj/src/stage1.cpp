#include "upca/stage1.hpp"

#include "upca/kernels.hpp"
#include "upca/numerics.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace upca::stage1 {

void DpcpConfig::validate() const {
    if (max_iter < 1 || eps <= 0.0 || delta <= 0.0 || mu0 <= 0.0 || mu_floor <= 0.0 ||
        stall_factor <= 0.0 || beta <= 0.0 || beta >= 1.0)
        throw std::invalid_argument("DpcpConfig: all parameters positive, beta in (0,1)");
}

std::string method_name(Method method) {
    switch (method) {
        case Method::Cop: return "cop";
        case Method::DpcpIrls: return "dpcp_irls";
        case Method::DpcpRsgm: return "dpcp_rsgm";
    }
    throw std::logic_error("method_name");
}

Method method_from_name(const std::string& name) {
    if (name == "cop") return Method::Cop;
    if (name == "dpcp_irls") return Method::DpcpIrls;
    if (name == "dpcp_rsgm") return Method::DpcpRsgm;
    throw std::invalid_argument("unknown stage-1 method: " + name);
}

Vector cop_scores(const Matrix& x_tilde) {
    if (x_tilde.cols() < 2) throw std::invalid_argument("cop_scores: need n >= 2");
    require_finite(x_tilde, "cop_scores");
    Matrix normalized = x_tilde;
    for (Index j = 0; j < normalized.cols(); ++j) {
        const double norm = normalized.col(j).norm();
        if (norm > 0.0) normalized.col(j) /= norm;
    }
    return kernels::coherence_norms(normalized);
}

SubspaceEstimate cop_subspace(const Matrix& x_tilde, int r) {
    const Index m = x_tilde.rows();
    if (r < 1 || r >= m) throw std::invalid_argument("cop_subspace: need 1 <= r < m");
    const Vector scores = cop_scores(x_tilde);

    std::vector<Index> order(static_cast<std::size_t>(x_tilde.cols()));
    std::iota(order.begin(), order.end(), Index(0));
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return scores[a] > scores[b]; });

    Matrix kept(m, r);
    int kept_count = 0;
    for (Index j : order) {
        if (kept_count == r) break;
        kept.col(kept_count) = x_tilde.col(j);
        if (numerics::numerical_rank(kept.leftCols(kept_count + 1)) == kept_count + 1)
            ++kept_count;
    }
    if (kept_count < r)
        throw std::runtime_error("cop_subspace: fewer than r independent columns");

    SubspaceEstimate estimate;
    estimate.s_hat = SubspaceBasis(numerics::orthonormalize(kept));
    estimate.method = Method::Cop;
    estimate.scores.assign(scores.data(), scores.data() + scores.size());
    return estimate;
}

namespace {

// Bottom c left singular vectors of X; both DPCP solvers start here.
Matrix svd_complement_init(const Matrix& x, Index c) {
    Eigen::JacobiSVD<Matrix> svd(x, Eigen::ComputeFullU);
    return svd.matrixU().rightCols(c);
}

void check_orthonormal_iterate(const Matrix& b, int iteration) {
    const Matrix gram = b.transpose() * b;
    const Matrix eye = Matrix::Identity(b.cols(), b.cols());
    if ((gram - eye).cwiseAbs().maxCoeff() > 1e-10)
        throw std::runtime_error("dpcp: iterate " + std::to_string(iteration) +
                                 " lost orthonormality");
}

void check_finite_objective(double value, int iteration) {
    if (!std::isfinite(value))
        throw std::runtime_error("dpcp: non-finite objective at iteration " +
                                 std::to_string(iteration));
}

}  // namespace

SubspaceEstimate dpcp_irls(const Matrix& x_tilde, int r, const DpcpConfig& cfg) {
    cfg.validate();
    const Index m = x_tilde.rows();
    const Index n = x_tilde.cols();
    if (r < 1 || r >= m) throw std::invalid_argument("dpcp_irls: need 1 <= r < m");
    require_finite(x_tilde, "dpcp_irls");
    const Index c = m - r;

    Matrix b = svd_complement_init(x_tilde, c);
    double objective = kernels::l12_objective(x_tilde, b);
    check_finite_objective(objective, 0);

    SubspaceEstimate estimate;
    estimate.method = Method::DpcpIrls;
    estimate.objective_history.push_back(objective);

    int iterations = 0;
    Vector weights(n);
    for (int k = 1; k <= cfg.max_iter; ++k) {
        for (Index j = 0; j < n; ++j) {
            const double residual = (b.transpose() * x_tilde.col(j)).norm();
            weights[j] = 1.0 / std::max(cfg.delta, residual);
        }
        const Matrix scatter = kernels::weighted_scatter(x_tilde, weights);
        Eigen::SelfAdjointEigenSolver<Matrix> eig(scatter);
        if (eig.info() != Eigen::Success)
            throw std::runtime_error("dpcp_irls: eigendecomposition failed at iteration " +
                                     std::to_string(k));
        b = eig.eigenvectors().leftCols(c);  // ascending eigenvalues: bottom c
        check_orthonormal_iterate(b, k);

        const double next = kernels::l12_objective(x_tilde, b);
        check_finite_objective(next, k);
        // Once residuals sink below delta the weights saturate at 1/delta and
        // the eigensolver wobbles at rounding scale; a wobble is a stall (the
        // stop rule below catches it), only a genuine increase is an error.
        if (next > objective + 1e-6 * (1.0 + objective))
            throw std::runtime_error("dpcp_irls: objective increased at iteration " +
                                     std::to_string(k));
        estimate.objective_history.push_back(next);
        iterations = k;
        const double decrease = objective - next;
        if (decrease >= 0.0) objective = next;
        if (decrease < cfg.eps) break;
    }

    estimate.s_hat = SubspaceBasis(numerics::orthonormal_complement(b));
    estimate.iterations_used = iterations;
    estimate.final_objective = objective;
    return estimate;
}

SubspaceEstimate dpcp_rsgm(const Matrix& x_tilde, int r, const DpcpConfig& cfg) {
    cfg.validate();
    const Index m = x_tilde.rows();
    if (r < 1 || r >= m) throw std::invalid_argument("dpcp_rsgm: need 1 <= r < m");
    require_finite(x_tilde, "dpcp_rsgm");
    const Index c = m - r;

    Matrix b = svd_complement_init(x_tilde, c);
    double objective = kernels::l12_objective(x_tilde, b);
    check_finite_objective(objective, 0);

    SubspaceEstimate estimate;
    estimate.method = Method::DpcpRsgm;
    estimate.objective_history.push_back(objective);

    Matrix best_b = b;
    double best_objective = objective;
    double mu = cfg.mu0;
    int iterations = 0;

    for (int k = 1; k <= cfg.max_iter; ++k) {
        const Matrix grad = kernels::dpcp_subgradient(x_tilde, b, cfg.delta);
        const double grad_norm = grad.norm();
        if (grad_norm == 0.0) break;  // stationary: every column annihilated

        // Riemannian direction: project onto the Stiefel tangent space at b,
        // then take a step of length mu along the unit direction. An
        // unnormalized step keeps |dJ| pinned near mu*|G|^2 and the stall
        // rule below never fires, so the schedule would never decay.
        const Matrix btg = b.transpose() * grad;
        Matrix direction = grad - b * (0.5 * (btg + btg.transpose()));
        const double direction_norm = direction.norm();
        if (direction_norm == 0.0) break;  // fixed point of the retraction
        b = numerics::orthonormalize(b - (mu / direction_norm) * direction);
        check_orthonormal_iterate(b, k);

        const double next = kernels::l12_objective(x_tilde, b);
        check_finite_objective(next, k);
        estimate.objective_history.push_back(next);
        iterations = k;

        if (std::abs(next - objective) < cfg.stall_factor * mu * grad_norm)
            mu = std::max(cfg.beta * mu, cfg.mu_floor);
        objective = next;
        if (next < best_objective) {
            best_objective = next;
            best_b = b;
        }
    }

    estimate.s_hat = SubspaceBasis(numerics::orthonormal_complement(best_b));
    estimate.iterations_used = iterations;
    estimate.final_objective = best_objective;
    return estimate;
}

SubspaceEstimate project_reduce(const Matrix& x_tilde, const InnerSolver& inner, int r) {
    const auto svd = numerics::thin_svd(x_tilde);
    const Matrix reduced = svd.u.transpose() * x_tilde;
    SubspaceEstimate estimate = inner(reduced, r);
    estimate.s_hat = SubspaceBasis(svd.u * estimate.s_hat.basis);
    return estimate;
}

}  // namespace upca::stage1

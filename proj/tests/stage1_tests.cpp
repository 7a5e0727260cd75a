#include "upca/stage1.hpp"

#include "upca/datagen.hpp"
#include "upca/numerics.hpp"

#include "doctest.h"
#include "oracles.hpp"

#include <chrono>
#include <cmath>

using namespace upca;
using oracles::gaussian_matrix;

namespace {

datagen::GroundTruthBundle small_bundle(int m, int n, int r, double ratio, double alpha,
                                        std::uint64_t seed, bool noiseless = true) {
    const auto s = datagen::sample_subspace(m, r, seed);
    const Matrix x_star = datagen::sample_inliers(s, n, mix64(seed) + 1);
    datagen::CorruptionSpec spec;
    spec.n_total = n;
    spec.n_out = int(std::lround(ratio * n));
    spec.alpha = alpha;
    if (!noiseless) spec.snr_db = 40.0;
    spec.seed = mix64(seed) + 2;
    return datagen::corrupt(x_star, r, spec);
}

}  // namespace

TEST_CASE("cop_scores hand cases") {
    Matrix duplicates(3, 2);
    duplicates.col(0) = Vector::Unit(3, 0);
    duplicates.col(1) = Vector::Unit(3, 0);
    const Vector twin_scores = stage1::cop_scores(duplicates);
    CHECK(twin_scores[0] == doctest::Approx(1.0));
    CHECK(twin_scores[1] == doctest::Approx(1.0));

    Matrix orthogonal(3, 2);
    orthogonal.col(0) = Vector::Unit(3, 0);
    orthogonal.col(1) = Vector::Unit(3, 1);
    const Vector ortho_scores = stage1::cop_scores(orthogonal);
    CHECK(ortho_scores[0] == doctest::Approx(0.0));
    CHECK(ortho_scores[1] == doctest::Approx(0.0));

    Matrix trio(3, 3);
    trio.col(0) = Vector::Unit(3, 0);
    trio.col(1) = Vector::Unit(3, 0);
    trio.col(2) = Vector::Unit(3, 1);
    const Vector trio_scores = stage1::cop_scores(trio);
    CHECK(trio_scores[0] == doctest::Approx(1.0));
    CHECK(trio_scores[1] == doctest::Approx(1.0));
    CHECK(trio_scores[2] == doctest::Approx(0.0));
}

TEST_CASE("cop_scores is invariant to positive column rescaling") {
    const Matrix x = gaussian_matrix(6, 10, 17);
    Matrix scaled = x;
    scaled.col(3) *= 42.0;
    scaled.col(7) *= 0.001;
    const Vector a = stage1::cop_scores(x);
    const Vector b = stage1::cop_scores(scaled);
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("cop_subspace recovers an all-inlier subspace") {
    const auto bundle = small_bundle(10, 40, 3, 0.0, 0.0, 91);
    const auto estimate = stage1::cop_subspace(bundle.x_tilde, 3);
    CHECK(numerics::max_principal_angle(estimate.s_hat, bundle.s_star) <= 1e-8);
}

TEST_CASE("cop_subspace survives duplicated columns via the rank guard") {
    // 90% copies of one inlier direction + a few orthogonal junk columns
    Matrix x(6, 20);
    Vector direction = gaussian_matrix(6, 1, 19).normalized();
    for (int j = 0; j < 18; ++j) x.col(j) = direction;
    x.col(18) = Vector::Unit(6, 4);
    x.col(19) = Vector::Unit(6, 5);
    const auto estimate = stage1::cop_subspace(x, 1);
    const double aligned = std::abs(estimate.s_hat.basis.col(0).dot(direction));
    CHECK(aligned == doctest::Approx(1.0).epsilon(1e-10));

    // literal top-r would have died here; rank-deficient duplicates get skipped
    const auto wider = stage1::cop_subspace(x, 2);
    CHECK(wider.s_hat.dim() == 2);
}

TEST_CASE("cop_subspace errors when fewer than r independent columns exist") {
    Matrix x(5, 4);
    const Vector direction = gaussian_matrix(5, 1, 23).normalized();
    for (int j = 0; j < 4; ++j) x.col(j) = direction * double(j + 1);
    CHECK_THROWS_AS(stage1::cop_subspace(x, 2), std::runtime_error);
}

TEST_CASE("dpcp_irls: all-inlier noiseless data is annihilated") {
    const auto bundle = small_bundle(12, 60, 4, 0.0, 0.0, 101);
    const auto estimate = stage1::dpcp_irls(bundle.x_tilde, 4);
    CHECK(estimate.final_objective <= 1e-8 * bundle.x_tilde.norm());
    CHECK(numerics::max_principal_angle(estimate.s_hat, bundle.s_star) <= 1e-6);
}

TEST_CASE("dpcp_irls objective history is monotone nonincreasing") {
    const auto bundle = small_bundle(12, 80, 4, 0.4, 0.5, 103);
    const auto estimate = stage1::dpcp_irls(bundle.x_tilde, 4);
    REQUIRE(estimate.objective_history.size() >= 2);
    for (std::size_t k = 1; k < estimate.objective_history.size(); ++k)
        CHECK(estimate.objective_history[k] <=
              estimate.objective_history[k - 1] +
                  1e-6 * (1.0 + estimate.objective_history[k - 1]));
    CHECK(estimate.final_objective >= 0.0);
}

TEST_CASE("dpcp_irls recovers the subspace under moderate permutation outliers") {
    const auto bundle = small_bundle(12, 80, 4, 0.4, 0.5, 107);
    const auto estimate = stage1::dpcp_irls(bundle.x_tilde, 4);
    CHECK(numerics::max_principal_angle(estimate.s_hat, bundle.s_star) <= 1e-3);
}

TEST_CASE("dpcp_rsgm: all-inlier noiseless accuracy") {
    const auto bundle = small_bundle(10, 50, 3, 0.0, 0.0, 109);
    const auto estimate = stage1::dpcp_rsgm(bundle.x_tilde, 3);
    CHECK(numerics::max_principal_angle(estimate.s_hat, bundle.s_star) <= 1e-4);
}

TEST_CASE("dpcp_rsgm never beats IRLS by more than rounding, never loses to init") {
    for (int trial = 0; trial < 20; ++trial) {
        const auto bundle =
            small_bundle(10, 60, 3, 0.3, 0.6, 1000 + std::uint64_t(trial) * 7);
        const auto irls = stage1::dpcp_irls(bundle.x_tilde, 3);
        const auto rsgm = stage1::dpcp_rsgm(bundle.x_tilde, 3);
        CHECK(rsgm.final_objective >= irls.final_objective - 1e-6);
        CHECK(rsgm.final_objective <= rsgm.objective_history.front() + 1e-12);
    }
}

TEST_CASE("dpcp solvers are deterministic and permutation equivariant") {
    const auto bundle = small_bundle(9, 45, 3, 0.3, 0.5, 113);
    const auto once = stage1::dpcp_irls(bundle.x_tilde, 3);
    const auto twice = stage1::dpcp_irls(bundle.x_tilde, 3);
    CHECK((once.s_hat.basis - twice.s_hat.basis).cwiseAbs().maxCoeff() == 0.0);

    // estimating from a globally row-permuted matrix permutes the estimate
    const auto global = datagen::sample_sparse_permutation(9, 1.0, 117);
    const Matrix permuted = global.apply_rows(bundle.x_tilde);
    for (int method = 0; method < 3; ++method) {
        stage1::SubspaceEstimate original, shifted;
        if (method == 0) {
            original = stage1::cop_subspace(bundle.x_tilde, 3);
            shifted = stage1::cop_subspace(permuted, 3);
        } else if (method == 1) {
            original = stage1::dpcp_irls(bundle.x_tilde, 3);
            shifted = stage1::dpcp_irls(permuted, 3);
        } else {
            original = stage1::dpcp_rsgm(bundle.x_tilde, 3);
            shifted = stage1::dpcp_rsgm(permuted, 3);
        }
        const SubspaceBasis expected(global.apply_rows(original.s_hat.basis));
        // exact equivariance up to the rounding drift of reordered reductions
        CHECK(numerics::max_principal_angle(expected, shifted.s_hat) <= 1e-7);
    }
}

TEST_CASE("dpcp input validation") {
    const Matrix x = gaussian_matrix(6, 12, 131);
    CHECK_THROWS_AS(stage1::dpcp_irls(x, 0), std::invalid_argument);
    CHECK_THROWS_AS(stage1::dpcp_irls(x, 6), std::invalid_argument);
    stage1::DpcpConfig bad;
    bad.beta = 1.5;
    CHECK_THROWS_AS(stage1::dpcp_irls(x, 2, bad), std::invalid_argument);
}

TEST_CASE("project_reduce: tall all-inlier stack") {
    const auto s = datagen::sample_subspace(200, 4, 137);
    const Matrix x = datagen::sample_inliers(s, 30, 138);
    const auto estimate = stage1::project_reduce(
        x, [](const Matrix& reduced, int r) { return stage1::dpcp_irls(reduced, r); }, 4);
    CHECK(numerics::max_principal_angle(estimate.s_hat, s) <= 1e-6);
}

TEST_CASE("project_reduce matches the direct solve at small sizes") {
    const auto bundle = small_bundle(40, 30, 4, 0.3, 0.5, 139);
    const auto direct = stage1::dpcp_irls(bundle.x_tilde, 4);
    const auto reduced = stage1::project_reduce(
        bundle.x_tilde,
        [](const Matrix& inner, int r) { return stage1::dpcp_irls(inner, r); }, 4);
    CHECK(numerics::max_principal_angle(direct.s_hat, reduced.s_hat) <= 1e-6);
}

TEST_CASE("project_reduce: image-scale inner fit runs in under a second") {
    // 32256-pixel stack of 64 mixtures of 4 basis images; the reduced
    // problem the inner solver sees is only 64 x 64
    const Index pixels = 32256;
    Rng rng(141);
    Matrix basis(pixels, 4), mixing(4, 64);
    for (Index j = 0; j < 4; ++j)
        for (Index i = 0; i < pixels; ++i) basis(i, j) = rng.gaussian();
    for (Index j = 0; j < 64; ++j)
        for (Index i = 0; i < 4; ++i) mixing(i, j) = rng.gaussian();
    const Matrix stack = basis * mixing;

    double inner_seconds = 0.0;
    const auto estimate = stage1::project_reduce(
        stack,
        [&](const Matrix& reduced, int r) {
            REQUIRE(reduced.rows() == 64);
            const auto started = std::chrono::steady_clock::now();
            auto result = stage1::dpcp_irls(reduced, r);
            inner_seconds = std::chrono::duration<double>(
                                std::chrono::steady_clock::now() - started)
                                .count();
            return result;
        },
        4);
    CHECK(inner_seconds < 1.0);
    const SubspaceBasis truth(numerics::orthonormalize(basis));
    CHECK(numerics::max_principal_angle(estimate.s_hat, truth) <= 1e-6);
}

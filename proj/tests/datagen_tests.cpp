#include "upca/datagen.hpp"

#include "upca/numerics.hpp"
#include "upca/rng.hpp"

#include "doctest.h"
#include "oracles.hpp"

#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

using namespace upca;
using datagen::Permutation;

TEST_CASE("sample_subspace basics") {
    const auto line = datagen::sample_subspace(2, 1, 7);
    CHECK(line.basis.col(0).norm() == doctest::Approx(1.0));

    const auto a = datagen::sample_subspace(10, 4, 99);
    const auto b = datagen::sample_subspace(10, 4, 99);
    CHECK((a.basis - b.basis).cwiseAbs().maxCoeff() == 0.0);  // same seed, same basis

    const auto c = datagen::sample_subspace(10, 4, 100);
    CHECK(numerics::max_principal_angle(a, c) > 1e-3);  // fresh seed, fresh subspace

    CHECK_THROWS_AS(datagen::sample_subspace(4, 4, 1), std::invalid_argument);
}

TEST_CASE("sample_subspace sweeps stay well separated across seeds") {
    // 40 consecutive seeds at m=12, r=6; no two samples closer than 1e-3 rad
    std::vector<SubspaceBasis> samples;
    for (int s = 0; s < 40; ++s) samples.push_back(datagen::sample_subspace(12, 6, 500 + s));
    double closest = 1e9;
    for (std::size_t i = 0; i + 1 < samples.size(); ++i)
        closest = std::min(closest,
                           numerics::max_principal_angle(samples[i], samples[i + 1]));
    CHECK(closest > 1e-3);
}

TEST_CASE("sample_subspace: consecutive-pair angles concentrate at half dimension") {
    // two independent 25-dim subspaces of R^50 have their largest principal
    // angle near 90 degrees; a biased sampler would show up as a low mean
    double mean = 0.0, lowest = 1e9;
    const int pairs = 30;
    for (int s = 0; s < pairs; ++s) {
        const auto a = datagen::sample_subspace(50, 25, 9000 + 2 * std::uint64_t(s));
        const auto b = datagen::sample_subspace(50, 25, 9001 + 2 * std::uint64_t(s));
        const double angle = numerics::max_principal_angle(a, b);
        mean += angle / pairs;
        lowest = std::min(lowest, angle);
    }
    const double deg = 180.0 / std::numbers::pi;
    CHECK(mean * deg > 70.0);
    CHECK(mean * deg <= 90.0 + 1e-9);
    CHECK(lowest > 1e-3);
}

TEST_CASE("sample_inliers lie exactly in the subspace with unit norm") {
    const auto s = datagen::sample_subspace(9, 3, 11);
    const Matrix points = datagen::sample_inliers(s, 25, 12);
    for (Index j = 0; j < points.cols(); ++j) {
        CHECK(points.col(j).norm() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(numerics::project_onto(s, points.col(j)).residual_norm <= 1e-12);
    }
}

TEST_CASE("sample_inliers on a line hit the two sphere points") {
    const auto s = datagen::sample_subspace(6, 1, 13);
    const Matrix points = datagen::sample_inliers(s, 10, 14);
    for (Index j = 0; j < points.cols(); ++j) {
        const double aligned = std::abs(points.col(j).dot(s.basis.col(0)));
        CHECK(aligned == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("sample_sparse_permutation") {
    const auto id = datagen::sample_sparse_permutation(10, 0.0, 3);
    CHECK(id.is_identity());

    // alpha=1, m=2: only the swap is a non-identity draw
    bool saw_swap = false;
    for (int s = 0; s < 20 && !saw_swap; ++s) {
        const auto p = datagen::sample_sparse_permutation(2, 1.0, std::uint64_t(s));
        if (!p.is_identity()) {
            CHECK(p.image[0] == 1);
            CHECK(p.image[1] == 0);
            saw_swap = true;
        }
    }
    CHECK(saw_swap);

    // chosen-set size is exactly round(alpha m); support stays inside it
    for (int s = 0; s < 10; ++s) {
        const auto p = datagen::sample_sparse_permutation(10, 0.4, std::uint64_t(40 + s));
        const auto moved = p.support();
        CHECK(moved.size() <= 4);
        std::set<int> touched;
        for (int i = 0; i < 10; ++i)
            if (p.image[static_cast<std::size_t>(i)] != i) {
                touched.insert(i);
                touched.insert(p.image[static_cast<std::size_t>(i)]);
            }
        CHECK(touched.size() <= 4);
    }

    CHECK_THROWS_AS(datagen::sample_sparse_permutation(10, 0.1, 1), std::invalid_argument);
}

TEST_CASE("permutation group axioms hold over random draws") {
    Rng rng(321);
    for (int trial = 0; trial < 1000; ++trial) {
        const int m = 2 + int(rng.below(10));
        std::vector<int> image(static_cast<std::size_t>(m));
        for (int i = 0; i < m; ++i) image[static_cast<std::size_t>(i)] = i;
        rng.shuffle(image);
        const auto p = Permutation::from_image(image);
        CHECK(p.compose(p.inverse()).is_identity());
        CHECK(p.inverse().compose(p).is_identity());
    }
}

TEST_CASE("permutation apply matches compose") {
    Vector x(4);
    x << 1, 2, 3, 4;
    const auto p = Permutation::from_image({1, 2, 3, 0});
    const auto q = Permutation::from_image({0, 2, 1, 3});
    const Vector via_compose = p.compose(q).apply(x);
    const Vector via_apply = p.apply(q.apply(x));
    CHECK((via_compose - via_apply).norm() == 0.0);
}

TEST_CASE("corrupt: noiseless with no outliers is the identity") {
    const auto s = datagen::sample_subspace(8, 2, 21);
    const Matrix x_star = datagen::sample_inliers(s, 12, 22);
    datagen::CorruptionSpec spec;
    spec.n_total = 12;
    spec.n_out = 0;
    spec.alpha = 0.5;
    spec.seed = 23;
    const auto bundle = datagen::corrupt(x_star, 2, spec);
    CHECK((bundle.x_tilde - x_star).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("corrupt: SNR 40dB gives a relative noise norm of exactly 1e-2") {
    const auto s = datagen::sample_subspace(10, 3, 31);
    const Matrix x_star = datagen::sample_inliers(s, 30, 32);
    datagen::CorruptionSpec spec;
    spec.n_total = 30;
    spec.n_out = 10;
    spec.alpha = 0.5;
    spec.snr_db = 40.0;
    spec.seed = 33;
    const auto bundle = datagen::corrupt(x_star, 3, spec);

    Matrix permuted = x_star;
    for (int j = 0; j < 30; ++j)
        permuted.col(j) = bundle.permutations[static_cast<std::size_t>(j)].apply(x_star.col(j));
    const double relative = (bundle.x_tilde - permuted).norm() / x_star.norm();
    CHECK(relative == doctest::Approx(1e-2).epsilon(1e-10));
}

TEST_CASE("corrupt: permutations preserve column multisets") {
    const auto s = datagen::sample_subspace(12, 2, 41);
    const Matrix x_star = datagen::sample_inliers(s, 8, 42);
    datagen::CorruptionSpec spec;
    spec.n_total = 8;
    spec.n_out = 8;
    spec.alpha = 1.0;
    spec.seed = 43;
    const auto bundle = datagen::corrupt(x_star, 2, spec);
    for (int j = 0; j < 8; ++j)
        CHECK(oracles::multisets_equal_by_sorting(bundle.x_tilde.col(j), x_star.col(j)));
}

TEST_CASE("corrupt is bit-reproducible for a fixed seed") {
    const auto s = datagen::sample_subspace(10, 3, 51);
    const Matrix x_star = datagen::sample_inliers(s, 20, 52);
    datagen::CorruptionSpec spec;
    spec.n_total = 20;
    spec.n_out = 10;
    spec.alpha = 0.4;
    spec.snr_db = 30.0;
    spec.seed = 53;
    const auto a = datagen::corrupt(x_star, 3, spec);
    const auto b = datagen::corrupt(x_star, 3, spec);
    CHECK((a.x_tilde - b.x_tilde).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("corrupt: random-sphere outliers are unit norm and unpermuted") {
    const auto s = datagen::sample_subspace(10, 3, 61);
    const Matrix x_star = datagen::sample_inliers(s, 20, 62);
    datagen::CorruptionSpec spec;
    spec.n_total = 20;
    spec.n_out = 5;
    spec.seed = 63;
    spec.outlier_type = datagen::OutlierType::RandomSphere;
    const auto bundle = datagen::corrupt(x_star, 3, spec);
    for (int j = 15; j < 20; ++j) {
        CHECK(bundle.x_tilde.col(j).norm() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(bundle.permutations[static_cast<std::size_t>(j)].is_identity());
        CHECK_FALSE(bundle.inlier_mask[static_cast<std::size_t>(j)]);
    }
}

TEST_CASE("observation patterns") {
    const auto full = datagen::ObservationPattern::full(5, 3);
    const Matrix x = oracles::gaussian_matrix(5, 3, 71);
    CHECK((datagen::apply_pattern(x, full) - x).cwiseAbs().maxCoeff() == 0.0);

    datagen::ObservationPattern empty;
    empty.m = 5;
    empty.n = 3;
    empty.omegas.assign(3, {});
    CHECK(datagen::apply_pattern(x, empty).cwiseAbs().maxCoeff() == 0.0);

    datagen::ObservationPattern single;
    single.m = 5;
    single.n = 3;
    single.omegas = {{}, {2}, {}};
    const Matrix masked = datagen::apply_pattern(x, single);
    CHECK(masked(2, 1) == x(2, 1));
    CHECK(masked.cwiseAbs().sum() == doctest::Approx(std::abs(x(2, 1))));

    const auto sampled = datagen::sample_observation_pattern(6, 4, 3, 72);
    for (const auto& omega : sampled.omegas) CHECK(omega.size() == 3);
    sampled.validate();
}

TEST_CASE("bundle round-trips through its directory format") {
    const auto s = datagen::sample_subspace(6, 2, 81);
    const Matrix x_star = datagen::sample_inliers(s, 7, 82);
    datagen::CorruptionSpec spec;
    spec.n_total = 7;
    spec.n_out = 3;
    spec.alpha = 0.5;
    spec.snr_db = 35.0;
    spec.seed = 83;
    const auto bundle = datagen::corrupt(x_star, 2, spec);

    const std::string dir = "/tmp/upca_test_bundle";
    std::filesystem::remove_all(dir);
    datagen::save_bundle(bundle, dir);
    const auto loaded = datagen::load_bundle(dir);

    CHECK((loaded.x_star - bundle.x_star).cwiseAbs().maxCoeff() == 0.0);
    CHECK((loaded.x_tilde - bundle.x_tilde).cwiseAbs().maxCoeff() == 0.0);
    CHECK(loaded.rank == bundle.rank);
    CHECK(loaded.inlier_mask == bundle.inlier_mask);
    REQUIRE(loaded.permutations.size() == bundle.permutations.size());
    for (std::size_t j = 0; j < loaded.permutations.size(); ++j)
        CHECK(loaded.permutations[j].image == bundle.permutations[j].image);
}

TEST_CASE("derived seeds do not collide across a grid") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t a = 0; a < 6; ++a)
        for (std::uint64_t b = 0; b < 9; ++b)
            for (std::uint64_t c = 0; c < 4; ++c)
                for (std::uint64_t t = 0; t < 10; ++t)
                    seen.insert(derive_seed(1234, encode_cell(a, b, c, t)));
    CHECK(seen.size() == 6u * 9u * 4u * 10u);
}

#pragma once

#include "upca/rng.hpp"
#include "upca/types.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace upca::datagen {

/// Bijection on {0, ..., m-1}; image[i] is where position i moves to.
struct Permutation {
    std::vector<int> image;

    static Permutation identity(int m);
    /// Validates that image is a bijection.
    static Permutation from_image(std::vector<int> image);

    int size() const { return int(image.size()); }
    bool is_identity() const;
    std::vector<int> support() const;  // {i : image[i] != i}

    Permutation inverse() const;
    Permutation compose(const Permutation& other) const;  // this after other

    /// y[image[i]] = x[i]
    Vector apply(const Vector& x) const;
    Matrix apply_rows(const Matrix& x) const;
};

enum class OutlierType { Permuted, RandomSphere };

struct CorruptionSpec {
    int n_total = 0;
    int n_out = 0;
    double alpha = 0.0;
    std::optional<double> snr_db;  // nullopt = noiseless
    std::uint64_t seed = 0;
    OutlierType outlier_type = OutlierType::Permuted;
};

struct GroundTruthBundle {
    Matrix x_star;
    SubspaceBasis s_star;
    std::vector<Permutation> permutations;  // identity for inliers
    Matrix x_tilde;
    std::vector<bool> inlier_mask;
    std::vector<double> realized_alpha;  // moved-coordinate fraction per column
    int rank = 0;
    CorruptionSpec spec;
};

/// Per-column observed coordinate subsets; each stored sorted and unique.
struct ObservationPattern {
    int m = 0;
    int n = 0;
    std::vector<std::vector<int>> omegas;

    static ObservationPattern full(int m, int n);
    void validate() const;
};

/// Orthonormalized m x r Gaussian matrix: uniform on the Grassmannian.
SubspaceBasis sample_subspace(int m, int r, std::uint64_t seed);

/// Unit-norm points of S: columns B g / ||B g||.
Matrix sample_inliers(const SubspaceBasis& s, int count, std::uint64_t seed);

/// Uniform permutation on round(alpha * m) uniformly chosen coordinates,
/// identity elsewhere. A drawn permutation may fix some chosen coordinates,
/// so the realized support can be smaller than the chosen set; callers can
/// read it back via support(). round(alpha * m) == 1 is rejected: a single
/// coordinate cannot move.
Permutation sample_sparse_permutation(int m, double alpha, std::uint64_t seed);
Permutation sample_sparse_permutation(int m, double alpha, Rng& rng);

/// Corrupts the trailing n_out columns (fresh sparse permutation or a fresh
/// unit-sphere point, per spec.outlier_type), then adds Gaussian noise scaled
/// so that 20 log10(||X*||_F / ||noise||_F) equals snr_db. The SNR is defined
/// matrix-level on Frobenius norms; bundle metadata records that choice.
GroundTruthBundle corrupt(const Matrix& x_star, int r, const CorruptionSpec& spec);

ObservationPattern sample_observation_pattern(int m, int n, int per_column_count,
                                              std::uint64_t seed);

/// Zeroes every entry outside the pattern (the embedding into R^Omega).
Matrix apply_pattern(const Matrix& x, const ObservationPattern& pattern);

// Bundle directory layout: x_star.txt / x_tilde.txt / s_star.txt in matrix
// text format, perms.csv with 1-based semicolon-joined images, meta.json.
void save_bundle(const GroundTruthBundle& bundle, const std::string& dir);
GroundTruthBundle load_bundle(const std::string& dir);

}  // namespace upca::datagen

#include "upca/datagen.hpp"

#include "upca/numerics.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace upca::datagen {

using nlohmann::json;

namespace {

// Stream tags for per-column derived seeds inside corrupt().
constexpr std::uint64_t kTagPermutation = 0xA1;
constexpr std::uint64_t kTagSphere = 0xA2;
constexpr std::uint64_t kTagNoise = 0xA3;

}  // namespace

Permutation Permutation::identity(int m) {
    Permutation p;
    p.image.resize(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) p.image[static_cast<std::size_t>(i)] = i;
    return p;
}

Permutation Permutation::from_image(std::vector<int> image) {
    const int m = int(image.size());
    std::vector<bool> seen(static_cast<std::size_t>(m), false);
    for (int v : image) {
        if (v < 0 || v >= m || seen[static_cast<std::size_t>(v)])
            throw std::invalid_argument("Permutation: image is not a bijection");
        seen[static_cast<std::size_t>(v)] = true;
    }
    Permutation p;
    p.image = std::move(image);
    return p;
}

bool Permutation::is_identity() const {
    for (int i = 0; i < size(); ++i)
        if (image[static_cast<std::size_t>(i)] != i) return false;
    return true;
}

std::vector<int> Permutation::support() const {
    std::vector<int> moved;
    for (int i = 0; i < size(); ++i)
        if (image[static_cast<std::size_t>(i)] != i) moved.push_back(i);
    return moved;
}

Permutation Permutation::inverse() const {
    Permutation inv;
    inv.image.resize(image.size());
    for (int i = 0; i < size(); ++i) inv.image[static_cast<std::size_t>(image[static_cast<std::size_t>(i)])] = i;
    return inv;
}

Permutation Permutation::compose(const Permutation& other) const {
    if (size() != other.size())
        throw std::invalid_argument("Permutation::compose: size mismatch");
    Permutation out;
    out.image.resize(image.size());
    for (int i = 0; i < size(); ++i)
        out.image[static_cast<std::size_t>(i)] = image[static_cast<std::size_t>(other.image[static_cast<std::size_t>(i)])];
    return out;
}

Vector Permutation::apply(const Vector& x) const {
    if (x.size() != size()) throw std::invalid_argument("Permutation::apply: size mismatch");
    Vector y(x.size());
    for (int i = 0; i < size(); ++i) y[image[static_cast<std::size_t>(i)]] = x[i];
    return y;
}

Matrix Permutation::apply_rows(const Matrix& x) const {
    if (x.rows() != size())
        throw std::invalid_argument("Permutation::apply_rows: size mismatch");
    Matrix y(x.rows(), x.cols());
    for (int i = 0; i < size(); ++i) y.row(image[static_cast<std::size_t>(i)]) = x.row(i);
    return y;
}

ObservationPattern ObservationPattern::full(int m, int n) {
    ObservationPattern pattern;
    pattern.m = m;
    pattern.n = n;
    std::vector<int> all(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) all[static_cast<std::size_t>(i)] = i;
    pattern.omegas.assign(static_cast<std::size_t>(n), all);
    return pattern;
}

void ObservationPattern::validate() const {
    if (int(omegas.size()) != n)
        throw std::invalid_argument("ObservationPattern: omega count != n");
    for (const auto& omega : omegas) {
        if (!std::is_sorted(omega.begin(), omega.end()))
            throw std::invalid_argument("ObservationPattern: omega not sorted");
        if (std::adjacent_find(omega.begin(), omega.end()) != omega.end())
            throw std::invalid_argument("ObservationPattern: duplicate coordinate");
        if (!omega.empty() && (omega.front() < 0 || omega.back() >= m))
            throw std::invalid_argument("ObservationPattern: coordinate out of range");
    }
}

SubspaceBasis sample_subspace(int m, int r, std::uint64_t seed) {
    if (r < 1 || r >= m)
        throw std::invalid_argument("sample_subspace: need 1 <= r < m");
    Rng rng(seed);
    Matrix g(m, r);
    for (Index j = 0; j < r; ++j)
        for (Index i = 0; i < m; ++i) g(i, j) = rng.gaussian();
    return SubspaceBasis(numerics::orthonormalize(g));
}

Matrix sample_inliers(const SubspaceBasis& s, int count, std::uint64_t seed) {
    if (count < 1) throw std::invalid_argument("sample_inliers: count >= 1");
    Rng rng(seed);
    const Index r = s.dim();
    Matrix points(s.ambient_dim(), count);
    for (Index j = 0; j < count; ++j) {
        double norm = 0.0;
        Vector v;
        do {
            Vector g(r);
            for (Index k = 0; k < r; ++k) g[k] = rng.gaussian();
            v = s.basis * g;
            norm = v.norm();
        } while (norm == 0.0);
        points.col(j) = v / norm;
    }
    return points;
}

Permutation sample_sparse_permutation(int m, double alpha, Rng& rng) {
    if (alpha < 0.0 || alpha > 1.0)
        throw std::invalid_argument("sample_sparse_permutation: alpha in [0,1]");
    const int k = int(std::lround(alpha * m));
    if (k == 1)
        throw std::invalid_argument(
            "sample_sparse_permutation: round(alpha*m) == 1, a single coordinate cannot move");
    Permutation p = Permutation::identity(m);
    if (k == 0) return p;
    std::vector<int> chosen = rng.sample_without_replacement(m, k);
    std::sort(chosen.begin(), chosen.end());
    std::vector<int> slots(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) slots[static_cast<std::size_t>(i)] = i;
    rng.shuffle(slots);
    for (int i = 0; i < k; ++i)
        p.image[static_cast<std::size_t>(chosen[static_cast<std::size_t>(i)])] = chosen[static_cast<std::size_t>(slots[static_cast<std::size_t>(i)])];
    return p;
}

Permutation sample_sparse_permutation(int m, double alpha, std::uint64_t seed) {
    Rng rng(seed);
    return sample_sparse_permutation(m, alpha, rng);
}

GroundTruthBundle corrupt(const Matrix& x_star, int r, const CorruptionSpec& spec) {
    const int m = int(x_star.rows());
    const int n = int(x_star.cols());
    if (spec.n_total != n)
        throw std::invalid_argument("corrupt: spec.n_total != columns of x_star");
    if (spec.n_out < 0 || spec.n_out > n)
        throw std::invalid_argument("corrupt: need 0 <= n_out <= n_total");
    require_finite(x_star, "corrupt");

    GroundTruthBundle bundle;
    bundle.x_star = x_star;
    bundle.spec = spec;
    bundle.rank = r;
    if (numerics::numerical_rank(x_star) != r)
        throw std::invalid_argument("corrupt: numerical_rank(x_star) != r");
    const auto svd = numerics::thin_svd(x_star);
    bundle.s_star = SubspaceBasis(svd.u.leftCols(r));

    const int n_in = n - spec.n_out;
    bundle.x_tilde = x_star;
    bundle.permutations.assign(static_cast<std::size_t>(n), Permutation::identity(m));
    bundle.inlier_mask.assign(static_cast<std::size_t>(n), true);
    bundle.realized_alpha.assign(static_cast<std::size_t>(n), 0.0);

    for (int j = n_in; j < n; ++j) {
        bundle.inlier_mask[static_cast<std::size_t>(j)] = false;
        if (spec.outlier_type == OutlierType::Permuted) {
            Permutation pi = sample_sparse_permutation(
                m, spec.alpha, derive_seed(spec.seed, kTagPermutation, std::uint64_t(j)));
            bundle.x_tilde.col(j) = pi.apply(x_star.col(j));
            bundle.realized_alpha[static_cast<std::size_t>(j)] =
                double(pi.support().size()) / double(m);
            bundle.permutations[static_cast<std::size_t>(j)] = std::move(pi);
        } else {
            Rng rng(derive_seed(spec.seed, kTagSphere, std::uint64_t(j)));
            double norm = 0.0;
            Vector g(m);
            do {
                for (int i = 0; i < m; ++i) g[i] = rng.gaussian();
                norm = g.norm();
            } while (norm == 0.0);
            bundle.x_tilde.col(j) = g / norm;
        }
    }

    if (spec.snr_db) {
        Rng rng(derive_seed(spec.seed, kTagNoise, 0));
        Matrix noise(m, n);
        for (Index j = 0; j < n; ++j)
            for (Index i = 0; i < m; ++i) noise(i, j) = rng.gaussian();
        const double target = x_star.norm() / std::pow(10.0, *spec.snr_db / 20.0);
        const double gnorm = noise.norm();
        if (gnorm > 0.0) bundle.x_tilde += noise * (target / gnorm);
    }
    return bundle;
}

ObservationPattern sample_observation_pattern(int m, int n, int per_column_count,
                                              std::uint64_t seed) {
    if (per_column_count < 0 || per_column_count > m)
        throw std::invalid_argument("sample_observation_pattern: per_column_count in [0,m]");
    Rng rng(seed);
    ObservationPattern pattern;
    pattern.m = m;
    pattern.n = n;
    pattern.omegas.resize(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        auto omega = rng.sample_without_replacement(m, per_column_count);
        std::sort(omega.begin(), omega.end());
        pattern.omegas[static_cast<std::size_t>(j)] = std::move(omega);
    }
    return pattern;
}

Matrix apply_pattern(const Matrix& x, const ObservationPattern& pattern) {
    if (int(x.rows()) != pattern.m || int(x.cols()) != pattern.n)
        throw std::invalid_argument("apply_pattern: shape mismatch");
    pattern.validate();
    Matrix y = Matrix::Zero(x.rows(), x.cols());
    for (int j = 0; j < pattern.n; ++j)
        for (int i : pattern.omegas[static_cast<std::size_t>(j)]) y(i, j) = x(i, j);
    return y;
}

namespace {

json spec_to_json(const CorruptionSpec& spec) {
    json j;
    j["n_total"] = spec.n_total;
    j["n_out"] = spec.n_out;
    j["alpha"] = spec.alpha;
    if (spec.snr_db)
        j["snr_db"] = *spec.snr_db;
    else
        j["snr_db"] = "noiseless";
    j["seed"] = spec.seed;
    j["outlier_type"] =
        spec.outlier_type == OutlierType::Permuted ? "permuted" : "random_sphere";
    return j;
}

CorruptionSpec spec_from_json(const json& j) {
    CorruptionSpec spec;
    spec.n_total = j.at("n_total").get<int>();
    spec.n_out = j.at("n_out").get<int>();
    spec.alpha = j.at("alpha").get<double>();
    if (j.at("snr_db").is_string())
        spec.snr_db = std::nullopt;
    else
        spec.snr_db = j.at("snr_db").get<double>();
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.outlier_type = j.at("outlier_type").get<std::string>() == "random_sphere"
                            ? OutlierType::RandomSphere
                            : OutlierType::Permuted;
    return spec;
}

}  // namespace

void save_bundle(const GroundTruthBundle& bundle, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    numerics::write_matrix_text(bundle.x_star, dir + "/x_star.txt");
    numerics::write_matrix_text(bundle.x_tilde, dir + "/x_tilde.txt");
    numerics::write_matrix_text(bundle.s_star.basis, dir + "/s_star.txt");

    std::ofstream perms(dir + "/perms.csv");
    if (!perms) throw std::runtime_error("cannot open for writing: " + dir + "/perms.csv");
    perms << "column_index,image\n";
    for (int j = 0; j < int(bundle.permutations.size()); ++j) {
        perms << (j + 1) << ',';
        const auto& image = bundle.permutations[static_cast<std::size_t>(j)].image;
        for (std::size_t i = 0; i < image.size(); ++i) {
            if (i) perms << ';';
            perms << (image[i] + 1);
        }
        perms << '\n';
    }

    json meta;
    meta["m"] = int(bundle.x_star.rows());
    meta["n"] = int(bundle.x_star.cols());
    meta["rank"] = bundle.rank;
    meta["spec"] = spec_to_json(bundle.spec);
    meta["inlier_mask"] = bundle.inlier_mask;
    meta["realized_alpha"] = bundle.realized_alpha;
    meta["snr_definition"] = "20*log10(frobenius(x_star)/frobenius(noise))";
    std::ofstream out(dir + "/meta.json");
    if (!out) throw std::runtime_error("cannot open for writing: " + dir + "/meta.json");
    out << meta.dump(2) << '\n';
}

GroundTruthBundle load_bundle(const std::string& dir) {
    GroundTruthBundle bundle;
    bundle.x_star = numerics::read_matrix_text(dir + "/x_star.txt");
    bundle.x_tilde = numerics::read_matrix_text(dir + "/x_tilde.txt");
    bundle.s_star = SubspaceBasis(numerics::read_matrix_text(dir + "/s_star.txt"));

    std::ifstream meta_in(dir + "/meta.json");
    if (!meta_in) throw std::runtime_error("cannot open: " + dir + "/meta.json");
    json meta = json::parse(meta_in);
    bundle.rank = meta.at("rank").get<int>();
    bundle.spec = spec_from_json(meta.at("spec"));
    bundle.inlier_mask = meta.at("inlier_mask").get<std::vector<bool>>();
    bundle.realized_alpha = meta.at("realized_alpha").get<std::vector<double>>();

    std::ifstream perms(dir + "/perms.csv");
    if (!perms) throw std::runtime_error("cannot open: " + dir + "/perms.csv");
    std::string line;
    std::getline(perms, line);  // header
    const int m = int(bundle.x_star.rows());
    while (std::getline(perms, line)) {
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos)
            throw std::runtime_error(dir + "/perms.csv: malformed row");
        std::vector<int> image;
        std::istringstream fields(line.substr(comma + 1));
        std::string field;
        while (std::getline(fields, field, ';')) image.push_back(std::stoi(field) - 1);
        if (int(image.size()) != m)
            throw std::runtime_error(dir + "/perms.csv: image length != m");
        bundle.permutations.push_back(Permutation::from_image(std::move(image)));
    }
    if (bundle.permutations.size() != static_cast<std::size_t>(bundle.x_star.cols()))
        throw std::runtime_error(dir + "/perms.csv: row count != n");
    return bundle;
}

}  // namespace upca::datagen

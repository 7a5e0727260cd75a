// Timing comparison between the serial reference kernels and their OpenMP
// counterparts, plus a whole-solver run at the headline problem size.
// The parallel kernels must agree with the references to rounding and be
// bit-identical across thread counts; violations abort the run.

#include "upca/datagen.hpp"
#include "upca/kernels.hpp"
#include "upca/numerics.hpp"
#include "upca/rng.hpp"
#include "upca/stage1.hpp"

#include <omp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>

using namespace upca;

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

double time_it(const std::function<void()>& fn, int repeats) {
    fn();  // warm up
    const double start = now_ms();
    for (int i = 0; i < repeats; ++i) fn();
    return (now_ms() - start) / repeats;
}

Matrix random_matrix(Index rows, Index cols, std::uint64_t seed) {
    Rng rng(seed);
    Matrix x(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) x(i, j) = rng.gaussian();
    return x;
}

void report(const std::string& name, double serial_ms, double parallel_ms, double diff) {
    std::printf("%-24s serial %9.3f ms   omp %9.3f ms   speedup %5.2fx   |diff| %.3g\n",
                name.c_str(), serial_ms, parallel_ms,
                parallel_ms > 0 ? serial_ms / parallel_ms : 0.0, diff);
}

}  // namespace

int main(int argc, char** argv) {
    const Index m = argc > 1 ? std::atoll(argv[1]) : 50;
    const Index n = argc > 2 ? std::atoll(argv[2]) : 5000;
    const int repeats = argc > 3 ? std::atoi(argv[3]) : 20;
    std::printf("kernel benchmark: m=%lld n=%lld repeats=%d threads=%d\n", (long long)m,
                (long long)n, repeats, omp_get_max_threads());

    const Matrix x = random_matrix(m, n, 7);
    const Matrix b_ortho = numerics::orthonormalize(random_matrix(m, m / 2, 13));
    Vector w(n);
    {
        Rng rng(17);
        for (Index j = 0; j < n; ++j) w[j] = rng.next_open_double();
    }

    // weighted scatter
    {
        Matrix serial, parallel;
        const double t_serial =
            time_it([&] { serial = kernels::weighted_scatter_serial(x, w); }, repeats);
        const double t_parallel =
            time_it([&] { parallel = kernels::weighted_scatter(x, w); }, repeats);
        const double diff = (serial - parallel).cwiseAbs().maxCoeff() /
                            std::max(1.0, serial.cwiseAbs().maxCoeff());
        report("weighted_scatter", t_serial, t_parallel, diff);
        if (diff > 1e-12) {
            std::fprintf(stderr, "weighted_scatter mismatch beyond rounding\n");
            return 1;
        }
    }

    // l12 objective
    {
        double serial = 0, parallel = 0;
        const double t_serial =
            time_it([&] { serial = kernels::l12_objective_serial(x, b_ortho); }, repeats);
        const double t_parallel =
            time_it([&] { parallel = kernels::l12_objective(x, b_ortho); }, repeats);
        const double diff = std::abs(serial - parallel) / std::max(1.0, std::abs(serial));
        report("l12_objective", t_serial, t_parallel, diff);
        if (diff != 0.0) {
            std::fprintf(stderr, "l12_objective must match bitwise\n");
            return 1;
        }
    }

    // dpcp subgradient
    {
        Matrix serial, parallel;
        const double t_serial = time_it(
            [&] { serial = kernels::dpcp_subgradient_serial(x, b_ortho, 1e-15); }, repeats);
        const double t_parallel =
            time_it([&] { parallel = kernels::dpcp_subgradient(x, b_ortho, 1e-15); }, repeats);
        const double diff = (serial - parallel).cwiseAbs().maxCoeff() /
                            std::max(1.0, serial.cwiseAbs().maxCoeff());
        report("dpcp_subgradient", t_serial, t_parallel, diff);
        if (diff > 1e-12) {
            std::fprintf(stderr, "dpcp_subgradient mismatch beyond rounding\n");
            return 1;
        }
    }

    // coherence norms
    {
        Matrix normalized = x;
        for (Index j = 0; j < n; ++j) normalized.col(j) /= normalized.col(j).norm();
        Vector serial, parallel;
        const double t_serial =
            time_it([&] { serial = kernels::coherence_norms_serial(normalized); }, 3);
        const double t_parallel =
            time_it([&] { parallel = kernels::coherence_norms(normalized); }, 3);
        const double diff = (serial - parallel).cwiseAbs().maxCoeff();
        report("coherence_norms", t_serial, t_parallel, diff);
        if (diff != 0.0) {
            std::fprintf(stderr, "coherence_norms must match bitwise\n");
            return 1;
        }
    }

    // thread-count invariance of the parallel kernels
    {
        const int max_threads = omp_get_max_threads();
        omp_set_num_threads(1);
        const Matrix one_thread = kernels::weighted_scatter(x, w);
        const double obj_one = kernels::l12_objective(x, b_ortho);
        omp_set_num_threads(max_threads);
        const Matrix many = kernels::weighted_scatter(x, w);
        const double obj_many = kernels::l12_objective(x, b_ortho);
        const bool identical = (one_thread - many).cwiseAbs().maxCoeff() == 0.0 &&
                               obj_one == obj_many;
        std::printf("thread-count invariance: %s\n", identical ? "bit-identical" : "FAILED");
        if (!identical) return 1;
    }

    // end-to-end solve at the headline size
    {
        const auto basis = datagen::sample_subspace(50, 25, 101);
        const Matrix inliers = datagen::sample_inliers(basis, 500, 102);
        datagen::CorruptionSpec spec;
        spec.n_total = 500;
        spec.n_out = 350;
        spec.alpha = 0.1;
        spec.seed = 103;
        const auto bundle = datagen::corrupt(inliers, 25, spec);
        const double start = now_ms();
        const auto estimate = stage1::dpcp_irls(bundle.x_tilde, 25);
        std::printf("dpcp_irls m=50 n=500 r=25: %.1f ms, %d iterations\n", now_ms() - start,
                    estimate.iterations_used);
    }
    return 0;
}

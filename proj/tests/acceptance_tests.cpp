// End-to-end acceptance checks. Each case prints one PASS/FAIL line with the
// measured quantities so a run can be audited from its log alone.

#include "upca/datagen.hpp"
#include "upca/harness.hpp"
#include "upca/numerics.hpp"
#include "upca/rng.hpp"
#include "upca/stage1.hpp"
#include "upca/stage2.hpp"
#include "upca/theory.hpp"

#include "doctest.h"
#include "oracles.hpp"

#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

using namespace upca;

namespace {

constexpr std::uint64_t kAcceptanceSeed = 20260808;

double now_s() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

void verdict(int criterion, const std::string& label, bool pass, const std::string& detail) {
    std::printf("[ACCEPTANCE %2d] %-38s %s  (%s)\n", criterion, label.c_str(),
                pass ? "PASS" : "FAIL", detail.c_str());
    std::fflush(stdout);
}

double mean_theta(const std::vector<harness::CellResult>& cells) {
    double total = 0.0;
    int count = 0;
    for (const auto& cell : cells)
        if (cell.status == "ok") {
            total += cell.theta_max_deg;
            ++count;
        }
    return count ? total / count : std::numeric_limits<double>::quiet_NaN();
}

harness::ExperimentGrid headline_grid() {
    harness::ExperimentGrid grid;
    grid.m = 50;
    grid.n = 500;
    grid.ranks = {25};
    grid.outlier_ratios = {0.7};
    grid.alphas = {0.1};
    grid.trials = 10;
    grid.master_seed = kAcceptanceSeed;
    grid.stage1_method = stage1::Method::DpcpIrls;
    return grid;
}

harness::ExperimentGrid stage2_cell_grid(double alpha, int r, stage2::Method method) {
    harness::ExperimentGrid grid;
    grid.m = 50;
    grid.n = 500;
    grid.ranks = {r};
    grid.outlier_ratios = {0.9};
    grid.alphas = {alpha};
    grid.snr_db = 40.0;
    grid.trials = 10;
    grid.master_seed = kAcceptanceSeed;
    grid.stage1_method = stage1::Method::DpcpIrls;
    grid.stage2_method = method;
    return grid;
}

std::string strip_wall_ms(const std::string& csv) {
    std::istringstream in(csv);
    std::ostringstream out;
    std::string line;
    while (std::getline(in, line)) {
        int column = 0;
        std::string rebuilt;
        std::istringstream fields(line);
        std::string field;
        while (std::getline(fields, field, ',')) {
            if (column == 5) field = "-";
            if (column) rebuilt += ',';
            rebuilt += field;
            ++column;
        }
        out << rebuilt << '\n';
    }
    return out.str();
}

std::string cells_to_csv_text(const std::vector<harness::CellResult>& cells, bool stage2) {
    const std::string path = "/tmp/upca_acceptance_tmp.csv";
    harness::write_cells_csv(cells, path, stage2);
    std::ifstream in(path);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

// Cached across criteria: 4 and 5 share runs, 11 reruns 1 and 4.
struct Stage2CellOutcome {
    double mean_error = 1.0;
    double mean_error_oracle = 1.0;
    double max_theta = 90.0;
    std::vector<harness::CellResult> cells;
};

Stage2CellOutcome run_stage2_cell(double alpha, int r, stage2::Method method) {
    const auto grid = stage2_cell_grid(alpha, r, method);
    Stage2CellOutcome outcome;
    outcome.cells = harness::run_stage2_grid(grid);
    double error = 0.0, oracle = 0.0, theta = 0.0;
    int count = 0;
    for (const auto& cell : outcome.cells) {
        REQUIRE(cell.status == "ok");
        error += cell.rel_error.value();
        oracle += cell.rel_error_oracle.value();
        theta = std::max(theta, cell.theta_max_deg);
        ++count;
    }
    outcome.mean_error = error / count;
    outcome.mean_error_oracle = oracle / count;
    outcome.max_theta = theta;
    return outcome;
}

Stage2CellOutcome& cell_a_lsrf() {
    static Stage2CellOutcome cached = run_stage2_cell(0.1, 25, stage2::Method::Lsrf);
    return cached;
}
Stage2CellOutcome& cell_a_l1rr() {
    static Stage2CellOutcome cached = run_stage2_cell(0.1, 25, stage2::Method::L1rr);
    return cached;
}
Stage2CellOutcome& cell_b_lsrf() {
    static Stage2CellOutcome cached = run_stage2_cell(0.3, 9, stage2::Method::Lsrf);
    return cached;
}
Stage2CellOutcome& cell_b_l1rr() {
    static Stage2CellOutcome cached = run_stage2_cell(0.3, 9, stage2::Method::L1rr);
    return cached;
}

std::vector<harness::CellResult>& headline_cells() {
    static std::vector<harness::CellResult> cached =
        harness::run_phase_transition(headline_grid());
    return cached;
}

}  // namespace

TEST_CASE("criterion 1: DPCP-IRLS headline cell") {
    const auto& cells = headline_cells();
    const double mean = mean_theta(cells);
    long long worst_ms = 0;
    for (const auto& cell : cells) worst_ms = std::max(worst_ms, cell.wall_ms);
    const bool pass = mean <= 1.0 && worst_ms <= 10000;
    verdict(1, "dpcp-irls r=25 ratio=0.7 alpha=0.1",
            pass,
            "mean theta_max = " + std::to_string(mean) + " deg (<= 1), slowest trial " +
                std::to_string(worst_ms) + " ms (<= 10000)");
    CHECK(mean <= 1.0);
    CHECK(worst_ms <= 10000);
}

TEST_CASE("criterion 2: CoP failure-mode cell") {
    auto grid = headline_grid();
    grid.ranks = {49};
    grid.outlier_ratios = {0.9};
    grid.alphas = {0.2};
    grid.stage1_method = stage1::Method::Cop;
    const auto cells = harness::run_phase_transition(grid);
    const double mean = mean_theta(cells);
    const bool pass = mean >= 68.0 && mean <= 90.0;
    verdict(2, "cop r=49 ratio=0.9 alpha=0.2", pass,
            "mean theta_max = " + std::to_string(mean) + " deg (in [68, 90])");
    CHECK(mean >= 68.0);
    CHECK(mean <= 90.0);
}

TEST_CASE("criterion 3: random-outlier sanity for all three estimators") {
    bool all_pass = true;
    std::string detail;
    for (auto method :
         {stage1::Method::DpcpIrls, stage1::Method::DpcpRsgm, stage1::Method::Cop}) {
        auto grid = headline_grid();
        grid.ranks = {10};
        grid.outlier_ratios = {0.3};
        grid.alphas = {0.0};
        grid.outlier_type = datagen::OutlierType::RandomSphere;
        grid.stage1_method = method;
        const auto cells = harness::run_phase_transition(grid);
        const double mean = mean_theta(cells);
        detail += stage1::method_name(method) + " " + std::to_string(mean) + " deg; ";
        all_pass = all_pass && mean <= 2.0;
        CHECK(mean <= 2.0);
    }
    verdict(3, "random sphere outliers r=10 ratio=0.3", all_pass, detail + "all <= 2");
}

TEST_CASE("criterion 4: stage-2 grid cells at 90% outliers, 40 dB") {
    const double started = now_s();
    const auto& a_lsrf = cell_a_lsrf();
    const auto& a_l1rr = cell_a_l1rr();
    const auto& b_lsrf = cell_b_lsrf();
    const auto& b_l1rr = cell_b_l1rr();
    const double elapsed = now_s() - started;

    const bool pass = a_lsrf.mean_error <= 0.06 && a_l1rr.mean_error <= 0.05 &&
                      b_lsrf.mean_error <= 0.05 && b_l1rr.mean_error <= 0.05 &&
                      elapsed <= 300.0;
    char detail[256];
    std::snprintf(detail, sizeof detail,
                  "(0.1,25): lsrf %.4f <= 0.06, l1rr %.4f <= 0.05; "
                  "(0.3,9): lsrf %.4f <= 0.05, l1rr %.4f <= 0.05; %.0f s <= 300",
                  a_lsrf.mean_error, a_l1rr.mean_error, b_lsrf.mean_error,
                  b_l1rr.mean_error, elapsed);
    verdict(4, "stage-2 restoration error", pass, detail);
    CHECK(a_lsrf.mean_error <= 0.06);
    CHECK(a_l1rr.mean_error <= 0.05);
    CHECK(b_lsrf.mean_error <= 0.05);
    CHECK(b_l1rr.mean_error <= 0.05);
    CHECK(elapsed <= 300.0);
}

TEST_CASE("criterion 5: estimated vs oracle subspace insensitivity") {
    bool pass = true;
    std::string detail;
    for (const auto* cell : {&cell_a_lsrf(), &cell_a_l1rr(), &cell_b_lsrf(), &cell_b_l1rr()}) {
        const double gap = std::abs(cell->mean_error - cell->mean_error_oracle);
        pass = pass && gap <= 0.01 && cell->max_theta <= 2.0;
        char buffer[96];
        std::snprintf(buffer, sizeof buffer, "gap %.4f theta %.3f; ", gap, cell->max_theta);
        detail += buffer;
        CHECK(gap <= 0.01);
        CHECK(cell->max_theta <= 2.0);
    }
    verdict(5, "S-hat vs S-star gap <= 1pp, theta <= 2 deg", pass, detail);
}

TEST_CASE("criterion 6: exhaustive rank-structure check at three tiny shapes") {
    const double started = now_s();
    bool pass = true;
    std::string detail;
    const std::array<std::array<int, 3>, 3> shapes = {{{3, 3, 1}, {4, 3, 1}, {4, 2, 2}}};
    for (const auto& shape : shapes) {
        const int m = shape[0], n = shape[1], r = shape[2];
        int good = 0;
        for (int i = 0; i < 20; ++i) {
            const Matrix x_star = oracles::gaussian_rank_r(
                m, n, r, derive_seed(kAcceptanceSeed, 0x61, std::uint64_t(i)));
            const auto report = theory::verify_rank_identifiability(x_star, r);
            if (report.min_rank_found == r && report.passed()) ++good;
        }
        char buffer[64];
        std::snprintf(buffer, sizeof buffer, "(%d,%d,%d): %d/20; ", m, n, r, good);
        detail += buffer;
        pass = pass && good == 20;
        CHECK(good == 20);
    }
    const double elapsed = now_s() - started;
    pass = pass && elapsed <= 60.0;
    verdict(6, "global-permutation rank structure", pass,
            detail + std::to_string(elapsed) + " s <= 60");
    CHECK(elapsed <= 60.0);
}

TEST_CASE("criterion 7: six factorizations at (3,3,1), clean residuals") {
    int good_seeds = 0;
    for (int i = 0; i < 10; ++i) {
        const Matrix x_star = oracles::gaussian_rank_r(
            3, 3, 1, derive_seed(kAcceptanceSeed, 0x62, std::uint64_t(i)));
        const auto result = theory::enumerate_unlabeled_factorizations(x_star, 1);
        bool ok = result.distinct.size() == 6;
        for (const auto& item : result.distinct)
            ok = ok && theory::max_scaled_power_sum_residual(item.fact, x_star) <= 1e-8;
        if (ok) ++good_seeds;
    }
    verdict(7, "unlabeled factorization structure", good_seeds == 10,
            std::to_string(good_seeds) + "/10 seeds with exactly 6 clean reconstructions");
    CHECK(good_seeds == 10);
}

TEST_CASE("criterion 8: power sums vs sorting oracle, 10k fuzzed pairs") {
    Rng rng(derive_seed(kAcceptanceSeed, 0x63));
    int disagreements = 0;
    for (int trial = 0; trial < 10000; ++trial) {
        const int m = 1 + int(rng.below(10));
        Vector x(m);
        for (int i = 0; i < m; ++i) x[i] = 20.0 * rng.next_double() - 10.0;
        Vector y;
        if (rng.below(2) == 0) {
            std::vector<int> image(static_cast<std::size_t>(m));
            for (int i = 0; i < m; ++i) image[static_cast<std::size_t>(i)] = i;
            rng.shuffle(image);
            y.resize(m);
            for (int i = 0; i < m; ++i) y[image[static_cast<std::size_t>(i)]] = x[i];
        } else {
            y = x;
            y[int(rng.below(std::uint64_t(m)))] += 0.001 + rng.next_double();
        }
        if (theory::multisets_equal_via_power_sums(x, y) !=
            oracles::multisets_equal_by_sorting(x, y))
            ++disagreements;
    }
    verdict(8, "multiset equality via power sums", disagreements == 0,
            std::to_string(disagreements) + " disagreements in 10000");
    CHECK(disagreements == 0);
}

TEST_CASE("criterion 9: relaxed pattern corpus and reference cross-check") {
    const int m = 6, r = 2;
    const bool single =
        theory::is_relaxed_slmf(datagen::ObservationPattern::full(m, 1), r).is_slmf;
    const bool twin =
        theory::is_relaxed_slmf(datagen::ObservationPattern::full(m, 2), r).is_slmf;
    datagen::ObservationPattern skinny;
    skinny.m = m;
    skinny.n = 3;
    skinny.omegas = {{0, 1}, {2, 3}, {4, 5}};
    const bool all_r = theory::is_relaxed_slmf(skinny, r).is_slmf;

    Rng rng(derive_seed(kAcceptanceSeed, 0x64));
    int mismatches = 0;
    for (int trial = 0; trial < 50; ++trial) {
        const int rows = 4 + int(rng.below(4));
        const int cols = 1 + int(rng.below(4));
        const int rank = 1 + int(rng.below(2));
        datagen::ObservationPattern pattern;
        pattern.m = rows;
        pattern.n = cols;
        for (int j = 0; j < cols; ++j) {
            auto omega = rng.sample_without_replacement(rows, int(rng.below(std::uint64_t(rows + 1))));
            std::sort(omega.begin(), omega.end());
            pattern.omegas.push_back(std::move(omega));
        }
        if (theory::is_relaxed_slmf(pattern, rank).is_slmf !=
            oracles::relaxed_slmf_reference(pattern, rank))
            ++mismatches;
    }
    const bool pass = single && !twin && !all_r && mismatches == 0;
    verdict(9, "relaxed pattern corpus", pass,
            "single=true double=false all-r=false, " + std::to_string(mismatches) +
                "/50 reference mismatches");
    CHECK(single);
    CHECK_FALSE(twin);
    CHECK_FALSE(all_r);
    CHECK(mismatches == 0);
}

TEST_CASE("criterion 10: stage-2 oracle equivalence and noiseless recovery") {
    int matched = 0;
    bool never_beats = true;
    for (int trial = 0; trial < 50; ++trial) {
        const auto s = datagen::sample_subspace(
            6, 2, derive_seed(kAcceptanceSeed, 0x65, std::uint64_t(trial)));
        Rng rng(derive_seed(kAcceptanceSeed, 0x66, std::uint64_t(trial)));
        Vector theta(2);
        theta << rng.gaussian(), rng.gaussian();
        Vector x = s.basis * theta;
        const auto perm = datagen::sample_sparse_permutation(
            6, 1.0, derive_seed(kAcceptanceSeed, 0x67, std::uint64_t(trial)));
        x = perm.apply(x);
        const auto oracle = stage2::brute_force_slr(x, s);
        const auto em = stage2::sorting_em(
            x, s, 100, 1000, derive_seed(kAcceptanceSeed, 0x68, std::uint64_t(trial)));
        if (em.objective < oracle.objective - 1e-8) never_beats = false;
        if (em.objective <= oracle.objective + 1e-8) ++matched;
    }

    int recovered = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto s = datagen::sample_subspace(
            50, 10, derive_seed(kAcceptanceSeed, 0x69, std::uint64_t(trial)));
        Rng rng(derive_seed(kAcceptanceSeed, 0x6A, std::uint64_t(trial)));
        Vector theta(10);
        for (int k = 0; k < 10; ++k) theta[k] = rng.gaussian();
        const Vector x_true = s.basis * theta;
        const auto perm = datagen::sample_sparse_permutation(
            50, 0.1, derive_seed(kAcceptanceSeed, 0x6B, std::uint64_t(trial)));
        const auto result = stage2::lsrf(perm.apply(x_true), s);
        if ((result.x_hat - x_true).norm() <= 1e-6 * x_true.norm()) ++recovered;
    }

    const bool pass = matched >= 40 && never_beats && recovered >= 90;
    verdict(10, "sorting-EM vs brute force; LSRF recovery", pass,
            "EM matched " + std::to_string(matched) + "/50 (>= 40), never beats: " +
                (never_beats ? "yes" : "no") + "; LSRF recovered " +
                std::to_string(recovered) + "/100 (>= 90)");
    CHECK(matched >= 40);
    CHECK(never_beats);
    CHECK(recovered >= 90);
}

TEST_CASE("criterion 11: byte-identical reruns of criteria 1 and 4") {
    const std::string first_headline =
        strip_wall_ms(cells_to_csv_text(headline_cells(), false));
    const auto rerun_headline = harness::run_phase_transition(headline_grid());
    const std::string second_headline =
        strip_wall_ms(cells_to_csv_text(rerun_headline, false));

    const std::string first_stage2 = strip_wall_ms(cells_to_csv_text(cell_a_lsrf().cells, true));
    const auto rerun_stage2 = run_stage2_cell(0.1, 25, stage2::Method::Lsrf);
    const std::string second_stage2 = strip_wall_ms(cells_to_csv_text(rerun_stage2.cells, true));

    const bool pass = first_headline == second_headline && first_stage2 == second_stage2;
    verdict(11, "determinism of repeated runs", pass,
            std::string("headline CSV identical: ") +
                (first_headline == second_headline ? "yes" : "no") +
                ", stage-2 CSV identical: " + (first_stage2 == second_stage2 ? "yes" : "no") +
                " (wall_ms column excluded)");
    CHECK(first_headline == second_headline);
    CHECK(first_stage2 == second_stage2);
}

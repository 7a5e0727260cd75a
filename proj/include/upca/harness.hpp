#pragma once

#include "upca/datagen.hpp"
#include "upca/stage1.hpp"
#include "upca/stage2.hpp"
#include "upca/types.hpp"

#include "json.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace upca::harness {

using json = nlohmann::json;

/// Cartesian sweep specification: ranks x outlier ratios x permutation
/// sparsities x trials, fully seeded.
struct ExperimentGrid {
    int m = 50;
    int n = 500;
    std::vector<int> ranks = {1, 5, 10, 25, 40, 49};
    std::vector<double> outlier_ratios = {0.1, 0.3, 0.5, 0.7, 0.9};
    std::vector<double> alphas = {0.2};
    std::optional<double> snr_db;  // nullopt = noiseless
    int trials = 10;
    std::uint64_t master_seed = 1;
    stage1::Method stage1_method = stage1::Method::DpcpIrls;
    stage2::Method stage2_method = stage2::Method::Lsrf;
    datagen::OutlierType outlier_type = datagen::OutlierType::Permuted;
    stage1::DpcpConfig dpcp;
    double detect_threshold = 0.05;
    std::optional<double> lambda;  // l1-RR; derived from n when absent
    int em_restarts = 20;
    int em_max_iter = 1000;

    void validate() const;
};

ExperimentGrid grid_from_json(const json& config);
json grid_to_json(const ExperimentGrid& grid);

struct CellResult {
    int r = 0;
    double ratio = 0.0;
    double alpha = 0.0;
    int trial = 0;
    double theta_max_deg = 0.0;
    std::optional<double> rel_error;
    std::optional<double> rel_error_oracle;
    long long wall_ms = 0;
    std::string status = "ok";
    double realized_alpha_mean = 0.0;
};

/// One row per (rank, ratio, alpha, trial): generate, estimate, record the
/// maximal principal angle in degrees. Cell failures land in the status
/// column; the sweep never aborts. Deterministic per master_seed (wall_ms
/// excepted), independent of the worker count.
std::vector<CellResult> run_phase_transition(const ExperimentGrid& grid);

/// Full pipeline per cell: stage-1 estimate, outlier detection, stage-2
/// restoration, plus the ground-truth-subspace oracle variant.
std::vector<CellResult> run_stage2_grid(const ExperimentGrid& grid);

/// CSV schema: r,ratio,alpha,trial,theta_max_deg,wall_ms,status,realized_alpha
/// with rel_error,rel_error_oracle appended for stage-2 grids. The companion
/// mean CSV averages trials with status ok.
void write_cells_csv(const std::vector<CellResult>& cells, const std::string& path,
                     bool stage2_columns);
void write_mean_csv(const std::vector<CellResult>& cells, const std::string& path,
                    bool stage2_columns);
std::string mean_csv_path(const std::string& csv_path);

/// Renders one ranks x ratios PGM per alpha value with the linear gray
/// mapping 0 deg -> white, 90 deg -> black; returns the files written.
std::vector<std::string> render_theta_heatmaps(const ExperimentGrid& grid,
                                               const std::vector<CellResult>& cells,
                                               const std::string& stem);

struct PipelineOptions {
    int r = 0;
    stage1::Method stage1_method = stage1::Method::DpcpIrls;
    stage2::Method stage2_method = stage2::Method::Lsrf;
    stage1::DpcpConfig dpcp;
    double detect_threshold = 0.05;
    std::optional<double> lambda;
    int em_restarts = 20;
    int em_max_iter = 1000;
    std::uint64_t seed = 1;
};

struct PipelineOutcome {
    Matrix x_hat;
    stage2::OutlierReport report;  // indices in the input column order
    json report_json;
};

/// End-to-end run on a bundle directory or a bare matrix file. Columns are
/// shuffled (seeded) before stage-1 and the shuffle is inverted before any
/// metric, so generation order cannot leak into the estimate. Writes
/// x_hat.txt and report.json under out_dir when out_dir is nonempty.
PipelineOutcome run_pipeline(const std::string& input_path, const PipelineOptions& options,
                             const std::string& out_dir);

struct ImagePipelineOptions {
    int r = 4;
    stage2::Method stage2_method = stage2::Method::Lsrf;
    double detect_threshold = 0.05;
    std::optional<double> lambda;
    int em_restarts = 20;
    int em_max_iter = 1000;
    std::uint64_t seed = 1;
    stage1::DpcpConfig dpcp;
};

struct ImagePipelineOutcome {
    Matrix x_hat;  // pixel columns after restoration, before quantization
    std::vector<std::string> names;
    stage2::OutlierReport report;
    json report_json;
};

/// Vectorizes a directory of equally sized PGMs as columns, estimates the
/// subspace with the SVD-reduced DPCP-IRLS, restores flagged images, and
/// writes them (clamped to [0,255]) under out_dir when nonempty.
ImagePipelineOutcome run_image_pipeline(const std::string& input_dir,
                                        const ImagePipelineOptions& options,
                                        const std::string& out_dir);

struct TheoryConfig {
    std::uint64_t master_seed = 2026;
    int identifiability_instances = 20;
    std::vector<std::array<int, 3>> identifiability_shapes = {{3, 3, 1}, {4, 3, 1}};
    int enumeration_seeds = 10;
    int power_sum_fuzz_cases = 10000;
    int slmf_random_patterns = 50;
    bool include_degenerate = true;
};

TheoryConfig theory_config_from_json(const json& config);

/// Desk-scale verification suite; the returned report validates against
/// schemas/theory_report.schema.json and is byte-stable for a fixed config.
json run_theory_suite(const TheoryConfig& config);

/// Minimal structural JSON-schema validation (type/properties/required/items);
/// returns an empty string on success, else the first violation found.
std::string validate_against_schema(const json& instance, const json& schema);

}  // namespace upca::harness

#include "upca/datagen.hpp"
#include "upca/harness.hpp"
#include "upca/numerics.hpp"
#include "upca/pgm.hpp"
#include "upca/rng.hpp"
#include "upca/stage1.hpp"
#include "upca/stage2.hpp"
#include "upca/theory.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <omp.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numbers>
#include <optional>
#include <string>

namespace {

using nlohmann::json;
using namespace upca;

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    return json::parse(in);
}

void write_json(const json& report, const std::string& path) {
    if (path.empty()) {
        std::cout << report.dump(2) << '\n';
        return;
    }
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << report.dump(2) << '\n';
}

struct GlobalFlags {
    std::string config_path;
    std::uint64_t seed = 1;
    int jobs = 0;
    std::string out;
};

int run_synth(const GlobalFlags& flags, int m, int n, int r, double ratio, double alpha,
              double snr, bool noiseless, const std::string& outlier_type) {
    const auto s_star = datagen::sample_subspace(m, r, derive_seed(flags.seed, 1));
    const Matrix x_star = datagen::sample_inliers(s_star, n, derive_seed(flags.seed, 2));
    datagen::CorruptionSpec spec;
    spec.n_total = n;
    spec.n_out = int(std::lround(ratio * n));
    spec.alpha = alpha;
    if (!noiseless) spec.snr_db = snr;
    spec.seed = derive_seed(flags.seed, 3);
    spec.outlier_type = outlier_type == "random_sphere" ? datagen::OutlierType::RandomSphere
                                                        : datagen::OutlierType::Permuted;
    const auto bundle = datagen::corrupt(x_star, r, spec);
    if (flags.out.empty()) throw std::runtime_error("synth: --out <dir> is required");
    datagen::save_bundle(bundle, flags.out);
    std::cout << "bundle written to " << flags.out << '\n';
    return 0;
}

int run_stage1_cmd(const GlobalFlags& flags, const std::string& input, int r,
                   const std::string& method) {
    const json config = load_config(flags.config_path);
    harness::ExperimentGrid defaults;
    stage1::DpcpConfig dpcp = defaults.dpcp;
    if (config.contains("max_iter")) dpcp.max_iter = config.at("max_iter").get<int>();
    if (config.contains("eps")) dpcp.eps = config.at("eps").get<double>();
    if (config.contains("delta")) dpcp.delta = config.at("delta").get<double>();
    if (config.contains("mu0")) dpcp.mu0 = config.at("mu0").get<double>();
    if (config.contains("beta")) dpcp.beta = config.at("beta").get<double>();

    Matrix x_tilde;
    std::optional<datagen::GroundTruthBundle> bundle;
    if (std::filesystem::is_directory(input)) {
        bundle = datagen::load_bundle(input);
        x_tilde = bundle->x_tilde;
    } else {
        x_tilde = numerics::read_matrix_text(input);
    }

    stage1::SubspaceEstimate estimate;
    switch (stage1::method_from_name(method)) {
        case stage1::Method::Cop: estimate = stage1::cop_subspace(x_tilde, r); break;
        case stage1::Method::DpcpIrls: estimate = stage1::dpcp_irls(x_tilde, r, dpcp); break;
        case stage1::Method::DpcpRsgm: estimate = stage1::dpcp_rsgm(x_tilde, r, dpcp); break;
    }

    json report;
    report["method"] = method;
    report["r"] = r;
    report["iterations_used"] = estimate.iterations_used;
    report["final_objective"] = estimate.final_objective;
    if (bundle) {
        report["theta_max_deg"] =
            numerics::max_principal_angle(estimate.s_hat, bundle->s_star) * 180.0 /
            std::numbers::pi;
    }
    if (!flags.out.empty()) {
        std::filesystem::create_directories(flags.out);
        numerics::write_matrix_text(estimate.s_hat.basis, flags.out + "/s_hat.txt");
        write_json(report, flags.out + "/stage1_report.json");
        std::cout << "estimate written to " << flags.out << '\n';
    } else {
        std::cout << report.dump(2) << '\n';
    }
    return 0;
}

int run_stage2_cmd(const GlobalFlags& flags, const std::string& input,
                   const std::string& basis_path, const std::string& method, double lambda,
                   int restarts, double threshold) {
    if (!std::filesystem::is_directory(input))
        throw std::runtime_error("stage2: input must be a bundle directory");
    const auto bundle = datagen::load_bundle(input);
    const SubspaceBasis s_hat(numerics::read_matrix_text(basis_path));

    stage2::RestoreOptions options;
    options.method = stage2::method_from_name(method);
    options.threshold = threshold;
    if (lambda > 0) options.lambda = lambda;
    options.restarts = restarts;
    options.seed = flags.seed;
    const auto outcome = stage2::restore_matrix(bundle.x_tilde, s_hat, options);

    json report;
    report["method"] = method;
    report["threshold"] = outcome.report.threshold;
    report["outlier_indices_1based"] = json::array();
    for (int j : outcome.report.outlier_indices)
        report["outlier_indices_1based"].push_back(j + 1);
    report["rel_error"] = stage2::relative_frobenius_error(outcome.x_hat, bundle.x_star);

    if (!flags.out.empty()) {
        std::filesystem::create_directories(flags.out);
        numerics::write_matrix_text(outcome.x_hat, flags.out + "/x_hat.txt");
        write_json(report, flags.out + "/stage2_report.json");
        std::cout << "restoration written to " << flags.out << '\n';
    } else {
        std::cout << report.dump(2) << '\n';
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unlabeled principal component analysis toolkit"};
    app.require_subcommand(1);

    GlobalFlags flags;
    app.add_option("--config", flags.config_path, "JSON configuration file");
    app.add_option("--seed", flags.seed, "master seed");
    app.add_option("--jobs", flags.jobs, "worker threads (0 = library default)");
    app.add_option("--out", flags.out, "output path (file or directory per subcommand)");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a seeded ground-truth bundle");
    int m = 50, n = 500, r = 10;
    double ratio = 0.3, alpha = 0.5, snr = 40.0;
    bool noiseless = false;
    std::string outlier_type = "permuted";
    synth->add_option("--m", m);
    synth->add_option("--n", n);
    synth->add_option("--r", r);
    synth->add_option("--ratio", ratio, "outlier ratio n_out/n");
    synth->add_option("--alpha", alpha, "permutation sparsity");
    synth->add_option("--snr", snr, "SNR in dB");
    synth->add_flag("--noiseless", noiseless);
    synth->add_option("--outlier-type", outlier_type, "permuted|random_sphere");

    // stage1
    auto* stage1_cmd = app.add_subcommand("stage1", "robust subspace estimation");
    std::string input, method = "dpcp_irls";
    stage1_cmd->add_option("--input", input, "bundle dir or matrix file")->required();
    stage1_cmd->add_option("--r", r)->required();
    stage1_cmd->add_option("--method", method, "cop|dpcp_irls|dpcp_rsgm");

    // stage2
    auto* stage2_cmd = app.add_subcommand("stage2", "restore permuted columns");
    std::string basis_path, s2_method = "lsrf";
    double lambda = 0.0, threshold = 0.05;
    int restarts = 20;
    stage2_cmd->add_option("--input", input, "bundle dir")->required();
    stage2_cmd->add_option("--basis", basis_path, "subspace basis (matrix text)")->required();
    stage2_cmd->add_option("--method", s2_method, "lsrf|l1rr|em|brute");
    stage2_cmd->add_option("--lambda", lambda, "l1rr weight (0 = default)");
    stage2_cmd->add_option("--restarts", restarts);
    stage2_cmd->add_option("--threshold", threshold);

    // pipeline
    auto* pipeline = app.add_subcommand("pipeline", "stage-1 + detection + stage-2");
    std::string s1_method = "dpcp_irls";
    pipeline->add_option("--input", input, "bundle dir or matrix file")->required();
    pipeline->add_option("--r", r)->required();
    pipeline->add_option("--stage1", s1_method, "cop|dpcp_irls|dpcp_rsgm");
    pipeline->add_option("--stage2", s2_method, "lsrf|l1rr|em|brute");
    pipeline->add_option("--lambda", lambda, "l1rr weight (0 = default)");
    pipeline->add_option("--restarts", restarts);
    pipeline->add_option("--threshold", threshold);

    // grids
    auto* phase = app.add_subcommand("phase-transition", "stage-1 sweep to CSV");
    bool heatmap = false;
    phase->add_flag("--heatmap", heatmap, "also render ranks x ratios PGM maps");
    auto* grid2 = app.add_subcommand("stage2-grid", "full-pipeline sweep to CSV");

    // theory-check
    auto* theory_cmd = app.add_subcommand("theory-check", "desk-scale verification suite");

    // patch-permute
    auto* patch = app.add_subcommand("patch-permute", "permute image patches");
    std::string image_path;
    int patch_w = 16, patch_h = 16;
    patch->add_option("--input", image_path, "PGM image")->required();
    patch->add_option("--patch-w", patch_w);
    patch->add_option("--patch-h", patch_h);
    patch->add_option("--alpha", alpha, "fraction of patches moved");

    // image-pipeline
    auto* images = app.add_subcommand("image-pipeline", "restore a permuted image stack");
    images->add_option("--input", input, "directory of PGM images")->required();
    images->add_option("--r", r);
    images->add_option("--stage2", s2_method, "lsrf|l1rr|em|brute");
    images->add_option("--threshold", threshold);

    // global flags may appear after the subcommand name
    for (auto* subcommand : app.get_subcommands({})) subcommand->fallthrough();

    CLI11_PARSE(app, argc, argv);

    try {
        if (flags.jobs > 0) omp_set_num_threads(flags.jobs);

        if (synth->parsed())
            return run_synth(flags, m, n, r, ratio, alpha, snr, noiseless, outlier_type);
        if (stage1_cmd->parsed()) return run_stage1_cmd(flags, input, r, method);
        if (stage2_cmd->parsed())
            return run_stage2_cmd(flags, input, basis_path, s2_method, lambda, restarts,
                                  threshold);

        if (pipeline->parsed()) {
            harness::PipelineOptions options;
            options.r = r;
            options.stage1_method = stage1::method_from_name(s1_method);
            options.stage2_method = stage2::method_from_name(s2_method);
            options.detect_threshold = threshold;
            if (lambda > 0) options.lambda = lambda;
            options.em_restarts = restarts;
            options.seed = flags.seed;
            const auto outcome = harness::run_pipeline(input, options, flags.out);
            if (flags.out.empty()) std::cout << outcome.report_json.dump(2) << '\n';
            return 0;
        }

        if (phase->parsed() || grid2->parsed()) {
            json config = load_config(flags.config_path);
            if (!config.contains("master_seed")) config["master_seed"] = flags.seed;
            const auto grid = harness::grid_from_json(config);
            const bool stage2_columns = grid2->parsed();
            const auto cells = stage2_columns ? harness::run_stage2_grid(grid)
                                              : harness::run_phase_transition(grid);
            const std::string path = flags.out.empty() ? "grid.csv" : flags.out;
            harness::write_cells_csv(cells, path, stage2_columns);
            harness::write_mean_csv(cells, harness::mean_csv_path(path), stage2_columns);
            if (heatmap && !stage2_columns) {
                const std::string stem =
                    path.ends_with(".csv") ? path.substr(0, path.size() - 4) : path;
                for (const auto& file : harness::render_theta_heatmaps(grid, cells, stem))
                    std::cout << "heatmap written to " << file << '\n';
            }
            std::cout << cells.size() << " cells written to " << path << '\n';
            return 0;
        }

        if (theory_cmd->parsed()) {
            const json config = load_config(flags.config_path);
            auto parsed = harness::theory_config_from_json(config);
            const json report = harness::run_theory_suite(parsed);
            write_json(report, flags.out);
            return report.at("pass").get<bool>() ? 0 : 1;
        }

        if (patch->parsed()) {
            if (flags.out.empty()) throw std::runtime_error("patch-permute: --out required");
            const auto image = pgm::read_pgm(image_path);
            const auto permuted = pgm::patch_permute(image, patch_w, patch_h, alpha, flags.seed);
            pgm::write_pgm(permuted, flags.out);
            std::cout << "permuted image written to " << flags.out << '\n';
            return 0;
        }

        if (images->parsed()) {
            harness::ImagePipelineOptions options;
            options.r = r;
            options.stage2_method = stage2::method_from_name(s2_method);
            options.detect_threshold = threshold;
            options.seed = flags.seed;
            const auto outcome = harness::run_image_pipeline(input, options, flags.out);
            std::cout << outcome.report_json.dump(2) << '\n';
            return 0;
        }
    } catch (const std::exception& error) {
        std::cerr << "error: " << error.what() << '\n';
        return 1;
    }
    return 0;
}

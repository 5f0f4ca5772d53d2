// Command-line driver: generate | fit | select | predict | eval | oracle.
// Every command writes its artifacts plus a manifest.json into --out-dir.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mmsb/estimation.hpp"
#include "mmsb/evaluation.hpp"
#include "mmsb/inference.hpp"
#include "mmsb/model.hpp"
#include "mmsb/network.hpp"
#include "mmsb/selection.hpp"
#include "mmsb/serialize.hpp"

namespace fs = std::filesystem;
using namespace mmsb;

namespace {

constexpr const char* kToolVersion = "mmsb 0.1.0";

struct ManifestWriter {
    std::string command;
    json config = json::object();
    json inputs = json::object();
    std::vector<std::string> outputs;
    std::uint64_t seed = 0;
    fs::path out_dir;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

    void add_input(const fs::path& p) { inputs[p.string()] = file_hash(p); }
    fs::path out(const std::string& name) {
        outputs.push_back((out_dir / name).string());
        return out_dir / name;
    }
    void write() {
        json j{{"command", command},
               {"tool_version", kToolVersion},
               {"seed", seed},
               {"config", config},
               {"inputs", inputs},
               {"outputs", outputs},
               {"wall_time_s",
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count()}};
        write_json_file(j, out_dir / "manifest.json");
    }
};

ManifestWriter make_manifest(const std::string& command, const std::string& out_dir,
                             std::uint64_t seed) {
    ManifestWriter m;
    m.command = command;
    m.seed = seed;
    m.out_dir = out_dir;
    fs::create_directories(m.out_dir);
    return m;
}

NetFormat format_for(const fs::path& p, const std::string& explicit_format) {
    if (explicit_format == "csv") return NetFormat::dense_csv;
    if (explicit_format == "tsv") return NetFormat::edge_list_tsv;
    return p.extension() == ".tsv" ? NetFormat::edge_list_tsv : NetFormat::dense_csv;
}

NetworkSet load_networks(const std::vector<std::string>& paths, const std::string& format,
                         ManifestWriter& manifest) {
    require(!paths.empty(), "at least one --network file is required");
    std::vector<Network> reps;
    for (const auto& p : paths) {
        manifest.add_input(p);
        reps.push_back(load_network(p, format_for(p, format)));
    }
    return NetworkSet(std::move(reps));
}

std::vector<double> parse_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    return out;
}

// Shared fit flags (fit and select).
struct FitFlags {
    int k = 2;
    std::string schedule = "nested";
    std::string rho_mode = "fixed";
    double rho = 0.0;
    std::string alpha_mode = "vector";
    std::string alpha_fixed;
    std::string alpha_init;
    std::string b_fixed;  // "identity" or a JSON file
    double b_scale = 1.0;
    int max_iters = 500;
    double tol = 1e-5;
    double inner_tol = 1e-8;
    int inner_max = 100;
    int estep_max_sweeps = 500;
    std::string init = "seeded";
    std::uint64_t seed = 0;
    int threads = 1;
    bool no_jitter = false;
    bool retain_phi = false;

    void attach(CLI::App* cmd, bool with_k = true) {
        if (with_k) cmd->add_option("--k", k, "number of latent groups")->required();
        cmd->add_option("--schedule", schedule, "nested|naive")
            ->check(CLI::IsMember({"nested", "naive"}));
        cmd->add_option("--rho-mode", rho_mode, "fixed|density|estimate")
            ->check(CLI::IsMember({"fixed", "density", "estimate"}));
        cmd->add_option("--rho", rho, "sparsity value for --rho-mode fixed");
        cmd->add_option("--alpha-mode", alpha_mode, "vector|scalar|fixed")
            ->check(CLI::IsMember({"vector", "scalar", "fixed"}));
        cmd->add_option("--alpha-fixed", alpha_fixed, "comma list for --alpha-mode fixed");
        cmd->add_option("--alpha-init", alpha_init, "comma list Newton start");
        cmd->add_option("--b-fixed", b_fixed, "'identity' or JSON file with a K x K matrix");
        cmd->add_option("--b-scale", b_scale, "scale for --b-fixed identity");
        cmd->add_option("--max-iters", max_iters, "EM iteration cap");
        cmd->add_option("--tol", tol, "relative bound change tolerance");
        cmd->add_option("--inner-tol", inner_tol, "per-pair fixed point tolerance");
        cmd->add_option("--inner-max", inner_max, "per-pair fixed point iteration cap");
        cmd->add_option("--estep-max-sweeps", estep_max_sweeps,
                        "sweep cap per E-step (naive schedule)");
        cmd->add_option("--init", init, "seeded|uniform starting memberships")
            ->check(CLI::IsMember({"seeded", "uniform"}));
        cmd->add_option("--seed", seed, "seed for initialization");
        cmd->add_option("--threads", threads, "worker count; 1 = deterministic reference");
        cmd->add_flag("--no-jitter", no_jitter, "disable the +-5% gamma jitter");
        cmd->add_flag("--retain-phi", retain_phi, "materialize and save per-pair phi");
    }

    FitConfig to_config(ManifestWriter* manifest) const {
        FitConfig cfg;
        cfg.k_groups = k;
        cfg.schedule = schedule == "naive" ? Schedule::naive : Schedule::nested;
        if (rho_mode == "fixed") {
            cfg.rho_mode = RhoMode::fixed_value;
            cfg.rho_value = rho;
        } else if (rho_mode == "density") {
            cfg.rho_mode = RhoMode::fixed_from_density;
        } else {
            cfg.rho_mode = RhoMode::estimate;
        }
        if (alpha_mode == "vector")
            cfg.alpha_mode = AlphaMode::estimate_vector;
        else if (alpha_mode == "scalar")
            cfg.alpha_mode = AlphaMode::estimate_scalar;
        else
            cfg.alpha_mode = AlphaMode::fixed;
        if (!alpha_fixed.empty()) {
            auto v = parse_list(alpha_fixed);
            if (v.size() == 1) v.assign(k, v[0]);
            cfg.alpha_fixed = v;
        }
        if (!alpha_init.empty()) {
            auto v = parse_list(alpha_init);
            if (v.size() == 1) v.assign(k, v[0]);
            cfg.alpha_init = v;
        }
        if (!b_fixed.empty()) {
            cfg.b_mode = BMode::fixed;
            if (b_fixed == "identity") {
                cfg.b_fixed = Matrix(k, k, 0.0);
                for (int g = 0; g < k; ++g) cfg.b_fixed(g, g) = b_scale;
            } else {
                if (manifest) manifest->add_input(b_fixed);
                cfg.b_fixed = matrix_from_json(read_json_file(b_fixed));
            }
        }
        cfg.max_em_iters = max_iters;
        cfg.em_tol = tol;
        cfg.inner.tol = inner_tol;
        cfg.inner.max_inner = inner_max;
        cfg.estep_max_sweeps = estep_max_sweeps;
        cfg.init_mode = init == "uniform" ? InitMode::uniform : InitMode::seeded;
        cfg.seed = seed;
        cfg.threads = threads;
        cfg.init_jitter = !no_jitter;
        cfg.retain_phi = retain_phi;
        return cfg;
    }

    json snapshot() const {
        return json{{"k", k},
                    {"schedule", schedule},
                    {"rho_mode", rho_mode},
                    {"rho", rho},
                    {"alpha_mode", alpha_mode},
                    {"alpha_fixed", alpha_fixed},
                    {"alpha_init", alpha_init},
                    {"b_fixed", b_fixed},
                    {"b_scale", b_scale},
                    {"max_iters", max_iters},
                    {"tol", tol},
                    {"inner_tol", inner_tol},
                    {"inner_max", inner_max},
                    {"estep_max_sweeps", estep_max_sweeps},
                    {"init", init},
                    {"seed", seed},
                    {"threads", threads},
                    {"no_jitter", no_jitter},
                    {"retain_phi", retain_phi}};
    }
};

int cmd_generate(int n, int k, const std::string& alpha_csv, double b_diag, double b_offdiag,
                 std::optional<double> b_const, const std::string& b_file, double rho,
                 int replicates, std::uint64_t seed, const std::string& out_dir,
                 const std::string& format, bool dump_indicators, bool symmetric) {
    auto manifest = make_manifest("generate", out_dir, seed);

    Hyperparams hyper;
    hyper.k_groups = k;
    auto alpha = parse_list(alpha_csv);
    if (alpha.size() == 1) alpha.assign(k, alpha[0]);
    hyper.alpha = alpha;
    if (!b_file.empty()) {
        manifest.add_input(b_file);
        hyper.block_matrix = matrix_from_json(read_json_file(b_file));
    } else if (b_const) {
        hyper.block_matrix = Matrix(k, k, *b_const);
    } else {
        hyper.block_matrix = Matrix(k, k, b_offdiag);
        for (int g = 0; g < k; ++g) hyper.block_matrix(g, g) = b_diag;
    }
    hyper.rho = rho;
    hyper.validate();

    SampleOptions opts;
    opts.n_replicates = replicates;
    opts.enforce_symmetric_indicators = symmetric;
    SampleResult sample = sample_network(hyper, n, seed, opts);

    const NetFormat fmt = format == "tsv" ? NetFormat::edge_list_tsv : NetFormat::dense_csv;
    const char* ext = format == "tsv" ? ".tsv" : ".csv";
    for (int m = 0; m < replicates; ++m)
        save_network(sample.networks.replicates[m],
                     manifest.out("network_r" + std::to_string(m) + ext), fmt);
    write_json_file(hyper_to_json(hyper), manifest.out("hyper.json"));
    write_json_file(truth_to_json(sample.truth, dump_indicators), manifest.out("truth.json"));

    manifest.config = json{{"n", n},
                           {"k", k},
                           {"alpha", alpha_csv},
                           {"b_diag", b_diag},
                           {"b_offdiag", b_offdiag},
                           {"b_const", b_const ? json(*b_const) : json()},
                           {"b_file", b_file},
                           {"rho", rho},
                           {"m", replicates},
                           {"format", format},
                           {"dump_indicators", dump_indicators},
                           {"symmetric_indicators", symmetric}};
    manifest.write();
    std::cout << "generated N=" << n << " K=" << k << " M=" << replicates
              << " density=" << density(sample.networks) << " -> " << out_dir << "\n";
    return 0;
}

int cmd_fit(const std::vector<std::string>& networks, const std::string& format,
            const FitFlags& flags, const std::string& mask_file, const std::string& out_dir) {
    auto manifest = make_manifest("fit", out_dir, flags.seed);
    NetworkSet data = load_networks(networks, format, manifest);

    std::optional<PairMask> mask;
    if (!mask_file.empty()) {
        manifest.add_input(mask_file);
        mask = mask_from_json(read_json_file(mask_file));
    }

    FitConfig cfg = flags.to_config(&manifest);
    FitResult result = fit(data, cfg, mask ? &*mask : nullptr);

    write_json_file(fit_result_to_json(result), manifest.out("fit.json"));
    write_elbo_trace_csv(result.elbo_iterations, manifest.out("elbo_trace.csv"));
    json state{{"gamma", matrix_to_json(result.state.gamma)},
               {"phi_file", result.state.has_phi() && flags.retain_phi ? json("phi.bin")
                                                                       : json()}};
    write_json_file(state, manifest.out("state.json"));
    if (result.state.has_phi() && flags.retain_phi)
        save_phi(result.state, result.n_nodes, cfg.k_groups, manifest.out("phi.bin"));

    manifest.config = flags.snapshot();
    manifest.config["networks"] = networks;
    manifest.config["mask"] = mask_file;
    manifest.write();
    std::cout << "fit K=" << cfg.k_groups << " converged=" << (result.converged ? "yes" : "no")
              << " iterations=" << result.iterations << " elbo=" << result.final_elbo() << " -> "
              << out_dir << "\n";
    return 0;
}

int cmd_select(const std::vector<std::string>& networks, const std::string& format,
               const FitFlags& flags, const std::string& criterion, int k_min, int k_max,
               int folds, const std::string& out_dir) {
    auto manifest = make_manifest("select", out_dir, flags.seed);
    NetworkSet data = load_networks(networks, format, manifest);

    FitConfig cfg = flags.to_config(&manifest);
    const SelectionCriterion crit =
        criterion == "bic" ? SelectionCriterion::bic : SelectionCriterion::cv_heldout;
    SelectionReport report = select_k(data, k_min, k_max, crit, folds, flags.seed, cfg);

    write_json_file(selection_report_to_json(report), manifest.out("selection.json"));
    write_selection_curve_csv(report, manifest.out("curve.csv"));
    if (crit == SelectionCriterion::cv_heldout)
        write_json_file(folds_to_json(selection_folds(data, folds, flags.seed)),
                        manifest.out("folds.json"));
    manifest.config = flags.snapshot();
    manifest.config["criterion"] = criterion;
    manifest.config["k_min"] = k_min;
    manifest.config["k_max"] = k_max;
    manifest.config["folds"] = folds;
    manifest.config["networks"] = networks;
    manifest.write();
    std::cout << "selected K=" << report.chosen_k << " (" << criterion << ") -> " << out_dir
              << "\n";
    return 0;
}

int cmd_predict(const std::string& fit_file, const std::string& mode,
                const std::string& out_dir) {
    auto manifest = make_manifest("predict", out_dir, 0);
    manifest.add_input(fit_file);
    FitResult result = fit_result_from_json(read_json_file(fit_file));

    const PredictionMode pmode =
        mode == "phi" ? PredictionMode::phi_based : PredictionMode::pi_based;
    if (pmode == PredictionMode::phi_based) {
        const fs::path phi_path = fs::path(fit_file).parent_path() / "phi.bin";
        if (!fs::exists(phi_path))
            throw InputError("phi-based prediction needs " + phi_path.string() +
                             " (fit with --retain-phi)");
        manifest.add_input(phi_path);
        load_phi(result.state, result.n_nodes, result.hyper_hat.k_groups, phi_path);
    }
    PredictionMatrix pred = predict_matrix(result, pmode);
    write_prediction_csv(pred, manifest.out("predictions.csv"));
    manifest.config = json{{"fit", fit_file}, {"mode", mode}};
    manifest.write();
    std::cout << "predicted " << result.n_nodes << "x" << result.n_nodes << " (" << mode
              << ") -> " << out_dir << "\n";
    return 0;
}

int cmd_eval(bool do_pr, bool do_align, bool do_bound, const std::string& pred_file,
             const std::string& ref_file, const std::string& format,
             const std::string& est_file, const std::string& truth_file,
             const std::string& fit_file, const std::string& oracle_file,
             const std::string& out_dir) {
    auto manifest = make_manifest("eval", out_dir, 0);
    require(do_pr || do_align || do_bound, "eval: pick at least one of --pr/--align/--bound-check");
    json summary = json::object();

    if (do_pr) {
        require(!pred_file.empty() && !ref_file.empty(), "eval --pr needs --pred and --ref");
        manifest.add_input(pred_file);
        manifest.add_input(ref_file);
        Network ref = load_network(ref_file, format_for(ref_file, format));
        PredictionMatrix pred;
        pred.probs = [&] {
            // predictions.csv is a dense N x N matrix of floats
            std::ifstream in(pred_file);
            if (!in) throw InputError("cannot open " + pred_file);
            std::vector<std::vector<double>> rows;
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                std::vector<double> row;
                std::stringstream ss(line);
                std::string cell;
                while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
                rows.push_back(std::move(row));
            }
            Matrix m(static_cast<int>(rows.size()),
                     rows.empty() ? 0 : static_cast<int>(rows[0].size()));
            for (std::size_t r = 0; r < rows.size(); ++r) {
                require(rows[r].size() == rows[0].size(), "predictions: ragged matrix");
                for (std::size_t c = 0; c < rows[r].size(); ++c)
                    m(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
            }
            return m;
        }();
        PRCurve curve = precision_recall(pred, ref);
        write_pr_curve_csv(curve, manifest.out("pr_curve.csv"));
        summary["pr_area"] = curve.area;
        summary["pr_points"] = curve.points.size();
    }
    if (do_align) {
        require(!est_file.empty() && !truth_file.empty(), "eval --align needs --est and --truth");
        manifest.add_input(est_file);
        manifest.add_input(truth_file);
        const json je = read_json_file(est_file);
        const Matrix est = matrix_from_json(je.contains("pi") ? je.at("pi") : je);
        const json jt = read_json_file(truth_file);
        const Matrix truth = matrix_from_json(jt.contains("pi") ? jt.at("pi") : jt);
        AlignmentResult align = align_memberships(est, truth);
        write_json_file(json{{"permutation", align.permutation},
                             {"ari", align.ari},
                             {"hard_accuracy", align.hard_accuracy}},
                        manifest.out("alignment.json"));
        summary["ari"] = align.ari;
        summary["hard_accuracy"] = align.hard_accuracy;
    }
    if (do_bound) {
        require(!fit_file.empty() && !oracle_file.empty(),
                "eval --bound-check needs --fit and --oracle");
        manifest.add_input(fit_file);
        manifest.add_input(oracle_file);
        const json jf = read_json_file(fit_file);
        const double elbo_final = jf.at("elbo_trace").back().get<double>();
        const double log_z = read_json_file(oracle_file).at("logZ").get<double>();
        const bool ok = elbo_final <= log_z + 1e-9;
        write_json_file(json{{"elbo", elbo_final}, {"logZ", log_z}, {"bound_holds", ok}},
                        manifest.out("bound_check.json"));
        summary["bound_holds"] = ok;
        if (!ok) {
            manifest.write();
            std::cerr << "bound check FAILED: elbo " << elbo_final << " > logZ " << log_z
                      << "\n";
            return 1;
        }
    }
    manifest.config = summary;
    manifest.write();
    std::cout << "eval " << summary.dump() << " -> " << out_dir << "\n";
    return 0;
}

int cmd_oracle(const std::vector<std::string>& networks, const std::string& format,
               const std::string& hyper_file, int threads, const std::string& out_dir) {
    auto manifest = make_manifest("oracle", out_dir, 0);
    NetworkSet data = load_networks(networks, format, manifest);
    manifest.add_input(hyper_file);
    const json j = read_json_file(hyper_file);
    Hyperparams hyper;
    if (j.contains("K")) {
        hyper = hyper_from_json(j);
    } else {
        // accept a fit.json as the hyperparameter source
        hyper.k_groups = j.at("k").get<int>();
        hyper.alpha = j.at("alpha").get<std::vector<double>>();
        hyper.block_matrix = matrix_from_json(j.at("B"));
        hyper.rho = j.at("rho").get<double>();
        hyper.validate();
    }
    const double log_z = exact_loglik_bruteforce(data, hyper, threads);
    write_json_file(json{{"logZ", log_z}}, manifest.out("oracle.json"));
    manifest.config = json{{"hyper", hyper_file}, {"networks", networks}, {"threads", threads}};
    manifest.write();
    std::cout << "logZ=" << log_z << " -> " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mixed membership blockmodel toolkit: sample, fit, select, predict, evaluate"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "sample networks from the generative model");
    int gen_n = 100, gen_k = 2, gen_m = 1;
    std::string gen_alpha = "1.0", gen_b_file, gen_out = "out", gen_format = "csv";
    double gen_b_diag = 0.3, gen_b_offdiag = 0.01, gen_rho = 0.0;
    std::optional<double> gen_b_const;
    std::uint64_t gen_seed = 0;
    bool gen_dump_z = false, gen_symmetric = false;
    gen->add_option("--n", gen_n, "number of nodes")->required();
    gen->add_option("--k", gen_k, "number of latent groups")->required();
    gen->add_option("--alpha", gen_alpha, "concentration (scalar or comma list)");
    gen->add_option("--b-diag", gen_b_diag, "within-group rate");
    gen->add_option("--b-offdiag", gen_b_offdiag, "between-group rate");
    gen->add_option("--b", gen_b_const, "constant rate for every block pair");
    gen->add_option("--b-file", gen_b_file, "JSON file with a K x K rate matrix");
    gen->add_option("--rho", gen_rho, "sparsity parameter");
    gen->add_option("--m", gen_m, "independent replicates");
    gen->add_option("--seed", gen_seed, "sampling seed");
    gen->add_option("--out-dir", gen_out, "output directory");
    gen->add_option("--format", gen_format, "csv|tsv")->check(CLI::IsMember({"csv", "tsv"}));
    gen->add_flag("--dump-indicators", gen_dump_z, "include indicator draws in truth.json");
    gen->add_flag("--symmetric-indicators", gen_symmetric,
                  "mirror indicator draws across pair orientations");

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "variational EM fit");
    std::vector<std::string> fit_networks;
    std::string fit_format = "auto", fit_mask, fit_out = "out";
    FitFlags fit_flags;
    fit_cmd->add_option("--network", fit_networks, "network file (repeat for replicates)")
        ->required();
    fit_cmd->add_option("--format", fit_format, "csv|tsv|auto");
    fit_cmd->add_option("--mask", fit_mask, "JSON held-out pair mask");
    fit_cmd->add_option("--out-dir", fit_out, "output directory");
    fit_flags.attach(fit_cmd);

    // select
    auto* sel = app.add_subcommand("select", "choose K by BIC or cross-validated likelihood");
    std::vector<std::string> sel_networks;
    std::string sel_format = "auto", sel_criterion = "cv", sel_out = "out";
    int sel_kmin = 2, sel_kmax = 6, sel_folds = 5;
    FitFlags sel_flags;
    sel->add_option("--network", sel_networks, "network file (repeat for replicates)")
        ->required();
    sel->add_option("--format", sel_format, "csv|tsv|auto");
    sel->add_option("--criterion", sel_criterion, "bic|cv")
        ->check(CLI::IsMember({"bic", "cv"}));
    sel->add_option("--k-min", sel_kmin, "smallest K")->required();
    sel->add_option("--k-max", sel_kmax, "largest K")->required();
    sel->add_option("--folds", sel_folds, "cross-validation folds");
    sel->add_option("--out-dir", sel_out, "output directory");
    sel_flags.attach(sel, /*with_k=*/false);

    // predict
    auto* pred = app.add_subcommand("predict", "posterior edge probabilities");
    std::string pred_fit, pred_mode = "pi", pred_out = "out";
    pred->add_option("--fit", pred_fit, "fit.json from a fit run")->required();
    pred->add_option("--mode", pred_mode, "pi|phi")->check(CLI::IsMember({"pi", "phi"}));
    pred->add_option("--out-dir", pred_out, "output directory");

    // eval
    auto* ev = app.add_subcommand("eval", "score predictions and recoveries");
    bool ev_pr = false, ev_align = false, ev_bound = false;
    std::string ev_pred, ev_ref, ev_format = "auto", ev_est, ev_truth, ev_fit, ev_oracle,
                ev_out = "out";
    ev->add_flag("--pr", ev_pr, "precision-recall of predictions against a reference");
    ev->add_flag("--align", ev_align, "align memberships and report ARI/accuracy");
    ev->add_flag("--bound-check", ev_bound, "verify elbo <= exact log-likelihood");
    ev->add_option("--pred", ev_pred, "predictions.csv");
    ev->add_option("--ref", ev_ref, "reference network file");
    ev->add_option("--format", ev_format, "csv|tsv|auto");
    ev->add_option("--est", ev_est, "fit.json (or bare pi matrix JSON)");
    ev->add_option("--truth", ev_truth, "truth.json (or bare pi matrix JSON)");
    ev->add_option("--fit", ev_fit, "fit.json for --bound-check");
    ev->add_option("--oracle", ev_oracle, "oracle.json for --bound-check");
    ev->add_option("--out-dir", ev_out, "output directory");

    // oracle
    auto* orc = app.add_subcommand("oracle", "exact log-likelihood by enumeration (tiny inputs)");
    std::vector<std::string> orc_networks;
    std::string orc_format = "auto", orc_hyper, orc_out = "out";
    int orc_threads = 1;
    orc->add_option("--network", orc_networks, "network file (repeat for replicates)")
        ->required();
    orc->add_option("--format", orc_format, "csv|tsv|auto");
    orc->add_option("--hyper", orc_hyper, "hyper.json or fit.json")->required();
    orc->add_option("--threads", orc_threads, "worker count");
    orc->add_option("--out-dir", orc_out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return cmd_generate(gen_n, gen_k, gen_alpha, gen_b_diag, gen_b_offdiag, gen_b_const,
                                gen_b_file, gen_rho, gen_m, gen_seed, gen_out, gen_format,
                                gen_dump_z, gen_symmetric);
        if (fit_cmd->parsed()) return cmd_fit(fit_networks, fit_format, fit_flags, fit_mask, fit_out);
        if (sel->parsed())
            return cmd_select(sel_networks, sel_format, sel_flags, sel_criterion, sel_kmin,
                              sel_kmax, sel_folds, sel_out);
        if (pred->parsed()) return cmd_predict(pred_fit, pred_mode, pred_out);
        if (ev->parsed())
            return cmd_eval(ev_pr, ev_align, ev_bound, ev_pred, ev_ref, ev_format, ev_est,
                            ev_truth, ev_fit, ev_oracle, ev_out);
        if (orc->parsed())
            return cmd_oracle(orc_networks, orc_format, orc_hyper, orc_threads, orc_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

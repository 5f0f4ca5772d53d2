#include "mmsb/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mmsb {

json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (int r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Matrix matrix_from_json(const json& j) {
    require(j.is_array() && !j.empty(), "matrix: expected a non-empty array of rows");
    const int rows = static_cast<int>(j.size());
    const int cols = static_cast<int>(j.at(0).size());
    Matrix m(rows, cols);
    for (int r = 0; r < rows; ++r) {
        require(static_cast<int>(j.at(r).size()) == cols, "matrix: ragged rows");
        for (int c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
    }
    return m;
}

json hyper_to_json(const Hyperparams& h) {
    return json{{"K", h.k_groups},
                {"alpha", h.alpha},
                {"B", matrix_to_json(h.block_matrix)},
                {"rho", h.rho}};
}

Hyperparams hyper_from_json(const json& j) {
    Hyperparams h;
    h.k_groups = j.at("K").get<int>();
    h.alpha = j.at("alpha").get<std::vector<double>>();
    h.block_matrix = matrix_from_json(j.at("B"));
    h.rho = j.value("rho", 0.0);
    h.validate();
    return h;
}

json mask_to_json(const PairMask& mask) {
    json pairs = json::array();
    for (auto [p, q] : mask.held_out) pairs.push_back(json::array({p, q}));
    return json{{"fold_id", mask.fold_id}, {"held_out", std::move(pairs)}};
}

PairMask mask_from_json(const json& j) {
    PairMask mask;
    mask.fold_id = j.at("fold_id").get<int>();
    for (const auto& pair : j.at("held_out")) {
        require(pair.is_array() && pair.size() == 2, "mask: held_out entries must be [p,q]");
        mask.held_out.emplace_back(pair.at(0).get<int>(), pair.at(1).get<int>());
    }
    std::sort(mask.held_out.begin(), mask.held_out.end());
    return mask;
}

json folds_to_json(const std::vector<PairMask>& folds) {
    json arr = json::array();
    for (const auto& f : folds) arr.push_back(mask_to_json(f));
    return arr;
}

std::vector<PairMask> folds_from_json(const json& j) {
    std::vector<PairMask> folds;
    for (const auto& f : j) folds.push_back(mask_from_json(f));
    return folds;
}

json fit_result_to_json(const FitResult& fit) {
    json j;
    j["alpha"] = fit.hyper_hat.alpha;
    j["B"] = matrix_to_json(fit.hyper_hat.block_matrix);
    j["rho"] = fit.hyper_hat.rho;
    j["pi"] = matrix_to_json(fit.pi_hat);
    j["elbo_trace"] = fit.elbo_trace();
    j["converged"] = fit.converged;
    j["iterations"] = fit.iterations;
    j["wall_time_s"] = fit.wall_time_s;
    j["k"] = fit.hyper_hat.k_groups;
    j["n"] = fit.n_nodes;
    j["diagonal"] = to_string(fit.diagonal_policy);
    j["schedule"] = to_string(fit.config.schedule);
    j["rho_mode"] = to_string(fit.config.rho_mode);
    j["alpha_mode"] = to_string(fit.config.alpha_mode);
    j["b_mode"] = to_string(fit.config.b_mode);
    j["seed"] = fit.config.seed;
    j["warnings"] = fit.warnings;
    return j;
}

FitResult fit_result_from_json(const json& j) {
    FitResult fit;
    fit.hyper_hat.k_groups = j.at("k").get<int>();
    fit.hyper_hat.alpha = j.at("alpha").get<std::vector<double>>();
    fit.hyper_hat.block_matrix = matrix_from_json(j.at("B"));
    fit.hyper_hat.rho = j.at("rho").get<double>();
    fit.hyper_hat.validate();
    fit.pi_hat = matrix_from_json(j.at("pi"));
    fit.n_nodes = j.at("n").get<int>();
    fit.diagonal_policy = j.value("diagonal", std::string("excluded")) == "included"
                              ? DiagonalPolicy::included
                              : DiagonalPolicy::excluded;
    fit.converged = j.value("converged", false);
    fit.iterations = j.value("iterations", 0);
    ElboBreakdown last;
    const auto trace = j.value("elbo_trace", std::vector<double>{});
    for (double t : trace) {
        last.total = t;
        fit.elbo_iterations.push_back(last);
    }
    fit.state.gamma = Matrix(fit.n_nodes, fit.hyper_hat.k_groups, 1.0);
    return fit;
}

json selection_report_to_json(const SelectionReport& report) {
    json cands = json::array();
    for (const auto& c : report.candidates) {
        json jc{{"k", c.k},
                {"score", c.score},
                {"mean_final_elbo", c.mean_final_elbo},
                {"all_converged", c.all_converged},
                {"max_iterations", c.max_iterations},
                {"failed", c.failed}};
        if (!c.per_fold.empty()) jc["per_fold"] = c.per_fold;
        if (c.failed) jc["error"] = c.error;
        cands.push_back(std::move(jc));
    }
    return json{{"candidates", std::move(cands)},
                {"chosen_k", report.chosen_k},
                {"criterion", to_string(report.criterion)},
                {"n_folds", report.n_folds},
                {"seed", report.seed}};
}

json truth_to_json(const SampleTruth& truth, bool include_indicators) {
    json j;
    j["pi"] = matrix_to_json(truth.pi);
    if (include_indicators) {
        json zs = json::array(), zr = json::array();
        for (const auto& v : truth.z_sender) zs.push_back(std::vector<int>(v.begin(), v.end()));
        for (const auto& v : truth.z_receiver) zr.push_back(std::vector<int>(v.begin(), v.end()));
        j["z_sender"] = std::move(zs);
        j["z_receiver"] = std::move(zr);
    }
    return j;
}

namespace {
constexpr char kPhiMagic[8] = {'M', 'M', 'S', 'B', 'P', 'H', 'I', '1'};
}

void save_phi(const VariationalState& state, int n, int k, const std::filesystem::path& path) {
    require(state.has_phi(), "save_phi: state has no materialized phi");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    const std::int32_t header[3] = {static_cast<std::int32_t>(state.phi_sender.size()),
                                    static_cast<std::int32_t>(n), static_cast<std::int32_t>(k)};
    out.write(kPhiMagic, sizeof(kPhiMagic));
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    for (const auto& v : state.phi_sender)
        out.write(reinterpret_cast<const char*>(v.data()),
                  static_cast<std::streamsize>(v.size() * sizeof(double)));
    for (const auto& v : state.phi_receiver)
        out.write(reinterpret_cast<const char*>(v.data()),
                  static_cast<std::streamsize>(v.size() * sizeof(double)));
    if (!out) throw InputError("write failed: " + path.string());
}

void load_phi(VariationalState& state, int n, int k, const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    char magic[8];
    std::int32_t header[3];
    in.read(magic, sizeof(magic));
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    require(in && std::equal(magic, magic + 8, kPhiMagic), "load_phi: bad file header");
    require(header[1] == n && header[2] == k, "load_phi: dimension mismatch");
    state.allocate_phi(n, k, header[0]);
    for (auto& v : state.phi_sender)
        in.read(reinterpret_cast<char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(double)));
    for (auto& v : state.phi_receiver)
        in.read(reinterpret_cast<char*>(v.data()),
                static_cast<std::streamsize>(v.size() * sizeof(double)));
    require(bool(in), "load_phi: truncated file");
}

void write_json_file(const json& j, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << j.dump(2) << '\n';
    if (!out) throw InputError("write failed: " + path.string());
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw InputError(path.string() + ": " + e.what());
    }
    return j;
}

namespace {
std::string fmt(double v) {
    std::ostringstream ss;
    ss.precision(17);
    ss << v;
    return ss.str();
}
}  // namespace

void write_elbo_trace_csv(const std::vector<ElboBreakdown>& trace,
                          const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << "iteration,total";
    const char* const* names = ElboBreakdown::term_names();
    for (int i = 0; i < 7; ++i) out << ',' << names[i];
    out << '\n';
    for (std::size_t i = 0; i < trace.size(); ++i) {
        out << i << ',' << fmt(trace[i].total);
        for (int t = 0; t < 7; ++t) out << ',' << fmt(trace[i].term(t));
        out << '\n';
    }
}

void write_pr_curve_csv(const PRCurve& curve, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << "threshold,precision,recall\n";
    for (const auto& p : curve.points)
        out << fmt(p.threshold) << ',' << fmt(p.precision) << ',' << fmt(p.recall) << '\n';
}

void write_selection_curve_csv(const SelectionReport& report,
                               const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    out << "k,score,score_std,failed\n";
    for (const auto& c : report.candidates) {
        double sd = 0.0;
        if (c.per_fold.size() > 1) {
            double mean = c.score, acc = 0.0;
            for (double v : c.per_fold) acc += (v - mean) * (v - mean);
            sd = std::sqrt(acc / double(c.per_fold.size() - 1));
        }
        out << c.k << ',' << fmt(c.score) << ',' << fmt(sd) << ',' << (c.failed ? 1 : 0)
            << '\n';
    }
}

void write_prediction_csv(const PredictionMatrix& pred, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path.string());
    for (int p = 0; p < pred.probs.rows(); ++p) {
        for (int q = 0; q < pred.probs.cols(); ++q) {
            if (q) out << ',';
            out << fmt(pred.probs(p, q));
        }
        out << '\n';
    }
}

std::string file_hash(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    std::uint64_t h = 0xCBF29CE484222325ULL;
    char buf[65536];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001B3ULL;
        }
        if (!in) break;
    }
    char hex[17];
    std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
    return std::string(hex);
}

const char* to_string(Schedule s) { return s == Schedule::nested ? "nested" : "naive"; }
const char* to_string(RhoMode m) {
    switch (m) {
        case RhoMode::estimate: return "estimate";
        case RhoMode::fixed_from_density: return "density";
        default: return "fixed";
    }
}
const char* to_string(AlphaMode m) {
    switch (m) {
        case AlphaMode::estimate_vector: return "vector";
        case AlphaMode::estimate_scalar: return "scalar";
        default: return "fixed";
    }
}
const char* to_string(BMode m) { return m == BMode::estimate ? "estimate" : "fixed"; }
const char* to_string(SelectionCriterion c) {
    return c == SelectionCriterion::bic ? "bic" : "cv";
}
const char* to_string(DiagonalPolicy p) {
    return p == DiagonalPolicy::excluded ? "excluded" : "included";
}

}  // namespace mmsb

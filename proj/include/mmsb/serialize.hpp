#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmsb/estimation.hpp"
#include "mmsb/evaluation.hpp"
#include "mmsb/model.hpp"
#include "mmsb/network.hpp"
#include "mmsb/selection.hpp"

namespace mmsb {

using json = nlohmann::json;

json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const json& j);

// {"K":int, "alpha":[...], "B":[[...]], "rho":float}
json hyper_to_json(const Hyperparams& h);
Hyperparams hyper_from_json(const json& j);

json mask_to_json(const PairMask& mask);
PairMask mask_from_json(const json& j);
json folds_to_json(const std::vector<PairMask>& folds);
std::vector<PairMask> folds_from_json(const json& j);

// {"alpha":..., "B":..., "rho":..., "pi":..., "elbo_trace":..., "converged":...,
//  "iterations":..., "wall_time_s":...} plus bookkeeping extras.
json fit_result_to_json(const FitResult& fit);

json selection_report_to_json(const SelectionReport& report);

json truth_to_json(const SampleTruth& truth, bool include_indicators);

// Reads the subset of FitResult that downstream commands need (pi, hypers,
// dimensions, optional phi sidecar written by save_phi).
FitResult fit_result_from_json(const json& j);

void save_phi(const VariationalState& state, int n, int k,
              const std::filesystem::path& path);
void load_phi(VariationalState& state, int n, int k, const std::filesystem::path& path);

void write_json_file(const json& j, const std::filesystem::path& path);
json read_json_file(const std::filesystem::path& path);

void write_elbo_trace_csv(const std::vector<ElboBreakdown>& trace,
                          const std::filesystem::path& path);
void write_pr_curve_csv(const PRCurve& curve, const std::filesystem::path& path);
void write_selection_curve_csv(const SelectionReport& report,
                               const std::filesystem::path& path);
void write_prediction_csv(const PredictionMatrix& pred, const std::filesystem::path& path);

// FNV-1a 64 over the file bytes, hex encoded; used to pin inputs in manifests.
std::string file_hash(const std::filesystem::path& path);

const char* to_string(Schedule s);
const char* to_string(RhoMode m);
const char* to_string(AlphaMode m);
const char* to_string(BMode m);
const char* to_string(SelectionCriterion c);
const char* to_string(DiagonalPolicy p);

}  // namespace mmsb

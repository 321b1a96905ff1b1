#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fedsim/data.hpp"
#include "fedsim/model.hpp"

namespace fedsim {

enum class EvalGroup { local_test, independent };

std::string group_name(EvalGroup g);

/// Per-center evaluation of one model at a fixed threshold.
struct EvalReport {
  std::string center_id;
  EvalGroup group = EvalGroup::local_test;
  Eigen::Index n_pos = 0;
  Eigen::Index n_neg = 0;
  double f1 = 0.0;
  std::optional<double> auroc;  // absent when only one class is present
  double threshold = 0.5;
};

/// 2TP / (2TP + FP + FN); 0 when the denominator is 0.
double f1_score(const std::vector<int>& preds, const std::vector<int>& labels);

/// Probability a random positive outranks a random negative, ties counted
/// half (Mann-Whitney midranks). Both classes must be present.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Report for one model on one labeled dataset.
EvalReport evaluate_single(const ModelSpec& spec, const ParameterSet& model,
                           const std::string& center_id, EvalGroup group,
                           const LabeledMatrix& data, double threshold = 0.5);

/// One report per training center (its test split) and one per independent
/// center (all of its samples), in layout order with centers sorted.
std::vector<EvalReport> evaluate_model(const ModelSpec& spec,
                                       const ParameterSet& model,
                                       const std::map<std::string, ClientDataset>& datasets,
                                       const FederationLayout& layout,
                                       double threshold = 0.5);

/// Unweighted mean and sample (n-1) standard deviation per method x group.
struct SummaryRow {
  std::string method;
  EvalGroup group = EvalGroup::local_test;
  int n_centers = 0;
  double mean_f1 = 0.0;
  double sd_f1 = 0.0;
  double mean_auroc = 0.0;
  double sd_auroc = 0.0;
};

std::vector<SummaryRow> summarize(
    const std::vector<std::pair<std::string, std::vector<EvalReport>>>& per_method);

/// reports.csv rows: method,center_id,group,n_pos,n_neg,f1,auroc
void write_reports_csv(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, std::vector<EvalReport>>>& per_method);

/// summary.csv rows: method,group,n_centers,mean_f1,sd_f1,mean_auroc,sd_auroc
void write_summary_csv(const std::filesystem::path& path,
                       const std::vector<SummaryRow>& rows);

}  // namespace fedsim

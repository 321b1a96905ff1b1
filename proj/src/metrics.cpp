#include "fedsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "fedsim/format.hpp"

namespace fedsim {

namespace {

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
};

MeanSd mean_and_sample_sd(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double sq = 0.0;
  for (double x : xs) sq += (x - mean) * (x - mean);
  const double sd = xs.size() > 1 ? std::sqrt(sq / (n - 1.0)) : 0.0;
  return {mean, sd};
}

}  // namespace

EvalReport evaluate_single(const ModelSpec& spec, const ParameterSet& model,
                           const std::string& center_id, EvalGroup group,
                           const LabeledMatrix& data, double threshold) {
  if (data.count() == 0)
    throw ConfigError("center " + center_id + " has no samples to evaluate in " +
                      group_name(group));
  EvalReport r;
  r.center_id = center_id;
  r.group = group;
  r.threshold = threshold;
  const Eigen::ArrayXd prob = predict_proba(spec, model, data.features);
  std::vector<int> preds(static_cast<std::size_t>(prob.size()));
  std::vector<int> labels(static_cast<std::size_t>(prob.size()));
  std::vector<double> scores(static_cast<std::size_t>(prob.size()));
  for (Eigen::Index i = 0; i < prob.size(); ++i) {
    preds[static_cast<std::size_t>(i)] = prob[i] > threshold ? 1 : 0;
    labels[static_cast<std::size_t>(i)] = static_cast<int>(data.labels[i]);
    scores[static_cast<std::size_t>(i)] = prob[i];
    if (data.labels[i] > 0.5)
      ++r.n_pos;
    else
      ++r.n_neg;
  }
  r.f1 = f1_score(preds, labels);
  if (r.n_pos >= 1 && r.n_neg >= 1) r.auroc = auroc(scores, labels);
  return r;
}

std::string group_name(EvalGroup g) {
  return g == EvalGroup::local_test ? "local_test" : "independent";
}

double f1_score(const std::vector<int>& preds, const std::vector<int>& labels) {
  if (preds.size() != labels.size())
    throw ConfigError("f1_score: length mismatch");
  if (preds.empty()) throw ConfigError("f1_score: empty input");
  long tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == 1 && labels[i] == 1) ++tp;
    if (preds[i] == 1 && labels[i] == 0) ++fp;
    if (preds[i] == 0 && labels[i] == 1) ++fn;
  }
  const long denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size())
    throw ConfigError("auroc: length mismatch");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int y : labels) n_pos += y == 1 ? 1u : 0u;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0)
    throw MetricError("auroc undefined: only one class present");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Midranks over tie groups, 1-based.
  std::vector<double> rank(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    const double mid = 0.5 * static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) rank[order[k]] = mid;
    i = j + 1;
  }

  double rank_sum_pos = 0.0;
  for (std::size_t k = 0; k < n; ++k)
    if (labels[k] == 1) rank_sum_pos += rank[k];
  const double u = rank_sum_pos -
                   static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

std::vector<EvalReport> evaluate_model(const ModelSpec& spec,
                                       const ParameterSet& model,
                                       const std::map<std::string, ClientDataset>& datasets,
                                       const FederationLayout& layout,
                                       double threshold) {
  std::vector<EvalReport> reports;
  std::vector<std::string> train = layout.training_centers;
  std::sort(train.begin(), train.end());
  for (const std::string& c : train) {
    const auto it = datasets.find(c);
    if (it == datasets.end()) throw ConfigError("unknown training center " + c);
    reports.push_back(evaluate_single(spec, model, c, EvalGroup::local_test,
                                      it->second.split_matrix(Split::test),
                                      threshold));
  }
  std::vector<std::string> indep = layout.independent_centers;
  std::sort(indep.begin(), indep.end());
  for (const std::string& c : indep) {
    const auto it = datasets.find(c);
    if (it == datasets.end()) throw ConfigError("unknown independent center " + c);
    reports.push_back(evaluate_single(spec, model, c, EvalGroup::independent,
                                      it->second.all_matrix(), threshold));
  }
  return reports;
}

std::vector<SummaryRow> summarize(
    const std::vector<std::pair<std::string, std::vector<EvalReport>>>& per_method) {
  std::vector<SummaryRow> rows;
  for (const auto& [method, reports] : per_method) {
    for (EvalGroup g : {EvalGroup::independent, EvalGroup::local_test}) {
      std::vector<double> f1s;
      std::vector<double> aurocs;
      for (const EvalReport& r : reports) {
        if (r.group != g) continue;
        f1s.push_back(r.f1);
        if (r.auroc) aurocs.push_back(*r.auroc);
      }
      if (f1s.size() < 2)
        throw ConfigError("summarize: method " + method + " has fewer than 2 " +
                          group_name(g) + " reports");
      SummaryRow row;
      row.method = method;
      row.group = g;
      row.n_centers = static_cast<int>(f1s.size());
      const MeanSd f1 = mean_and_sample_sd(f1s);
      row.mean_f1 = f1.mean;
      row.sd_f1 = f1.sd;
      if (!aurocs.empty()) {
        const MeanSd au = mean_and_sample_sd(aurocs);
        row.mean_auroc = au.mean;
        row.sd_auroc = au.sd;
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_reports_csv(
    const std::filesystem::path& path,
    const std::vector<std::pair<std::string, std::vector<EvalReport>>>& per_method) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "method,center_id,group,n_pos,n_neg,f1,auroc\n";
  for (const auto& [method, reports] : per_method)
    for (const EvalReport& r : reports) {
      out << method << "," << r.center_id << "," << group_name(r.group) << ","
          << r.n_pos << "," << r.n_neg << "," << format_double(r.f1) << ","
          << (r.auroc ? format_double(*r.auroc) : std::string()) << "\n";
    }
}

void write_summary_csv(const std::filesystem::path& path,
                       const std::vector<SummaryRow>& rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << "method,group,n_centers,mean_f1,sd_f1,mean_auroc,sd_auroc\n";
  for (const SummaryRow& r : rows) {
    out << r.method << "," << group_name(r.group) << "," << r.n_centers << ","
        << format_double(r.mean_f1) << "," << format_double(r.sd_f1) << ","
        << format_double(r.mean_auroc) << "," << format_double(r.sd_auroc) << "\n";
  }
}

}  // namespace fedsim

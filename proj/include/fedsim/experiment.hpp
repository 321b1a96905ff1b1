#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "fedsim/federation.hpp"
#include "fedsim/metrics.hpp"

namespace fedsim {

enum class Method { centralized, local, fedavg, fedprox, feddropoutavg };

std::string method_name(Method m);
Method method_from_name(const std::string& name);

struct GridSpec {
  std::vector<double> cdr_values;
  std::vector<double> fdr_values;
};

/// Data source plus the layout and hyperparameters shared by every method of
/// a run. Parsed from a single JSON config file; config.resolved echoes the
/// fully resolved structure back.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string output_dir;

  std::optional<SynthConfig> synthetic;  // exactly one source set
  std::optional<std::string> csv_path;

  std::optional<FederationLayout> layout;  // explicit center lists, or:
  int n_train_centers = 0;                 // first n of the sorted center ids

  std::vector<Method> methods;

  int rounds = 20;
  int local_epochs_per_round = 1;
  int batch_size = 0;
  ModelSpec model;
  OptimizerConfig optimizer;

  double fedprox_mu = 0.01;
  double fdr = 0.3;
  double cdr = 0.2;

  std::optional<GridSpec> grid;
  std::optional<int> kfold;

  void validate() const;
};

ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& cfg);

std::map<std::string, ClientDataset> load_datasets(const ExperimentConfig& cfg);
FederationLayout resolve_layout(const ExperimentConfig& cfg,
                                const std::map<std::string, ClientDataset>& datasets);

/// The federation settings one method runs with (fedavg and fedprox keep
/// cdr = 0, the baseline convention; feddropoutavg uses cfg.cdr / cfg.fdr).
FederationConfig federation_config_for(const ExperimentConfig& cfg,
                                       const FederationLayout& layout, Method m);

/// Everything one method produced in a run.
struct MethodRun {
  Method method = Method::fedavg;
  std::uint64_t init_checksum = 0;
  std::vector<EvalReport> reports;
  TrainResult result;                     // empty for Method::local
  std::map<std::string, TrainResult> local_results;  // Method::local only
};

struct RunResult {
  FederationLayout layout;
  std::vector<MethodRun> methods;
  std::vector<SummaryRow> summary;
};

/// Trains every requested method on the same datasets, layout and seed, and
/// evaluates each on the layout's 21-test-set analogue. All methods must see
/// the identical initial model (checked via the init checksum).
RunResult execute_run(const ExperimentConfig& cfg,
                      const std::map<std::string, ClientDataset>& datasets,
                      const FederationLayout& layout);

struct GridCell {
  double cdr = 0.0;
  double fdr = 0.0;
  double total_val_loss = 0.0;  // best-round selection value of the run
  double mean_f1_local = 0.0;
  double mean_f1_independent = 0.0;
  bool selected = false;  // argmin of total_val_loss over the grid
};

std::vector<GridCell> execute_grid(const ExperimentConfig& cfg,
                                   const std::map<std::string, ClientDataset>& datasets,
                                   const FederationLayout& layout);

/// `fedsim run`: writes output_dir/{method}/rounds.jsonl and model artifacts,
/// plus reports.csv, summary.csv and config.resolved at the top level.
int cmd_run(const ExperimentConfig& cfg);

/// `fedsim grid`: one feddropoutavg run per (cdr, fdr) pair; writes grid.csv.
int cmd_grid(const ExperimentConfig& cfg);

/// `fedsim kfold`: run all methods per fold layout; per-fold outputs under
/// output_dir/fold<j>/ and a pooled summary.csv at the top level.
int cmd_kfold(const ExperimentConfig& cfg);

}  // namespace fedsim

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "fedsim/data.hpp"
#include "fedsim/model.hpp"
#include "fedsim/param_set.hpp"

namespace fedsim {

enum class Strategy { fedavg, fedprox, feddropoutavg };

std::string strategy_name(Strategy s);
Strategy strategy_from_name(const std::string& name);

/// Aggregation strategy plus its hyperparameters. fdr is the per-parameter
/// dropout rate, cdr the client dropout rate; both apply per round.
struct StrategyConfig {
  Strategy strategy = Strategy::fedavg;
  double fdr = 0.0;
  double cdr = 0.0;
  double prox_mu = 0.0;

  /// fedavg: fdr = 0, prox_mu = 0. fedprox: fdr = 0, prox_mu >= 0
  /// (0 is the fedavg-reduction case). feddropoutavg: prox_mu = 0.
  void validate() const;
};

struct OptimizerConfig {
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int halve_every = 2;
};

struct FederationConfig {
  int rounds = 20;
  int local_epochs_per_round = 1;
  int batch_size = 32;
  std::vector<std::string> clients;  // canonical order; index = client id
  std::uint64_t seed = 0;
  StrategyConfig strategy;
  ModelSpec model;
  OptimizerConfig optimizer;

  void validate() const;
};

/// A locally trained model and the sample count behind it.
struct ClientUpdate {
  ParameterSet params;
  std::int64_t n_samples = 0;
};

/// Per-parameter contribution weights and survivor mass. At every index with
/// mass > 0 the client weights sum to 1 and vanish for dropped clients.
struct ContributionWeights {
  std::vector<ParameterSet> alpha;  // one congruent weight set per client
  ParameterSet survivor_mass;       // sum of n_samples over surviving clients
  Eigen::Index fallback_count = 0;  // indices where every client dropped
};

/// max(1, floor(C * (1 - cdr))): the constant per-round participant count.
int selection_count(int n_clients, double cdr);

/// Uniform sample without replacement of selection_count client indices,
/// returned in ascending (canonical) order.
std::vector<int> select_clients(int n_clients, double cdr, RngStream& rng);

/// Shared aggregation kernel. With masks == nullptr every parameter of every
/// client survives and the result is the plain data-size-weighted average.
/// With masks, each index averages the surviving clients only, renormalized
/// by the surviving sample mass; indices where every client dropped keep
/// prev_global's value (prev_global must then be non-null).
ParameterSet aggregate_masked(const std::vector<ClientUpdate>& updates,
                              const std::vector<DropoutMask>* masks,
                              const ParameterSet* prev_global,
                              ContributionWeights* detail = nullptr);

/// Data-size-weighted average over the participating clients.
ParameterSet aggregate_fedavg(const std::vector<ClientUpdate>& updates);

/// Draws one independent dropout mask per client (in list order, from the
/// given stream), then aggregates with per-index renormalization.
std::pair<ParameterSet, ContributionWeights> aggregate_feddropoutavg(
    const std::vector<ClientUpdate>& updates, double fdr,
    const ParameterSet& prev_global, RngStream& rng);

struct ClientRoundStat {
  std::string client_id;
  double train_loss = 0.0;  // mean batch loss over the client's local epochs
  std::int64_t n_samples = 0;
};

/// Audit record of one round (or one epoch, for the non-federated runs).
struct RoundRecord {
  int round = 0;
  std::vector<std::string> selected_client_ids;
  std::vector<ClientRoundStat> client_stats;
  std::uint64_t aggregate_checksum = 0;
  double total_val_loss = 0.0;
  double wall_time_s = 0.0;
  Eigen::Index fallback_count = 0;
};

nlohmann::json to_json(const RoundRecord& r);

/// Inputs of one round: configuration, immutable datasets, current global.
struct FederationState {
  const FederationConfig* cfg = nullptr;
  const std::map<std::string, ClientDataset>* datasets = nullptr;
  ParameterSet global;
};

/// Select clients, train each selected client from the round-start global
/// for local_epochs_per_round epochs, aggregate per the strategy. FedProx
/// anchors the proximal term at the round-start global.
std::pair<ParameterSet, RoundRecord> run_round(const FederationState& state,
                                               int round);

struct TrainResult {
  ParameterSet best_model;
  int best_round = 0;  // round (or epoch) with the lowest total val loss
  std::uint64_t init_checksum = 0;
  std::vector<RoundRecord> history;
};

/// Full federated run; the best model is the aggregate of the round with the
/// lowest summed validation loss over the training centers (earliest on ties).
TrainResult run_federation(const FederationConfig& cfg,
                           const std::map<std::string, ClientDataset>& datasets);

/// One model on the union of the training centers' train splits, selected by
/// pooled validation loss, same optimizer recipe and epoch count.
TrainResult run_centralized(const FederationConfig& cfg,
                            const std::map<std::string, ClientDataset>& datasets);

/// One independently trained model per training center, each selected by its
/// own validation loss.
std::map<std::string, TrainResult> run_local_baselines(
    const FederationConfig& cfg, const std::map<std::string, ClientDataset>& datasets);

/// Inverse-class-frequency weights off the given training data, normalized
/// so w_neg + w_pos = 2; (1, 1) when only one class is present.
LossConfig class_weights_for(const LabeledMatrix& train);

}  // namespace fedsim

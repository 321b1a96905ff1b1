#include "fedsim/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

#include "fedsim/format.hpp"

namespace fedsim {

namespace {

void require_positive_counts(const std::vector<ClientUpdate>& updates) {
  if (updates.empty()) throw ConfigError("aggregation needs at least one update");
  for (const ClientUpdate& u : updates) {
    if (u.n_samples <= 0) throw ConfigError("client sample count must be positive");
    require_congruent(u.params, updates.front().params);
  }
}

/// Validation loss of a model summed over the training centers' val splits,
/// each center weighted by its own class weights.
double total_validation_loss(const FederationConfig& cfg,
                             const std::map<std::string, ClientDataset>& datasets,
                             const ParameterSet& model) {
  double total = 0.0;
  for (const std::string& c : cfg.clients) {
    const ClientDataset& ds = datasets.at(c);
    const LabeledMatrix val = ds.split_matrix(Split::val);
    const LossConfig lc = class_weights_for(ds.split_matrix(Split::train));
    total += eval_loss(cfg.model, model, val.features, val.labels, lc);
  }
  return total;
}

void require_training_data(const FederationConfig& cfg,
                           const std::map<std::string, ClientDataset>& datasets) {
  for (const std::string& c : cfg.clients) {
    const auto it = datasets.find(c);
    if (it == datasets.end()) throw ConfigError("unknown training center " + c);
    if (it->second.n_in_split(Split::train) == 0)
      throw ConfigError("center " + c + " has an empty train split");
    if (it->second.n_in_split(Split::val) == 0)
      throw ConfigError("center " + c + " has an empty val split");
  }
}

OptimizerState fresh_optimizer(const OptimizerConfig& oc, const ParameterSet& params) {
  OptimizerState st;
  st.lr0 = oc.lr0;
  st.momentum = oc.momentum;
  st.weight_decay = oc.weight_decay;
  st.halve_every = oc.halve_every;
  st.velocity = new_zeroed(params);
  return st;
}

/// 20-epoch (cfg.rounds) plain training on one dataset; epochs share the lr
/// schedule and rng stream layout of the federated rounds. site_tag keys the
/// shuffle streams so each baseline draws its own batch order.
TrainResult single_site_train(const FederationConfig& cfg,
                              const std::vector<std::string>& source_centers,
                              const LabeledMatrix& train, const LabeledMatrix& val,
                              std::uint64_t site_tag, const std::string& stat_label) {
  RngStream init_rng(cfg.seed, 0, 0, RngPurpose::param_init);
  ParameterSet params = init_params(cfg.model, init_rng);

  TrainResult res;
  res.init_checksum = checksum(params);
  const LossConfig lc = class_weights_for(train);
  OptimizerState opt = fresh_optimizer(cfg.optimizer, params);

  double best_loss = std::numeric_limits<double>::infinity();
  for (int epoch = 0; epoch < cfg.rounds; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    RngStream shuffle_rng(cfg.seed, static_cast<std::uint64_t>(epoch), site_tag,
                          RngPurpose::batch_shuffle);
    EpochResult er = local_train_epoch(cfg.model, params, train.features,
                                       train.labels, lc, opt, epoch,
                                       cfg.batch_size, shuffle_rng);
    params = std::move(er.params);
    opt = std::move(er.opt);

    RoundRecord rec;
    rec.round = epoch;
    rec.selected_client_ids = source_centers;
    rec.client_stats.push_back({stat_label, er.mean_loss, train.count()});
    rec.aggregate_checksum = checksum(params);
    rec.total_val_loss = eval_loss(cfg.model, params, val.features, val.labels, lc);
    rec.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (rec.total_val_loss < best_loss) {
      best_loss = rec.total_val_loss;
      res.best_model = params;
      res.best_round = epoch;
    }
    res.history.push_back(std::move(rec));
  }
  return res;
}

LabeledMatrix pool_split(const FederationConfig& cfg,
                         const std::map<std::string, ClientDataset>& datasets,
                         Split split) {
  Eigen::Index rows = 0;
  for (const std::string& c : cfg.clients) rows += datasets.at(c).n_in_split(split);
  LabeledMatrix pooled;
  pooled.features.resize(rows, cfg.model.input_dim);
  pooled.labels.resize(rows);
  Eigen::Index at = 0;
  for (const std::string& c : cfg.clients) {
    const LabeledMatrix m = datasets.at(c).split_matrix(split);
    pooled.features.middleRows(at, m.count()) = m.features;
    pooled.labels.segment(at, m.count()) = m.labels;
    at += m.count();
  }
  return pooled;
}

}  // namespace

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::fedavg: return "fedavg";
    case Strategy::fedprox: return "fedprox";
    case Strategy::feddropoutavg: return "feddropoutavg";
  }
  throw Error("unreachable");
}

Strategy strategy_from_name(const std::string& name) {
  if (name == "fedavg") return Strategy::fedavg;
  if (name == "fedprox") return Strategy::fedprox;
  if (name == "feddropoutavg") return Strategy::feddropoutavg;
  throw ConfigError("unknown strategy '" + name + "'");
}

void StrategyConfig::validate() const {
  if (!(fdr >= 0.0 && fdr < 1.0)) throw ConfigError("fdr must lie in [0, 1)");
  if (!(cdr >= 0.0 && cdr < 1.0)) throw ConfigError("cdr must lie in [0, 1)");
  if (!(prox_mu >= 0.0) || !std::isfinite(prox_mu))
    throw ConfigError("prox_mu must be finite and non-negative");
  switch (strategy) {
    case Strategy::fedavg:
      if (fdr != 0.0) throw ConfigError("fedavg requires fdr = 0");
      if (prox_mu != 0.0) throw ConfigError("fedavg requires prox_mu = 0");
      break;
    case Strategy::fedprox:
      if (fdr != 0.0) throw ConfigError("fedprox requires fdr = 0");
      break;
    case Strategy::feddropoutavg:
      if (prox_mu != 0.0) throw ConfigError("feddropoutavg requires prox_mu = 0");
      break;
  }
}

void FederationConfig::validate() const {
  if (rounds < 1) throw ConfigError("rounds must be >= 1");
  if (local_epochs_per_round < 1)
    throw ConfigError("local_epochs_per_round must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (clients.size() < 2) throw ConfigError("a federation needs >= 2 clients");
  std::set<std::string> unique(clients.begin(), clients.end());
  if (unique.size() != clients.size()) throw ConfigError("duplicate client id");
  if (!(optimizer.lr0 >= 0.0) || !std::isfinite(optimizer.lr0))
    throw ConfigError("lr0 must be finite and non-negative");
  if (!(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0))
    throw ConfigError("momentum must lie in [0, 1)");
  if (!(optimizer.weight_decay >= 0.0))
    throw ConfigError("weight_decay must be non-negative");
  if (optimizer.halve_every < 1) throw ConfigError("halve_every must be >= 1");
  strategy.validate();
  model.validate();
}

int selection_count(int n_clients, double cdr) {
  if (n_clients < 1) throw ConfigError("need at least one client");
  if (!(cdr >= 0.0 && cdr < 1.0)) throw ConfigError("cdr must lie in [0, 1)");
  const int kept = static_cast<int>(std::floor(n_clients * (1.0 - cdr)));
  return std::max(1, kept);
}

std::vector<int> select_clients(int n_clients, double cdr, RngStream& rng) {
  const int m = selection_count(n_clients, cdr);
  std::vector<int> pool(static_cast<std::size_t>(n_clients));
  std::iota(pool.begin(), pool.end(), 0);
  if (m == n_clients) return pool;  // everyone, canonical order
  for (int i = 0; i < m; ++i) {
    const std::size_t j =
        static_cast<std::size_t>(i) +
        static_cast<std::size_t>(rng.next_below(static_cast<std::uint64_t>(n_clients - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
  }
  pool.resize(static_cast<std::size_t>(m));
  std::sort(pool.begin(), pool.end());
  return pool;
}

ParameterSet aggregate_masked(const std::vector<ClientUpdate>& updates,
                              const std::vector<DropoutMask>* masks,
                              const ParameterSet* prev_global,
                              ContributionWeights* detail) {
  require_positive_counts(updates);
  const ParameterSet& shape = updates.front().params;
  if (masks) {
    if (masks->size() != updates.size())
      throw CongruenceError("one mask per client update required");
    for (const DropoutMask& m : *masks) require_congruent(m, shape);
  }
  if (prev_global) require_congruent(*prev_global, shape);

  const std::size_t n_clients = updates.size();
  const std::size_t n_layers = shape.layer_count();
  std::vector<LayerTensor> out_layers;
  out_layers.reserve(n_layers);

  // Staged per-layer detail; wrapped into ParameterSets at the end.
  std::vector<std::vector<Eigen::ArrayXd>> alpha_stage;
  std::vector<Eigen::ArrayXd> mass_stage;
  if (detail) {
    alpha_stage.resize(n_clients);
    for (std::size_t i = 0; i < n_clients; ++i)
      for (std::size_t l = 0; l < n_layers; ++l)
        alpha_stage[i].push_back(
            Eigen::ArrayXd::Zero(shape.layers()[l].values.size()));
    for (std::size_t l = 0; l < n_layers; ++l)
      mass_stage.push_back(Eigen::ArrayXd::Zero(shape.layers()[l].values.size()));
  }
  Eigen::Index fallback = 0;

  for (std::size_t l = 0; l < n_layers; ++l) {
    LayerTensor out = shape.layers()[l];
    for (Eigen::Index k = 0; k < out.values.size(); ++k) {
      double mass = 0.0;
      for (std::size_t i = 0; i < n_clients; ++i) {
        const bool keep = !masks || (*masks)[i].layers()[l][k];
        if (keep) mass += static_cast<double>(updates[i].n_samples);
      }
      double value;
      if (mass > 0.0) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n_clients; ++i) {
          const bool keep = !masks || (*masks)[i].layers()[l][k];
          if (!keep) continue;
          const double alpha = static_cast<double>(updates[i].n_samples) / mass;
          acc += alpha * updates[i].params.layers()[l].values[k];
          if (detail) alpha_stage[i][l][k] = alpha;
        }
        value = acc;
      } else {
        if (!prev_global)
          throw NumericError("every client dropped an index and no previous "
                             "global model was given");
        value = prev_global->layers()[l].values[k];
        ++fallback;
      }
      out.values[k] = value;
      if (detail) mass_stage[l][k] = mass;
    }
    if (!out.values.isFinite().all())
      throw NumericError("aggregation produced a non-finite value in layer " +
                         out.layer_id);
    out_layers.push_back(std::move(out));
  }

  if (detail) {
    const auto wrap = [&shape](std::vector<Eigen::ArrayXd>& stage) {
      std::vector<LayerTensor> layers;
      for (std::size_t l = 0; l < shape.layer_count(); ++l) {
        LayerTensor t = shape.layers()[l];
        t.values = std::move(stage[l]);
        layers.push_back(std::move(t));
      }
      return ParameterSet(std::move(layers));
    };
    detail->alpha.clear();
    for (std::size_t i = 0; i < n_clients; ++i)
      detail->alpha.push_back(wrap(alpha_stage[i]));
    detail->survivor_mass = wrap(mass_stage);
    detail->fallback_count = fallback;
  }
  return ParameterSet(std::move(out_layers));
}

ParameterSet aggregate_fedavg(const std::vector<ClientUpdate>& updates) {
  return aggregate_masked(updates, nullptr, nullptr, nullptr);
}

std::pair<ParameterSet, ContributionWeights> aggregate_feddropoutavg(
    const std::vector<ClientUpdate>& updates, double fdr,
    const ParameterSet& prev_global, RngStream& rng) {
  require_positive_counts(updates);
  std::vector<DropoutMask> masks;
  masks.reserve(updates.size());
  for (std::size_t i = 0; i < updates.size(); ++i)
    masks.push_back(draw_mask(updates.front().params, fdr, rng));
  ContributionWeights detail;
  ParameterSet out = aggregate_masked(updates, &masks, &prev_global, &detail);
  return {std::move(out), std::move(detail)};
}

LossConfig class_weights_for(const LabeledMatrix& train) {
  const double n = static_cast<double>(train.count());
  const double n_pos = train.labels.sum();
  const double n_neg = n - n_pos;
  LossConfig lc;
  if (n_pos > 0.0 && n_neg > 0.0) {
    lc.w_pos = 2.0 * n_neg / n;
    lc.w_neg = 2.0 * n_pos / n;
  }
  return lc;
}

nlohmann::json to_json(const RoundRecord& r) {
  nlohmann::json clients = nlohmann::json::array();
  for (const ClientRoundStat& s : r.client_stats)
    clients.push_back({{"id", s.client_id},
                       {"train_loss", s.train_loss},
                       {"n_samples", s.n_samples}});
  return {{"round", r.round},
          {"selected_client_ids", r.selected_client_ids},
          {"clients", clients},
          {"aggregate_checksum", format_hex_u64(r.aggregate_checksum)},
          {"total_val_loss", r.total_val_loss},
          {"wall_time_s", r.wall_time_s},
          {"fallback_indices", r.fallback_count}};
}

std::pair<ParameterSet, RoundRecord> run_round(const FederationState& state,
                                               int round) {
  const FederationConfig& cfg = *state.cfg;
  const auto& datasets = *state.datasets;
  const auto t0 = std::chrono::steady_clock::now();

  RoundRecord rec;
  rec.round = round;

  RngStream sel_rng(cfg.seed, static_cast<std::uint64_t>(round), 0,
                    RngPurpose::client_selection);
  const std::vector<int> selected =
      select_clients(static_cast<int>(cfg.clients.size()), cfg.strategy.cdr, sel_rng);

  const bool prox = cfg.strategy.strategy == Strategy::fedprox &&
                    cfg.strategy.prox_mu > 0.0;
  std::vector<ClientUpdate> updates;
  for (int idx : selected) {
    const std::string& cid = cfg.clients[static_cast<std::size_t>(idx)];
    rec.selected_client_ids.push_back(cid);
    const ClientDataset& ds = datasets.at(cid);
    const LabeledMatrix train = ds.split_matrix(Split::train);

    LossConfig lc = class_weights_for(train);
    lc.prox_mu = prox ? cfg.strategy.prox_mu : 0.0;
    const ParameterSet* anchor = prox ? &state.global : nullptr;

    ParameterSet params = state.global;  // broadcast
    OptimizerState opt = fresh_optimizer(cfg.optimizer, params);
    double loss_sum = 0.0;
    for (int e = 0; e < cfg.local_epochs_per_round; ++e) {
      RngStream shuffle_rng(cfg.seed, static_cast<std::uint64_t>(round),
                            static_cast<std::uint64_t>(idx),
                            RngPurpose::batch_shuffle, static_cast<std::uint64_t>(e));
      EpochResult er =
          local_train_epoch(cfg.model, params, train.features, train.labels, lc,
                            opt, round, cfg.batch_size, shuffle_rng, anchor);
      params = std::move(er.params);
      opt = std::move(er.opt);
      loss_sum += er.mean_loss;
    }
    rec.client_stats.push_back(
        {cid, loss_sum / cfg.local_epochs_per_round, train.count()});
    updates.push_back({std::move(params), train.count()});
  }

  ParameterSet aggregated;
  if (cfg.strategy.strategy == Strategy::feddropoutavg) {
    RngStream mask_rng(cfg.seed, static_cast<std::uint64_t>(round), 0,
                       RngPurpose::dropout_mask);
    auto [agg, detail] = aggregate_feddropoutavg(updates, cfg.strategy.fdr,
                                                 state.global, mask_rng);
    aggregated = std::move(agg);
    rec.fallback_count = detail.fallback_count;
  } else {
    aggregated = aggregate_fedavg(updates);
  }

  rec.aggregate_checksum = checksum(aggregated);
  rec.total_val_loss = total_validation_loss(cfg, datasets, aggregated);
  rec.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {std::move(aggregated), std::move(rec)};
}

TrainResult run_federation(const FederationConfig& cfg,
                           const std::map<std::string, ClientDataset>& datasets) {
  cfg.validate();
  require_training_data(cfg, datasets);

  RngStream init_rng(cfg.seed, 0, 0, RngPurpose::param_init);
  FederationState state{&cfg, &datasets, init_params(cfg.model, init_rng)};

  TrainResult res;
  res.init_checksum = checksum(state.global);
  double best_loss = std::numeric_limits<double>::infinity();
  for (int t = 0; t < cfg.rounds; ++t) {
    auto [next_global, rec] = run_round(state, t);
    state.global = std::move(next_global);
    if (rec.total_val_loss < best_loss) {
      best_loss = rec.total_val_loss;
      res.best_model = state.global;
      res.best_round = t;
    }
    res.history.push_back(std::move(rec));
  }
  return res;
}

TrainResult run_centralized(const FederationConfig& cfg,
                            const std::map<std::string, ClientDataset>& datasets) {
  if (cfg.clients.empty()) throw ConfigError("no training centers");
  require_training_data(cfg, datasets);
  const LabeledMatrix train = pool_split(cfg, datasets, Split::train);
  const LabeledMatrix val = pool_split(cfg, datasets, Split::val);
  return single_site_train(cfg, cfg.clients, train, val, 0, "pooled");
}

std::map<std::string, TrainResult> run_local_baselines(
    const FederationConfig& cfg, const std::map<std::string, ClientDataset>& datasets) {
  if (cfg.clients.empty()) throw ConfigError("no training centers");
  require_training_data(cfg, datasets);
  std::map<std::string, TrainResult> out;
  for (std::size_t i = 0; i < cfg.clients.size(); ++i) {
    const std::string& cid = cfg.clients[i];
    const ClientDataset& ds = datasets.at(cid);
    out.emplace(cid, single_site_train(cfg, {cid}, ds.split_matrix(Split::train),
                                       ds.split_matrix(Split::val),
                                       static_cast<std::uint64_t>(i), cid));
  }
  return out;
}

}  // namespace fedsim

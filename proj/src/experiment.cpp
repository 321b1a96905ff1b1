#include "fedsim/experiment.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <set>

#include "fedsim/format.hpp"
#include "fedsim/serialize.hpp"

namespace fedsim {

namespace {

namespace fs = std::filesystem;

void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed,
                const std::string& ctx) {
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key))
      throw ConfigError(ctx + ": unknown field '" + key + "'");
}

template <typename T>
T get_as(const nlohmann::json& j, const std::string& key, const std::string& ctx) {
  if (!j.contains(key)) throw ConfigError(ctx + ": missing field '" + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(ctx + ": field '" + key + "': " + e.what());
  }
}

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback,
         const std::string& ctx) {
  if (!j.contains(key)) return fallback;
  return get_as<T>(j, key, ctx);
}

const nlohmann::json& require_object(const nlohmann::json& j, const std::string& key) {
  if (!j.contains(key)) throw ConfigError("config: missing field '" + key + "'");
  if (!j.at(key).is_object())
    throw ConfigError("config: field '" + key + "' must be an object");
  return j.at(key);
}

IntRange int_range(const nlohmann::json& j, const std::string& key,
                   const std::string& ctx) {
  const auto arr = get_as<std::vector<int>>(j, key, ctx);
  if (arr.size() != 2) throw ConfigError(ctx + ": '" + key + "' must be [lo, hi]");
  return {arr[0], arr[1]};
}

RealRange real_range(const nlohmann::json& j, const std::string& key,
                     const std::string& ctx) {
  const auto arr = get_as<std::vector<double>>(j, key, ctx);
  if (arr.size() != 2) throw ConfigError(ctx + ": '" + key + "' must be [lo, hi]");
  return {arr[0], arr[1]};
}

SynthConfig synth_from_json(const nlohmann::json& j) {
  const std::string ctx = "data.synthetic";
  check_keys(j,
             {"n_centers", "input_dim", "patients_per_center", "tiles_per_patient",
              "class_pos_fraction", "domain_shift"},
             ctx);
  SynthConfig s;
  s.n_centers = get_as<int>(j, "n_centers", ctx);
  s.input_dim = get_as<int>(j, "input_dim", ctx);
  s.patients_per_center = int_range(j, "patients_per_center", ctx);
  s.tiles_per_patient = int_range(j, "tiles_per_patient", ctx);
  s.class_pos_fraction = real_range(j, "class_pos_fraction", ctx);
  if (j.contains("domain_shift")) {
    const auto& d = j.at("domain_shift");
    check_keys(d, {"rotation_scale", "bias_scale", "noise_sigma"}, "domain_shift");
    s.domain_shift.rotation_scale = get_or<double>(d, "rotation_scale", 0.0, ctx);
    s.domain_shift.bias_scale = get_or<double>(d, "bias_scale", 0.0, ctx);
    s.domain_shift.noise_sigma = get_or<double>(d, "noise_sigma", 0.0, ctx);
  }
  return s;
}

nlohmann::json synth_to_json(const SynthConfig& s) {
  return {{"n_centers", s.n_centers},
          {"input_dim", s.input_dim},
          {"patients_per_center", {s.patients_per_center.lo, s.patients_per_center.hi}},
          {"tiles_per_patient", {s.tiles_per_patient.lo, s.tiles_per_patient.hi}},
          {"class_pos_fraction", {s.class_pos_fraction.lo, s.class_pos_fraction.hi}},
          {"domain_shift",
           {{"rotation_scale", s.domain_shift.rotation_scale},
            {"bias_scale", s.domain_shift.bias_scale},
            {"noise_sigma", s.domain_shift.noise_sigma}}}};
}

ModelSpec model_from_json(const nlohmann::json& j) {
  const std::string ctx = "model";
  check_keys(j, {"arch", "input_dim", "hidden_dims"}, ctx);
  ModelSpec m;
  const std::string arch = get_as<std::string>(j, "arch", ctx);
  if (arch == "logistic")
    m.arch = Arch::logistic;
  else if (arch == "mlp")
    m.arch = Arch::mlp;
  else
    throw ConfigError("model.arch must be 'logistic' or 'mlp'");
  m.input_dim = get_or<int>(j, "input_dim", 0, ctx);  // 0 = take from data
  m.hidden_dims = get_or<std::vector<int>>(j, "hidden_dims", {}, ctx);
  return m;
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  for (const std::string& l : lines) out << l << "\n";
}

double mean_f1(const std::vector<EvalReport>& reports, EvalGroup group) {
  double sum = 0.0;
  int n = 0;
  for (const EvalReport& r : reports)
    if (r.group == group) {
      sum += r.f1;
      ++n;
    }
  if (n == 0) throw ConfigError("no reports in group " + group_name(group));
  return sum / n;
}

/// Reports for the local-baseline method: each training center's own model on
/// its own test split, and for every independent center the mean F1/AUROC of
/// all local models on that center's data (the cross-center transfer score).
std::vector<EvalReport> local_baseline_reports(
    const ExperimentConfig& cfg, const std::map<std::string, TrainResult>& locals,
    const std::map<std::string, ClientDataset>& datasets,
    const FederationLayout& layout) {
  std::vector<EvalReport> reports;
  std::vector<std::string> train = layout.training_centers;
  std::sort(train.begin(), train.end());
  for (const std::string& c : train)
    reports.push_back(evaluate_single(cfg.model, locals.at(c).best_model, c,
                                      EvalGroup::local_test,
                                      datasets.at(c).split_matrix(Split::test)));

  std::vector<std::string> indep = layout.independent_centers;
  std::sort(indep.begin(), indep.end());
  for (const std::string& e : indep) {
    const LabeledMatrix data = datasets.at(e).all_matrix();
    EvalReport merged;
    double f1_sum = 0.0;
    double auroc_sum = 0.0;
    int auroc_n = 0;
    for (const std::string& c : train) {
      merged = evaluate_single(cfg.model, locals.at(c).best_model, e,
                               EvalGroup::independent, data);
      f1_sum += merged.f1;
      if (merged.auroc) {
        auroc_sum += *merged.auroc;
        ++auroc_n;
      }
    }
    merged.f1 = f1_sum / static_cast<double>(train.size());
    merged.auroc =
        auroc_n > 0 ? std::optional<double>(auroc_sum / auroc_n) : std::nullopt;
    reports.push_back(std::move(merged));
  }
  return reports;
}

void write_run_outputs(const fs::path& dir, const RunResult& rr) {
  fs::create_directories(dir);
  std::vector<std::pair<std::string, std::vector<EvalReport>>> per_method;
  for (const MethodRun& mr : rr.methods) {
    const fs::path mdir = dir / method_name(mr.method);
    fs::create_directories(mdir);
    std::vector<std::string> lines;
    if (mr.method == Method::local) {
      for (const auto& [cid, res] : mr.local_results) {
        for (const RoundRecord& rec : res.history)
          lines.push_back(to_json(rec).dump());
        save_parameter_set(mdir / ("model_" + cid + ".json"), res.best_model);
      }
    } else {
      for (const RoundRecord& rec : mr.result.history)
        lines.push_back(to_json(rec).dump());
      save_parameter_set(mdir / "model.json", mr.result.best_model);
    }
    write_lines(mdir / "rounds.jsonl", lines);
    per_method.emplace_back(method_name(mr.method), mr.reports);
  }
  write_reports_csv(dir / "reports.csv", per_method);
  write_summary_csv(dir / "summary.csv", rr.summary);
}

/// Copies cfg with model.input_dim filled from the data when left at 0.
ExperimentConfig with_model_dim(const ExperimentConfig& cfg,
                                const std::map<std::string, ClientDataset>& datasets) {
  ExperimentConfig resolved = cfg;
  const Eigen::Index data_dim =
      datasets.begin()->second.samples().front().features.size();
  if (resolved.model.input_dim == 0)
    resolved.model.input_dim = static_cast<int>(data_dim);
  else if (resolved.model.input_dim != data_dim)
    throw ConfigError("model.input_dim does not match the data dimension");
  resolved.model.validate();
  return resolved;
}

void write_config_resolved(const fs::path& dir, const ExperimentConfig& cfg,
                           const std::vector<FederationLayout>& layouts) {
  fs::create_directories(dir);
  nlohmann::json j = to_json(cfg);
  nlohmann::json resolved = nlohmann::json::array();
  for (const FederationLayout& lo : layouts)
    resolved.push_back({{"training_centers", lo.training_centers},
                        {"independent_centers", lo.independent_centers}});
  if (layouts.size() == 1)
    j["resolved_layout"] = resolved.front();
  else
    j["resolved_layouts"] = resolved;
  std::ofstream out(dir / "config.resolved");
  if (!out) throw Error("cannot write config.resolved");
  out << j.dump(2) << "\n";
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::centralized: return "centralized";
    case Method::local: return "local";
    case Method::fedavg: return "fedavg";
    case Method::fedprox: return "fedprox";
    case Method::feddropoutavg: return "feddropoutavg";
  }
  throw Error("unreachable");
}

Method method_from_name(const std::string& name) {
  if (name == "centralized") return Method::centralized;
  if (name == "local") return Method::local;
  if (name == "fedavg") return Method::fedavg;
  if (name == "fedprox") return Method::fedprox;
  if (name == "feddropoutavg") return Method::feddropoutavg;
  throw ConfigError("unknown method '" + name + "'");
}

void ExperimentConfig::validate() const {
  if (output_dir.empty()) throw ConfigError("output_dir must be set");
  if (synthetic.has_value() == csv_path.has_value())
    throw ConfigError("config needs exactly one of data.synthetic / data.csv");
  if (synthetic) synthetic->validate();
  if (methods.empty()) throw ConfigError("methods must not be empty");
  std::set<Method> unique(methods.begin(), methods.end());
  if (unique.size() != methods.size()) throw ConfigError("duplicate method");
  if (!layout && n_train_centers < 2 && !kfold)
    throw ConfigError("layout.n_train must be >= 2 (or give explicit lists)");
  if (rounds < 1) throw ConfigError("federation.rounds must be >= 1");
  if (local_epochs_per_round < 1)
    throw ConfigError("federation.local_epochs_per_round must be >= 1");
  if (batch_size < 1) throw ConfigError("federation.batch_size must be >= 1");
  if (!(fdr >= 0.0 && fdr < 1.0)) throw ConfigError("strategies.fdr must lie in [0, 1)");
  if (!(cdr >= 0.0 && cdr < 1.0)) throw ConfigError("strategies.cdr must lie in [0, 1)");
  if (!(fedprox_mu >= 0.0)) throw ConfigError("strategies.fedprox_mu must be >= 0");
  if (grid) {
    if (grid->cdr_values.empty() || grid->fdr_values.empty())
      throw ConfigError("grid value lists must not be empty");
    for (double v : grid->cdr_values)
      if (!(v >= 0.0 && v < 1.0)) throw ConfigError("grid cdr value out of [0, 1)");
    for (double v : grid->fdr_values)
      if (!(v >= 0.0 && v < 1.0)) throw ConfigError("grid fdr value out of [0, 1)");
    if (!unique.count(Method::feddropoutavg))
      throw ConfigError("grid requires the feddropoutavg method");
  }
  if (kfold && *kfold < 2) throw ConfigError("kfold must be >= 2");
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
  const std::string ctx = "config";
  check_keys(j,
             {"seed", "output_dir", "data", "layout", "methods", "federation",
              "model", "optimizer", "strategies", "grid", "kfold"},
             ctx);
  ExperimentConfig cfg;
  cfg.seed = get_as<std::uint64_t>(j, "seed", ctx);
  cfg.output_dir = get_or<std::string>(j, "output_dir", "", ctx);

  const auto& data = require_object(j, "data");
  check_keys(data, {"synthetic", "csv"}, "data");
  if (data.contains("synthetic")) cfg.synthetic = synth_from_json(data.at("synthetic"));
  if (data.contains("csv")) cfg.csv_path = get_as<std::string>(data, "csv", "data");

  if (j.contains("layout")) {
    const auto& lj = j.at("layout");
    check_keys(lj, {"n_train", "training_centers", "independent_centers"}, "layout");
    if (lj.contains("training_centers") || lj.contains("independent_centers")) {
      FederationLayout lo;
      lo.training_centers =
          get_as<std::vector<std::string>>(lj, "training_centers", "layout");
      lo.independent_centers =
          get_as<std::vector<std::string>>(lj, "independent_centers", "layout");
      cfg.layout = std::move(lo);
    } else {
      cfg.n_train_centers = get_as<int>(lj, "n_train", "layout");
    }
  }

  for (const std::string& name :
       get_as<std::vector<std::string>>(j, "methods", ctx))
    cfg.methods.push_back(method_from_name(name));

  if (j.contains("federation")) {
    const auto& f = j.at("federation");
    check_keys(f, {"rounds", "local_epochs_per_round", "batch_size"}, "federation");
    cfg.rounds = get_or<int>(f, "rounds", cfg.rounds, "federation");
    cfg.local_epochs_per_round =
        get_or<int>(f, "local_epochs_per_round", cfg.local_epochs_per_round, "federation");
    cfg.batch_size = get_as<int>(f, "batch_size", "federation");
  } else {
    throw ConfigError("config: missing field 'federation'");
  }

  cfg.model = model_from_json(require_object(j, "model"));

  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    check_keys(o, {"lr0", "momentum", "weight_decay", "halve_every"}, "optimizer");
    cfg.optimizer.lr0 = get_or<double>(o, "lr0", cfg.optimizer.lr0, "optimizer");
    cfg.optimizer.momentum =
        get_or<double>(o, "momentum", cfg.optimizer.momentum, "optimizer");
    cfg.optimizer.weight_decay =
        get_or<double>(o, "weight_decay", cfg.optimizer.weight_decay, "optimizer");
    cfg.optimizer.halve_every =
        get_or<int>(o, "halve_every", cfg.optimizer.halve_every, "optimizer");
  }

  if (j.contains("strategies")) {
    const auto& s = j.at("strategies");
    check_keys(s, {"fedprox_mu", "fdr", "cdr"}, "strategies");
    cfg.fedprox_mu = get_or<double>(s, "fedprox_mu", cfg.fedprox_mu, "strategies");
    cfg.fdr = get_or<double>(s, "fdr", cfg.fdr, "strategies");
    cfg.cdr = get_or<double>(s, "cdr", cfg.cdr, "strategies");
  }

  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    check_keys(g, {"cdr_values", "fdr_values"}, "grid");
    GridSpec gs;
    gs.cdr_values = get_as<std::vector<double>>(g, "cdr_values", "grid");
    gs.fdr_values = get_as<std::vector<double>>(g, "fdr_values", "grid");
    cfg.grid = std::move(gs);
  }
  if (j.contains("kfold")) cfg.kfold = get_as<int>(j, "kfold", ctx);
  return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j);
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  if (cfg.synthetic) j["data"] = {{"synthetic", synth_to_json(*cfg.synthetic)}};
  if (cfg.csv_path) j["data"] = {{"csv", *cfg.csv_path}};
  if (cfg.layout)
    j["layout"] = {{"training_centers", cfg.layout->training_centers},
                   {"independent_centers", cfg.layout->independent_centers}};
  else
    j["layout"] = {{"n_train", cfg.n_train_centers}};
  nlohmann::json methods = nlohmann::json::array();
  for (Method m : cfg.methods) methods.push_back(method_name(m));
  j["methods"] = methods;
  j["federation"] = {{"rounds", cfg.rounds},
                     {"local_epochs_per_round", cfg.local_epochs_per_round},
                     {"batch_size", cfg.batch_size}};
  j["model"] = {{"arch", cfg.model.arch == Arch::logistic ? "logistic" : "mlp"},
                {"input_dim", cfg.model.input_dim},
                {"hidden_dims", cfg.model.hidden_dims}};
  j["optimizer"] = {{"lr0", cfg.optimizer.lr0},
                    {"momentum", cfg.optimizer.momentum},
                    {"weight_decay", cfg.optimizer.weight_decay},
                    {"halve_every", cfg.optimizer.halve_every}};
  j["strategies"] = {{"fedprox_mu", cfg.fedprox_mu}, {"fdr", cfg.fdr}, {"cdr", cfg.cdr}};
  if (cfg.grid)
    j["grid"] = {{"cdr_values", cfg.grid->cdr_values},
                 {"fdr_values", cfg.grid->fdr_values}};
  if (cfg.kfold) j["kfold"] = *cfg.kfold;
  return j;
}

std::map<std::string, ClientDataset> load_datasets(const ExperimentConfig& cfg) {
  if (cfg.synthetic) {
    SynthConfig s = *cfg.synthetic;
    s.seed = cfg.seed;  // one seed governs the whole experiment
    return generate_federation(s);
  }
  return load_csv_federation(*cfg.csv_path, cfg.seed);
}

FederationLayout resolve_layout(const ExperimentConfig& cfg,
                                const std::map<std::string, ClientDataset>& datasets) {
  FederationLayout lo;
  if (cfg.layout) {
    lo = *cfg.layout;
  } else {
    std::vector<std::string> ids;
    for (const auto& [cid, _] : datasets) ids.push_back(cid);
    std::sort(ids.begin(), ids.end());
    if (cfg.n_train_centers >= static_cast<int>(ids.size()))
      throw ConfigError("layout.n_train must leave at least one independent center");
    lo.training_centers.assign(ids.begin(), ids.begin() + cfg.n_train_centers);
    lo.independent_centers.assign(ids.begin() + cfg.n_train_centers, ids.end());
  }
  lo.validate();
  if (lo.independent_centers.size() < 2)
    throw ConfigError("need at least 2 independent centers to summarize");
  for (const std::string& c : lo.training_centers)
    if (!datasets.count(c)) throw ConfigError("unknown training center " + c);
  for (const std::string& c : lo.independent_centers)
    if (!datasets.count(c)) throw ConfigError("unknown independent center " + c);
  return lo;
}

FederationConfig federation_config_for(const ExperimentConfig& cfg,
                                       const FederationLayout& layout, Method m) {
  FederationConfig fc;
  fc.rounds = cfg.rounds;
  fc.local_epochs_per_round = cfg.local_epochs_per_round;
  fc.batch_size = cfg.batch_size;
  fc.clients = layout.training_centers;
  std::sort(fc.clients.begin(), fc.clients.end());
  fc.seed = cfg.seed;
  fc.model = cfg.model;
  fc.optimizer = cfg.optimizer;
  switch (m) {
    case Method::fedprox:
      fc.strategy = {Strategy::fedprox, 0.0, 0.0, cfg.fedprox_mu};
      break;
    case Method::feddropoutavg:
      fc.strategy = {Strategy::feddropoutavg, cfg.fdr, cfg.cdr, 0.0};
      break;
    default:
      fc.strategy = {Strategy::fedavg, 0.0, 0.0, 0.0};
      break;
  }
  return fc;
}

RunResult execute_run(const ExperimentConfig& cfg,
                      const std::map<std::string, ClientDataset>& datasets,
                      const FederationLayout& layout) {
  RunResult rr;
  rr.layout = layout;
  for (Method m : cfg.methods) {
    MethodRun mr;
    mr.method = m;
    const FederationConfig fc = federation_config_for(cfg, layout, m);
    switch (m) {
      case Method::centralized:
        mr.result = run_centralized(fc, datasets);
        mr.init_checksum = mr.result.init_checksum;
        mr.reports = evaluate_model(cfg.model, mr.result.best_model, datasets, layout);
        break;
      case Method::local: {
        mr.local_results = run_local_baselines(fc, datasets);
        mr.init_checksum = mr.local_results.begin()->second.init_checksum;
        for (const auto& [_, res] : mr.local_results)
          if (res.init_checksum != mr.init_checksum)
            throw Error("local baselines saw different initial models");
        mr.reports = local_baseline_reports(cfg, mr.local_results, datasets, layout);
        break;
      }
      default:
        mr.result = run_federation(fc, datasets);
        mr.init_checksum = mr.result.init_checksum;
        mr.reports = evaluate_model(cfg.model, mr.result.best_model, datasets, layout);
        break;
    }
    rr.methods.push_back(std::move(mr));
  }
  for (const MethodRun& mr : rr.methods)
    if (mr.init_checksum != rr.methods.front().init_checksum)
      throw Error("methods saw different initial models; seeds are inconsistent");

  std::vector<std::pair<std::string, std::vector<EvalReport>>> per_method;
  for (const MethodRun& mr : rr.methods)
    per_method.emplace_back(method_name(mr.method), mr.reports);
  rr.summary = summarize(per_method);
  return rr;
}

std::vector<GridCell> execute_grid(const ExperimentConfig& cfg,
                                   const std::map<std::string, ClientDataset>& datasets,
                                   const FederationLayout& layout) {
  if (!cfg.grid) throw ConfigError("grid block missing from config");
  std::vector<GridCell> cells;
  for (double cdr : cfg.grid->cdr_values) {
    for (double fdr : cfg.grid->fdr_values) {
      ExperimentConfig cell_cfg = cfg;
      cell_cfg.cdr = cdr;
      cell_cfg.fdr = fdr;
      const FederationConfig fc =
          federation_config_for(cell_cfg, layout, Method::feddropoutavg);
      const TrainResult res = run_federation(fc, datasets);
      const std::vector<EvalReport> reports =
          evaluate_model(cfg.model, res.best_model, datasets, layout);
      GridCell cell;
      cell.cdr = cdr;
      cell.fdr = fdr;
      cell.total_val_loss =
          res.history[static_cast<std::size_t>(res.best_round)].total_val_loss;
      cell.mean_f1_local = mean_f1(reports, EvalGroup::local_test);
      cell.mean_f1_independent = mean_f1(reports, EvalGroup::independent);
      cells.push_back(cell);
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < cells.size(); ++i)
    if (cells[i].total_val_loss < cells[best].total_val_loss) best = i;
  cells[best].selected = true;
  return cells;
}

int cmd_run(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto datasets = load_datasets(cfg);
  const ExperimentConfig resolved = with_model_dim(cfg, datasets);
  const FederationLayout layout = resolve_layout(resolved, datasets);
  const RunResult rr = execute_run(resolved, datasets, layout);
  write_config_resolved(resolved.output_dir, resolved, {layout});
  write_run_outputs(resolved.output_dir, rr);
  std::cout << "fedsim run: " << rr.methods.size() << " methods, shared init "
            << format_hex_u64(rr.methods.front().init_checksum) << ", outputs in "
            << resolved.output_dir << "\n";
  return 0;
}

int cmd_grid(const ExperimentConfig& cfg) {
  cfg.validate();
  if (!cfg.grid) throw ConfigError("grid block missing from config");
  const auto datasets = load_datasets(cfg);
  const ExperimentConfig resolved = with_model_dim(cfg, datasets);
  const FederationLayout layout = resolve_layout(resolved, datasets);
  const std::vector<GridCell> cells = execute_grid(resolved, datasets, layout);

  write_config_resolved(resolved.output_dir, resolved, {layout});
  std::ofstream out(fs::path(resolved.output_dir) / "grid.csv");
  if (!out) throw Error("cannot write grid.csv");
  out << "cdr,fdr,total_val_loss,mean_f1_local,mean_f1_independent,selected\n";
  for (const GridCell& c : cells)
    out << format_double(c.cdr) << "," << format_double(c.fdr) << ","
        << format_double(c.total_val_loss) << "," << format_double(c.mean_f1_local)
        << "," << format_double(c.mean_f1_independent) << ","
        << (c.selected ? 1 : 0) << "\n";
  return 0;
}

int cmd_kfold(const ExperimentConfig& cfg) {
  cfg.validate();
  if (!cfg.kfold) throw ConfigError("kfold missing from config");
  const int k = *cfg.kfold;
  const auto datasets = load_datasets(cfg);
  const ExperimentConfig resolved = with_model_dim(cfg, datasets);

  std::vector<std::string> centers;
  for (const auto& [cid, _] : datasets) centers.push_back(cid);
  std::sort(centers.begin(), centers.end());
  if (static_cast<int>(centers.size()) < 2 * k)
    throw ConfigError("kfold needs at least 2 centers per fold");

  RngStream fold_rng(resolved.seed, 0, 0, RngPurpose::fold_split);
  const std::vector<FederationLayout> layouts =
      kfold_center_rotation(centers, k, fold_rng);

  std::vector<std::pair<std::string, std::vector<EvalReport>>> pooled;
  for (Method m : resolved.methods) pooled.emplace_back(method_name(m), std::vector<EvalReport>{});

  const fs::path outdir(resolved.output_dir);
  for (std::size_t j = 0; j < layouts.size(); ++j) {
    const RunResult rr = execute_run(resolved, datasets, layouts[j]);
    write_run_outputs(outdir / ("fold" + std::to_string(j)), rr);
    for (std::size_t mi = 0; mi < rr.methods.size(); ++mi) {
      auto& bucket = pooled[mi].second;
      bucket.insert(bucket.end(), rr.methods[mi].reports.begin(),
                    rr.methods[mi].reports.end());
    }
  }
  write_config_resolved(outdir, resolved, layouts);
  write_summary_csv(outdir / "summary.csv", summarize(pooled));
  return 0;
}

}  // namespace fedsim

#include "fedsim/data.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "fedsim/format.hpp"

namespace fedsim {

namespace {

// Half the distance between the latent class means, along the first axis.
constexpr double kClassHalfGap = 1.25;

std::string center_name(int i, int n_centers) {
  const int width = n_centers > 100 ? 3 : 2;
  std::ostringstream os;
  os << "c";
  std::string digits = std::to_string(i);
  os << std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(digits.size()))), '0')
     << digits;
  return os.str();
}

std::string patient_name(const std::string& center, int p) {
  std::string digits = std::to_string(p);
  return center + "_p" + std::string(digits.size() < 3 ? 3 - digits.size() : 0, '0') + digits;
}

int draw_in(const IntRange& r, RngStream& rng) {
  return r.lo + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(r.hi - r.lo + 1)));
}

double draw_in(const RealRange& r, RngStream& rng) {
  return r.lo + rng.next_double() * (r.hi - r.lo);
}

Eigen::VectorXd gaussian_vector(int d, RngStream& rng) {
  Eigen::VectorXd v(d);
  for (int i = 0; i < d; ++i) v[i] = rng.next_gaussian();
  return v;
}

// Product of random Givens rotations; identity when rotation_scale is 0.
Eigen::MatrixXd random_rotation(int d, double rotation_scale, RngStream& rng) {
  Eigen::MatrixXd rot = Eigen::MatrixXd::Identity(d, d);
  if (d < 2) return rot;
  for (int k = 0; k < d; ++k) {
    const int a = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(d)));
    int b = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(d - 1)));
    if (b >= a) ++b;
    const double theta = (2.0 * rng.next_double() - 1.0) * rotation_scale;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    Eigen::MatrixXd g = Eigen::MatrixXd::Identity(d, d);
    g(a, a) = c;
    g(b, b) = c;
    g(a, b) = -s;
    g(b, a) = s;
    rot = g * rot;
  }
  return rot;
}

LabeledMatrix to_matrix(const std::vector<const Sample*>& rows) {
  LabeledMatrix m;
  if (rows.empty()) {
    m.features.resize(0, 0);
    m.labels.resize(0);
    return m;
  }
  const Eigen::Index d = rows.front()->features.size();
  m.features.resize(static_cast<Eigen::Index>(rows.size()), d);
  m.labels.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    m.features.row(static_cast<Eigen::Index>(i)) = rows[i]->features.transpose();
    m.labels[static_cast<Eigen::Index>(i)] = rows[i]->label;
  }
  return m;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  throw Error("unreachable");
}

ClientDataset::ClientDataset(std::string center_id, std::vector<Sample> samples,
                             std::map<std::string, Split> splits)
    : center_id_(std::move(center_id)),
      samples_(std::move(samples)),
      splits_(std::move(splits)) {
  for (const Sample& s : samples_) {
    if (s.label != 0 && s.label != 1)
      throw ConfigError("label must be 0 or 1 (patient " + s.patient_id + ")");
    if (!s.features.allFinite())
      throw NumericError("non-finite feature (patient " + s.patient_id + ")");
  }
  if (!splits_.empty()) {
    std::set<std::string> seen;
    for (const Sample& s : samples_) seen.insert(s.patient_id);
    for (const std::string& p : seen)
      if (!splits_.count(p))
        throw ConfigError("patient " + p + " has no split assignment");
    if (seen.size() != splits_.size())
      throw ConfigError("split map names a patient with no samples");
  }
}

std::vector<std::string> ClientDataset::patients() const {
  std::set<std::string> seen;
  for (const Sample& s : samples_) seen.insert(s.patient_id);
  return {seen.begin(), seen.end()};
}

int ClientDataset::n_patients() const {
  return static_cast<int>(patients().size());
}

Split ClientDataset::split_of(const std::string& patient_id) const {
  const auto it = splits_.find(patient_id);
  if (it == splits_.end())
    throw ConfigError("patient " + patient_id + " has no split assignment");
  return it->second;
}

LabeledMatrix ClientDataset::split_matrix(Split s) const {
  if (splits_.empty())
    throw ConfigError("dataset " + center_id_ + " has not been split");
  std::vector<const Sample*> rows;
  for (const Sample& smp : samples_)
    if (split_of(smp.patient_id) == s) rows.push_back(&smp);
  return to_matrix(rows);
}

LabeledMatrix ClientDataset::all_matrix() const {
  std::vector<const Sample*> rows;
  rows.reserve(samples_.size());
  for (const Sample& smp : samples_) rows.push_back(&smp);
  return to_matrix(rows);
}

Eigen::Index ClientDataset::n_in_split(Split s) const {
  Eigen::Index n = 0;
  for (const Sample& smp : samples_)
    if (split_of(smp.patient_id) == s) ++n;
  return n;
}

void FederationLayout::validate() const {
  if (training_centers.size() < 2)
    throw ConfigError("a federated run needs at least 2 training centers");
  std::set<std::string> train(training_centers.begin(), training_centers.end());
  if (train.size() != training_centers.size())
    throw ConfigError("duplicate training center");
  for (const std::string& c : independent_centers)
    if (train.count(c))
      throw ConfigError("center " + c + " is both training and independent");
}

void SynthConfig::validate() const {
  if (n_centers < 1) throw ConfigError("n_centers must be positive");
  if (input_dim < 1) throw ConfigError("input_dim must be positive");
  if (patients_per_center.lo < 1 || patients_per_center.hi < patients_per_center.lo)
    throw ConfigError("patients_per_center range is infeasible");
  if (tiles_per_patient.lo < 1 || tiles_per_patient.hi < tiles_per_patient.lo)
    throw ConfigError("tiles_per_patient range is infeasible");
  if (!(class_pos_fraction.lo > 0.0 && class_pos_fraction.hi < 1.0 &&
        class_pos_fraction.lo <= class_pos_fraction.hi))
    throw ConfigError("class_pos_fraction must lie inside (0, 1)");
  if (domain_shift.rotation_scale < 0 || domain_shift.bias_scale < 0 ||
      domain_shift.noise_sigma < 0)
    throw ConfigError("domain shift scales must be non-negative");
}

std::map<std::string, ClientDataset> generate_federation(const SynthConfig& cfg) {
  cfg.validate();
  const int d = cfg.input_dim;
  Eigen::VectorXd mean_pos = Eigen::VectorXd::Zero(d);
  mean_pos[0] = kClassHalfGap;
  const Eigen::VectorXd mean_neg = -mean_pos;

  std::map<std::string, ClientDataset> centers;
  for (int ci = 0; ci < cfg.n_centers; ++ci) {
    const std::string cid = center_name(ci, cfg.n_centers);
    RngStream rng(cfg.seed, 0, static_cast<std::uint64_t>(ci), RngPurpose::data_gen);

    const Eigen::MatrixXd rot =
        random_rotation(d, cfg.domain_shift.rotation_scale, rng);
    const Eigen::VectorXd shift =
        cfg.domain_shift.bias_scale * gaussian_vector(d, rng);
    const int n_patients = draw_in(cfg.patients_per_center, rng);
    const double pos_frac = draw_in(cfg.class_pos_fraction, rng);

    std::vector<Sample> samples;
    for (int p = 0; p < n_patients; ++p) {
      const std::string pid = patient_name(cid, p);
      const int n_tiles = draw_in(cfg.tiles_per_patient, rng);
      for (int t = 0; t < n_tiles; ++t) {
        Sample s;
        s.label = rng.next_double() < pos_frac ? 1 : 0;
        const Eigen::VectorXd latent =
            (s.label ? mean_pos : mean_neg) + gaussian_vector(d, rng);
        s.features = rot * latent + shift +
                     cfg.domain_shift.noise_sigma * gaussian_vector(d, rng);
        s.patient_id = pid;
        s.center_id = cid;
        samples.push_back(std::move(s));
      }
    }

    ClientDataset raw(cid, std::move(samples));
    RngStream split_rng(cfg.seed, 0, static_cast<std::uint64_t>(ci),
                        RngPurpose::patient_split);
    centers.emplace(cid, split_patients(raw, {0.5, 0.1, 0.4}, split_rng));
  }
  return centers;
}

std::array<int, 3> largest_remainder_counts(int n,
                                            const std::array<double, 3>& fractions) {
  double total = 0.0;
  for (double f : fractions) {
    if (f < 0.0) throw ConfigError("split fraction must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw ConfigError("split fractions must sum to 1");

  std::array<int, 3> counts{};
  std::array<double, 3> remainder{};
  int assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double quota = n * fractions[i];
    counts[i] = static_cast<int>(std::floor(quota));
    remainder[i] = quota - counts[i];
    assigned += counts[i];
  }
  // Hand out the leftover units by largest remainder, earliest split first on ties.
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return remainder[a] > remainder[b]; });
  for (int i = 0; assigned < n; ++i) {
    ++counts[order[static_cast<std::size_t>(i % 3)]];
    ++assigned;
  }
  // Every split with positive fraction keeps at least one patient when
  // enough patients exist; steal from the currently largest split.
  int positive = 0;
  for (double f : fractions)
    if (f > 0.0) ++positive;
  if (n >= positive) {
    for (int i = 0; i < 3; ++i) {
      while (counts[i] == 0 && fractions[i] > 0.0) {
        const int donor = static_cast<int>(
            std::max_element(counts.begin(), counts.end()) - counts.begin());
        if (counts[donor] <= 1) break;
        --counts[donor];
        ++counts[i];
      }
    }
  }
  return counts;
}

ClientDataset split_patients(const ClientDataset& ds,
                             const std::array<double, 3>& fractions,
                             RngStream& rng) {
  std::vector<std::string> pats = ds.patients();
  if (pats.size() < 3)
    throw ConfigError("center " + ds.center_id() + " has fewer than 3 patients");
  const std::array<int, 3> counts =
      largest_remainder_counts(static_cast<int>(pats.size()), fractions);

  rng.shuffle(pats);
  std::map<std::string, Split> splits;
  std::size_t at = 0;
  for (int s = 0; s < 3; ++s)
    for (int k = 0; k < counts[static_cast<std::size_t>(s)]; ++k)
      splits[pats[at++]] = static_cast<Split>(s);
  return ClientDataset(ds.center_id(), ds.samples(), std::move(splits));
}

std::vector<FederationLayout> kfold_center_rotation(
    const std::vector<std::string>& centers, int k, RngStream& rng) {
  if (k < 2) throw ConfigError("kfold requires k >= 2");
  if (static_cast<int>(centers.size()) < k)
    throw ConfigError("more folds than centers");

  std::vector<std::string> order = centers;
  rng.shuffle(order);

  const int n = static_cast<int>(order.size());
  const int base = n / k;
  const int extra = n % k;
  std::vector<std::vector<std::string>> chunks;
  int at = 0;
  for (int j = 0; j < k; ++j) {
    const int len = base + (j < extra ? 1 : 0);
    chunks.emplace_back(order.begin() + at, order.begin() + at + len);
    at += len;
  }

  std::vector<FederationLayout> layouts;
  for (int j = 0; j < k; ++j) {
    FederationLayout lo;
    lo.independent_centers = chunks[static_cast<std::size_t>(j)];
    for (int m = 0; m < k; ++m)
      if (m != j)
        lo.training_centers.insert(lo.training_centers.end(),
                                   chunks[static_cast<std::size_t>(m)].begin(),
                                   chunks[static_cast<std::size_t>(m)].end());
    std::sort(lo.training_centers.begin(), lo.training_centers.end());
    std::sort(lo.independent_centers.begin(), lo.independent_centers.end());
    lo.validate();
    layouts.push_back(std::move(lo));
  }
  return layouts;
}

void save_csv_federation(const std::map<std::string, ClientDataset>& centers,
                         const std::filesystem::path& path) {
  if (centers.empty()) throw ConfigError("nothing to save");
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");

  const Eigen::Index d =
      centers.begin()->second.samples().empty()
          ? 0
          : centers.begin()->second.samples().front().features.size();
  out << "center_id,patient_id,split,label";
  for (Eigen::Index i = 0; i < d; ++i) out << ",f" << i;
  out << "\n";
  for (const auto& [cid, ds] : centers) {
    for (const Sample& s : ds.samples()) {
      out << cid << "," << s.patient_id << ","
          << (ds.has_splits() ? split_name(ds.split_of(s.patient_id)) : "")
          << "," << s.label;
      for (Eigen::Index i = 0; i < s.features.size(); ++i)
        out << "," << format_double(s.features[i]);
      out << "\n";
    }
  }
}

std::map<std::string, ClientDataset> load_csv_federation(
    const std::filesystem::path& path, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path.string() + ": empty file");
  const std::vector<std::string> header = split_csv_line(line);
  const std::array<std::string, 4> fixed{"center_id", "patient_id", "split", "label"};
  for (std::size_t i = 0; i < fixed.size(); ++i)
    if (header.size() <= i || header[i] != fixed[i])
      throw SchemaError(path.string() + ": header column " + std::to_string(i + 1) +
                        " must be '" + fixed[i] + "'");
  const std::size_t d = header.size() - 4;
  if (d == 0) throw SchemaError(path.string() + ": no feature columns");
  for (std::size_t i = 0; i < d; ++i)
    if (header[4 + i] != "f" + std::to_string(i))
      throw SchemaError(path.string() + ": feature column " + std::to_string(i + 5) +
                        " must be 'f" + std::to_string(i) + "'");

  struct Row {
    Sample sample;
    std::string split;
  };
  std::map<std::string, std::vector<Row>> rows_by_center;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> f = split_csv_line(line);
    if (f.size() != header.size())
      throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(header.size()) + " fields, got " +
                        std::to_string(f.size()));
    Row r;
    r.sample.center_id = f[0];
    r.sample.patient_id = f[1];
    r.split = f[2];
    if (!r.split.empty() && r.split != "train" && r.split != "val" && r.split != "test")
      throw SchemaError(path.string() + ":" + std::to_string(line_no) +
                        ": bad split '" + r.split + "'");
    if (f[3] != "0" && f[3] != "1")
      throw SchemaError(path.string() + ":" + std::to_string(line_no) +
                        ": label must be 0 or 1");
    r.sample.label = f[3] == "1" ? 1 : 0;
    r.sample.features.resize(static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) {
      try {
        r.sample.features[static_cast<Eigen::Index>(i)] = parse_double(f[4 + i]);
      } catch (const SchemaError&) {
        throw SchemaError(path.string() + ":" + std::to_string(line_no) +
                          ": column f" + std::to_string(i) + " is not a number");
      }
    }
    rows_by_center[f[0]].push_back(std::move(r));
  }
  if (rows_by_center.empty()) throw SchemaError(path.string() + ": no data rows");

  std::map<std::string, ClientDataset> centers;
  std::uint64_t center_index = 0;
  for (auto& [cid, rows] : rows_by_center) {
    bool any_split = false;
    bool all_split = true;
    std::map<std::string, std::string> per_patient;
    std::vector<Sample> samples;
    for (Row& r : rows) {
      if (r.split.empty())
        all_split = false;
      else
        any_split = true;
      const auto it = per_patient.find(r.sample.patient_id);
      if (it == per_patient.end())
        per_patient[r.sample.patient_id] = r.split;
      else if (it->second != r.split)
        throw SchemaError(path.string() + ": patient " + r.sample.patient_id +
                          " appears in more than one split");
      samples.push_back(std::move(r.sample));
    }
    if (any_split && !all_split)
      throw SchemaError(path.string() + ": center " + cid +
                        " mixes split and unsplit rows");
    if (all_split) {
      std::map<std::string, Split> splits;
      for (const auto& [pid, name] : per_patient)
        splits[pid] = name == "train" ? Split::train
                      : name == "val" ? Split::val
                                      : Split::test;
      centers.emplace(cid, ClientDataset(cid, std::move(samples), std::move(splits)));
    } else {
      ClientDataset raw(cid, std::move(samples));
      RngStream rng(seed, 0, center_index, RngPurpose::patient_split);
      centers.emplace(cid, split_patients(raw, {0.5, 0.1, 0.4}, rng));
    }
    ++center_index;
  }
  return centers;
}

}  // namespace fedsim

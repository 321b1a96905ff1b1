#pragma once

#include <Eigen/Core>

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

enum class Split { train, val, test };

std::string split_name(Split s);

/// One labeled sample: the desk-scale analogue of an image tile.
struct Sample {
  Eigen::VectorXd features;
  int label = 0;  // 0 negative, 1 positive
  std::string patient_id;
  std::string center_id;
};

struct LabeledMatrix {
  Eigen::MatrixXd features;  // rows are samples
  Eigen::ArrayXd labels;
  Eigen::Index count() const { return features.rows(); }
};

/// One center's samples with patient-level split assignments. Every sample
/// of a patient lives in that patient's split, so no patient crosses the
/// train/val/test boundary.
class ClientDataset {
 public:
  ClientDataset() = default;

  /// splits may be empty (dataset not yet split); when non-empty it must
  /// cover exactly the patients appearing in samples.
  ClientDataset(std::string center_id, std::vector<Sample> samples,
                std::map<std::string, Split> splits = {});

  const std::string& center_id() const { return center_id_; }
  const std::vector<Sample>& samples() const { return samples_; }
  Eigen::Index n_samples() const { return static_cast<Eigen::Index>(samples_.size()); }

  /// Sorted unique patient ids.
  std::vector<std::string> patients() const;
  int n_patients() const;

  bool has_splits() const { return !splits_.empty(); }
  const std::map<std::string, Split>& splits() const { return splits_; }
  Split split_of(const std::string& patient_id) const;

  /// Samples of one split as a dense matrix, in stored order.
  LabeledMatrix split_matrix(Split s) const;
  /// Every sample regardless of split.
  LabeledMatrix all_matrix() const;

  Eigen::Index n_in_split(Split s) const;

 private:
  std::string center_id_;
  std::vector<Sample> samples_;
  std::map<std::string, Split> splits_;
};

/// Which centers train and which are held out entirely.
struct FederationLayout {
  std::vector<std::string> training_centers;
  std::vector<std::string> independent_centers;

  void validate() const;  // disjoint, >= 2 training centers
};

struct IntRange {
  int lo = 0;
  int hi = 0;
};

struct RealRange {
  double lo = 0.0;
  double hi = 0.0;
};

/// Per-center affine disturbance of the shared latent problem.
struct DomainShift {
  double rotation_scale = 0.0;  // radians; Givens angles drawn U(-s, s)
  double bias_scale = 0.0;      // feature-space translation magnitude
  double noise_sigma = 0.0;     // additive per-sample Gaussian noise
};

struct SynthConfig {
  int n_centers = 0;
  int input_dim = 0;
  IntRange patients_per_center;
  IntRange tiles_per_patient;
  RealRange class_pos_fraction;  // each center draws its own positive rate
  DomainShift domain_shift;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Synthetic multi-center federation: two latent class-conditional Gaussian
/// clusters; every center applies its own random rotation and translation
/// plus additive noise, and draws its own patient count, tiles per patient
/// and positive fraction. Pure function of the config, seed included.
std::map<std::string, ClientDataset> generate_federation(const SynthConfig& cfg);

/// Patient-level random split at the given fractions (largest-remainder
/// rounding; every split gets at least one patient when n_patients >= 3).
ClientDataset split_patients(const ClientDataset& ds,
                             const std::array<double, 3>& fractions,
                             RngStream& rng);

/// Integer apportionment of n by the fractions, largest remainder first.
std::array<int, 3> largest_remainder_counts(int n,
                                            const std::array<double, 3>& fractions);

/// k layouts over a shuffled copy of centers; in layout j the j-th
/// near-equal chunk is independent and the rest train, so every center is
/// independent exactly once.
std::vector<FederationLayout> kfold_center_rotation(
    const std::vector<std::string>& centers, int k, RngStream& rng);

/// CSV schema: header `center_id,patient_id,split,label,f0,...,f{d-1}`;
/// split is train/val/test or empty; label is 0/1. Centers whose split
/// column is entirely empty are split via split_patients (seeded below).
std::map<std::string, ClientDataset> load_csv_federation(
    const std::filesystem::path& path, std::uint64_t seed = 0);

void save_csv_federation(const std::map<std::string, ClientDataset>& centers,
                         const std::filesystem::path& path);

}  // namespace fedsim

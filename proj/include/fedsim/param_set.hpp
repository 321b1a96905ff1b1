#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

enum class TensorKind { weight, bias };

/// One flat tensor of a model. Matrices are stored row-major, so the flat
/// index of entry (r, c) of a (rows, cols) weight is r * cols + c.
struct LayerTensor {
  std::string layer_id;
  TensorKind kind = TensorKind::weight;
  std::vector<Eigen::Index> shape;
  Eigen::ArrayXd values;
};

/// Ordered list of layer tensors; the unit exchanged between server and
/// clients. Treated as an immutable value: all operations below return
/// new sets, so sharing across threads is safe.
class ParameterSet {
 public:
  ParameterSet() = default;

  /// Validates that product(shape) == values.size() and all values are
  /// finite for every layer. Throws ConfigError / NumericError otherwise.
  explicit ParameterSet(std::vector<LayerTensor> layers);

  const std::vector<LayerTensor>& layers() const { return layers_; }
  std::size_t layer_count() const { return layers_.size(); }
  Eigen::Index total_size() const;
  bool empty() const { return layers_.empty(); }

  /// Same layer_id / kind / shape sequence.
  bool congruent_with(const ParameterSet& other) const;

 private:
  std::vector<LayerTensor> layers_;
};

/// Boolean structure congruent to a ParameterSet. An entry is true iff the
/// corresponding parameter survives (is NOT dropped).
class DropoutMask {
 public:
  DropoutMask() = default;
  explicit DropoutMask(std::vector<Eigen::Array<bool, Eigen::Dynamic, 1>> layers)
      : layers_(std::move(layers)) {}

  const std::vector<Eigen::Array<bool, Eigen::Dynamic, 1>>& layers() const {
    return layers_;
  }
  bool congruent_with(const ParameterSet& params) const;

  /// Fraction of surviving entries over the whole mask.
  double keep_fraction() const;

 private:
  std::vector<Eigen::Array<bool, Eigen::Dynamic, 1>> layers_;
};

void require_congruent(const ParameterSet& a, const ParameterSet& b);
void require_congruent(const DropoutMask& m, const ParameterSet& p);

/// Congruent set with every value zero.
ParameterSet new_zeroed(const ParameterSet& shape_template);

/// Elementwise acc + a * x. Inputs must be congruent and the result finite.
ParameterSet axpy(const ParameterSet& acc, double a, const ParameterSet& x);

/// Independent Bernoulli survival per entry: keep iff u > fdr with
/// u ~ Uniform[0,1). Covers every parameter, biases included. A literal
/// zero draw at fdr = 0 therefore drops an entry with probability 2^-53;
/// the comparison stays strict rather than special-casing that event.
DropoutMask draw_mask(const ParameterSet& shape_template, double fdr, RngStream& rng);

/// All values in layer order as one dense vector.
Eigen::VectorXd flatten_to_vector(const ParameterSet& p);

/// sqrt(sum over all parameters of (a - b)^2).
double l2_distance(const ParameterSet& a, const ParameterSet& b);

/// Wrapping sum of the 64-bit patterns of every value; used for audit
/// records and bit-exactness checks.
std::uint64_t checksum(const ParameterSet& p);

}  // namespace fedsim

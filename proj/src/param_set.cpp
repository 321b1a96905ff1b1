#include "fedsim/param_set.hpp"

#include <bit>
#include <sstream>

namespace fedsim {

namespace {

Eigen::Index shape_product(const std::vector<Eigen::Index>& shape) {
  Eigen::Index n = 1;
  for (Eigen::Index d : shape) n *= d;
  return n;
}

std::string describe(const LayerTensor& t) {
  std::ostringstream os;
  os << t.layer_id << (t.kind == TensorKind::weight ? "/weight(" : "/bias(");
  for (std::size_t i = 0; i < t.shape.size(); ++i)
    os << (i ? "x" : "") << t.shape[i];
  os << ")";
  return os.str();
}

}  // namespace

ParameterSet::ParameterSet(std::vector<LayerTensor> layers)
    : layers_(std::move(layers)) {
  for (const LayerTensor& t : layers_) {
    if (t.shape.empty())
      throw ConfigError("layer " + t.layer_id + " has an empty shape");
    for (Eigen::Index d : t.shape)
      if (d <= 0)
        throw ConfigError("layer " + describe(t) + " has a non-positive extent");
    if (shape_product(t.shape) != t.values.size())
      throw ConfigError("layer " + describe(t) + " holds " +
                        std::to_string(t.values.size()) + " values");
    if (!t.values.isFinite().all())
      throw NumericError("layer " + describe(t) + " contains NaN or Inf");
  }
}

Eigen::Index ParameterSet::total_size() const {
  Eigen::Index n = 0;
  for (const LayerTensor& t : layers_) n += t.values.size();
  return n;
}

bool ParameterSet::congruent_with(const ParameterSet& other) const {
  if (layers_.size() != other.layers_.size()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerTensor& a = layers_[i];
    const LayerTensor& b = other.layers_[i];
    if (a.layer_id != b.layer_id || a.kind != b.kind || a.shape != b.shape)
      return false;
  }
  return true;
}

bool DropoutMask::congruent_with(const ParameterSet& params) const {
  if (layers_.size() != params.layer_count()) return false;
  for (std::size_t i = 0; i < layers_.size(); ++i)
    if (layers_[i].size() != params.layers()[i].values.size()) return false;
  return true;
}

double DropoutMask::keep_fraction() const {
  Eigen::Index kept = 0;
  Eigen::Index total = 0;
  for (const auto& layer : layers_) {
    kept += layer.count();
    total += layer.size();
  }
  return total == 0 ? 0.0 : static_cast<double>(kept) / static_cast<double>(total);
}

void require_congruent(const ParameterSet& a, const ParameterSet& b) {
  if (!a.congruent_with(b))
    throw CongruenceError("parameter sets are not congruent");
}

void require_congruent(const DropoutMask& m, const ParameterSet& p) {
  if (!m.congruent_with(p))
    throw CongruenceError("mask is not congruent to the parameter set");
}

ParameterSet new_zeroed(const ParameterSet& shape_template) {
  std::vector<LayerTensor> layers;
  layers.reserve(shape_template.layer_count());
  for (const LayerTensor& t : shape_template.layers()) {
    LayerTensor z = t;
    z.values.setZero();
    layers.push_back(std::move(z));
  }
  return ParameterSet(std::move(layers));
}

ParameterSet axpy(const ParameterSet& acc, double a, const ParameterSet& x) {
  require_congruent(acc, x);
  if (!std::isfinite(a)) throw NumericError("axpy scale is not finite");
  std::vector<LayerTensor> layers;
  layers.reserve(acc.layer_count());
  for (std::size_t i = 0; i < acc.layer_count(); ++i) {
    LayerTensor out = acc.layers()[i];
    out.values += a * x.layers()[i].values;
    if (!out.values.isFinite().all())
      throw NumericError("axpy produced a non-finite value in layer " +
                         out.layer_id);
    layers.push_back(std::move(out));
  }
  return ParameterSet(std::move(layers));
}

DropoutMask draw_mask(const ParameterSet& shape_template, double fdr,
                      RngStream& rng) {
  if (!(fdr >= 0.0 && fdr < 1.0))
    throw ConfigError("fdr must lie in [0, 1), got " + std::to_string(fdr));
  std::vector<Eigen::Array<bool, Eigen::Dynamic, 1>> layers;
  layers.reserve(shape_template.layer_count());
  for (const LayerTensor& t : shape_template.layers()) {
    Eigen::Array<bool, Eigen::Dynamic, 1> keep(t.values.size());
    for (Eigen::Index k = 0; k < keep.size(); ++k)
      keep[k] = rng.next_double() > fdr;
    layers.push_back(std::move(keep));
  }
  return DropoutMask(std::move(layers));
}

Eigen::VectorXd flatten_to_vector(const ParameterSet& p) {
  Eigen::VectorXd flat(p.total_size());
  Eigen::Index at = 0;
  for (const LayerTensor& t : p.layers()) {
    flat.segment(at, t.values.size()) = t.values.matrix();
    at += t.values.size();
  }
  return flat;
}

double l2_distance(const ParameterSet& a, const ParameterSet& b) {
  require_congruent(a, b);
  double sq = 0.0;
  for (std::size_t i = 0; i < a.layer_count(); ++i)
    sq += (a.layers()[i].values - b.layers()[i].values).square().sum();
  return std::sqrt(sq);
}

std::uint64_t checksum(const ParameterSet& p) {
  std::uint64_t sum = 0;
  for (const LayerTensor& t : p.layers())
    for (Eigen::Index k = 0; k < t.values.size(); ++k)
      sum += std::bit_cast<std::uint64_t>(t.values[k]);
  return sum;
}

}  // namespace fedsim

#include "fedsim/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedsim {

namespace {

constexpr double kProbClamp = 1e-12;

struct LinearDims {
  Eigen::Index out;
  Eigen::Index in;
};

std::vector<LinearDims> linear_dims(const ModelSpec& spec) {
  std::vector<LinearDims> dims;
  Eigen::Index in = spec.input_dim;
  for (int h : spec.hidden_dims) {
    dims.push_back({h, in});
    in = h;
  }
  dims.push_back({1, in});
  return dims;
}

std::string linear_name(std::size_t j, std::size_t n_linear) {
  return j + 1 == n_linear ? std::string("out") : "h" + std::to_string(j);
}

using RowMajor =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> weight_map(const LayerTensor& t) {
  return {t.values.data(), t.shape[0], t.shape[1]};
}

void require_matches(const ModelSpec& spec, const ParameterSet& params) {
  const auto dims = linear_dims(spec);
  if (params.layer_count() != 2 * dims.size())
    throw CongruenceError("parameter set does not match the model spec");
  for (std::size_t j = 0; j < dims.size(); ++j) {
    const LayerTensor& w = params.layers()[2 * j];
    const LayerTensor& b = params.layers()[2 * j + 1];
    if (w.kind != TensorKind::weight || b.kind != TensorKind::bias ||
        w.shape != std::vector<Eigen::Index>{dims[j].out, dims[j].in} ||
        b.shape != std::vector<Eigen::Index>{dims[j].out})
      throw CongruenceError("parameter set does not match the model spec");
  }
}

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

struct ForwardPass {
  std::vector<Eigen::MatrixXd> acts;  // acts[0] = X, then post-ReLU activations
  std::vector<Eigen::MatrixXd> pre;   // pre-activation of each hidden layer
  Eigen::ArrayXd logits;
};

ForwardPass forward_pass(const ModelSpec& spec, const ParameterSet& params,
                         const Eigen::Ref<const Eigen::MatrixXd>& X) {
  if (X.cols() != spec.input_dim)
    throw ConfigError("feature dimension " + std::to_string(X.cols()) +
                      " does not match input_dim " + std::to_string(spec.input_dim));
  require_matches(spec, params);
  const auto dims = linear_dims(spec);

  ForwardPass fp;
  fp.acts.push_back(X);
  for (std::size_t j = 0; j + 1 < dims.size(); ++j) {
    const auto W = weight_map(params.layers()[2 * j]);
    const auto& b = params.layers()[2 * j + 1].values;
    Eigen::MatrixXd z = fp.acts.back() * W.transpose();
    z.rowwise() += b.matrix().transpose();
    fp.pre.push_back(z);
    fp.acts.push_back(z.cwiseMax(0.0));
  }
  const auto Wout = weight_map(params.layers()[2 * (dims.size() - 1)]);
  const double bout = params.layers()[2 * dims.size() - 1].values[0];
  fp.logits = (fp.acts.back() * Wout.transpose()).array() + bout;
  return fp;
}

double weighted_bce_sum(const Eigen::ArrayXd& prob, const Eigen::ArrayXd& y,
                        const LossConfig& cfg) {
  double sum = 0.0;
  for (Eigen::Index i = 0; i < prob.size(); ++i) {
    const double p = std::clamp(prob[i], kProbClamp, 1.0 - kProbClamp);
    sum -= cfg.w_pos * y[i] * std::log(p) +
           cfg.w_neg * (1.0 - y[i]) * std::log1p(-p);
  }
  return sum;
}

}  // namespace

void ModelSpec::validate() const {
  if (input_dim < 1) throw ConfigError("input_dim must be positive");
  if (arch == Arch::logistic && !hidden_dims.empty())
    throw ConfigError("logistic model takes no hidden dims");
  if (arch == Arch::mlp && hidden_dims.empty())
    throw ConfigError("mlp needs at least one hidden dim");
  for (int h : hidden_dims)
    if (h < 1) throw ConfigError("hidden dims must be positive");
}

ParameterSet init_params(const ModelSpec& spec, RngStream& rng) {
  spec.validate();
  const auto dims = linear_dims(spec);
  std::vector<LayerTensor> layers;
  for (std::size_t j = 0; j < dims.size(); ++j) {
    const std::string name = linear_name(j, dims.size());
    LayerTensor w{name, TensorKind::weight, {dims[j].out, dims[j].in}, {}};
    w.values.resize(dims[j].out * dims[j].in);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dims[j].in));
    for (Eigen::Index k = 0; k < w.values.size(); ++k)
      w.values[k] = (2.0 * rng.next_double() - 1.0) * scale;
    LayerTensor b{name, TensorKind::bias, {dims[j].out}, {}};
    b.values = Eigen::ArrayXd::Zero(dims[j].out);
    layers.push_back(std::move(w));
    layers.push_back(std::move(b));
  }
  return ParameterSet(std::move(layers));
}

Eigen::ArrayXd predict_proba(const ModelSpec& spec, const ParameterSet& params,
                             const Eigen::Ref<const Eigen::MatrixXd>& X) {
  const ForwardPass fp = forward_pass(spec, params, X);
  Eigen::ArrayXd p(fp.logits.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = sigmoid(fp.logits[i]);
  return p;
}

double forward(const ModelSpec& spec, const ParameterSet& params,
               const Eigen::Ref<const Eigen::VectorXd>& x) {
  return predict_proba(spec, params, x.transpose())[0];
}

LossGrad loss_and_grad(const ModelSpec& spec, const ParameterSet& params,
                       const Eigen::Ref<const Eigen::MatrixXd>& X,
                       const Eigen::Ref<const Eigen::ArrayXd>& y,
                       const LossConfig& cfg, const ParameterSet* anchor) {
  const Eigen::Index n = X.rows();
  if (n == 0) throw ConfigError("loss_and_grad: empty batch");
  if (y.size() != n) throw ConfigError("loss_and_grad: label count mismatch");
  if (cfg.prox_mu > 0.0 && anchor == nullptr)
    throw ConfigError("proximal term requires an anchor");

  const ForwardPass fp = forward_pass(spec, params, X);
  Eigen::ArrayXd prob(n);
  for (Eigen::Index i = 0; i < n; ++i) prob[i] = sigmoid(fp.logits[i]);

  double loss = weighted_bce_sum(prob, y, cfg) / static_cast<double>(n);

  // dL/dlogit of the mean loss; uses the unclamped probability.
  Eigen::VectorXd delta(n);
  for (Eigen::Index i = 0; i < n; ++i)
    delta[i] = (cfg.w_pos * y[i] * (prob[i] - 1.0) +
                cfg.w_neg * (1.0 - y[i]) * prob[i]) /
               static_cast<double>(n);

  const auto dims = linear_dims(spec);
  std::vector<LayerTensor> grad_layers(params.layer_count());

  // Output layer.
  {
    const std::size_t j = dims.size() - 1;
    const LayerTensor& w = params.layers()[2 * j];
    LayerTensor gw{w.layer_id, TensorKind::weight, w.shape, {}};
    Eigen::RowVectorXd gwa = delta.transpose() * fp.acts.back();
    gw.values = gwa.transpose().array();
    LayerTensor gb{w.layer_id, TensorKind::bias, {1}, {}};
    gb.values = Eigen::ArrayXd::Constant(1, delta.sum());
    grad_layers[2 * j] = std::move(gw);
    grad_layers[2 * j + 1] = std::move(gb);
  }

  // Backpropagate through the hidden stack.
  if (dims.size() > 1) {
    const auto Wout = weight_map(params.layers()[2 * (dims.size() - 1)]);
    Eigen::MatrixXd dA = delta * Wout;  // n x h_last
    for (std::size_t j = dims.size() - 1; j-- > 0;) {
      Eigen::MatrixXd dZ =
          dA.array() * (fp.pre[j].array() > 0.0).cast<double>();
      const LayerTensor& w = params.layers()[2 * j];
      LayerTensor gw{w.layer_id, TensorKind::weight, w.shape, {}};
      RowMajor gwm = dZ.transpose() * fp.acts[j];
      gw.values = Eigen::Map<const Eigen::ArrayXd>(gwm.data(), gwm.size());
      LayerTensor gb{w.layer_id, TensorKind::bias, {dims[j].out}, {}};
      gb.values = dZ.colwise().sum().transpose().array();
      grad_layers[2 * j] = std::move(gw);
      grad_layers[2 * j + 1] = std::move(gb);
      if (j > 0) dA = dZ * weight_map(params.layers()[2 * j]);
    }
  }

  ParameterSet grad(std::move(grad_layers));

  if (cfg.prox_mu > 0.0) {
    require_congruent(params, *anchor);
    const double d = l2_distance(params, *anchor);
    loss += 0.5 * cfg.prox_mu * d * d;
    grad = axpy(axpy(grad, cfg.prox_mu, params), -cfg.prox_mu, *anchor);
  }

  if (!std::isfinite(loss)) throw NumericError("loss is not finite");
  return {loss, std::move(grad)};
}

double learning_rate(const OptimizerState& opt, int global_epoch) {
  if (global_epoch < 0) throw ConfigError("negative epoch");
  if (opt.halve_every < 1) throw ConfigError("halve_every must be positive");
  return std::ldexp(opt.lr0, -(global_epoch / opt.halve_every));
}

StepResult sgd_step(const ParameterSet& params, const ParameterSet& grad,
                    const OptimizerState& opt, int global_epoch) {
  require_congruent(params, grad);
  OptimizerState next = opt;
  if (next.velocity.empty()) next.velocity = new_zeroed(params);
  require_congruent(next.velocity, params);

  const double lr = learning_rate(opt, global_epoch);
  std::vector<LayerTensor> vel_layers;
  std::vector<LayerTensor> out_layers;
  vel_layers.reserve(params.layer_count());
  out_layers.reserve(params.layer_count());
  for (std::size_t i = 0; i < params.layer_count(); ++i) {
    const auto& p = params.layers()[i].values;
    const auto& g = grad.layers()[i].values;
    const auto& v = next.velocity.layers()[i].values;
    LayerTensor vl = params.layers()[i];
    vl.values = opt.momentum * v + (g + opt.weight_decay * p);
    LayerTensor pl = params.layers()[i];
    pl.values = p - lr * vl.values;
    if (!pl.values.isFinite().all())
      throw NumericError("sgd_step produced a non-finite parameter in layer " +
                         pl.layer_id);
    vel_layers.push_back(std::move(vl));
    out_layers.push_back(std::move(pl));
  }
  next.velocity = ParameterSet(std::move(vel_layers));
  return {ParameterSet(std::move(out_layers)), std::move(next)};
}

EpochResult local_train_epoch(const ModelSpec& spec, const ParameterSet& params,
                              const Eigen::Ref<const Eigen::MatrixXd>& X,
                              const Eigen::Ref<const Eigen::ArrayXd>& y,
                              const LossConfig& cfg, const OptimizerState& opt,
                              int global_epoch, int batch_size, RngStream& rng,
                              const ParameterSet* anchor) {
  const Eigen::Index n = X.rows();
  if (n == 0) throw ConfigError("local_train_epoch: empty training split");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  rng.shuffle(order);

  EpochResult res{params, opt, 0.0};
  Eigen::Index done = 0;
  int n_batches = 0;
  while (done < n) {
    const Eigen::Index b = std::min<Eigen::Index>(batch_size, n - done);
    Eigen::MatrixXd Xb(b, X.cols());
    Eigen::ArrayXd yb(b);
    for (Eigen::Index r = 0; r < b; ++r) {
      Xb.row(r) = X.row(order[static_cast<std::size_t>(done + r)]);
      yb[r] = y[order[static_cast<std::size_t>(done + r)]];
    }
    LossGrad lg = loss_and_grad(spec, res.params, Xb, yb, cfg, anchor);
    StepResult st = sgd_step(res.params, lg.grad, res.opt, global_epoch);
    res.params = std::move(st.params);
    res.opt = std::move(st.opt);
    res.mean_loss += lg.loss;
    ++n_batches;
    done += b;
  }
  res.mean_loss /= n_batches;
  return res;
}

double eval_loss(const ModelSpec& spec, const ParameterSet& params,
                 const Eigen::Ref<const Eigen::MatrixXd>& X,
                 const Eigen::Ref<const Eigen::ArrayXd>& y,
                 const LossConfig& cfg) {
  if (X.rows() == 0) throw ConfigError("eval_loss: empty split");
  const Eigen::ArrayXd prob = predict_proba(spec, params, X);
  return weighted_bce_sum(prob, y, cfg);
}

}  // namespace fedsim

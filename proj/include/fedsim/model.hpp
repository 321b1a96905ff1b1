#pragma once

#include <Eigen/Core>

#include <utility>
#include <vector>

#include "fedsim/param_set.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

enum class Arch { logistic, mlp };

/// Architecture of a binary classifier: a single linear layer (logistic) or
/// a ReLU multilayer perceptron, both ending in one sigmoid output.
struct ModelSpec {
  Arch arch = Arch::logistic;
  int input_dim = 0;
  std::vector<int> hidden_dims;  // empty for logistic

  void validate() const;
};

/// Class-weighted binary cross-entropy configuration. prox_mu = 0 recovers
/// the plain weighted loss; prox_mu > 0 adds (mu/2) * ||params - anchor||^2.
struct LossConfig {
  double w_neg = 1.0;
  double w_pos = 1.0;
  double prox_mu = 0.0;
};

/// Weights uniform in (-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
ParameterSet init_params(const ModelSpec& spec, RngStream& rng);

/// Sigmoid probability for a single feature vector.
double forward(const ModelSpec& spec, const ParameterSet& params,
               const Eigen::Ref<const Eigen::VectorXd>& x);

/// Sigmoid probabilities for a batch; rows of X are samples.
Eigen::ArrayXd predict_proba(const ModelSpec& spec, const ParameterSet& params,
                             const Eigen::Ref<const Eigen::MatrixXd>& X);

struct LossGrad {
  double loss = 0.0;
  ParameterSet grad;
};

/// Mean class-weighted BCE over the batch plus the proximal term when
/// cfg.prox_mu > 0 (anchor must then be non-null). Probabilities are clamped
/// to [1e-12, 1 - 1e-12] before the logs; the gradient is the analytic one
/// of the unclamped loss, which coincides wherever the clamp is inactive.
LossGrad loss_and_grad(const ModelSpec& spec, const ParameterSet& params,
                       const Eigen::Ref<const Eigen::MatrixXd>& X,
                       const Eigen::Ref<const Eigen::ArrayXd>& y,
                       const LossConfig& cfg,
                       const ParameterSet* anchor = nullptr);

/// SGD with momentum and decoupled L2 on every parameter:
///   g' = grad + weight_decay * params
///   v' = momentum * v + g'
///   params' = params - lr(epoch) * v'
struct OptimizerState {
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int halve_every = 2;  // epochs between halvings
  ParameterSet velocity;
};

/// lr0 * 0.5^floor(epoch / halve_every); exact (ldexp).
double learning_rate(const OptimizerState& opt, int global_epoch);

struct StepResult {
  ParameterSet params;
  OptimizerState opt;
};

StepResult sgd_step(const ParameterSet& params, const ParameterSet& grad,
                    const OptimizerState& opt, int global_epoch);

struct EpochResult {
  ParameterSet params;
  OptimizerState opt;
  double mean_loss = 0.0;  // mean of batch losses
};

/// One full pass over (X, y) in rng-shuffled mini-batches. anchor is the
/// proximal reference model and must be non-null iff cfg.prox_mu > 0.
EpochResult local_train_epoch(const ModelSpec& spec, const ParameterSet& params,
                              const Eigen::Ref<const Eigen::MatrixXd>& X,
                              const Eigen::Ref<const Eigen::ArrayXd>& y,
                              const LossConfig& cfg, const OptimizerState& opt,
                              int global_epoch, int batch_size, RngStream& rng,
                              const ParameterSet* anchor = nullptr);

/// Sum (not mean) of per-sample class-weighted cross-entropy; no proximal
/// term. This is the model-selection criterion.
double eval_loss(const ModelSpec& spec, const ParameterSet& params,
                 const Eigen::Ref<const Eigen::MatrixXd>& X,
                 const Eigen::Ref<const Eigen::ArrayXd>& y,
                 const LossConfig& cfg);

}  // namespace fedsim

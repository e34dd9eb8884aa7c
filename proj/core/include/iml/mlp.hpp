#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "iml/tensor.hpp"

namespace iml {

// Numerically guarded ln(1 + e^x): returns x above +30, e^x below -30.
double softplus(double x);
double sigmoid(double x);

struct MlpShape {
  std::size_t d_in = 0;
  std::size_t hidden = 0;
  std::size_t classes = 0;

  std::size_t param_count() const {
    return d_in * hidden + hidden + hidden * classes + classes;
  }
  bool operator==(const MlpShape&) const = default;
};

// Single-hidden-layer MLP parameters. Also serves as the gradient carrier.
// Flat layout is fixed as w1, b1, w2, b2, each row-major, so flat vectors
// are interchangeable everywhere a parameter-sized vector is needed.
struct MlpParams {
  Tensor w1;  // [d_in x hidden]
  Tensor b1;  // [hidden]
  Tensor w2;  // [hidden x classes]
  Tensor b2;  // [classes]

  static MlpParams zeros(MlpShape s);
  // He-scaled normal init for weights, zero biases.
  static MlpParams random_init(MlpShape s, std::mt19937_64& rng);

  MlpShape shape() const;
  std::size_t param_count() const { return shape().param_count(); }

  void flatten_into(std::span<double> out) const;
  Vec flatten() const;
  static MlpParams from_flat(MlpShape s, std::span<const double> flat);

  std::array<Tensor*, 4> tensors() { return {&w1, &b1, &w2, &b2}; }
  std::array<const Tensor*, 4> tensors() const { return {&w1, &b1, &w2, &b2}; }

  bool operator==(const MlpParams&) const = default;
};

enum class HyperMode { PerParameter, PerLayer };

// The meta-knowledge: one regularization logit per parameter element, or one
// scalar per parameter tensor (4 scalars total, biases included).
struct HyperSet {
  HyperMode mode = HyperMode::PerParameter;
  // PerParameter: four tensors shape-matching MlpParams.
  // PerLayer: four tensors of shape {1}.
  std::array<Tensor, 4> values;

  static HyperSet constant(HyperMode mode, MlpShape s, double value);
  static HyperSet random_init(HyperMode mode, MlpShape s, std::mt19937_64& rng,
                              double mean = 0.0, double stddev = 0.1);

  // Regularization logit for element `elem` of parameter tensor `k`.
  double value_for(std::size_t k, std::size_t elem) const {
    return mode == HyperMode::PerLayer ? values[k].data[0] : values[k].data[elem];
  }

  std::size_t slot_count() const;
  void validate_against(const MlpParams& params) const;

  bool operator==(const HyperSet&) const = default;
};

struct Batch {
  Tensor inputs;            // [n x d_in]
  std::vector<int> labels;  // n entries in [0, classes)

  std::size_t size() const { return labels.size(); }
  void validate(std::size_t d_in, std::size_t classes) const;
};

enum class LossKind { Train, Val };

// logits = relu(inputs * w1 + b1) * w2 + b2
Tensor mlp_forward(const MlpParams& params, const Tensor& inputs);

// Row-wise softmax with max subtraction.
Tensor softmax(const Tensor& logits);

// Mean over rows of -log softmax(logits)[label].
double cross_entropy(const Tensor& logits, std::span<const int> labels);

// Sum over every parameter element of (softplus(lambda) * w)^2.
double reg_penalty(const MlpParams& params, const HyperSet& hypers);

double train_loss(const MlpParams& params, const HyperSet& hypers, const Batch& batch);
double val_loss(const MlpParams& params, const Batch& batch);

// Exact analytic gradient of the selected loss w.r.t. every parameter tensor.
// Val ignores `hypers` entirely.
MlpParams grad_w(LossKind kind, const MlpParams& params, const HyperSet& hypers,
                 const Batch& batch);

// Gradient of reg_penalty alone: 2 * softplus(lambda)^2 * w, elementwise.
MlpParams penalty_grad(const MlpParams& params, const HyperSet& hypers);

// Hessian-vector product of the training loss at `params`, computed without
// materializing the Hessian: forward-over-reverse for the cross-entropy term
// (ReLU treated as locally linear) plus the penalty's exact diagonal
// 2 * softplus(lambda)^2 * v.
Vec hvp_ww(const MlpParams& params, const HyperSet& hypers, const Batch& batch,
           std::span<const double> v);

// v * d^2 L_train / (dw dlambda^T). Only the penalty depends on lambda, so per
// element this is 4 * softplus(lambda) * sigmoid(lambda) * w * v; PerLayer mode
// sums the contributions of a tensor's elements into its scalar slot.
HyperSet mixed_vjp(const MlpParams& params, const HyperSet& hypers, const Batch& batch,
                   std::span<const double> v);

// Per-instance weighted cross-entropy gradient: (1/n) * sum_i weights[i] *
// grad of -log softmax(logits_i)[labels[i]]. With all-ones weights this equals
// the gradient of cross_entropy. Used by the consistency-regularization trainer.
MlpParams weighted_ce_grad(const MlpParams& params, const Tensor& inputs,
                           std::span<const int> labels, std::span<const double> weights);

// Hessian-vector product of the weighted cross entropy above (no penalty term).
Vec weighted_ce_hvp(const MlpParams& params, const Tensor& inputs,
                    std::span<const int> labels, std::span<const double> weights,
                    std::span<const double> v);

double accuracy(const MlpParams& params, const Tensor& inputs, std::span<const int> labels);

// Elementwise helpers shared by optimizers.
void axpy_params(double a, const MlpParams& x, MlpParams& y);  // y += a*x
void scale_params(MlpParams& p, double a);

}  // namespace iml

#include "iml/optimizers.hpp"

#include <cmath>

namespace iml {

InnerOpt::InnerOpt(InnerOptConfig config, MlpShape shape)
    : config_(config), m1_(MlpParams::zeros(shape)), m2_(MlpParams::zeros(shape)) {}

void InnerOpt::step(MlpParams& params, const MlpParams& grad) {
  ++steps_;
  if (const auto* sgd = std::get_if<SgdConfig>(&config_)) {
    auto ps = params.tensors();
    auto gs = grad.tensors();
    auto ms = m1_.tensors();
    for (std::size_t k = 0; k < 4; ++k) {
      for (std::size_t e = 0; e < ps[k]->numel(); ++e) {
        double g = gs[k]->data[e];
        if (sgd->momentum != 0.0) {
          ms[k]->data[e] = sgd->momentum * ms[k]->data[e] + g;
          g = ms[k]->data[e];
        }
        ps[k]->data[e] -= sgd->lr * g;
      }
    }
    return;
  }
  const auto& adam = std::get<AdamConfig>(config_);
  double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(steps_));
  double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(steps_));
  auto ps = params.tensors();
  auto gs = grad.tensors();
  auto m1 = m1_.tensors();
  auto m2 = m2_.tensors();
  for (std::size_t k = 0; k < 4; ++k) {
    for (std::size_t e = 0; e < ps[k]->numel(); ++e) {
      double g = gs[k]->data[e];
      double& m = m1[k]->data[e];
      double& v = m2[k]->data[e];
      m = adam.beta1 * m + (1.0 - adam.beta1) * g;
      v = adam.beta2 * v + (1.0 - adam.beta2) * g * g;
      double mhat = m / bc1;
      double vhat = v / bc2;
      ps[k]->data[e] -= adam.lr * mhat / (std::sqrt(vhat) + adam.eps);
    }
  }
}

void rmsprop_update(Tensor& value, Tensor& sq_avg, const Tensor& grad,
                    const MetaOptConfig& cfg) {
  for (std::size_t e = 0; e < value.numel(); ++e) {
    double g = grad.data[e];
    if (cfg.kind == MetaOptKind::Sgd) {
      value.data[e] -= cfg.lr * g;
      continue;
    }
    double& acc = sq_avg.data[e];
    acc = cfg.decay * acc + (1.0 - cfg.decay) * g * g;
    value.data[e] -= cfg.lr * g / (std::sqrt(acc) + cfg.eps);
  }
}

void MetaOpt::step(HyperSet& hypers, const HyperSet& grad) {
  if (!initialized_) {
    for (std::size_t k = 0; k < 4; ++k) sq_avg_[k] = Tensor::zeros(hypers.values[k].shape);
    initialized_ = true;
  }
  for (std::size_t k = 0; k < 4; ++k) {
    rmsprop_update(hypers.values[k], sq_avg_[k], grad.values[k], config_);
  }
}

}  // namespace iml

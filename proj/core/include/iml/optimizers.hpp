#pragma once

#include <array>
#include <cstdint>
#include <variant>

#include "iml/mlp.hpp"

namespace iml {

struct SgdConfig {
  double lr = 0.1;
  double momentum = 0.0;
  bool operator==(const SgdConfig&) const = default;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool operator==(const AdamConfig&) const = default;
};

using InnerOptConfig = std::variant<SgdConfig, AdamConfig>;

// Base-model optimizer with per-parameter moment buffers.
class InnerOpt {
 public:
  InnerOpt(InnerOptConfig config, MlpShape shape);

  void step(MlpParams& params, const MlpParams& grad);

  std::int64_t steps_taken() const { return steps_; }
  const InnerOptConfig& config() const { return config_; }

 private:
  InnerOptConfig config_;
  MlpParams m1_;  // momentum / first moment
  MlpParams m2_;  // second moment (Adam only)
  std::int64_t steps_ = 0;
};

enum class MetaOptKind { RmsProp, Sgd };

struct MetaOptConfig {
  MetaOptKind kind = MetaOptKind::RmsProp;
  double lr = 0.1;
  double decay = 0.99;  // square-average decay
  double eps = 1e-8;
  bool operator==(const MetaOptConfig&) const = default;
};

// Single-tensor RMSprop update shared by the hyperparameter and the
// confidence-network meta optimizers.
void rmsprop_update(Tensor& value, Tensor& sq_avg, const Tensor& grad,
                    const MetaOptConfig& cfg);

// Meta-knowledge optimizer; accumulator shapes mirror the HyperSet.
class MetaOpt {
 public:
  explicit MetaOpt(MetaOptConfig config) : config_(config) {}

  void step(HyperSet& hypers, const HyperSet& grad);

  const MetaOptConfig& config() const { return config_; }

 private:
  MetaOptConfig config_;
  std::array<Tensor, 4> sq_avg_;
  bool initialized_ = false;
};

}  // namespace iml

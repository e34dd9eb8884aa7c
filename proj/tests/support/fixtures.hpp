#pragma once

#include <random>

#include "iml/dataset.hpp"
#include "iml/mlp.hpp"

namespace fixtures {

struct Instance {
  iml::MlpShape shape;
  iml::MlpParams params;
  iml::HyperSet hypers;
  iml::Batch batch;
};

// Small random model + batch + hyperparameters, sized for derivative oracles.
inline Instance random_instance(std::uint64_t seed,
                                iml::HyperMode mode = iml::HyperMode::PerParameter,
                                std::size_t d_in = 4, std::size_t hidden = 5,
                                std::size_t classes = 3, std::size_t n = 6) {
  std::mt19937_64 rng(seed);
  Instance inst;
  inst.shape = iml::MlpShape{d_in, hidden, classes};
  inst.params = iml::MlpParams::random_init(inst.shape, rng);
  std::normal_distribution<double> g(0.0, 1.0);
  for (iml::Tensor* t : inst.params.tensors()) {
    for (double& x : t->data) x += 0.1 * g(rng);  // break bias zeros
  }
  inst.hypers = iml::HyperSet::random_init(mode, inst.shape, rng, 0.0, 0.5);
  inst.batch.inputs = iml::Tensor::zeros({n, d_in});
  for (double& x : inst.batch.inputs.data) x = g(rng);
  inst.batch.labels.resize(n);
  std::uniform_int_distribution<int> lab(0, static_cast<int>(classes) - 1);
  for (int& y : inst.batch.labels) y = lab(rng);
  return inst;
}

inline std::vector<double> random_vec(std::size_t n, std::uint64_t seed,
                                      double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, scale);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

}  // namespace fixtures

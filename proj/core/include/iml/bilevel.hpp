#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "iml/dataset.hpp"
#include "iml/inverse_hvp.hpp"
#include "iml/mlp.hpp"
#include "iml/optimizers.hpp"

namespace iml {

enum class Schedule { Iml, T1T2 };

struct MetaConfig {
  int inner_steps = 50;
  int meta_updates = 1000;
  int warmup_steps = 0;
  // Penalty-free training before the regularized warm-up, mirroring runs that
  // start from a converged unregularized model.
  int pretrain_steps = 0;
  int batch_size = 32;
  ApproxSpec approx = NeumannSpec{3};
  std::optional<int> early_stop_patience;
  std::uint64_t seed = 0;
  Schedule schedule = Schedule::Iml;

  HyperMode hyper_mode = HyperMode::PerParameter;
  double hyper_init_mean = 0.0;
  double hyper_init_stddev = 0.1;
  double param_init_scale = 1.0;  // multiplies the He weight init

  // 0 = as many hidden units as inputs.
  std::size_t hidden = 0;

  InnerOptConfig inner_opt = AdamConfig{};
  MetaOptConfig meta_opt = MetaOptConfig{};

  bool operator==(const MetaConfig&) const = default;
};

struct MetaEpochRecord {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  std::int64_t epoch_time_ns = 0;
  std::int64_t approx_time_ns = 0;
  std::int64_t approx_allocs = 0;
};

struct Checkpoint {
  MlpParams params;
  HyperSet hypers;
};

struct WarmupReport {
  std::vector<double> losses;  // minibatch training loss per warm-up step
  bool jump_detected = false;  // some loss exceeded 1.1x its running minimum
  int jump_step = -1;
  double grad_norm_initial = 0.0;  // full-train gradient norms
  double grad_norm_final = 0.0;
  bool hypers_unchanged = true;  // warm-up must not touch the meta-knowledge
};

struct RunMetrics {
  std::vector<MetaEpochRecord> epochs;
  int best_val_epoch = -1;  // 1-based meta-epoch index of the best val loss
  double best_val_loss = std::numeric_limits<double>::infinity();
  double best_train_acc = 0.0;
  double best_val_acc = 0.0;
  double final_train_acc = 0.0;
  double final_val_acc = 0.0;
  double final_test_acc = std::numeric_limits<double>::quiet_NaN();
  std::optional<double> es_test_acc;  // best-val checkpoint, present iff patience set
  std::optional<Checkpoint> best_checkpoint;
  WarmupReport warmup;
  bool early_stopped = false;
  bool unstable = false;
  int failing_epoch = -1;
  std::string failure;
};

// Called at the end of every recorded meta-epoch; gives probes access to the
// current model for e.g. exact-Hessian comparisons.
struct MetaHooks {
  std::function<void(int epoch, const MlpParams& params, const HyperSet& hypers)>
      on_meta_epoch;
};

// One optimizer step on the training-loss gradient; returns the loss at the
// pre-update parameters. Throws divergence_error on a non-finite loss.
double inner_step(MlpParams& params, const HyperSet& hypers, const Batch& batch,
                  InnerOpt& opt);

void inner_train(MlpParams& params, const HyperSet& hypers, BatchSampler& sampler,
                 int steps, InnerOpt& opt);

// inner_train that records the loss trajectory and detects the initial-loss
// jump; takes no meta-updates.
WarmupReport warmup(MlpParams& params, const HyperSet& hypers, const Dataset& train,
                    BatchSampler& sampler, int warmup_steps, InnerOpt& opt);

// Validation gradient -> inverse-HVP -> mixed contraction -> one meta
// optimizer step on the hyperparameters.
ApproxReport meta_step(const MlpParams& params, HyperSet& hypers, const Dataset& train,
                       const Dataset& val, const ApproxSpec& spec, MetaOpt& meta_opt);

RunMetrics run_iml(const MetaConfig& config, const Splits& data, const MetaHooks& hooks = {});

// Greedy alternation: one minibatch step, one Identity meta-step, for
// inner_steps x meta_updates total iterations; metrics are recorded every
// inner_steps iterations so epochs stay comparable with run_iml.
RunMetrics run_t1t2(const MetaConfig& config, const Splits& data, const MetaHooks& hooks = {});

struct GridRow {
  double l2_weight = 0.0;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
};

// Fixed uniform regularizer baseline: trains one model per grid value with
// softplus(lambda) equal to that value for every parameter, no meta-updates.
std::vector<GridRow> grid_search_baseline(const std::vector<double>& l2_values,
                                          const Splits& data, int train_steps,
                                          int batch_size, const InnerOptConfig& opt,
                                          std::uint64_t seed, std::size_t hidden = 0);

}  // namespace iml

#include "iml/bilevel.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace iml {

namespace {

using clock = std::chrono::steady_clock;

std::int64_t elapsed_ns(clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(clock::now() - t0).count();
}

double grad_norm(const MlpParams& g) {
  double s = 0.0;
  for (const Tensor* t : g.tensors()) {
    for (double x : t->data) s += x * x;
  }
  return std::sqrt(s);
}

constexpr double kValImprovementTol = 1e-6;

struct LoopShape {
  int steps_per_epoch;
  int total_epochs;
  int record_every;  // epochs between metric records
  ApproxSpec approx;
};

}  // namespace

double inner_step(MlpParams& params, const HyperSet& hypers, const Batch& batch,
                  InnerOpt& opt) {
  double loss = train_loss(params, hypers, batch);
  if (!std::isfinite(loss)) {
    throw divergence_error("inner_step: non-finite training loss", opt.steps_taken());
  }
  MlpParams g = grad_w(LossKind::Train, params, hypers, batch);
  opt.step(params, g);
  return loss;
}

void inner_train(MlpParams& params, const HyperSet& hypers, BatchSampler& sampler,
                 int steps, InnerOpt& opt) {
  if (steps < 1) throw error("inner_train: steps must be >= 1");
  for (int s = 0; s < steps; ++s) inner_step(params, hypers, sampler.next(), opt);
}

WarmupReport warmup(MlpParams& params, const HyperSet& hypers, const Dataset& train,
                    BatchSampler& sampler, int warmup_steps, InnerOpt& opt) {
  if (warmup_steps < 0) throw error("warmup: steps must be >= 0");
  WarmupReport rep;
  if (warmup_steps == 0) return rep;

  HyperSet before = hypers;
  Batch full = train.as_batch();
  rep.grad_norm_initial = grad_norm(grad_w(LossKind::Train, params, hypers, full));

  rep.losses.reserve(static_cast<std::size_t>(warmup_steps));
  double running_min = std::numeric_limits<double>::infinity();
  for (int s = 0; s < warmup_steps; ++s) {
    double loss = inner_step(params, hypers, sampler.next(), opt);
    rep.losses.push_back(loss);
    if (!rep.jump_detected && loss > 1.1 * running_min) {
      rep.jump_detected = true;
      rep.jump_step = s;
    }
    running_min = std::min(running_min, loss);
  }
  rep.grad_norm_final = grad_norm(grad_w(LossKind::Train, params, hypers, full));
  rep.hypers_unchanged = (before == hypers);
  return rep;
}

ApproxReport meta_step(const MlpParams& params, HyperSet& hypers, const Dataset& train,
                       const Dataset& val, const ApproxSpec& spec, MetaOpt& meta_opt) {
  Batch train_batch = train.as_batch();
  Batch val_batch = val.as_batch();

  Vec grad_val = grad_w(LossKind::Val, params, hypers, val_batch).flatten();

  HvpFn hvp = [&](std::span<const double> v, std::span<double> out) {
    Vec hv = hvp_ww(params, hypers, train_batch, v);
    std::copy(hv.begin(), hv.end(), out.begin());
  };
  MixedFn mixed = [&](std::span<const double> v) {
    return mixed_vjp(params, hypers, train_batch, v);
  };

  HypergradResult hg = hypergradient(grad_val, spec, hvp, mixed);
  meta_opt.step(hypers, hg.grad);
  return std::move(hg.report);
}

namespace {

RunMetrics run_loop(const MetaConfig& config, const Splits& data, const MetaHooks& hooks,
                    const LoopShape& loop) {
  data.train.validate();
  data.val.validate();
  data.test.validate();

  std::mt19937_64 rng(config.seed);
  MlpShape shape{data.train.dim(), config.hidden == 0 ? data.train.dim() : config.hidden,
                 static_cast<std::size_t>(data.train.num_classes)};
  MlpParams params = MlpParams::random_init(shape, rng);
  if (config.param_init_scale != 1.0) scale_params(params, config.param_init_scale);
  HyperSet hypers = HyperSet::random_init(config.hyper_mode, shape, rng,
                                          config.hyper_init_mean, config.hyper_init_stddev);
  InnerOpt inner_opt(config.inner_opt, shape);
  MetaOpt meta_opt(config.meta_opt);
  BatchSampler sampler(data.train, static_cast<std::size_t>(config.batch_size), rng);

  Batch train_full = data.train.as_batch();
  Batch val_full = data.val.as_batch();

  RunMetrics metrics;
  int current_epoch = 0;  // 0 = warm-up phase

  try {
    if (config.pretrain_steps > 0) {
      HyperSet penalty_off = HyperSet::constant(config.hyper_mode, shape, -50.0);
      InnerOpt pretrain_opt(config.inner_opt, shape);
      inner_train(params, penalty_off, sampler, config.pretrain_steps, pretrain_opt);
    }
    metrics.warmup = warmup(params, hypers, data.train, sampler, config.warmup_steps,
                            inner_opt);

    std::int64_t epoch_ns_acc = 0;
    std::int64_t approx_ns_acc = 0;
    std::int64_t approx_allocs = 0;
    int recorded = 0;

    for (int epoch = 1; epoch <= loop.total_epochs; ++epoch) {
      current_epoch = epoch;
      auto t0 = clock::now();
      inner_train(params, hypers, sampler, loop.steps_per_epoch, inner_opt);
      ApproxReport rep = meta_step(params, hypers, data.train, data.val, loop.approx,
                                   meta_opt);
      epoch_ns_acc += elapsed_ns(t0);
      approx_ns_acc += rep.wall_time_ns;
      approx_allocs = rep.transient_floats_allocated;

      if (epoch % loop.record_every != 0) continue;
      ++recorded;

      MetaEpochRecord rec;
      rec.train_loss = train_loss(params, hypers, train_full);
      rec.val_loss = val_loss(params, val_full);
      rec.train_acc = accuracy(params, train_full.inputs, train_full.labels);
      rec.val_acc = accuracy(params, val_full.inputs, val_full.labels);
      rec.epoch_time_ns = epoch_ns_acc;
      rec.approx_time_ns = approx_ns_acc;
      rec.approx_allocs = approx_allocs;
      epoch_ns_acc = 0;
      approx_ns_acc = 0;
      metrics.epochs.push_back(rec);
      metrics.best_train_acc = std::max(metrics.best_train_acc, rec.train_acc);
      metrics.best_val_acc = std::max(metrics.best_val_acc, rec.val_acc);

      if (hooks.on_meta_epoch) hooks.on_meta_epoch(recorded, params, hypers);

      if (rec.val_loss < metrics.best_val_loss - kValImprovementTol) {
        metrics.best_val_epoch = recorded;
        metrics.best_val_loss = rec.val_loss;
        metrics.best_checkpoint = Checkpoint{params, hypers};
      } else if (config.early_stop_patience &&
                 recorded - metrics.best_val_epoch >= *config.early_stop_patience) {
        metrics.early_stopped = true;
        break;
      }
    }
  } catch (const divergence_error& e) {
    metrics.unstable = true;
    metrics.failing_epoch = current_epoch;
    metrics.failure = e.what();
  }

  if (!metrics.unstable) {
    metrics.final_train_acc = accuracy(params, train_full.inputs, train_full.labels);
    metrics.final_val_acc = accuracy(params, val_full.inputs, val_full.labels);
    metrics.final_test_acc = accuracy(params, data.test.inputs, data.test.labels);
  }
  if (config.early_stop_patience && metrics.best_checkpoint) {
    metrics.es_test_acc = accuracy(metrics.best_checkpoint->params, data.test.inputs,
                                   data.test.labels);
  }
  return metrics;
}

}  // namespace

RunMetrics run_iml(const MetaConfig& config, const Splits& data, const MetaHooks& hooks) {
  LoopShape loop{config.inner_steps, config.meta_updates, 1, config.approx};
  return run_loop(config, data, hooks, loop);
}

RunMetrics run_t1t2(const MetaConfig& config, const Splits& data, const MetaHooks& hooks) {
  if (config.schedule != Schedule::T1T2) {
    throw error("run_t1t2: config.schedule must be T1T2");
  }
  LoopShape loop{1, config.inner_steps * config.meta_updates, config.inner_steps,
                 IdentitySpec{}};
  return run_loop(config, data, hooks, loop);
}

std::vector<GridRow> grid_search_baseline(const std::vector<double>& l2_values,
                                          const Splits& data, int train_steps,
                                          int batch_size, const InnerOptConfig& opt,
                                          std::uint64_t seed, std::size_t hidden) {
  data.train.validate();
  MlpShape shape{data.train.dim(), hidden == 0 ? data.train.dim() : hidden,
                 static_cast<std::size_t>(data.train.num_classes)};
  std::vector<GridRow> rows;
  rows.reserve(l2_values.size());
  for (double value : l2_values) {
    std::mt19937_64 rng(seed);
    MlpParams params = MlpParams::random_init(shape, rng);
    // softplus(lambda) == value, so the grid value is the effective weight.
    double lambda = std::log(std::expm1(value));
    HyperSet hypers = HyperSet::constant(HyperMode::PerLayer, shape, lambda);
    InnerOpt inner_opt(opt, shape);
    BatchSampler sampler(data.train, static_cast<std::size_t>(batch_size), rng);
    if (train_steps > 0) inner_train(params, hypers, sampler, train_steps, inner_opt);
    GridRow row;
    row.l2_weight = value;
    row.train_acc = accuracy(params, data.train.inputs, data.train.labels);
    row.val_acc = accuracy(params, data.val.inputs, data.val.labels);
    row.test_acc = accuracy(params, data.test.inputs, data.test.labels);
    rows.push_back(row);
  }
  return rows;
}

}  // namespace iml

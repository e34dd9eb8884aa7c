#include "iml/ssl.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numbers>

namespace iml {

namespace {

// Unit feature scale: class means on the unit circle, like normalized inputs.
constexpr double kBlobRadius = 1.0;
constexpr double kBlobSpread = 0.2;
constexpr double kOodRadiusFactor = 2.2;

struct RowSampler {
  const Tensor& rows;
  std::size_t batch;
  std::mt19937_64& rng;
  std::vector<std::size_t> order;
  std::size_t pos = 0;

  RowSampler(const Tensor& rows_, std::size_t batch_, std::mt19937_64& rng_)
      : rows(rows_), batch(std::min(batch_, rows_.rows())), rng(rng_) {
    order.resize(rows.rows());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
  }

  Tensor next() {
    std::size_t d = rows.cols();
    Tensor out = Tensor::zeros({batch, d});
    for (std::size_t i = 0; i < batch; ++i) {
      if (pos >= order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        pos = 0;
      }
      std::copy_n(rows.data.data() + order[pos++] * d, d, out.data.data() + i * d);
    }
    return out;
  }
};

void append_cluster(std::vector<double>& xs, std::vector<int>& ys, double cx, double cy,
                    double spread, std::size_t count, int label, std::mt19937_64& rng) {
  std::normal_distribution<double> noise(0.0, spread);
  for (std::size_t i = 0; i < count; ++i) {
    xs.push_back(cx + noise(rng));
    xs.push_back(cy + noise(rng));
    ys.push_back(label);
  }
}

Dataset make_dataset(std::vector<double> xs, std::vector<int> ys, int classes,
                     std::string name) {
  Dataset d;
  d.inputs = Tensor({ys.size(), 2}, std::move(xs));
  d.labels = std::move(ys);
  d.num_classes = classes;
  d.name = std::move(name);
  return d;
}

}  // namespace

void SslDataset::validate() const {
  labeled.validate();
  val.validate();
  test.validate();
  if (unlabeled.rank() != 2 || unlabeled.rows() != ood_mask.size() ||
      unlabeled_labels.size() != ood_mask.size()) {
    throw shape_error("ssl dataset: unlabeled pool and masks disagree");
  }
}

SslDataset gen_ssl_toy(std::uint64_t seed, int num_classes, std::size_t labeled_per_class,
                       std::size_t unlabeled_per_class, std::size_t ood_count,
                       std::size_t val_per_class, std::size_t test_per_class) {
  std::mt19937_64 rng(seed);
  std::vector<std::pair<double, double>> means;
  for (int c = 0; c < num_classes; ++c) {
    double angle = 2.0 * std::numbers::pi * c / num_classes;
    means.emplace_back(kBlobRadius * std::cos(angle), kBlobRadius * std::sin(angle));
  }
  // The out-of-distribution cluster sits well outside the class circle,
  // between the first two class directions.
  double ood_angle = std::numbers::pi / num_classes;
  double ood_x = kOodRadiusFactor * kBlobRadius * std::cos(ood_angle);
  double ood_y = kOodRadiusFactor * kBlobRadius * std::sin(ood_angle);

  SslDataset out;
  out.num_classes = num_classes;
  out.feature_scale = kBlobRadius;

  std::vector<double> xs;
  std::vector<int> ys;
  for (int c = 0; c < num_classes; ++c) {
    append_cluster(xs, ys, means[c].first, means[c].second, kBlobSpread, labeled_per_class,
                   c, rng);
  }
  out.labeled = make_dataset(std::move(xs), std::move(ys), num_classes, "ssl/labeled");

  xs.clear();
  ys.clear();
  for (int c = 0; c < num_classes; ++c) {
    append_cluster(xs, ys, means[c].first, means[c].second, kBlobSpread,
                   unlabeled_per_class, c, rng);
  }
  append_cluster(xs, ys, ood_x, ood_y, kBlobSpread, ood_count, -1, rng);
  std::size_t total_unlabeled = ys.size();
  out.unlabeled = Tensor({total_unlabeled, 2}, std::move(xs));
  out.unlabeled_labels = std::move(ys);
  out.ood_mask.assign(total_unlabeled, 0);
  for (std::size_t i = 0; i < total_unlabeled; ++i) {
    out.ood_mask[i] = out.unlabeled_labels[i] < 0 ? 1 : 0;
  }

  xs.clear();
  ys.clear();
  for (int c = 0; c < num_classes; ++c) {
    append_cluster(xs, ys, means[c].first, means[c].second, kBlobSpread, val_per_class, c,
                   rng);
  }
  out.val = make_dataset(std::move(xs), std::move(ys), num_classes, "ssl/val");

  xs.clear();
  ys.clear();
  for (int c = 0; c < num_classes; ++c) {
    append_cluster(xs, ys, means[c].first, means[c].second, kBlobSpread, test_per_class, c,
                   rng);
  }
  out.test = make_dataset(std::move(xs), std::move(ys), num_classes, "ssl/test");
  return out;
}

Tensor weak_augment(const Tensor& x, std::mt19937_64& rng, double sigma_weak) {
  if (sigma_weak < 0.0) throw error("weak_augment: sigma must be >= 0");
  Tensor out = x;
  std::size_t n = x.rows(), d = x.cols();
  std::bernoulli_distribution apply(0.5);
  std::normal_distribution<double> noise(0.0, sigma_weak);
  for (std::size_t i = 0; i < n; ++i) {
    if (!apply(rng)) continue;
    double* row = out.data.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) row[j] += noise(rng);
  }
  return out;
}

Tensor strong_augment(const Tensor& x, std::mt19937_64& rng, double sigma_strong) {
  if (sigma_strong < 0.0) throw error("strong_augment: sigma must be >= 0");
  Tensor out = x;
  std::normal_distribution<double> noise(0.0, sigma_strong);
  for (double& v : out.data) v += noise(rng);
  return out;
}

MlpParams cn_init(std::size_t d_in, std::size_t hidden, std::mt19937_64& rng) {
  return MlpParams::random_init(MlpShape{d_in, hidden, 1}, rng);
}

Vec cn_forward(const MlpParams& cn, const Tensor& inputs) {
  Tensor logits = mlp_forward(cn, inputs);
  return logits.data;
}

AugmentedBatch augment_batch(const Tensor& u_batch, std::mt19937_64& rng, double sigma_weak,
                             double sigma_strong) {
  AugmentedBatch aug;
  aug.weak = weak_augment(u_batch, rng, sigma_weak);
  aug.strong = strong_augment(u_batch, rng, sigma_strong);
  return aug;
}

UnsupLosses unsup_loss_on(const MlpParams& base, const AugmentedBatch& aug, double tau) {
  if (tau <= 0.0 || tau > 1.0) throw error("unsup loss: tau must be in (0, 1]");
  std::size_t n = aug.weak.rows();
  Tensor q = softmax(mlp_forward(base, aug.weak));
  std::size_t c = q.cols();

  UnsupLosses out;
  out.per_instance.assign(n, 0.0);
  out.mask.assign(n, 0);
  out.pseudo_labels.assign(n, 0);

  Tensor strong_logits = mlp_forward(base, aug.strong);
  for (std::size_t i = 0; i < n; ++i) {
    const double* qi = q.data.data() + i * c;
    std::size_t arg = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (qi[j] > qi[arg]) arg = j;
    }
    out.pseudo_labels[i] = static_cast<int>(arg);
    if (qi[arg] < tau) continue;
    out.mask[i] = 1;
    const double* row = strong_logits.data.data() + i * c;
    double mx = *std::max_element(row, row + c);
    double lse = 0.0;
    for (std::size_t j = 0; j < c; ++j) lse += std::exp(row[j] - mx);
    out.per_instance[i] = std::log(lse) + mx - row[arg];
  }
  return out;
}

UnsupLosses fixmatch_unsup_loss(const MlpParams& base, const Tensor& u_batch, double tau,
                                std::mt19937_64& rng, double sigma_weak,
                                double sigma_strong) {
  return unsup_loss_on(base, augment_batch(u_batch, rng, sigma_weak, sigma_strong), tau);
}

CnWarmupReport cn_warmup(MlpParams& cn, const Tensor& unlabeled, int steps, double lr,
                         std::mt19937_64& rng, double sigma_weak, int batch_size) {
  if (steps < 1) throw error("cn_warmup: steps must be >= 1");
  CnWarmupReport rep;
  RowSampler sampler(unlabeled, static_cast<std::size_t>(batch_size), rng);
  std::size_t steps_per_epoch =
      (unlabeled.rows() + sampler.batch - 1) / std::max<std::size_t>(1, sampler.batch);

  MlpShape shape = cn.shape();
  for (int s = 0; s < steps; ++s) {
    Tensor batch = weak_augment(sampler.next(), rng, sigma_weak);
    Vec outputs = cn_forward(cn, batch);
    std::size_t n = outputs.size();

    // d/d_logit of (1/n) sum (c - 1)^2 is 2 (c - 1) / n; reuse the
    // classifier backward pass by feeding it as an output weight.
    Tensor z1 = Tensor::zeros({n, shape.hidden});
    // Single-output backprop written out directly.
    MlpParams g = MlpParams::zeros(shape);
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = batch.data.data() + i * shape.d_in;
      double* z1i = z1.data.data() + i * shape.hidden;
      for (std::size_t h = 0; h < shape.hidden; ++h) {
        double z = cn.b1.data[h];
        for (std::size_t j = 0; j < shape.d_in; ++j) z += x[j] * cn.w1.data[j * shape.hidden + h];
        z1i[h] = z;
      }
      double upstream = 2.0 * (outputs[i] - 1.0) / static_cast<double>(n);
      g.b2.data[0] += upstream;
      for (std::size_t h = 0; h < shape.hidden; ++h) {
        double a = z1i[h] > 0.0 ? z1i[h] : 0.0;
        g.w2.data[h] += upstream * a;
        if (z1i[h] > 0.0) {
          double dz = upstream * cn.w2.data[h];
          g.b1.data[h] += dz;
          for (std::size_t j = 0; j < shape.d_in; ++j) g.w1.data[j * shape.hidden + h] += dz * x[j];
        }
      }
    }
    axpy_params(-lr, g, cn);

    if ((s + 1) % steps_per_epoch == 0 || s + 1 == steps) {
      Vec all = cn_forward(cn, unlabeled);
      double mean = 0.0;
      for (double v : all) mean += v;
      mean /= static_cast<double>(all.size());
      double var = 0.0;
      for (double v : all) var += (v - mean) * (v - mean);
      rep.output_variance.push_back(var / static_cast<double>(all.size()));
    }
  }

  Vec final_outputs = cn_forward(cn, unlabeled);
  std::size_t in_band = 0;
  for (double v : final_outputs) {
    if (v >= 0.9 && v <= 1.1) ++in_band;
  }
  rep.fraction_in_band = static_cast<double>(in_band) / static_cast<double>(final_outputs.size());
  rep.reached_band = rep.fraction_in_band >= 0.95;
  return rep;
}

void ssl_inner_step(MlpParams& base, const MlpParams* cn, const Batch& labeled_batch,
                    const AugmentedBatch& aug, double tau, double lr) {
  MlpShape s = base.shape();
  labeled_batch.validate(s.d_in, s.classes);

  Vec ones(labeled_batch.size(), 1.0);
  MlpParams g = weighted_ce_grad(base, labeled_batch.inputs, labeled_batch.labels, ones);

  UnsupLosses unsup = unsup_loss_on(base, aug, tau);
  std::size_t m = unsup.mask.size();
  Vec weights(m, 0.0);
  Vec cn_out;
  if (cn != nullptr) cn_out = cn_forward(*cn, aug.weak);
  for (std::size_t i = 0; i < m; ++i) {
    if (!unsup.mask[i]) continue;
    weights[i] = cn == nullptr ? 1.0 : cn_out[i];
  }
  MlpParams gu = weighted_ce_grad(base, aug.strong, unsup.pseudo_labels, weights);
  axpy_params(1.0, gu, g);

  for (Tensor* t : g.tensors()) ensure_finite(t->data, "ssl_inner_step");
  axpy_params(-lr, g, base);
}

void ssl_inner_step(MlpParams& base, const MlpParams* cn, const Batch& labeled_batch,
                    const Tensor& u_batch, double tau, double lr, std::mt19937_64& rng,
                    double sigma_weak, double sigma_strong) {
  ssl_inner_step(base, cn, labeled_batch,
                 augment_batch(u_batch, rng, sigma_weak, sigma_strong), tau, lr);
}

namespace {

// Gradient of the scalar confidence output w.r.t. omega for one input row,
// scaled by `coeff`, accumulated into `acc`.
void accumulate_cn_output_grad(const MlpParams& cn, const double* x, double coeff,
                               MlpParams& acc) {
  MlpShape s = cn.shape();
  for (std::size_t h = 0; h < s.hidden; ++h) {
    double z = cn.b1.data[h];
    for (std::size_t j = 0; j < s.d_in; ++j) z += x[j] * cn.w1.data[j * s.hidden + h];
    double a = z > 0.0 ? z : 0.0;
    acc.w2.data[h] += coeff * a;
    if (z > 0.0) {
      double dz = coeff * cn.w2.data[h];
      acc.b1.data[h] += dz;
      for (std::size_t j = 0; j < s.d_in; ++j) acc.w1.data[j * s.hidden + h] += dz * x[j];
    }
  }
  acc.b2.data[0] += coeff;
}

}  // namespace

CnHypergrad cn_hypergrad(const MlpParams& base, const MlpParams& cn, const Batch& val_batch,
                         const Batch& labeled_batch, const AugmentedBatch& aug, double tau,
                         const ApproxSpec& spec) {
  MlpShape bs = base.shape();
  // The Val gradient never reads hyperparameters; pass a placeholder set.
  HyperSet unused = HyperSet::constant(HyperMode::PerLayer, bs, 0.0);
  Vec v1 = grad_w(LossKind::Val, base, unused, val_batch).flatten();

  UnsupLosses unsup = unsup_loss_on(base, aug, tau);

  Vec v2;
  if (std::holds_alternative<IdentitySpec>(spec)) {
    v2 = std::move(v1);
  } else {
    // Inner-loss Hessian: supervised CE plus the confidence-weighted masked
    // consistency terms, both as weighted cross entropies.
    Vec cn_out = cn_forward(cn, aug.weak);
    Vec unsup_weights(unsup.mask.size(), 0.0);
    for (std::size_t i = 0; i < unsup_weights.size(); ++i) {
      if (unsup.mask[i]) unsup_weights[i] = cn_out[i];
    }
    Vec sup_ones(labeled_batch.size(), 1.0);
    HvpFn hvp = [&](std::span<const double> dir, std::span<double> out) {
      Vec h = weighted_ce_hvp(base, labeled_batch.inputs, labeled_batch.labels, sup_ones,
                              dir);
      Vec hu = weighted_ce_hvp(base, aug.strong, unsup.pseudo_labels, unsup_weights, dir);
      for (std::size_t i = 0; i < h.size(); ++i) out[i] = h[i] + hu[i];
    };
    v2 = approx_inverse_hvp(spec, hvp, v1).result;
  }
  std::size_t m = unsup.mask.size();
  double inv_m = 1.0 / static_cast<double>(m);

  CnHypergrad out;
  out.v3 = MlpParams::zeros(cn.shape());
  out.per_instance_score.assign(m, 0.0);

  Vec one(1, 1.0);
  for (std::size_t i = 0; i < m; ++i) {
    if (!unsup.mask[i]) continue;
    // Single-instance consistency gradient w.r.t. theta.
    Tensor xi = Tensor::zeros({1, bs.d_in});
    std::copy_n(aug.strong.data.data() + i * bs.d_in, bs.d_in, xi.data.data());
    std::vector<int> yi{unsup.pseudo_labels[i]};
    Vec gu = weighted_ce_grad(base, xi, yi, one).flatten();
    double s = 0.0;
    for (std::size_t e = 0; e < gu.size(); ++e) s += v2[e] * gu[e];
    s *= inv_m;
    out.per_instance_score[i] = s;
    accumulate_cn_output_grad(cn, aug.weak.data.data() + i * cn.shape().d_in, s, out.v3);
  }
  return out;
}

void ssl_meta_update(const MlpParams& base, MlpParams& cn, MlpParams& cn_sq_avg,
                     const Batch& val_batch, const Batch& labeled_batch,
                     const AugmentedBatch& aug, double tau, const MetaOptConfig& opt,
                     const ApproxSpec& spec) {
  CnHypergrad hg = cn_hypergrad(base, cn, val_batch, labeled_batch, aug, tau, spec);
  // Descend the validation loss: the hypergradient is -v3.
  MlpParams descent = hg.v3;
  scale_params(descent, -1.0);
  auto cns = cn.tensors();
  auto accs = cn_sq_avg.tensors();
  auto gs = descent.tensors();
  for (std::size_t k = 0; k < 4; ++k) rmsprop_update(*cns[k], *accs[k], *gs[k], opt);
}

SslRunReport run_ssl_toy(const SslConfig& config, const SslDataset& data) {
  data.validate();
  double sigma_weak =
      config.sigma_weak > 0.0 ? config.sigma_weak : 0.05 * data.feature_scale;
  double sigma_strong =
      config.sigma_strong > 0.0 ? config.sigma_strong : 0.5 * data.feature_scale;

  SslRunReport report;
  MlpShape base_shape{2, config.hidden_base, static_cast<std::size_t>(data.num_classes)};

  try {
    // Phase 1: train base + confidence net with interleaved meta-updates.
    std::mt19937_64 rng(config.seed);
    MlpParams base = MlpParams::random_init(base_shape, rng);
    std::mt19937_64 cn_rng(config.seed + 1);
    MlpParams cn = cn_init(2, config.hidden_cn, cn_rng);

    std::mt19937_64 warm_rng(config.seed + 2);
    report.phase1.cn_warmup = cn_warmup(cn, data.unlabeled, config.cn_warmup_steps,
                                        config.cn_warmup_lr, warm_rng, sigma_weak);

    MlpParams cn_sq_avg = MlpParams::zeros(cn.shape());
    MlpParams best_cn = cn;
    double best_val = std::numeric_limits<double>::infinity();
    int best_at = -1;

    std::mt19937_64 train_rng(config.seed + 3);
    BatchSampler labeled_sampler(data.labeled, static_cast<std::size_t>(config.labeled_batch),
                                 train_rng);
    RowSampler unlabeled_sampler(data.unlabeled, static_cast<std::size_t>(config.unlabeled_batch),
                                 train_rng);
    Batch val_full = data.val.as_batch();

    for (int t = 1; t <= config.total_steps; ++t) {
      Batch lb = labeled_sampler.next();
      AugmentedBatch aug =
          augment_batch(unlabeled_sampler.next(), train_rng, sigma_weak, sigma_strong);
      ssl_inner_step(base, &cn, lb, aug, config.tau, config.base_lr);

      if (config.meta_every > 0 && t % config.meta_every == 0) {
        AugmentedBatch meta_aug =
            augment_batch(unlabeled_sampler.next(), train_rng, sigma_weak, sigma_strong);
        ssl_meta_update(base, cn, cn_sq_avg, val_full, lb, meta_aug, config.tau,
                        config.cn_meta_opt, config.meta_approx);
        ++report.phase1.meta_updates_taken;

        double vloss = val_loss(base, val_full);
        report.phase1.val_losses.push_back(vloss);
        Vec w_orig = cn_forward(cn, data.unlabeled);
        Tensor weak_pool = weak_augment(data.unlabeled, train_rng, sigma_weak);
        Vec w_weak = cn_forward(cn, weak_pool);
        double mo = 0.0, mw = 0.0;
        for (double v : w_orig) mo += v;
        for (double v : w_weak) mw += v;
        report.phase1.mean_weight_orig.push_back(mo / static_cast<double>(w_orig.size()));
        report.phase1.mean_weight_weak.push_back(mw / static_cast<double>(w_weak.size()));
        if (vloss < best_val) {
          best_val = vloss;
          best_cn = cn;
          best_at = report.phase1.meta_updates_taken;
        }
      }
    }
    report.phase1.best_meta_update = best_at;
    report.best_cn = best_cn;

    // Phase 2: retrain two fresh base models from the same seed, one with the
    // frozen saved confidence net and one with uniform weights.
    auto retrain = [&](const MlpParams* weighting) {
      std::mt19937_64 arm_rng(config.seed + 4);
      MlpParams model = MlpParams::random_init(base_shape, arm_rng);
      BatchSampler lbs(data.labeled, static_cast<std::size_t>(config.labeled_batch), arm_rng);
      RowSampler ubs(data.unlabeled, static_cast<std::size_t>(config.unlabeled_batch), arm_rng);
      for (int t = 1; t <= config.total_steps; ++t) {
        Batch lb = lbs.next();
        AugmentedBatch aug = augment_batch(ubs.next(), arm_rng, sigma_weak, sigma_strong);
        ssl_inner_step(model, weighting, lb, aug, config.tau, config.base_lr);
      }
      return accuracy(model, data.test.inputs, data.test.labels);
    };
    report.test_acc_weighted = retrain(&best_cn);
    report.test_acc_uniform = retrain(nullptr);

    // Saved-CN weight distribution over the whole unlabeled pool.
    report.weight_original = cn_forward(best_cn, data.unlabeled);
    std::mt19937_64 weigh_rng(config.seed + 5);
    Tensor weak_pool = weak_augment(data.unlabeled, weigh_rng, sigma_weak);
    report.weight_weak_augmented = cn_forward(best_cn, weak_pool);

    double sum_ood = 0.0, sum_in = 0.0;
    std::size_t n_ood = 0, n_in = 0;
    for (std::size_t i = 0; i < data.ood_mask.size(); ++i) {
      if (data.ood_mask[i]) {
        sum_ood += report.weight_original[i];
        ++n_ood;
      } else {
        sum_in += report.weight_original[i];
        ++n_in;
      }
    }
    report.mean_weight_ood = n_ood ? sum_ood / static_cast<double>(n_ood) : 0.0;
    report.mean_weight_indist = n_in ? sum_in / static_cast<double>(n_in) : 0.0;
  } catch (const divergence_error& e) {
    report.unstable = true;
    report.failure = e.what();
  }
  return report;
}

void write_weight_report_csv(const SslRunReport& report,
                             const std::vector<std::uint8_t>& ood_mask,
                             const std::string& path) {
  std::ofstream out(path);
  if (!out) throw format_error("weight report: cannot write " + path);
  out << "instance_id,is_ood,weight_original,weight_weak_augmented\n";
  char buf[128];
  for (std::size_t i = 0; i < report.weight_original.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%d,%.17g,%.17g\n", i, ood_mask[i] ? 1 : 0,
                  report.weight_original[i], report.weight_weak_augmented[i]);
    out << buf;
  }
}

}  // namespace iml

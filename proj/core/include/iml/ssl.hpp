#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "iml/dataset.hpp"
#include "iml/inverse_hvp.hpp"
#include "iml/mlp.hpp"
#include "iml/optimizers.hpp"

namespace iml {

// Semi-supervised toy corpus: a small labeled set, a large unlabeled pool
// containing one far-away out-of-distribution cluster, and labeled val/test
// splits. `unlabeled_labels` keeps the generating classes (-1 for the OOD
// cluster) for evaluation only; training never reads them.
struct SslDataset {
  Dataset labeled;
  Tensor unlabeled;                 // [M x d]
  std::vector<std::uint8_t> ood_mask;  // 1 = out-of-distribution point
  std::vector<int> unlabeled_labels;
  Dataset val;
  Dataset test;
  int num_classes = 0;
  double feature_scale = 1.0;  // typical class-mean separation

  std::size_t unlabeled_count() const { return ood_mask.size(); }
  void validate() const;
};

struct SslConfig {
  double tau = 0.95;
  double sigma_weak = 0.0;    // 0 = 0.05 * feature_scale
  double sigma_strong = 0.0;  // 0 = 0.5 * feature_scale
  int cn_warmup_steps = 2000;
  double cn_warmup_lr = 0.05;
  int meta_every = 25;  // inner steps between confidence-net updates
  int total_steps = 1500;
  int labeled_batch = 16;
  int unlabeled_batch = 32;
  double base_lr = 0.1;
  MetaOptConfig cn_meta_opt = MetaOptConfig{MetaOptKind::RmsProp, 3e-3, 0.99, 1e-8};
  // Identity is the stable choice for this trainer; the Neumann variant is
  // exposed to reproduce its instability at will.
  ApproxSpec meta_approx = IdentitySpec{};
  std::size_t hidden_base = 16;
  std::size_t hidden_cn = 16;
  std::uint64_t seed = 0;
  bool operator==(const SslConfig&) const = default;
};

SslDataset gen_ssl_toy(std::uint64_t seed, int num_classes = 3,
                       std::size_t labeled_per_class = 4,
                       std::size_t unlabeled_per_class = 60, std::size_t ood_count = 60,
                       std::size_t val_per_class = 10, std::size_t test_per_class = 50);

// Isotropic Gaussian stand-ins for image augmentations: weak noise applied
// with probability 1/2 per point, strong noise always applied.
Tensor weak_augment(const Tensor& x, std::mt19937_64& rng, double sigma_weak);
Tensor strong_augment(const Tensor& x, std::mt19937_64& rng, double sigma_strong);

// Confidence network: scalar-output MLP (classes == 1, linear head).
MlpParams cn_init(std::size_t d_in, std::size_t hidden, std::mt19937_64& rng);
Vec cn_forward(const MlpParams& cn, const Tensor& inputs);

// Pre-drawn augmentations of an unlabeled batch, so that a loss, its
// gradients, and any finite-difference probe all see the same perturbations.
struct AugmentedBatch {
  Tensor weak;
  Tensor strong;
};
AugmentedBatch augment_batch(const Tensor& u_batch, std::mt19937_64& rng, double sigma_weak,
                             double sigma_strong);

struct UnsupLosses {
  Vec per_instance;                  // masked cross-entropy per point
  std::vector<std::uint8_t> mask;    // 1 where max softmax >= tau
  std::vector<int> pseudo_labels;    // argmax of the weak prediction
};

UnsupLosses unsup_loss_on(const MlpParams& base, const AugmentedBatch& aug, double tau);

// Draws fresh augmentations and evaluates the consistency loss.
UnsupLosses fixmatch_unsup_loss(const MlpParams& base, const Tensor& u_batch, double tau,
                                std::mt19937_64& rng, double sigma_weak,
                                double sigma_strong);

struct CnWarmupReport {
  double fraction_in_band = 0.0;  // outputs within [0.9, 1.1] on original inputs
  bool reached_band = false;      // fraction >= 0.95
  std::vector<double> output_variance;  // per warm-up epoch
};

// Regresses C(weak_augment(u)) onto a constant target of 1.
CnWarmupReport cn_warmup(MlpParams& cn, const Tensor& unlabeled, int steps, double lr,
                         std::mt19937_64& rng, double sigma_weak, int batch_size = 32);

// One descent step on supervised CE plus confidence-weighted masked
// consistency losses. cn == nullptr trains with uniform weight 1. The
// confidence net consumes the weakly augmented inputs.
void ssl_inner_step(MlpParams& base, const MlpParams* cn, const Batch& labeled_batch,
                    const AugmentedBatch& aug, double tau, double lr);

// Convenience overload that draws the augmentations from rng.
void ssl_inner_step(MlpParams& base, const MlpParams* cn, const Batch& labeled_batch,
                    const Tensor& u_batch, double tau, double lr, std::mt19937_64& rng,
                    double sigma_weak, double sigma_strong);

// Per-instance hypergradient pieces for the confidence-net update:
// v2 = inverse-HVP of the validation gradient under `spec` (the identity by
// default; the inner-loss Hessian over labeled + weighted consistency terms
// backs the other approximators), s[u] = <v2, d L_u / d theta>, and
// v3 = sum_u mask[u] * s[u] * dC(weak_u)/domega.
struct CnHypergrad {
  MlpParams v3;             // d L_V* / d omega carries the opposite sign
  Vec per_instance_score;   // s[u], zero where masked out
};

CnHypergrad cn_hypergrad(const MlpParams& base, const MlpParams& cn, const Batch& val_batch,
                         const Batch& labeled_batch, const AugmentedBatch& aug, double tau,
                         const ApproxSpec& spec = IdentitySpec{});

// RMSprop descent step on omega along -v3.
void ssl_meta_update(const MlpParams& base, MlpParams& cn, MlpParams& cn_sq_avg,
                     const Batch& val_batch, const Batch& labeled_batch,
                     const AugmentedBatch& aug, double tau, const MetaOptConfig& opt,
                     const ApproxSpec& spec = IdentitySpec{});

struct SslPhase1Report {
  CnWarmupReport cn_warmup;
  std::vector<double> val_losses;        // at each meta update
  std::vector<double> mean_weight_orig;  // CN output means as training proceeds
  std::vector<double> mean_weight_weak;
  int meta_updates_taken = 0;
  int best_meta_update = -1;
};

struct SslRunReport {
  SslPhase1Report phase1;
  MlpParams best_cn;
  // Phase 2: two fresh models from the same seed.
  double test_acc_weighted = 0.0;
  double test_acc_uniform = 0.0;
  // Weights of the saved CN over the whole unlabeled pool.
  Vec weight_original;
  Vec weight_weak_augmented;
  double mean_weight_ood = 0.0;
  double mean_weight_indist = 0.0;
  bool unstable = false;
  std::string failure;
};

SslRunReport run_ssl_toy(const SslConfig& config, const SslDataset& data);

// CSV with columns instance_id, is_ood, weight_original, weight_weak_augmented.
void write_weight_report_csv(const SslRunReport& report,
                             const std::vector<std::uint8_t>& ood_mask,
                             const std::string& path);

}  // namespace iml

#include "cli_app.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "runners.hpp"

namespace imltool {

using namespace iml;

namespace {

// Flag values layered on top of a config file; only explicitly passed options
// override the file/protocol defaults.
struct CommonFlags {
  std::string config_path;
  std::string seeds;
  std::string out_dir;
  std::string name;
  bool emit_json = false;
  bool emit_plots = false;
  std::string schedule;
  std::string approx;
  int terms = 0;
  int steps = 0;
  double alpha = 0.0;
  int inner_steps = 0;
  int meta_updates = 0;
  int warmup_steps = -1;
  int pretrain_steps = -1;
  int batch_size = 0;
  int patience = -2;  // -2 = untouched, -1 = none
  std::uint64_t hidden = 0;
  bool downsample = false;
  std::string idx_images;
  std::string idx_labels;
  std::size_t blob_dim = 0;
  int blob_classes = 0;
  double blob_spread = -1.0;
  double inner_lr = 0.0;
  double meta_lr = 0.0;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "key=value config file to start from");
  cmd->add_option("--seeds", f.seeds, "comma-separated RNG seeds (default 231,981,1110)");
  cmd->add_option("--out", f.out_dir, "output directory for CSV/JSON/SVG artifacts");
  cmd->add_option("--name", f.name, "experiment name used in result rows");
  cmd->add_flag("--json", f.emit_json, "also write full per-run metrics as JSON");
  cmd->add_flag("--plots", f.emit_plots, "also write SVG loss/weight plots");
  cmd->add_option("--schedule", f.schedule, "iml or t1t2");
  cmd->add_option("--approx", f.approx, "neumann, cg, identity, or exact");
  cmd->add_option("--terms", f.terms, "Neumann series terms");
  cmd->add_option("--steps", f.steps, "CG iterations");
  cmd->add_option("--alpha", f.alpha, "Neumann alpha");
  cmd->add_option("--inner-steps", f.inner_steps, "inner-loop steps per meta update");
  cmd->add_option("--meta-updates", f.meta_updates, "number of meta updates");
  cmd->add_option("--warmup-steps", f.warmup_steps, "warm-up steps before meta updates");
  cmd->add_option("--pretrain-steps", f.pretrain_steps, "penalty-free pretraining steps");
  cmd->add_option("--batch-size", f.batch_size, "inner minibatch size");
  cmd->add_option("--patience", f.patience,
                  "early-stopping patience in meta updates (-1 disables)");
  cmd->add_option("--hidden", f.hidden, "hidden units (0 = as many as inputs)");
  cmd->add_flag("--downsample", f.downsample, "2x average-pool IDX images to 14x14");
  cmd->add_option("--images", f.idx_images, "IDX image file (switches data source)");
  cmd->add_option("--labels", f.idx_labels, "IDX label file");
  cmd->add_option("--blob-dim", f.blob_dim, "synthetic blob dimensionality");
  cmd->add_option("--blob-classes", f.blob_classes, "synthetic blob class count");
  cmd->add_option("--blob-spread", f.blob_spread, "synthetic blob standard deviation");
  cmd->add_option("--inner-lr", f.inner_lr, "base-model learning rate");
  cmd->add_option("--meta-lr", f.meta_lr, "meta-optimizer learning rate");
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::string cur;
  for (char ch : text + ",") {
    if (ch == ',') {
      if (!cur.empty()) seeds.push_back(std::stoull(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  return seeds;
}

void apply_flags(const CommonFlags& f, ExperimentConfig& config) {
  if (!f.config_path.empty()) config = load_config_file(f.config_path);
  if (!f.seeds.empty()) config.seeds = parse_seed_list(f.seeds);
  if (!f.out_dir.empty()) config.out_dir = f.out_dir;
  if (!f.name.empty()) config.name = f.name;
  if (!f.schedule.empty()) {
    if (f.schedule == "iml") config.meta.schedule = Schedule::Iml;
    else if (f.schedule == "t1t2") config.meta.schedule = Schedule::T1T2;
    else throw CLI::ValidationError("--schedule must be iml or t1t2");
  }
  if (!f.approx.empty()) {
    if (f.approx == "neumann") config.meta.approx = NeumannSpec{f.terms > 0 ? f.terms : 3};
    else if (f.approx == "cg") config.meta.approx = CgSpec{f.steps > 0 ? f.steps : 5};
    else if (f.approx == "identity") config.meta.approx = IdentitySpec{};
    else if (f.approx == "exact") config.meta.approx = ExactSpec{};
    else throw CLI::ValidationError("--approx must be neumann, cg, identity, or exact");
    config.ssl.meta_approx = config.meta.approx;
  }
  if (f.terms > 0) {
    if (auto* n = std::get_if<NeumannSpec>(&config.meta.approx)) n->terms = f.terms;
    if (auto* n = std::get_if<NeumannSpec>(&config.ssl.meta_approx)) n->terms = f.terms;
  }
  if (f.steps > 0) {
    if (auto* c = std::get_if<CgSpec>(&config.meta.approx)) c->steps = f.steps;
    if (auto* c = std::get_if<CgSpec>(&config.ssl.meta_approx)) c->steps = f.steps;
  }
  if (f.alpha > 0.0) {
    if (auto* n = std::get_if<NeumannSpec>(&config.meta.approx)) n->alpha = f.alpha;
    if (auto* n = std::get_if<NeumannSpec>(&config.ssl.meta_approx)) n->alpha = f.alpha;
  }
  if (f.inner_steps > 0) config.meta.inner_steps = f.inner_steps;
  if (f.meta_updates > 0) config.meta.meta_updates = f.meta_updates;
  if (f.warmup_steps >= 0) config.meta.warmup_steps = f.warmup_steps;
  if (f.pretrain_steps >= 0) config.meta.pretrain_steps = f.pretrain_steps;
  if (f.batch_size > 0) config.meta.batch_size = f.batch_size;
  if (f.patience == -1) config.meta.early_stop_patience.reset();
  else if (f.patience >= 0) config.meta.early_stop_patience = f.patience;
  if (f.hidden > 0) config.meta.hidden = f.hidden;
  if (f.downsample) config.data.downsample = true;
  if (!f.idx_images.empty()) {
    config.data.source = DataSource::Idx;
    config.data.idx_images = f.idx_images;
    config.data.idx_labels = f.idx_labels;
  }
  if (f.blob_dim > 0) config.data.blob_dim = f.blob_dim;
  if (f.blob_classes > 0) config.data.blob_classes = f.blob_classes;
  if (f.blob_spread >= 0.0) config.data.blob_spread = f.blob_spread;
  if (f.inner_lr > 0.0) {
    if (auto* sgd = std::get_if<SgdConfig>(&config.meta.inner_opt)) sgd->lr = f.inner_lr;
    else std::get<AdamConfig>(config.meta.inner_opt).lr = f.inner_lr;
  }
  if (f.meta_lr > 0.0) {
    config.meta.meta_opt.lr = f.meta_lr;
    config.ssl.cn_meta_opt.lr = f.meta_lr;
  }
}

// Protocol defaults. Sizes follow the overfit-a-small-validation-set setup:
// 50-sample splits, 50 inner steps at batch 32, 1000 meta updates.
ExperimentConfig overfit_defaults() {
  ExperimentConfig c;
  c.name = "overfit-val";
  c.data.blob_dim = 10;
  c.data.blob_classes = 10;
  c.data.blob_per_class = 40;
  c.data.blob_spread = 0.3;
  c.data.split = SplitSpec{50, 50, 50, 20, true};
  c.meta.inner_steps = 50;
  c.meta.meta_updates = 1000;
  c.meta.batch_size = 32;
  c.meta.hyper_mode = HyperMode::PerParameter;
  c.meta.approx = NeumannSpec{3};
  c.meta.inner_opt = AdamConfig{1e-3};
  c.meta.meta_opt = MetaOptConfig{MetaOptKind::RmsProp, 0.1};
  return c;
}

// Per-layer generalization setup: 1000-step warm-up, 500 inner steps, 50 meta
// updates, harder blobs with a generalization gap.
ExperimentConfig per_layer_defaults() {
  ExperimentConfig c;
  c.name = "per-layer";
  c.data.blob_dim = 10;
  c.data.blob_classes = 5;
  c.data.blob_per_class = 400;
  c.data.blob_spread = 0.7;
  c.data.split = SplitSpec{60, 300, 1000, 20, true};
  c.meta.hyper_mode = HyperMode::PerLayer;
  // At this data scale a mean-zero logit init regularizes hard enough to
  // collapse the model during warm-up; start low and let the meta loop raise it.
  c.meta.hyper_init_mean = -3.0;
  c.meta.warmup_steps = 1000;
  c.meta.inner_steps = 500;
  c.meta.meta_updates = 50;
  c.meta.batch_size = 32;
  c.meta.hidden = 24;
  c.meta.approx = NeumannSpec{3};
  c.meta.inner_opt = AdamConfig{3e-3};
  c.meta.meta_opt = MetaOptConfig{MetaOptKind::RmsProp, 0.1};
  return c;
}

// Small-model exact-comparison study: 32 hidden units on 14x14-dimensional
// inputs so the dense Hessian stays tractable.
ExperimentConfig hessian_defaults() {
  ExperimentConfig c;
  c.name = "hessian-compare";
  c.data.blob_dim = 196;
  c.data.blob_classes = 10;
  c.data.blob_per_class = 40;
  c.data.blob_spread = 0.35;
  c.data.split = SplitSpec{50, 50, 50, 20, true};
  c.meta.hidden = 32;
  c.meta.inner_steps = 50;
  c.meta.meta_updates = 50;
  c.meta.batch_size = 32;
  c.meta.hyper_mode = HyperMode::PerParameter;
  c.meta.approx = NeumannSpec{3};  // drives training; the probe compares to exact
  c.meta.inner_opt = AdamConfig{1e-3};
  return c;
}

ExperimentConfig ssl_defaults() {
  ExperimentConfig c;
  c.name = "ssl-toy";
  c.seeds = {1, 2, 3};
  return c;
}

int run_meta_command(const CommonFlags& flags, ExperimentConfig config) {
  apply_flags(flags, config);
  iml::PhaseTimer timer("experiment");
  ProtocolOutcome outcome;
  {
    auto scope = timer.scope();
    outcome = run_meta_protocol(config);
  }
  write_protocol_artifacts(config, outcome, flags.emit_json, flags.emit_plots);
  for (const auto& row : outcome.rows) {
    std::printf("%s seed=%llu method=%s best_val_acc=%.4f test=%.4f%s\n", row.name.c_str(),
                static_cast<unsigned long long>(row.seed), row.method.c_str(), row.val_acc,
                row.test_acc,
                row.es_test_acc ? (" es_test=" + std::to_string(*row.es_test_acc)).c_str()
                                : "");
  }
  std::printf("%zu runs in %.2f s\n", outcome.rows.size(),
              static_cast<double>(timer.accumulated_ns()) / 1e9);
  return 0;
}

}  // namespace

int dispatch(std::vector<std::string> args) {
  CLI::App app{"implicit meta-learning experiment harness"};
  app.require_subcommand(1);

  CommonFlags overfit_flags, per_layer_flags, hessian_flags, ablation_flags, grid_flags,
      ssl_flags;
  int hessian_every = 5;
  std::string ablation_list = "50,100,200,300,400,500";
  std::string grid_list = "1e-6,1e-5,1e-4,1e-3,1e-2,1e-1,0.5,1,2,3";

  CLI::App* overfit = app.add_subcommand(
      "overfit-val", "per-parameter regularizer on 50/50/50 splits, 1000 meta updates");
  add_common_flags(overfit, overfit_flags);

  CLI::App* per_layer = app.add_subcommand(
      "per-layer", "per-layer regularizer: 1000-step warm-up, 500 inner steps, 50 updates");
  add_common_flags(per_layer, per_layer_flags);

  CLI::App* hessian = app.add_subcommand(
      "hessian-compare", "compare approximators to the exact inverse-HVP on a small MLP");
  add_common_flags(hessian, hessian_flags);
  hessian->add_option("--every", hessian_every, "meta-update cadence between comparisons");

  CLI::App* ablation = app.add_subcommand(
      "ablation-steps", "sweep inner-loop steps at a fixed number of meta updates");
  add_common_flags(ablation, ablation_flags);
  ablation->add_option("--steps-list", ablation_list, "comma-separated inner step counts");

  CLI::App* grid = app.add_subcommand("baseline-grid",
                                      "fixed uniform L2 grid-search baseline");
  add_common_flags(grid, grid_flags);
  grid->add_option("--values", grid_list, "comma-separated regularization weights");

  CLI::App* ssl = app.add_subcommand(
      "ssl-toy", "confidence-network consistency-regularization toy experiment");
  add_common_flags(ssl, ssl_flags);

  std::vector<const char*> argv;
  argv.push_back("imlkit");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (overfit->parsed()) return run_meta_command(overfit_flags, overfit_defaults());
    if (per_layer->parsed()) return run_meta_command(per_layer_flags, per_layer_defaults());

    if (hessian->parsed()) {
      ExperimentConfig config = hessian_defaults();
      apply_flags(hessian_flags, config);
      std::vector<ApproxSpec> methods{NeumannSpec{3, 0.1, true}, NeumannSpec{10, 0.1, true},
                                      NeumannSpec{50, 0.1, true}, CgSpec{3}, CgSpec{5},
                                      CgSpec{10}, IdentitySpec{}, ExactSpec{}};
      HessianCompareOutcome outcome = run_hessian_compare(config, methods, hessian_every);
      write_hessian_artifacts(config, outcome);
      std::printf("%zu comparison rows written\n", outcome.comparisons.size());
      return 0;
    }

    if (ablation->parsed()) {
      ExperimentConfig config = per_layer_defaults();
      config.name = "ablation-steps";
      apply_flags(ablation_flags, config);
      std::vector<int> steps;
      for (std::uint64_t v : parse_seed_list(ablation_list)) {
        steps.push_back(static_cast<int>(v));
      }
      AblationOutcome outcome = run_ablation_steps(config, steps);
      std::filesystem::create_directories(config.out_dir);
      write_results_csv(outcome.rows,
                        (std::filesystem::path(config.out_dir) / "results.csv").string());
      std::printf("%zu ablation rows written\n", outcome.rows.size());
      return 0;
    }

    if (grid->parsed()) {
      ExperimentConfig config = per_layer_defaults();
      config.name = "baseline-grid";
      config.meta.warmup_steps = 0;
      apply_flags(grid_flags, config);
      std::vector<double> values;
      {
        std::string cur;
        for (char ch : grid_list + ",") {
          if (ch == ',') {
            if (!cur.empty()) values.push_back(std::stod(cur));
            cur.clear();
          } else {
            cur += ch;
          }
        }
      }
      BaselineGridOutcome outcome = run_baseline_grid(config, values);
      write_baseline_artifacts(config, outcome);
      std::printf("%zu grid values written\n", outcome.values.size());
      return 0;
    }

    if (ssl->parsed()) {
      ExperimentConfig config = ssl_defaults();
      apply_flags(ssl_flags, config);
      SslOutcome outcome = run_ssl_protocol(config);
      write_ssl_artifacts(config, outcome, ssl_flags.emit_json, ssl_flags.emit_plots);
      for (std::size_t i = 0; i < outcome.reports.size(); ++i) {
        const SslRunReport& r = outcome.reports[i];
        std::printf("ssl seed=%llu ood_mean=%.3f indist_mean=%.3f weighted=%.4f uniform=%.4f\n",
                    static_cast<unsigned long long>(config.seeds[i]), r.mean_weight_ood,
                    r.mean_weight_indist, r.test_acc_weighted, r.test_acc_uniform);
      }
      return 0;
    }
  } catch (const iml::error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace imltool

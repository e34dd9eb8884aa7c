#include "runners.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "iml/checkpoint.hpp"
#include "svg.hpp"

namespace imltool {

namespace fs = std::filesystem;
using nlohmann::json;
using namespace iml;

namespace {

std::string resolve_data_path(const std::string& path) {
  if (path.empty() || fs::path(path).is_absolute()) return path;
  if (const char* dir = std::getenv("IMPLICIT_META_DATA_DIR")) {
    fs::path candidate = fs::path(dir) / path;
    if (fs::exists(candidate)) return candidate.string();
  }
  return path;
}

std::string method_label(const MetaConfig& meta) {
  return meta.schedule == Schedule::T1T2 ? "t1t2" : approx_name(meta.approx);
}

fs::path out_file(const ExperimentConfig& config, const std::string& name) {
  fs::create_directories(config.out_dir);
  return fs::path(config.out_dir) / name;
}

json metrics_to_json(const RunMetrics& m) {
  json epochs = json::array();
  for (const auto& e : m.epochs) {
    epochs.push_back({{"train_loss", e.train_loss},
                      {"val_loss", e.val_loss},
                      {"train_acc", e.train_acc},
                      {"val_acc", e.val_acc},
                      {"epoch_time_ns", e.epoch_time_ns},
                      {"approx_time_ns", e.approx_time_ns},
                      {"approx_allocs", e.approx_allocs}});
  }
  json j{{"epochs", std::move(epochs)},
         {"best_val_epoch", m.best_val_epoch},
         {"best_val_loss", m.best_val_loss},
         {"best_train_acc", m.best_train_acc},
         {"best_val_acc", m.best_val_acc},
         {"final_train_acc", m.final_train_acc},
         {"final_val_acc", m.final_val_acc},
         {"final_test_acc", m.final_test_acc},
         {"early_stopped", m.early_stopped},
         {"unstable", m.unstable},
         {"failing_epoch", m.failing_epoch},
         {"failure", m.failure},
         {"warmup_jump_detected", m.warmup.jump_detected},
         {"warmup_jump_step", m.warmup.jump_step},
         {"warmup_losses", m.warmup.losses}};
  if (m.es_test_acc) j["es_test_acc"] = *m.es_test_acc;
  return j;
}

}  // namespace

Splits make_splits(const DataConfig& data) {
  Dataset full;
  if (data.source == DataSource::Blobs) {
    full = synth_blobs(data.blob_seed, data.blob_per_class, data.blob_classes,
                       data.blob_dim, data.blob_spread);
  } else {
    full = load_idx(resolve_data_path(data.idx_images), resolve_data_path(data.idx_labels));
    if (data.downsample) {
      full.inputs = downsample_2x(full.inputs);
    }
  }
  return subsample(full, data.split);
}

ProtocolOutcome run_meta_protocol(const ExperimentConfig& config) {
  Splits splits = make_splits(config.data);
  ProtocolOutcome out;
  for (std::uint64_t seed : config.seeds) {
    MetaConfig meta = config.meta;
    meta.seed = seed;
    RunMetrics metrics = meta.schedule == Schedule::T1T2 ? run_t1t2(meta, splits)
                                                         : run_iml(meta, splits);
    out.rows.push_back(summarize_run(config.name, seed, method_label(meta), metrics));
    out.runs.push_back(std::move(metrics));
  }
  return out;
}

HessianCompareOutcome run_hessian_compare(const ExperimentConfig& config,
                                          const std::vector<ApproxSpec>& methods,
                                          int every_k) {
  Splits splits = make_splits(config.data);
  HessianCompareOutcome out;
  ComparisonCadence cadence(every_k);

  for (std::uint64_t seed : config.seeds) {
    MetaConfig meta = config.meta;
    meta.seed = seed;

    Batch train_full = splits.train.as_batch();
    Batch val_full = splits.val.as_batch();
    std::size_t cap = 0;
    if (const auto* exact = std::get_if<ExactSpec>(&meta.approx)) cap = exact->dim_cap;

    MetaHooks hooks;
    hooks.on_meta_epoch = [&](int epoch, const MlpParams& params, const HyperSet& hypers) {
      if (!cadence.due(epoch)) return;
      Vec grad_val = grad_w(LossKind::Val, params, hypers, val_full).flatten();
      HvpFn hvp = [&](std::span<const double> v, std::span<double> o) {
        Vec hv = hvp_ww(params, hypers, train_full, v);
        std::copy(hv.begin(), hv.end(), o.begin());
      };
      auto rows = compare_methods_to_exact(hvp, grad_val, methods, epoch,
                                           cap ? cap : ExactSpec{}.dim_cap);
      out.comparisons.insert(out.comparisons.end(), rows.begin(), rows.end());
    };

    RunMetrics metrics = run_iml(meta, splits, hooks);
    out.rows.push_back(summarize_run(config.name, seed, method_label(meta), metrics));
  }
  return out;
}

AblationOutcome run_ablation_steps(const ExperimentConfig& config,
                                   const std::vector<int>& inner_steps) {
  Splits splits = make_splits(config.data);
  AblationOutcome out;
  for (int steps : inner_steps) {
    for (std::uint64_t seed : config.seeds) {
      MetaConfig meta = config.meta;
      meta.inner_steps = steps;
      meta.seed = seed;
      RunMetrics metrics = meta.schedule == Schedule::T1T2 ? run_t1t2(meta, splits)
                                                           : run_iml(meta, splits);
      std::string name = config.name + "_steps" + std::to_string(steps);
      out.rows.push_back(summarize_run(name, seed, method_label(meta), metrics));
    }
  }
  return out;
}

BaselineGridOutcome run_baseline_grid(const ExperimentConfig& config,
                                      const std::vector<double>& values) {
  Splits splits = make_splits(config.data);
  BaselineGridOutcome out;
  out.values = values;
  int train_steps = config.meta.inner_steps * config.meta.meta_updates;
  for (double value : values) {
    std::vector<GridRow> per_seed;
    for (std::uint64_t seed : config.seeds) {
      auto rows = grid_search_baseline({value}, splits, train_steps,
                                       config.meta.batch_size, config.meta.inner_opt,
                                       seed, config.meta.hidden);
      per_seed.push_back(rows.front());
    }
    out.rows.push_back(std::move(per_seed));
  }
  return out;
}

SslOutcome run_ssl_protocol(const ExperimentConfig& config) {
  SslOutcome out;
  for (std::uint64_t seed : config.seeds) {
    SslConfig ssl = config.ssl;
    ssl.seed = seed;
    SslDataset data = gen_ssl_toy(config.data.blob_seed + seed);
    out.reports.push_back(run_ssl_toy(ssl, data));
    out.datasets.push_back(std::move(data));
  }
  return out;
}

void write_protocol_artifacts(const ExperimentConfig& config, const ProtocolOutcome& outcome,
                              bool emit_json, bool emit_plots) {
  write_results_csv(outcome.rows, out_file(config, "results.csv").string());
  std::uint64_t hash = config_hash(config);
  for (std::size_t i = 0; i < outcome.runs.size(); ++i) {
    if (!outcome.runs[i].best_checkpoint) continue;
    std::string name = "checkpoint_seed" + std::to_string(outcome.rows[i].seed) + ".ckpt";
    save_checkpoint(out_file(config, name).string(), *outcome.runs[i].best_checkpoint,
                    hash);
  }
  if (emit_json) {
    json runs = json::array();
    for (std::size_t i = 0; i < outcome.runs.size(); ++i) {
      json j = metrics_to_json(outcome.runs[i]);
      j["name"] = outcome.rows[i].name;
      j["seed"] = outcome.rows[i].seed;
      j["method"] = outcome.rows[i].method;
      runs.push_back(std::move(j));
    }
    std::ofstream(out_file(config, "results.json")) << runs.dump(2) << "\n";
  }
  if (emit_plots) {
    std::vector<SvgSeries> val_series, train_series;
    for (std::size_t i = 0; i < outcome.runs.size(); ++i) {
      SvgSeries v{"seed " + std::to_string(outcome.rows[i].seed), {}};
      SvgSeries t = v;
      for (const auto& e : outcome.runs[i].epochs) {
        v.values.push_back(e.val_loss);
        t.values.push_back(e.train_loss);
      }
      val_series.push_back(std::move(v));
      train_series.push_back(std::move(t));
    }
    write_line_chart_svg(out_file(config, "val_loss.svg").string(),
                         config.name + ": validation loss", val_series);
    write_line_chart_svg(out_file(config, "train_loss.svg").string(),
                         config.name + ": training loss", train_series);
  }
}

void write_hessian_artifacts(const ExperimentConfig& config,
                             const HessianCompareOutcome& outcome) {
  write_results_csv(outcome.rows, out_file(config, "results.csv").string());
  std::ofstream out(out_file(config, "hessian_comparison.csv"));
  out << "meta_epoch,method,rel_l2_error,cosine_similarity,exact_stable\n";
  char buf[192];
  for (const auto& c : outcome.comparisons) {
    std::snprintf(buf, sizeof buf, "%d,%s,%.17g,%.17g,%d\n", c.meta_epoch,
                  c.method.c_str(), c.rel_l2_error, c.cosine_similarity,
                  c.exact_stable ? 1 : 0);
    out << buf;
  }
}

std::string default_grid_csv_path(const ExperimentConfig& config) {
  return out_file(config, "baseline_grid.csv").string();
}

void write_baseline_artifacts(const ExperimentConfig& config,
                              const BaselineGridOutcome& outcome) {
  std::ofstream out(default_grid_csv_path(config));
  out << "l2_weight,seed,train_acc,val_acc,test_acc\n";
  char buf[192];
  for (std::size_t i = 0; i < outcome.values.size(); ++i) {
    for (std::size_t j = 0; j < outcome.rows[i].size(); ++j) {
      const GridRow& r = outcome.rows[i][j];
      std::snprintf(buf, sizeof buf, "%.17g,%llu,%.17g,%.17g,%.17g\n", r.l2_weight,
                    static_cast<unsigned long long>(config.seeds[j]), r.train_acc,
                    r.val_acc, r.test_acc);
      out << buf;
    }
  }
}

void write_ssl_artifacts(const ExperimentConfig& config, const SslOutcome& outcome,
                         bool emit_json, bool emit_plots) {
  std::ofstream out(out_file(config, "ssl_results.csv"));
  out << "name,seed,warmup_band_fraction,meta_updates,mean_weight_ood,mean_weight_indist,"
         "test_acc_weighted,test_acc_uniform,unstable\n";
  char buf[320];
  for (std::size_t i = 0; i < outcome.reports.size(); ++i) {
    const SslRunReport& r = outcome.reports[i];
    std::snprintf(buf, sizeof buf, "%s,%llu,%.17g,%d,%.17g,%.17g,%.17g,%.17g,%d\n",
                  config.name.c_str(), static_cast<unsigned long long>(config.seeds[i]),
                  r.phase1.cn_warmup.fraction_in_band, r.phase1.meta_updates_taken,
                  r.mean_weight_ood, r.mean_weight_indist, r.test_acc_weighted,
                  r.test_acc_uniform, r.unstable ? 1 : 0);
    out << buf;

    std::string weights_name = "weights_seed" + std::to_string(config.seeds[i]) + ".csv";
    write_weight_report_csv(outcome.reports[i], outcome.datasets[i].ood_mask,
                            out_file(config, weights_name).string());
  }

  if (emit_json) {
    json runs = json::array();
    for (std::size_t i = 0; i < outcome.reports.size(); ++i) {
      const SslRunReport& r = outcome.reports[i];
      runs.push_back({{"seed", config.seeds[i]},
                      {"warmup_band_fraction", r.phase1.cn_warmup.fraction_in_band},
                      {"meta_updates", r.phase1.meta_updates_taken},
                      {"val_losses", r.phase1.val_losses},
                      {"mean_weight_orig", r.phase1.mean_weight_orig},
                      {"mean_weight_weak", r.phase1.mean_weight_weak},
                      {"mean_weight_ood", r.mean_weight_ood},
                      {"mean_weight_indist", r.mean_weight_indist},
                      {"test_acc_weighted", r.test_acc_weighted},
                      {"test_acc_uniform", r.test_acc_uniform},
                      {"unstable", r.unstable}});
    }
    std::ofstream(out_file(config, "ssl_results.json")) << runs.dump(2) << "\n";
  }
  if (emit_plots && !outcome.reports.empty()) {
    write_histogram_svg(out_file(config, "weight_histogram.svg").string(),
                        "confidence weights over the unlabeled pool",
                        outcome.reports.front().weight_original);
    std::vector<SvgSeries> series{
        {"mean weight (original)", outcome.reports.front().phase1.mean_weight_orig},
        {"mean weight (weak augmented)", outcome.reports.front().phase1.mean_weight_weak}};
    write_line_chart_svg(out_file(config, "weight_evolution.svg").string(),
                         "confidence weight evolution", series);
  }
}

}  // namespace imltool

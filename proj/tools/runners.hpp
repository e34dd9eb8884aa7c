#pragma once

#include <string>
#include <vector>

#include "iml/bilevel.hpp"
#include "iml/experiment_config.hpp"
#include "iml/instrument.hpp"
#include "iml/results_io.hpp"
#include "iml/ssl.hpp"

namespace imltool {

// Builds train/val/test splits from the data section of a config. Relative
// IDX paths resolve against IMPLICIT_META_DATA_DIR when it is set.
iml::Splits make_splits(const iml::DataConfig& data);

struct ProtocolOutcome {
  std::vector<iml::ResultRow> rows;
  std::vector<iml::RunMetrics> runs;
};

// One seeded bilevel run per entry of config.seeds, IML or T1-T2 per the
// schedule; row order follows the seeds list.
ProtocolOutcome run_meta_protocol(const iml::ExperimentConfig& config);

struct HessianCompareOutcome {
  std::vector<iml::HessianComparison> comparisons;
  std::vector<iml::ResultRow> rows;
};

// Runs the configured protocol while comparing the listed approximators to
// the exact inverse-HVP every `every_k` recorded meta-epochs.
HessianCompareOutcome run_hessian_compare(const iml::ExperimentConfig& config,
                                          const std::vector<iml::ApproxSpec>& methods,
                                          int every_k);

struct AblationOutcome {
  std::vector<iml::ResultRow> rows;  // name carries the inner-step count
};

AblationOutcome run_ablation_steps(const iml::ExperimentConfig& config,
                                   const std::vector<int>& inner_steps);

struct BaselineGridOutcome {
  std::vector<double> values;
  // rows[i][j]: grid value i, seed j.
  std::vector<std::vector<iml::GridRow>> rows;
};

BaselineGridOutcome run_baseline_grid(const iml::ExperimentConfig& config,
                                      const std::vector<double>& values);

struct SslOutcome {
  std::vector<iml::SslRunReport> reports;  // one per seed
  std::vector<iml::SslDataset> datasets;
};

SslOutcome run_ssl_protocol(const iml::ExperimentConfig& config);

// Artifact writers (CSV always; JSON/SVG behind flags).
void write_protocol_artifacts(const iml::ExperimentConfig& config,
                              const ProtocolOutcome& outcome, bool emit_json,
                              bool emit_plots);
void write_hessian_artifacts(const iml::ExperimentConfig& config,
                             const HessianCompareOutcome& outcome);
void write_baseline_artifacts(const iml::ExperimentConfig& config,
                              const BaselineGridOutcome& outcome);
void write_ssl_artifacts(const iml::ExperimentConfig& config, const SslOutcome& outcome,
                         bool emit_json, bool emit_plots);

std::string default_grid_csv_path(const iml::ExperimentConfig& config);

}  // namespace imltool

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "iml/bilevel.hpp"

namespace iml {

struct ResultRow {
  std::string name;
  std::uint64_t seed = 0;
  std::string method;
  double train_acc = 0.0;
  double val_acc = 0.0;
  double test_acc = 0.0;
  std::optional<double> es_test_acc;
  int best_val_epoch = -1;
  double epoch_time_ns_mean = 0.0;
  double approx_time_ns_mean = 0.0;
  std::int64_t approx_allocs = 0;
};

// Train/val columns report the highest accuracy reached during training,
// matching how headline runs are usually tabulated; test columns come from the
// final model and the best-validation checkpoint.
ResultRow summarize_run(const std::string& name, std::uint64_t seed,
                        const std::string& method, const RunMetrics& metrics);

std::string results_csv_string(const std::vector<ResultRow>& rows);

// Fixed header: name,seed,method,train_acc,val_acc,test_acc,es_test_acc,
// best_val_epoch,epoch_time_ns_mean,approx_time_ns_mean,approx_allocs.
// One row per run, caller-supplied order preserved.
void write_results_csv(const std::vector<ResultRow>& rows, const std::string& path);

}  // namespace iml

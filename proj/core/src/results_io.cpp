#include "iml/results_io.hpp"

#include <cstdio>
#include <fstream>

namespace iml {

ResultRow summarize_run(const std::string& name, std::uint64_t seed,
                        const std::string& method, const RunMetrics& metrics) {
  ResultRow row;
  row.name = name;
  row.seed = seed;
  row.method = method;
  row.train_acc = metrics.best_train_acc;
  row.val_acc = metrics.best_val_acc;
  row.test_acc = metrics.final_test_acc;
  row.es_test_acc = metrics.es_test_acc;
  row.best_val_epoch = metrics.best_val_epoch;
  if (!metrics.epochs.empty()) {
    double et = 0.0, at = 0.0;
    for (const MetaEpochRecord& r : metrics.epochs) {
      et += static_cast<double>(r.epoch_time_ns);
      at += static_cast<double>(r.approx_time_ns);
    }
    row.epoch_time_ns_mean = et / static_cast<double>(metrics.epochs.size());
    row.approx_time_ns_mean = at / static_cast<double>(metrics.epochs.size());
    row.approx_allocs = metrics.epochs.back().approx_allocs;
  }
  return row;
}

std::string results_csv_string(const std::vector<ResultRow>& rows) {
  std::string out =
      "name,seed,method,train_acc,val_acc,test_acc,es_test_acc,best_val_epoch,"
      "epoch_time_ns_mean,approx_time_ns_mean,approx_allocs\n";
  char buf[512];
  for (const ResultRow& r : rows) {
    std::string es = r.es_test_acc ? [&] {
      char b[64];
      std::snprintf(b, sizeof b, "%.17g", *r.es_test_acc);
      return std::string(b);
    }() : std::string();
    std::snprintf(buf, sizeof buf, "%s,%llu,%s,%.17g,%.17g,%.17g,%s,%d,%.17g,%.17g,%lld\n",
                  r.name.c_str(), static_cast<unsigned long long>(r.seed), r.method.c_str(),
                  r.train_acc, r.val_acc, r.test_acc, es.c_str(), r.best_val_epoch,
                  r.epoch_time_ns_mean, r.approx_time_ns_mean,
                  static_cast<long long>(r.approx_allocs));
    out += buf;
  }
  return out;
}

void write_results_csv(const std::vector<ResultRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw format_error("results: cannot write " + path);
  out << results_csv_string(rows);
  if (!out) throw format_error("results: write failed for " + path);
}

}  // namespace iml

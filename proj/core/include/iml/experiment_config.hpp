#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iml/bilevel.hpp"
#include "iml/dataset.hpp"
#include "iml/ssl.hpp"

namespace iml {

enum class DataSource { Blobs, Idx };

struct DataConfig {
  DataSource source = DataSource::Blobs;
  std::string idx_images;
  std::string idx_labels;
  std::size_t blob_dim = 10;
  int blob_classes = 10;
  std::size_t blob_per_class = 40;
  double blob_spread = 0.25;
  std::uint64_t blob_seed = 7;
  bool downsample = false;
  SplitSpec split;
  bool operator==(const DataConfig&) const = default;
};

// One experiment = one command's full parameter record. Round-trips through
// the key=value text format losslessly.
struct ExperimentConfig {
  std::string name = "experiment";
  std::string out_dir = ".";
  std::vector<std::uint64_t> seeds = {231, 981, 1110};
  DataConfig data;
  MetaConfig meta;
  SslConfig ssl;
  bool operator==(const ExperimentConfig&) const = default;
};

// Flat key=value text with [sections]; doubles carry 17 significant digits.
std::string emit_config(const ExperimentConfig& config);

// Inverse of emit_config. Unknown sections or keys raise format_error.
ExperimentConfig parse_config(const std::string& text);

ExperimentConfig load_config_file(const std::string& path);

// FNV-1a of the emitted text; stamped into checkpoints.
std::uint64_t config_hash(const ExperimentConfig& config);

}  // namespace iml

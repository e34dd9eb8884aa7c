#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "iml/mlp.hpp"
#include "iml/tensor.hpp"

namespace iml {

struct Dataset {
  Tensor inputs;            // [N x d]
  std::vector<int> labels;  // N class indices
  int num_classes = 0;
  std::string name;

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return inputs.rank() == 2 ? inputs.cols() : 0; }
  Batch as_batch() const { return Batch{inputs, labels}; }
  void validate() const;
};

struct SplitSpec {
  std::size_t n_train = 50;
  std::size_t n_val = 50;
  std::size_t n_test = 50;
  std::uint64_t seed = 0;
  bool stratified = true;
  bool operator==(const SplitSpec&) const = default;
};

struct Splits {
  Dataset train, val, test;
};

// IDX file pair (big-endian, magic 0x00000803 images / 0x00000801 labels).
// Pixel bytes are scaled to [0,1] by /255 and flattened row-major per image.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

// Inverse of load_idx for fixtures and caching; byte-exact round trip for
// datasets whose values came from bytes.
void save_idx(const Dataset& data, std::size_t rows, std::size_t cols,
              const std::string& images_path, const std::string& labels_path);

// Gaussian class clusters, means on the axis simplex when num_classes <= dim,
// otherwise on the unit circle in the first two coordinates. Deterministic
// per seed.
Dataset synth_blobs(std::uint64_t seed, std::size_t n_per_class, int num_classes,
                    std::size_t dim, double spread);

// Non-overlapping 2x2 average pooling over square images stored as flat rows.
Tensor downsample_2x(const Tensor& images);

// Seeded shuffle then partition into disjoint train/val/test. Stratified mode
// balances classes exactly when the split sizes divide evenly.
Splits subsample(const Dataset& data, const SplitSpec& spec);

// Minibatch iterator: epoch-style shuffled index walks, reshuffled on wrap.
class BatchSampler {
 public:
  BatchSampler(const Dataset& data, std::size_t batch_size, std::mt19937_64& rng);

  Batch next();

 private:
  const Dataset& data_;
  std::size_t batch_size_;
  std::mt19937_64& rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

}  // namespace iml

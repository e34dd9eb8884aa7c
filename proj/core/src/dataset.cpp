#include "iml/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

namespace iml {

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_be32(std::istream& in, const std::string& field) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw format_error("idx: truncated file while reading " + field);
  }
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

void Dataset::validate() const {
  if (labels.empty()) throw shape_error("dataset: empty");
  if (inputs.rank() != 2 || inputs.rows() != labels.size()) {
    throw shape_error("dataset: inputs must have one row per label");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) throw shape_error("dataset: label out of range");
  }
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream img(images_path, std::ios::binary);
  if (!img) throw format_error("idx: cannot open images file " + images_path);
  std::uint32_t magic = read_be32(img, "images magic");
  if (magic != kImagesMagic) {
    throw format_error("idx: bad images magic (got " + std::to_string(magic) + ")");
  }
  std::uint32_t count = read_be32(img, "images count");
  std::uint32_t rows = read_be32(img, "images rows");
  std::uint32_t cols = read_be32(img, "images cols");
  std::size_t pixels = std::size_t(count) * rows * cols;
  std::vector<unsigned char> raw(pixels);
  if (!img.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(pixels))) {
    throw format_error("idx: truncated pixel payload");
  }

  std::ifstream lab(labels_path, std::ios::binary);
  if (!lab) throw format_error("idx: cannot open labels file " + labels_path);
  std::uint32_t lmagic = read_be32(lab, "labels magic");
  if (lmagic != kLabelsMagic) {
    throw format_error("idx: bad labels magic (got " + std::to_string(lmagic) + ")");
  }
  std::uint32_t lcount = read_be32(lab, "labels count");
  if (lcount != count) {
    throw format_error("idx: count mismatch (images advertise " + std::to_string(count) +
                       ", labels advertise " + std::to_string(lcount) + ")");
  }
  std::vector<unsigned char> lraw(lcount);
  if (!lab.read(reinterpret_cast<char*>(lraw.data()), static_cast<std::streamsize>(lcount))) {
    throw format_error("idx: truncated label payload");
  }

  Dataset d;
  d.inputs = Tensor::zeros({count, std::size_t(rows) * cols});
  for (std::size_t i = 0; i < pixels; ++i) d.inputs.data[i] = raw[i] / 255.0;
  d.labels.assign(lraw.begin(), lraw.end());
  d.num_classes = d.labels.empty() ? 0 : *std::max_element(d.labels.begin(), d.labels.end()) + 1;
  d.name = images_path;
  return d;
}

void save_idx(const Dataset& data, std::size_t rows, std::size_t cols,
              const std::string& images_path, const std::string& labels_path) {
  if (rows * cols != data.dim()) throw shape_error("save_idx: rows*cols != feature dim");
  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw format_error("idx: cannot write " + images_path);
  write_be32(img, kImagesMagic);
  write_be32(img, static_cast<std::uint32_t>(data.size()));
  write_be32(img, static_cast<std::uint32_t>(rows));
  write_be32(img, static_cast<std::uint32_t>(cols));
  for (double v : data.inputs.data) {
    auto byte = static_cast<unsigned char>(std::lround(v * 255.0));
    img.put(static_cast<char>(byte));
  }
  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw format_error("idx: cannot write " + labels_path);
  write_be32(lab, kLabelsMagic);
  write_be32(lab, static_cast<std::uint32_t>(data.size()));
  for (int y : data.labels) lab.put(static_cast<char>(static_cast<unsigned char>(y)));
}

Dataset synth_blobs(std::uint64_t seed, std::size_t n_per_class, int num_classes,
                    std::size_t dim, double spread) {
  if (num_classes < 2) throw error("synth_blobs: need at least two classes");
  if (dim < 2) throw error("synth_blobs: need dim >= 2");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<Vec> means(static_cast<std::size_t>(num_classes), Vec(dim, 0.0));
  if (static_cast<std::size_t>(num_classes) <= dim) {
    for (int c = 0; c < num_classes; ++c) means[c][static_cast<std::size_t>(c)] = 1.0;
  } else {
    for (int c = 0; c < num_classes; ++c) {
      double angle = 2.0 * std::numbers::pi * c / num_classes;
      means[c][0] = std::cos(angle);
      means[c][1] = std::sin(angle);
    }
  }

  std::size_t total = n_per_class * static_cast<std::size_t>(num_classes);
  Dataset d;
  d.inputs = Tensor::zeros({total, dim});
  d.labels.resize(total);
  d.num_classes = num_classes;
  d.name = "blobs";
  std::size_t row = 0;
  for (int c = 0; c < num_classes; ++c) {
    for (std::size_t i = 0; i < n_per_class; ++i, ++row) {
      double* out = d.inputs.data.data() + row * dim;
      for (std::size_t j = 0; j < dim; ++j) out[j] = means[c][j] + spread * noise(rng);
      d.labels[row] = c;
    }
  }
  return d;
}

Tensor downsample_2x(const Tensor& images) {
  std::size_t n = images.rows(), d = images.cols();
  auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(d))));
  if (side * side != d) throw shape_error("downsample_2x: images must be square");
  if (side % 2 != 0) throw shape_error("downsample_2x: side length must be even");
  std::size_t half = side / 2;
  Tensor out = Tensor::zeros({n, half * half});
  for (std::size_t i = 0; i < n; ++i) {
    const double* src = images.data.data() + i * d;
    double* dst = out.data.data() + i * half * half;
    for (std::size_t r = 0; r < half; ++r) {
      for (std::size_t c = 0; c < half; ++c) {
        double sum = src[(2 * r) * side + 2 * c] + src[(2 * r) * side + 2 * c + 1] +
                     src[(2 * r + 1) * side + 2 * c] + src[(2 * r + 1) * side + 2 * c + 1];
        dst[r * half + c] = sum / 4.0;
      }
    }
  }
  return out;
}

namespace {

Dataset take_rows(const Dataset& src, const std::vector<std::size_t>& idx, std::size_t begin,
                  std::size_t count, const char* suffix) {
  std::size_t d = src.dim();
  Dataset out;
  out.inputs = Tensor::zeros({count, d});
  out.labels.resize(count);
  out.num_classes = src.num_classes;
  out.name = src.name + suffix;
  for (std::size_t i = 0; i < count; ++i) {
    std::size_t r = idx[begin + i];
    std::copy_n(src.inputs.data.data() + r * d, d, out.inputs.data.data() + i * d);
    out.labels[i] = src.labels[r];
  }
  return out;
}

}  // namespace

Splits subsample(const Dataset& data, const SplitSpec& spec) {
  data.validate();
  std::size_t need = spec.n_train + spec.n_val + spec.n_test;
  if (need > data.size()) {
    throw error("subsample: requested " + std::to_string(need) + " samples from " +
                std::to_string(data.size()));
  }
  std::mt19937_64 rng(spec.seed);
  std::vector<std::size_t> order;

  if (!spec.stratified) {
    order.resize(data.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
  } else {
    std::vector<std::vector<std::size_t>> per_class(data.num_classes);
    for (std::size_t i = 0; i < data.size(); ++i) {
      per_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
    }
    for (auto& v : per_class) std::shuffle(v.begin(), v.end(), rng);
    // Fill each split class-balanced: whole rounds of one-per-class, remainder
    // from the lowest class indices.
    std::vector<std::size_t> cursor(per_class.size(), 0);
    auto draw_balanced = [&](std::size_t count) {
      std::size_t c = 0;
      for (std::size_t taken = 0; taken < count;) {
        if (cursor[c] < per_class[c].size()) {
          order.push_back(per_class[c][cursor[c]++]);
          ++taken;
        }
        c = (c + 1) % per_class.size();
      }
    };
    draw_balanced(spec.n_train);
    draw_balanced(spec.n_val);
    draw_balanced(spec.n_test);
  }

  Splits s;
  s.train = take_rows(data, order, 0, spec.n_train, "/train");
  s.val = take_rows(data, order, spec.n_train, spec.n_val, "/val");
  s.test = take_rows(data, order, spec.n_train + spec.n_val, spec.n_test, "/test");
  return s;
}

BatchSampler::BatchSampler(const Dataset& data, std::size_t batch_size, std::mt19937_64& rng)
    : data_(data), batch_size_(std::min(batch_size, data.size())), rng_(rng) {
  order_.resize(data.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  std::shuffle(order_.begin(), order_.end(), rng_);
}

Batch BatchSampler::next() {
  std::size_t d = data_.dim();
  Batch b;
  b.inputs = Tensor::zeros({batch_size_, d});
  b.labels.resize(batch_size_);
  for (std::size_t i = 0; i < batch_size_; ++i) {
    if (pos_ >= order_.size()) {
      std::shuffle(order_.begin(), order_.end(), rng_);
      pos_ = 0;
    }
    std::size_t r = order_[pos_++];
    std::copy_n(data_.inputs.data.data() + r * d, d, b.inputs.data.data() + i * d);
    b.labels[i] = data_.labels[r];
  }
  return b;
}

}  // namespace iml

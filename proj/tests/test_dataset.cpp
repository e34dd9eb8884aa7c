#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "iml/bilevel.hpp"
#include "iml/dataset.hpp"
#include "support/oracles.hpp"

using namespace iml;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("iml_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

std::vector<unsigned char> be32(std::uint32_t v) {
  return {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
          static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
}

void append(std::vector<unsigned char>& dst, const std::vector<unsigned char>& src) {
  dst.insert(dst.end(), src.begin(), src.end());
}

std::vector<unsigned char> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

// Two 2x2 images with pixels {0,255,128,64} and {10,20,30,40}, labels {1,0}.
std::pair<std::vector<unsigned char>, std::vector<unsigned char>> idx_fixture() {
  std::vector<unsigned char> img;
  append(img, be32(0x00000803));
  append(img, be32(2));
  append(img, be32(2));
  append(img, be32(2));
  for (unsigned char b : {0, 255, 128, 64, 10, 20, 30, 40}) img.push_back(b);
  std::vector<unsigned char> lab;
  append(lab, be32(0x00000801));
  append(lab, be32(2));
  lab.push_back(1);
  lab.push_back(0);
  return {img, lab};
}

}  // namespace

TEST_CASE("idx: fixture bytes load with /255 scaling") {
  TempDir dir;
  auto [img, lab] = idx_fixture();
  write_bytes(dir.file("imgs"), img);
  write_bytes(dir.file("labs"), lab);
  Dataset d = load_idx(dir.file("imgs"), dir.file("labs"));
  CHECK(d.size() == 2);
  CHECK(d.dim() == 4);
  CHECK(d.inputs.at(0, 0) == 0.0);
  CHECK(d.inputs.at(0, 1) == 1.0);
  CHECK(d.inputs.at(0, 2) == doctest::Approx(128.0 / 255.0).epsilon(1e-12));
  CHECK(d.inputs.at(0, 3) == doctest::Approx(64.0 / 255.0).epsilon(1e-12));
  CHECK(d.labels[0] == 1);
  CHECK(d.labels[1] == 0);
  CHECK(d.num_classes == 2);
}

TEST_CASE("idx: count mismatch names the inconsistency") {
  TempDir dir;
  auto [img, lab] = idx_fixture();
  lab[7] = 3;  // labels file now advertises 3 items
  lab.push_back(1);
  write_bytes(dir.file("imgs"), img);
  write_bytes(dir.file("labs"), lab);
  try {
    load_idx(dir.file("imgs"), dir.file("labs"));
    CHECK(false);
  } catch (const format_error& e) {
    CHECK(std::string(e.what()).find("count mismatch") != std::string::npos);
  }
}

TEST_CASE("idx: bad magic and truncation are format errors") {
  TempDir dir;
  auto [img, lab] = idx_fixture();
  write_bytes(dir.file("labs"), lab);

  auto bad = img;
  bad[3] = 0x77;
  write_bytes(dir.file("bad"), bad);
  CHECK_THROWS_AS(load_idx(dir.file("bad"), dir.file("labs")), format_error);

  write_bytes(dir.file("empty"), {});
  CHECK_THROWS_AS(load_idx(dir.file("empty"), dir.file("labs")), format_error);

  auto trunc = img;
  trunc.resize(img.size() - 3);
  write_bytes(dir.file("trunc"), trunc);
  CHECK_THROWS_AS(load_idx(dir.file("trunc"), dir.file("labs")), format_error);
}

TEST_CASE("idx: load then save reproduces the source bytes") {
  TempDir dir;
  auto [img, lab] = idx_fixture();
  write_bytes(dir.file("imgs"), img);
  write_bytes(dir.file("labs"), lab);
  Dataset d = load_idx(dir.file("imgs"), dir.file("labs"));
  save_idx(d, 2, 2, dir.file("imgs2"), dir.file("labs2"));
  CHECK(read_bytes(dir.file("imgs2")) == img);
  CHECK(read_bytes(dir.file("labs2")) == lab);
}

TEST_CASE("blobs: zero spread collapses onto class means, trivially separable") {
  Dataset d = synth_blobs(5, 10, 3, 4, 0.0);
  CHECK(d.size() == 30);
  // Nearest-class-mean classification is perfect at spread zero.
  for (std::size_t i = 0; i < d.size(); ++i) {
    int label = d.labels[i];
    CHECK(d.inputs.at(i, static_cast<std::size_t>(label)) == 1.0);
    for (std::size_t j = 0; j < 4; ++j) {
      if (j != static_cast<std::size_t>(label)) CHECK(d.inputs.at(i, j) == 0.0);
    }
  }
}

TEST_CASE("blobs: deterministic per seed") {
  Dataset a = synth_blobs(9, 20, 4, 6, 0.3);
  Dataset b = synth_blobs(9, 20, 4, 6, 0.3);
  CHECK(a.inputs == b.inputs);
  CHECK(a.labels == b.labels);
  Dataset c = synth_blobs(10, 20, 4, 6, 0.3);
  CHECK(a.inputs.data != c.inputs.data);
}

TEST_CASE("blobs: small spread trains to >95% test accuracy") {
  Dataset all = synth_blobs(3, 120, 4, 6, 0.08);
  SplitSpec spec;
  spec.n_train = 160;
  spec.n_val = 80;
  spec.n_test = 200;
  spec.seed = 1;
  Splits s = subsample(all, spec);

  std::mt19937_64 rng(2);
  MlpShape shape{6, 6, 4};
  MlpParams params = MlpParams::random_init(shape, rng);
  HyperSet off = HyperSet::constant(HyperMode::PerLayer, shape, -50.0);
  InnerOpt opt(SgdConfig{0.2, 0.9}, shape);
  BatchSampler sampler(s.train, 32, rng);
  inner_train(params, off, sampler, 2000, opt);
  CHECK(accuracy(params, s.train.inputs, s.train.labels) == doctest::Approx(1.0));
  CHECK(accuracy(params, s.test.inputs, s.test.labels) > 0.95);
}

TEST_CASE("downsample: constants, quadrant blocks, and a naive oracle") {
  Tensor constant = Tensor::full({2, 16}, 0.7);
  Tensor down = downsample_2x(constant);
  CHECK(down.cols() == 4);
  for (double v : down.data) CHECK(v == doctest::Approx(0.7).epsilon(1e-15));

  // 4x4 image: top half ones, bottom half zeros -> 2x2 {1,1,0,0}.
  Tensor block = Tensor::zeros({1, 16});
  for (std::size_t j = 0; j < 8; ++j) block.data[j] = 1.0;
  Tensor bd = downsample_2x(block);
  CHECK(bd.data[0] == 1.0);
  CHECK(bd.data[1] == 1.0);
  CHECK(bd.data[2] == 0.0);
  CHECK(bd.data[3] == 0.0);

  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor img = Tensor::zeros({3, 28 * 28});
  for (double& v : img.data) v = u(rng);
  Tensor got = downsample_2x(img);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t r = 0; r < 14; ++r) {
      for (std::size_t c = 0; c < 14; ++c) {
        double want = 0.0;
        for (std::size_t dr = 0; dr < 2; ++dr) {
          for (std::size_t dc = 0; dc < 2; ++dc) {
            want += img.data[i * 784 + (2 * r + dr) * 28 + (2 * c + dc)];
          }
        }
        want /= 4.0;
        CHECK(got.data[i * 196 + r * 14 + c] == doctest::Approx(want).epsilon(1e-12));
      }
    }
  }

  // Average pooling preserves the global mean exactly (up to summation order).
  double m_in = 0.0, m_out = 0.0;
  for (double v : img.data) m_in += v;
  for (double v : got.data) m_out += v;
  CHECK(m_out * 4.0 == doctest::Approx(m_in).epsilon(1e-12));
}

TEST_CASE("downsample: odd side length and non-square inputs are rejected") {
  CHECK_THROWS_AS(downsample_2x(Tensor::zeros({1, 9})), shape_error);
  CHECK_THROWS_AS(downsample_2x(Tensor::zeros({1, 12})), shape_error);
}

TEST_CASE("subsample: stratified 50/50/50 from 10 classes gives 5 per class") {
  Dataset all = synth_blobs(13, 30, 10, 10, 0.2);
  SplitSpec spec;
  spec.n_train = 50;
  spec.n_val = 50;
  spec.n_test = 50;
  spec.seed = 4;
  spec.stratified = true;
  Splits s = subsample(all, spec);
  for (const Dataset* d : {&s.train, &s.val, &s.test}) {
    CHECK(d->size() == 50);
    std::vector<int> counts(10, 0);
    for (int y : d->labels) ++counts[static_cast<std::size_t>(y)];
    for (int c : counts) CHECK(c == 5);
  }
}

TEST_CASE("subsample: splits are pairwise disjoint and deterministic") {
  Dataset all = synth_blobs(13, 30, 5, 4, 0.2);
  SplitSpec spec;
  spec.n_train = 40;
  spec.n_val = 30;
  spec.n_test = 30;
  spec.seed = 8;

  auto rows_of = [](const Dataset& d) {
    std::set<std::vector<double>> rows;
    for (std::size_t i = 0; i < d.size(); ++i) {
      rows.insert(std::vector<double>(d.inputs.data.begin() + i * d.dim(),
                                      d.inputs.data.begin() + (i + 1) * d.dim()));
    }
    return rows;
  };
  Splits s = subsample(all, spec);
  auto tr = rows_of(s.train), va = rows_of(s.val), te = rows_of(s.test);
  CHECK(tr.size() == 40);
  for (const auto& row : va) CHECK(tr.count(row) == 0);
  for (const auto& row : te) {
    CHECK(tr.count(row) == 0);
    CHECK(va.count(row) == 0);
  }

  Splits again = subsample(all, spec);
  CHECK(again.train.inputs == s.train.inputs);
  CHECK(again.val.labels == s.val.labels);
}

TEST_CASE("subsample: infeasible spec is an error") {
  Dataset all = synth_blobs(13, 5, 2, 4, 0.2);
  SplitSpec spec;
  spec.n_train = 8;
  spec.n_val = 2;
  spec.n_test = 2;
  CHECK_THROWS_AS(subsample(all, spec), error);
}

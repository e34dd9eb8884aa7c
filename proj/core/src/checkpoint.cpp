#include "iml/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace iml {

namespace {

constexpr char kMagic[8] = {'I', 'M', 'L', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.write(b, 8);
}

std::uint64_t read_u64(std::istream& in) {
  char b[8];
  if (!in.read(b, 8)) throw format_error("checkpoint: truncated file");
  std::uint64_t v;
  std::memcpy(&v, b, 8);
  return v;
}

void write_doubles(std::ostream& out, const std::vector<double>& xs) {
  write_u64(out, xs.size());
  out.write(reinterpret_cast<const char*>(xs.data()),
            static_cast<std::streamsize>(xs.size() * sizeof(double)));
}

std::vector<double> read_doubles(std::istream& in) {
  std::uint64_t n = read_u64(in);
  std::vector<double> xs(n);
  if (!in.read(reinterpret_cast<char*>(xs.data()),
               static_cast<std::streamsize>(n * sizeof(double)))) {
    throw format_error("checkpoint: truncated payload");
  }
  return xs;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt,
                     std::uint64_t config_hash) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw format_error("checkpoint: cannot write " + path);
  out.write(kMagic, 8);
  write_u64(out, config_hash);

  MlpShape s = ckpt.params.shape();
  write_u64(out, s.d_in);
  write_u64(out, s.hidden);
  write_u64(out, s.classes);
  write_doubles(out, ckpt.params.flatten());

  write_u64(out, ckpt.hypers.mode == HyperMode::PerParameter ? 0 : 1);
  for (const Tensor& t : ckpt.hypers.values) write_doubles(out, t.data);
  if (!out) throw format_error("checkpoint: write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw format_error("checkpoint: cannot open " + path);
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw format_error("checkpoint: bad magic in " + path);
  }
  LoadedCheckpoint out;
  out.config_hash = read_u64(in);

  MlpShape s;
  s.d_in = read_u64(in);
  s.hidden = read_u64(in);
  s.classes = read_u64(in);
  Vec flat = read_doubles(in);
  out.checkpoint.params = MlpParams::from_flat(s, flat);

  HyperMode mode = read_u64(in) == 0 ? HyperMode::PerParameter : HyperMode::PerLayer;
  HyperSet hypers = HyperSet::constant(mode, s, 0.0);
  for (Tensor& t : hypers.values) {
    Vec data = read_doubles(in);
    if (data.size() != t.numel()) throw format_error("checkpoint: hyper slot size mismatch");
    t.data = std::move(data);
  }
  out.checkpoint.hypers = std::move(hypers);
  return out;
}

}  // namespace iml

#include "iml/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace iml {

double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) {
    double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

namespace {

// C[n x m] = A[n x k] * B[k x m]
void matmul(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
            std::size_t m) {
  std::fill(c, c + n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      double aip = ai[p];
      if (aip == 0.0) continue;
      const double* bp = b + p * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += aip * bp[j];
    }
  }
}

// C[k x m] = A^T[k x n] * B[n x m], A stored [n x k]
void matmul_at_b(const double* a, const double* b, double* c, std::size_t n, std::size_t k,
                 std::size_t m) {
  std::fill(c, c + k * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * m;
    for (std::size_t p = 0; p < k; ++p) {
      double aip = ai[p];
      if (aip == 0.0) continue;
      double* cp = c + p * m;
      for (std::size_t j = 0; j < m; ++j) cp[j] += aip * bi[j];
    }
  }
}

// C[n x k] = A[n x m] * B^T[m x k], B stored [k x m]
void matmul_a_bt(const double* a, const double* b, double* c, std::size_t n, std::size_t m,
                 std::size_t k) {
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * m;
    double* ci = c + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * m;
      double s = 0.0;
      for (std::size_t j = 0; j < m; ++j) s += ai[j] * bp[j];
      ci[p] = s;
    }
  }
}

void add_row_bias(double* z, const double* b, std::size_t n, std::size_t m) {
  for (std::size_t i = 0; i < n; ++i) {
    double* zi = z + i * m;
    for (std::size_t j = 0; j < m; ++j) zi[j] += b[j];
  }
}

void colsum(const double* a, double* out, std::size_t n, std::size_t m) {
  std::fill(out, out + m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = a + i * m;
    for (std::size_t j = 0; j < m; ++j) out[j] += ai[j];
  }
}

struct ForwardCache {
  Tensor z1;  // pre-activation [n x h]
  Tensor a1;  // relu(z1)
  Tensor z2;  // logits [n x C]
};

ForwardCache forward_cache(const MlpParams& params, const Tensor& inputs) {
  MlpShape s = params.shape();
  if (inputs.rank() != 2 || inputs.cols() != s.d_in) {
    throw shape_error("mlp_forward: inputs must be [n x " + std::to_string(s.d_in) + "]");
  }
  std::size_t n = inputs.rows();
  ForwardCache f;
  f.z1 = Tensor::zeros({n, s.hidden});
  matmul(inputs.data.data(), params.w1.data.data(), f.z1.data.data(), n, s.d_in, s.hidden);
  add_row_bias(f.z1.data.data(), params.b1.data.data(), n, s.hidden);
  f.a1 = f.z1;
  for (double& x : f.a1.data) x = x > 0.0 ? x : 0.0;
  f.z2 = Tensor::zeros({n, s.classes});
  matmul(f.a1.data.data(), params.w2.data.data(), f.z2.data.data(), n, s.hidden, s.classes);
  add_row_bias(f.z2.data.data(), params.b2.data.data(), n, s.classes);
  return f;
}

double softplus_sq(double lambda) {
  double sp = softplus(lambda);
  return sp * sp;
}

void check_vector_length(std::span<const double> v, std::size_t expect, const char* who) {
  if (v.size() != expect) {
    throw shape_error(std::string(who) + ": vector length " + std::to_string(v.size()) +
                      " != parameter count " + std::to_string(expect));
  }
}

}  // namespace

MlpParams MlpParams::zeros(MlpShape s) {
  MlpParams p;
  p.w1 = Tensor::zeros({s.d_in, s.hidden});
  p.b1 = Tensor::zeros({s.hidden});
  p.w2 = Tensor::zeros({s.hidden, s.classes});
  p.b2 = Tensor::zeros({s.classes});
  return p;
}

MlpParams MlpParams::random_init(MlpShape s, std::mt19937_64& rng) {
  MlpParams p = zeros(s);
  std::normal_distribution<double> n01(0.0, 1.0);
  double s1 = std::sqrt(2.0 / static_cast<double>(s.d_in));
  double s2 = std::sqrt(2.0 / static_cast<double>(s.hidden));
  for (double& x : p.w1.data) x = s1 * n01(rng);
  for (double& x : p.w2.data) x = s2 * n01(rng);
  return p;
}

MlpShape MlpParams::shape() const {
  MlpShape s;
  s.d_in = w1.shape.size() == 2 ? w1.shape[0] : 0;
  s.hidden = b1.numel();
  s.classes = b2.numel();
  return s;
}

void MlpParams::flatten_into(std::span<double> out) const {
  if (out.size() != param_count()) throw shape_error("flatten_into: bad output length");
  std::size_t off = 0;
  for (const Tensor* t : tensors()) {
    std::copy(t->data.begin(), t->data.end(), out.begin() + off);
    off += t->numel();
  }
}

Vec MlpParams::flatten() const {
  Vec out(param_count());
  flatten_into(out);
  return out;
}

MlpParams MlpParams::from_flat(MlpShape s, std::span<const double> flat) {
  if (flat.size() != s.param_count()) throw shape_error("from_flat: bad vector length");
  MlpParams p = zeros(s);
  std::size_t off = 0;
  for (Tensor* t : p.tensors()) {
    std::copy(flat.begin() + off, flat.begin() + off + t->numel(), t->data.begin());
    off += t->numel();
  }
  return p;
}

HyperSet HyperSet::constant(HyperMode mode, MlpShape s, double value) {
  HyperSet h;
  h.mode = mode;
  if (mode == HyperMode::PerParameter) {
    MlpParams p = MlpParams::zeros(s);
    for (std::size_t k = 0; k < 4; ++k) h.values[k] = Tensor::full(p.tensors()[k]->shape, value);
  } else {
    for (std::size_t k = 0; k < 4; ++k) h.values[k] = Tensor::full({1}, value);
  }
  return h;
}

HyperSet HyperSet::random_init(HyperMode mode, MlpShape s, std::mt19937_64& rng, double mean,
                               double stddev) {
  HyperSet h = constant(mode, s, 0.0);
  std::normal_distribution<double> dist(mean, stddev);
  for (Tensor& t : h.values) {
    for (double& x : t.data) x = dist(rng);
  }
  return h;
}

std::size_t HyperSet::slot_count() const {
  std::size_t n = 0;
  for (const Tensor& t : values) n += t.numel();
  return n;
}

void HyperSet::validate_against(const MlpParams& params) const {
  auto pts = params.tensors();
  for (std::size_t k = 0; k < 4; ++k) {
    if (mode == HyperMode::PerLayer) {
      if (values[k].numel() != 1) throw shape_error("hypers: per-layer slot must be a scalar");
    } else if (values[k].shape != pts[k]->shape) {
      throw shape_error("hypers: tensor " + std::to_string(k) + " shape mismatch");
    }
  }
}

void Batch::validate(std::size_t d_in, std::size_t classes) const {
  if (labels.empty()) throw shape_error("batch: needs at least one sample");
  if (inputs.rank() != 2 || inputs.rows() != labels.size() || inputs.cols() != d_in) {
    throw shape_error("batch: inputs must be [n x d_in] with one row per label");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw shape_error("batch: label " + std::to_string(y) + " out of range");
    }
  }
}

Tensor mlp_forward(const MlpParams& params, const Tensor& inputs) {
  Tensor logits = forward_cache(params, inputs).z2;
  ensure_finite(logits.data, "mlp_forward");
  return logits;
}

Tensor softmax(const Tensor& logits) {
  Tensor p = logits;
  std::size_t n = logits.rows(), c = logits.cols();
  for (std::size_t i = 0; i < n; ++i) {
    double* row = p.data.data() + i * c;
    double mx = *std::max_element(row, row + c);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (std::size_t j = 0; j < c; ++j) row[j] /= sum;
  }
  return p;
}

double cross_entropy(const Tensor& logits, std::span<const int> labels) {
  std::size_t n = logits.rows(), c = logits.cols();
  if (labels.size() != n) throw shape_error("cross_entropy: one label per row required");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.data.data() + i * c;
    double mx = *std::max_element(row, row + c);
    double lse = 0.0;
    for (std::size_t j = 0; j < c; ++j) lse += std::exp(row[j] - mx);
    lse = std::log(lse) + mx;
    total += lse - row[labels[i]];
  }
  double loss = total / static_cast<double>(n);
  ensure_finite(loss, "cross_entropy");
  return loss;
}

double reg_penalty(const MlpParams& params, const HyperSet& hypers) {
  hypers.validate_against(params);
  double total = 0.0;
  auto pts = params.tensors();
  for (std::size_t k = 0; k < 4; ++k) {
    const Tensor& w = *pts[k];
    for (std::size_t e = 0; e < w.numel(); ++e) {
      double term = softplus(hypers.value_for(k, e)) * w.data[e];
      total += term * term;
    }
  }
  ensure_finite(total, "reg_penalty");
  return total;
}

double train_loss(const MlpParams& params, const HyperSet& hypers, const Batch& batch) {
  MlpShape s = params.shape();
  batch.validate(s.d_in, s.classes);
  return cross_entropy(mlp_forward(params, batch.inputs), batch.labels) +
         reg_penalty(params, hypers);
}

double val_loss(const MlpParams& params, const Batch& batch) {
  MlpShape s = params.shape();
  batch.validate(s.d_in, s.classes);
  return cross_entropy(mlp_forward(params, batch.inputs), batch.labels);
}

MlpParams penalty_grad(const MlpParams& params, const HyperSet& hypers) {
  hypers.validate_against(params);
  MlpParams g = MlpParams::zeros(params.shape());
  auto pts = params.tensors();
  auto gts = g.tensors();
  for (std::size_t k = 0; k < 4; ++k) {
    for (std::size_t e = 0; e < pts[k]->numel(); ++e) {
      gts[k]->data[e] = 2.0 * softplus_sq(hypers.value_for(k, e)) * pts[k]->data[e];
    }
  }
  return g;
}

MlpParams weighted_ce_grad(const MlpParams& params, const Tensor& inputs,
                           std::span<const int> labels, std::span<const double> weights) {
  MlpShape s = params.shape();
  std::size_t n = inputs.rows();
  if (labels.size() != n || weights.size() != n) {
    throw shape_error("weighted_ce_grad: labels/weights must match batch rows");
  }
  ForwardCache f = forward_cache(params, inputs);
  Tensor dz2 = softmax(f.z2);
  double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = dz2.data.data() + i * s.classes;
    row[labels[i]] -= 1.0;
    double wi = weights[i] * inv_n;
    for (std::size_t j = 0; j < s.classes; ++j) row[j] *= wi;
  }

  MlpParams g = MlpParams::zeros(s);
  matmul_at_b(f.a1.data.data(), dz2.data.data(), g.w2.data.data(), n, s.hidden, s.classes);
  colsum(dz2.data.data(), g.b2.data.data(), n, s.classes);

  Tensor dz1 = Tensor::zeros({n, s.hidden});
  matmul_a_bt(dz2.data.data(), params.w2.data.data(), dz1.data.data(), n, s.classes, s.hidden);
  for (std::size_t e = 0; e < dz1.numel(); ++e) {
    if (f.z1.data[e] <= 0.0) dz1.data[e] = 0.0;
  }
  matmul_at_b(inputs.data.data(), dz1.data.data(), g.w1.data.data(), n, s.d_in, s.hidden);
  colsum(dz1.data.data(), g.b1.data.data(), n, s.hidden);
  return g;
}

MlpParams grad_w(LossKind kind, const MlpParams& params, const HyperSet& hypers,
                 const Batch& batch) {
  MlpShape s = params.shape();
  batch.validate(s.d_in, s.classes);
  Vec ones(batch.size(), 1.0);
  MlpParams g = weighted_ce_grad(params, batch.inputs, batch.labels, ones);
  if (kind == LossKind::Train) {
    MlpParams pg = penalty_grad(params, hypers);
    axpy_params(1.0, pg, g);
  }
  for (Tensor* t : g.tensors()) ensure_finite(t->data, "grad_w");
  return g;
}

Vec weighted_ce_hvp(const MlpParams& params, const Tensor& x, std::span<const int> labels,
                    std::span<const double> weights, std::span<const double> v) {
  MlpShape s = params.shape();
  check_vector_length(v, s.param_count(), "weighted_ce_hvp");
  std::size_t n = x.rows();
  if (labels.size() != n || weights.size() != n) {
    throw shape_error("weighted_ce_hvp: labels/weights must match batch rows");
  }
  MlpParams dir = MlpParams::from_flat(s, v);

  ForwardCache f = forward_cache(params, x);
  Tensor p = softmax(f.z2);

  // Gradient backward pass quantities reused by the tangent pass.
  Tensor dz2 = p;
  double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    double* row = dz2.data.data() + i * s.classes;
    row[labels[i]] -= 1.0;
    double wi = weights[i] * inv_n;
    for (std::size_t j = 0; j < s.classes; ++j) row[j] *= wi;
  }

  // Tangent forward pass along `dir` (ReLU locally linear).
  Tensor rz1 = Tensor::zeros({n, s.hidden});
  matmul(x.data.data(), dir.w1.data.data(), rz1.data.data(), n, s.d_in, s.hidden);
  add_row_bias(rz1.data.data(), dir.b1.data.data(), n, s.hidden);
  Tensor ra1 = rz1;
  for (std::size_t e = 0; e < ra1.numel(); ++e) {
    if (f.z1.data[e] <= 0.0) ra1.data[e] = 0.0;
  }
  Tensor rz2 = Tensor::zeros({n, s.classes});
  matmul(ra1.data.data(), params.w2.data.data(), rz2.data.data(), n, s.hidden, s.classes);
  {
    Tensor tmp = Tensor::zeros({n, s.classes});
    matmul(f.a1.data.data(), dir.w2.data.data(), tmp.data.data(), n, s.hidden, s.classes);
    for (std::size_t e = 0; e < rz2.numel(); ++e) rz2.data[e] += tmp.data[e];
  }
  add_row_bias(rz2.data.data(), dir.b2.data.data(), n, s.classes);

  // Softmax tangent: R{p} = p .* (rz2 - rowdot(p, rz2))
  Tensor rdz2 = Tensor::zeros({n, s.classes});
  for (std::size_t i = 0; i < n; ++i) {
    const double* pi = p.data.data() + i * s.classes;
    const double* ri = rz2.data.data() + i * s.classes;
    double dot = 0.0;
    for (std::size_t j = 0; j < s.classes; ++j) dot += pi[j] * ri[j];
    double* out = rdz2.data.data() + i * s.classes;
    double wi = weights[i] * inv_n;
    for (std::size_t j = 0; j < s.classes; ++j) out[j] = pi[j] * (ri[j] - dot) * wi;
  }

  // Tangent backward pass.
  MlpParams hv = MlpParams::zeros(s);
  {
    Tensor tmp = Tensor::zeros({s.hidden, s.classes});
    matmul_at_b(ra1.data.data(), dz2.data.data(), hv.w2.data.data(), n, s.hidden, s.classes);
    matmul_at_b(f.a1.data.data(), rdz2.data.data(), tmp.data.data(), n, s.hidden, s.classes);
    for (std::size_t e = 0; e < hv.w2.numel(); ++e) hv.w2.data[e] += tmp.data[e];
  }
  colsum(rdz2.data.data(), hv.b2.data.data(), n, s.classes);

  Tensor rda1 = Tensor::zeros({n, s.hidden});
  matmul_a_bt(rdz2.data.data(), params.w2.data.data(), rda1.data.data(), n, s.classes, s.hidden);
  {
    Tensor tmp = Tensor::zeros({n, s.hidden});
    matmul_a_bt(dz2.data.data(), dir.w2.data.data(), tmp.data.data(), n, s.classes, s.hidden);
    for (std::size_t e = 0; e < rda1.numel(); ++e) rda1.data[e] += tmp.data[e];
  }
  for (std::size_t e = 0; e < rda1.numel(); ++e) {
    if (f.z1.data[e] <= 0.0) rda1.data[e] = 0.0;
  }
  matmul_at_b(x.data.data(), rda1.data.data(), hv.w1.data.data(), n, s.d_in, s.hidden);
  colsum(rda1.data.data(), hv.b1.data.data(), n, s.hidden);
  return hv.flatten();
}

Vec hvp_ww(const MlpParams& params, const HyperSet& hypers, const Batch& batch,
           std::span<const double> v) {
  MlpShape s = params.shape();
  batch.validate(s.d_in, s.classes);
  hypers.validate_against(params);
  check_vector_length(v, s.param_count(), "hvp_ww");

  Vec ones(batch.size(), 1.0);
  Vec out = weighted_ce_hvp(params, batch.inputs, batch.labels, ones, v);

  // Penalty block is exactly diagonal: 2 * softplus(lambda)^2 * v.
  MlpParams dir = MlpParams::from_flat(s, v);
  auto dts = dir.tensors();
  std::size_t off = 0;
  for (std::size_t k = 0; k < 4; ++k) {
    for (std::size_t e = 0; e < dts[k]->numel(); ++e, ++off) {
      out[off] += 2.0 * softplus_sq(hypers.value_for(k, e)) * dts[k]->data[e];
    }
  }
  ensure_finite(out, "hvp_ww");
  return out;
}

HyperSet mixed_vjp(const MlpParams& params, const HyperSet& hypers, const Batch& batch,
                   std::span<const double> v) {
  (void)batch;  // the cross-entropy term has no lambda dependence
  MlpShape s = params.shape();
  check_vector_length(v, s.param_count(), "mixed_vjp");
  hypers.validate_against(params);
  MlpParams dir = MlpParams::from_flat(s, v);

  HyperSet out = hypers;
  for (Tensor& t : out.values) std::fill(t.data.begin(), t.data.end(), 0.0);

  auto pts = params.tensors();
  auto dts = dir.tensors();
  for (std::size_t k = 0; k < 4; ++k) {
    for (std::size_t e = 0; e < pts[k]->numel(); ++e) {
      double lam = hypers.value_for(k, e);
      double contrib =
          4.0 * softplus(lam) * sigmoid(lam) * pts[k]->data[e] * dts[k]->data[e];
      if (hypers.mode == HyperMode::PerLayer) {
        out.values[k].data[0] += contrib;
      } else {
        out.values[k].data[e] = contrib;
      }
    }
  }
  for (const Tensor& t : out.values) ensure_finite(t.data, "mixed_vjp");
  return out;
}

double accuracy(const MlpParams& params, const Tensor& inputs, std::span<const int> labels) {
  Tensor logits = mlp_forward(params, inputs);
  std::size_t n = logits.rows(), c = logits.cols();
  if (labels.size() != n) throw shape_error("accuracy: one label per row required");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.data.data() + i * c;
    std::size_t arg = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (row[j] > row[arg]) arg = j;
    }
    if (static_cast<int>(arg) == labels[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

void axpy_params(double a, const MlpParams& x, MlpParams& y) {
  auto xs = x.tensors();
  auto ys = y.tensors();
  for (std::size_t k = 0; k < 4; ++k) {
    for (std::size_t e = 0; e < ys[k]->numel(); ++e) ys[k]->data[e] += a * xs[k]->data[e];
  }
}

void scale_params(MlpParams& p, double a) {
  for (Tensor* t : p.tensors()) {
    for (double& x : t->data) x *= a;
  }
}

}  // namespace iml

#include "iml/inverse_hvp.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

namespace iml {

namespace {

using clock = std::chrono::steady_clock;

std::int64_t elapsed_ns(clock::time_point t0) {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(clock::now() - t0).count();
}

double inf_norm(std::span<const double> xs) {
  double m = 0.0;
  for (double x : xs) m = std::max(m, std::fabs(x));
  return m;
}

constexpr double kDivergenceGrowthFactor = 1e6;
constexpr double kCgResidualTol = 1e-10;

}  // namespace

HvpFn hvp_from(std::function<Vec(std::span<const double>)> fn) {
  return [fn = std::move(fn)](std::span<const double> v, std::span<double> out) {
    Vec r = fn(v);
    std::copy(r.begin(), r.end(), out.begin());
  };
}

std::string approx_name(const ApproxSpec& spec) {
  if (const auto* n = std::get_if<NeumannSpec>(&spec)) {
    return "neumann_" + std::to_string(n->terms);
  }
  if (const auto* c = std::get_if<CgSpec>(&spec)) return "cg_" + std::to_string(c->steps);
  if (std::holds_alternative<IdentitySpec>(spec)) return "identity";
  return "exact";
}

ApproxReport neumann_inv_hvp(const HvpFn& hvp, std::span<const double> v, int terms,
                             double alpha, bool scale_by_alpha) {
  if (terms < 1) throw error("neumann_inv_hvp: terms must be >= 1");
  auto t0 = clock::now();
  std::size_t n = v.size();

  Vec p(v.begin(), v.end());
  Vec cur(v.begin(), v.end());
  Vec hv(n, 0.0);
  std::int64_t transient = static_cast<std::int64_t>(3 * n);

  ApproxReport rep;
  double start_norm = std::max(1.0, inf_norm(v));
  for (int j = 0; j < terms; ++j) {
    hvp(cur, hv);
    for (std::size_t i = 0; i < n; ++i) cur[i] -= alpha * hv[i];
    double norm = inf_norm(cur);
    if (!std::isfinite(norm)) {
      throw divergence_error(
          "neumann_inv_hvp: non-finite iterate at term " + std::to_string(j), j);
    }
    if (!rep.diverging && norm > kDivergenceGrowthFactor * start_norm) {
      rep.diverging = true;
      rep.diverging_at_term = j;
    }
    for (std::size_t i = 0; i < n; ++i) p[i] += cur[i];
  }

  rep.result.resize(n);
  double scale = scale_by_alpha ? alpha : 1.0;
  for (std::size_t i = 0; i < n; ++i) rep.result[i] = scale * p[i];
  rep.transient_floats_allocated = transient;
  rep.wall_time_ns = elapsed_ns(t0);
  return rep;
}

ApproxReport cg_inv_hvp(const HvpFn& hvp, std::span<const double> v, int steps,
                        double damping) {
  if (steps < 1) throw error("cg_inv_hvp: steps must be >= 1");
  auto t0 = clock::now();
  std::size_t n = v.size();

  Vec x(n, 0.0);
  Vec r(v.begin(), v.end());
  Vec p(v.begin(), v.end());
  Vec hp(n, 0.0);
  std::int64_t transient = static_cast<std::int64_t>(4 * n);

  double rr = 0.0;
  for (double ri : r) rr += ri * ri;

  for (int k = 0; k < steps && rr > kCgResidualTol * kCgResidualTol; ++k) {
    hvp(p, hp);
    if (damping != 0.0) {
      for (std::size_t i = 0; i < n; ++i) hp[i] += damping * p[i];
    }
    double php = 0.0;
    for (std::size_t i = 0; i < n; ++i) php += p[i] * hp[i];
    if (!std::isfinite(php) || php == 0.0) {
      throw divergence_error("cg_inv_hvp: breakdown at step " + std::to_string(k), k);
    }
    double ak = rr / php;
    double rr_new = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += ak * p[i];
      r[i] -= ak * hp[i];
      rr_new += r[i] * r[i];
    }
    if (!std::isfinite(rr_new)) {
      throw divergence_error("cg_inv_hvp: non-finite residual at step " + std::to_string(k),
                             k);
    }
    double bk = rr_new / rr;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + bk * p[i];
    rr = rr_new;
  }

  ApproxReport rep;
  rep.result = std::move(x);
  rep.transient_floats_allocated = transient;
  rep.wall_time_ns = elapsed_ns(t0);
  return rep;
}

ApproxReport identity_inv_hvp(std::span<const double> v) {
  auto t0 = clock::now();
  ApproxReport rep;
  rep.result.assign(v.begin(), v.end());
  rep.transient_floats_allocated = 0;
  rep.wall_time_ns = elapsed_ns(t0);
  return rep;
}

ApproxReport exact_inv_hvp(const HvpFn& hvp, std::span<const double> v,
                           std::size_t dim_cap) {
  std::size_t n = v.size();
  if (n > dim_cap) {
    throw error("exact_inv_hvp: dimension " + std::to_string(n) + " exceeds cap " +
                std::to_string(dim_cap));
  }
  auto t0 = clock::now();

  Eigen::MatrixXd h(n, n);
  Vec basis(n, 0.0);
  std::int64_t transient = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n) +
                           static_cast<std::int64_t>(n);
  for (std::size_t j = 0; j < n; ++j) {
    basis[j] = 1.0;
    std::span<double> col(h.col(j).data(), n);
    hvp(basis, col);
    basis[j] = 0.0;
  }

  double max_abs = h.cwiseAbs().maxCoeff();
  // Factor in place; the U diagonal exposes the pivots.
  Eigen::PartialPivLU<Eigen::Ref<Eigen::MatrixXd>> lu(h);
  double pivot_min = lu.matrixLU().diagonal().cwiseAbs().minCoeff();
  if (max_abs == 0.0 || pivot_min < 1e-12 * max_abs) {
    throw ill_conditioned_error("exact_inv_hvp: numerically singular Hessian (pivot " +
                                std::to_string(pivot_min) + ")");
  }

  Eigen::Map<const Eigen::VectorXd> rhs(v.data(), n);
  Eigen::VectorXd x = lu.solve(rhs);
  if (!x.allFinite()) {
    throw ill_conditioned_error("exact_inv_hvp: solve produced non-finite values");
  }

  ApproxReport rep;
  rep.result.assign(x.data(), x.data() + n);
  rep.transient_floats_allocated = transient;
  rep.wall_time_ns = elapsed_ns(t0);
  return rep;
}

ApproxReport approx_inverse_hvp(const ApproxSpec& spec, const HvpFn& hvp,
                                std::span<const double> v) {
  if (const auto* s = std::get_if<NeumannSpec>(&spec)) {
    return neumann_inv_hvp(hvp, v, s->terms, s->alpha, s->scale_by_alpha);
  }
  if (const auto* s = std::get_if<CgSpec>(&spec)) {
    return cg_inv_hvp(hvp, v, s->steps, s->damping);
  }
  if (std::holds_alternative<IdentitySpec>(spec)) return identity_inv_hvp(v);
  return exact_inv_hvp(hvp, v, std::get<ExactSpec>(spec).dim_cap);
}

HypergradResult hypergradient(std::span<const double> grad_val_w, const ApproxSpec& spec,
                              const HvpFn& hvp, const MixedFn& mixed) {
  HypergradResult out;
  out.report = approx_inverse_hvp(spec, hvp, grad_val_w);
  out.grad = mixed(out.report.result);
  for (Tensor& t : out.grad.values) {
    for (double& x : t.data) x = -x;
  }
  return out;
}

}  // namespace iml

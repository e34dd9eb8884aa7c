#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <variant>

#include "iml/mlp.hpp"
#include "iml/tensor.hpp"

namespace iml {

// Hessian-vector product callback: writes H*v for the given v into `out`.
// Must be reentrant for repeated calls from a single thread.
using HvpFn = std::function<void(std::span<const double> v, std::span<double> out)>;

// Adapter for callables returning a fresh vector.
HvpFn hvp_from(std::function<Vec(std::span<const double>)> fn);

struct NeumannSpec {
  int terms = 3;
  double alpha = 0.1;
  // The series as published omits the final alpha scaling; unscaled output is
  // what the training loop consumes (the factor folds into the meta learning
  // rate), scaled output is the one that converges to H^-1 v.
  bool scale_by_alpha = false;
  bool operator==(const NeumannSpec&) const = default;
};

struct CgSpec {
  int steps = 5;
  double damping = 0.0;  // Tikhonov shift; 0 = plain CG
  bool operator==(const CgSpec&) const = default;
};

struct IdentitySpec {
  bool operator==(const IdentitySpec&) const = default;
};

struct ExactSpec {
  std::size_t dim_cap = 8000;
  bool operator==(const ExactSpec&) const = default;
};

using ApproxSpec = std::variant<NeumannSpec, CgSpec, IdentitySpec, ExactSpec>;

// Compact label for CSV/report rows: neumann_3, cg_5, identity, exact.
std::string approx_name(const ApproxSpec& spec);

// Result of one inverse-HVP approximation.
//
// transient_floats_allocated counts the 64-bit float slots of the work
// buffers the approximator itself creates, excluding the returned result and
// anything allocated inside the hvp callback. Per method and dimension n:
//   identity: 0;  neumann: 3n;  cg: 4n;  exact: n^2 + n.
// The count is deterministic for a given (spec, dim) and independent of the
// number of terms / steps.
//
// `diverging` flags a Neumann iterate whose norm grew past 1e6 x the starting
// norm (the series is not contracting). The result is still returned; only
// non-finite intermediates raise divergence_error.
struct ApproxReport {
  Vec result;
  std::int64_t wall_time_ns = 0;
  std::int64_t transient_floats_allocated = 0;
  bool diverging = false;
  std::int64_t diverging_at_term = -1;
};

// p = v; repeat `terms` times { v -= alpha * H v; p += v }; optionally scale
// the sum by alpha. Throws divergence_error when an intermediate goes
// non-finite.
ApproxReport neumann_inv_hvp(const HvpFn& hvp, std::span<const double> v, int terms,
                             double alpha, bool scale_by_alpha);

// Conjugate gradient on (H + damping I) x = v from x0 = 0, at most `steps`
// iterations, early exit when the residual norm drops below 1e-10.
ApproxReport cg_inv_hvp(const HvpFn& hvp, std::span<const double> v, int steps,
                        double damping = 0.0);

ApproxReport identity_inv_hvp(std::span<const double> v);

// Assembles the dense Hessian one hvp call per basis vector and solves by
// pivoted LU. Numerically singular systems (a pivot below 1e-12 x max |H|)
// raise ill_conditioned_error instead of returning garbage.
ApproxReport exact_inv_hvp(const HvpFn& hvp, std::span<const double> v,
                           std::size_t dim_cap = 8000);

ApproxReport approx_inverse_hvp(const ApproxSpec& spec, const HvpFn& hvp,
                                std::span<const double> v);

// Mixed-partial contraction callback: v -> v * d^2 L_T / (dw dlambda^T).
using MixedFn = std::function<HyperSet(std::span<const double>)>;

struct HypergradResult {
  HyperSet grad;  // estimate of dL_V* / dlambda (IFT sign included)
  ApproxReport report;
};

// v1 = grad_val_w; v2 = approx inverse-HVP of v1; v3 = mixed(v2); returns
// -v3. The direct validation gradient w.r.t. lambda is identically zero for
// this loss family.
HypergradResult hypergradient(std::span<const double> grad_val_w, const ApproxSpec& spec,
                              const HvpFn& hvp, const MixedFn& mixed);

}  // namespace iml

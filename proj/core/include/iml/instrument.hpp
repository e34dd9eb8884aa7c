#pragma once

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

#include "iml/inverse_hvp.hpp"

namespace iml {

// Accumulating wall-clock timer for a named phase.
class PhaseTimer {
 public:
  explicit PhaseTimer(std::string label) : label_(std::move(label)) {}

  class Scope {
   public:
    explicit Scope(PhaseTimer& t) : timer_(t), t0_(std::chrono::steady_clock::now()) {}
    ~Scope() {
      timer_.accumulated_ns_ += std::chrono::duration_cast<std::chrono::nanoseconds>(
                                    std::chrono::steady_clock::now() - t0_)
                                    .count();
      ++timer_.invocations_;
    }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    PhaseTimer& timer_;
    std::chrono::steady_clock::time_point t0_;
  };

  Scope scope() { return Scope(*this); }

  const std::string& label() const { return label_; }
  std::int64_t accumulated_ns() const { return accumulated_ns_; }
  std::int64_t invocations() const { return invocations_; }

 private:
  std::string label_;
  std::int64_t accumulated_ns_ = 0;
  std::int64_t invocations_ = 0;
};

struct Measured {
  ApproxReport report;
  std::int64_t wall_time_ns = 0;        // measured around the whole call
  std::int64_t transient_floats = 0;    // from the approximator's accounting
};

// Wraps one approximator invocation. Instrumentation only: the result is
// exactly what the wrapped call returned.
template <typename F>
Measured measure(F&& approx_call) {
  auto t0 = std::chrono::steady_clock::now();
  Measured m;
  m.report = approx_call();
  m.wall_time_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(
                       std::chrono::steady_clock::now() - t0)
                       .count();
  m.transient_floats = m.report.transient_floats_allocated;
  return m;
}

struct HessianComparison {
  int meta_epoch = 0;
  std::string method;
  double rel_l2_error = 0.0;
  double cosine_similarity = 0.0;
  bool exact_stable = true;  // error fields are meaningful only when true
};

// Relative L2 error and cosine similarity of `approx` against `exact`.
// Bitwise-identical vectors report (0, 1) exactly.
HessianComparison compare_vectors(std::span<const double> approx,
                                  std::span<const double> exact, int meta_epoch,
                                  std::string method);

// Computes the exact inverse-HVP of v and the approximation under `spec`,
// then compares them. A failed exact computation yields exact_stable = false
// instead of throwing.
HessianComparison compare_to_exact(const HvpFn& hvp, std::span<const double> v,
                                   const ApproxSpec& spec, int meta_epoch,
                                   std::size_t dim_cap = 8000);

// Batch variant sharing one exact solve across several candidate methods.
std::vector<HessianComparison> compare_methods_to_exact(
    const HvpFn& hvp, std::span<const double> v, const std::vector<ApproxSpec>& specs,
    int meta_epoch, std::size_t dim_cap = 8000);

// Sampling gate for every-k-epochs comparison cadences: over meta-epochs
// 1..meta_updates it fires exactly floor(meta_updates / every_k) times.
class ComparisonCadence {
 public:
  explicit ComparisonCadence(int every_k) : every_k_(every_k) {}
  bool due(int meta_epoch) const { return every_k_ > 0 && meta_epoch % every_k_ == 0; }
  int every_k() const { return every_k_; }

 private:
  int every_k_;
};

}  // namespace iml

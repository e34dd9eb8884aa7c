#include "iml/instrument.hpp"

#include <cmath>
#include <limits>

namespace iml {

HessianComparison compare_vectors(std::span<const double> approx,
                                  std::span<const double> exact, int meta_epoch,
                                  std::string method) {
  HessianComparison cmp;
  cmp.meta_epoch = meta_epoch;
  cmp.method = std::move(method);

  bool identical = approx.size() == exact.size();
  for (std::size_t i = 0; identical && i < approx.size(); ++i) {
    identical = approx[i] == exact[i];
  }
  if (identical) {
    cmp.rel_l2_error = 0.0;
    cmp.cosine_similarity = 1.0;
    return cmp;
  }

  double diff2 = 0.0, e2 = 0.0, a2 = 0.0, dot = 0.0;
  for (std::size_t i = 0; i < exact.size(); ++i) {
    double d = approx[i] - exact[i];
    diff2 += d * d;
    e2 += exact[i] * exact[i];
    a2 += approx[i] * approx[i];
    dot += approx[i] * exact[i];
  }
  cmp.rel_l2_error = e2 > 0.0 ? std::sqrt(diff2 / e2) : std::sqrt(diff2);
  double denom = std::sqrt(a2) * std::sqrt(e2);
  cmp.cosine_similarity = denom > 0.0 ? dot / denom : 0.0;
  return cmp;
}

HessianComparison compare_to_exact(const HvpFn& hvp, std::span<const double> v,
                                   const ApproxSpec& spec, int meta_epoch,
                                   std::size_t dim_cap) {
  std::vector<ApproxSpec> one{spec};
  return compare_methods_to_exact(hvp, v, one, meta_epoch, dim_cap).front();
}

std::vector<HessianComparison> compare_methods_to_exact(
    const HvpFn& hvp, std::span<const double> v, const std::vector<ApproxSpec>& specs,
    int meta_epoch, std::size_t dim_cap) {
  std::vector<HessianComparison> out;
  out.reserve(specs.size());

  Vec exact;
  bool exact_ok = true;
  std::string exact_failure;
  try {
    exact = exact_inv_hvp(hvp, v, dim_cap).result;
  } catch (const error&) {
    exact_ok = false;
  }

  for (const ApproxSpec& spec : specs) {
    if (!exact_ok) {
      HessianComparison cmp;
      cmp.meta_epoch = meta_epoch;
      cmp.method = approx_name(spec);
      cmp.exact_stable = false;
      out.push_back(cmp);
      continue;
    }
    if (std::holds_alternative<ExactSpec>(spec)) {
      // The reference is the candidate; identical bits by construction.
      out.push_back(compare_vectors(exact, exact, meta_epoch, approx_name(spec)));
      continue;
    }
    try {
      Vec approx = approx_inverse_hvp(spec, hvp, v).result;
      out.push_back(compare_vectors(approx, exact, meta_epoch, approx_name(spec)));
    } catch (const divergence_error&) {
      HessianComparison cmp;
      cmp.meta_epoch = meta_epoch;
      cmp.method = approx_name(spec);
      cmp.exact_stable = true;
      cmp.rel_l2_error = std::numeric_limits<double>::infinity();
      cmp.cosine_similarity = 0.0;
      out.push_back(cmp);
    }
  }
  return out;
}

}  // namespace iml

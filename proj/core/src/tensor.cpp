#include "iml/tensor.hpp"

#include <cmath>
#include <string>

namespace iml {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return shape.empty() ? 0 : n;
}

Tensor::Tensor(std::vector<std::size_t> shape_, std::vector<double> data_)
    : shape(std::move(shape_)), data(std::move(data_)) {
  if (shape_numel(shape) != data.size()) {
    throw shape_error("tensor: data length " + std::to_string(data.size()) +
                      " does not match shape product " + std::to_string(shape_numel(shape)));
  }
}

Tensor Tensor::zeros(std::vector<std::size_t> shape) {
  std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

std::size_t Tensor::rows() const {
  if (shape.size() != 2) throw shape_error("tensor: rows() requires rank 2");
  return shape[0];
}

std::size_t Tensor::cols() const {
  if (shape.size() != 2) throw shape_error("tensor: cols() requires rank 2");
  return shape[1];
}

bool all_finite(std::span<const double> xs) {
  for (double x : xs) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

void ensure_finite(std::span<const double> xs, const char* what) {
  if (!all_finite(xs)) throw divergence_error(std::string(what) + ": non-finite value", -1);
}

void ensure_finite(double x, const char* what) {
  if (!std::isfinite(x)) throw divergence_error(std::string(what) + ": non-finite value", -1);
}

}  // namespace iml

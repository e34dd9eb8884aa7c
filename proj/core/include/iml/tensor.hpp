#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "iml/errors.hpp"

namespace iml {

using Vec = std::vector<double>;

// Dense row-major array of doubles with an explicit shape.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<std::size_t> shape_, std::vector<double> data_);

  static Tensor zeros(std::vector<std::size_t> shape);
  static Tensor full(std::vector<std::size_t> shape, double value);

  std::size_t numel() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }

  // 2-d accessors; shape checks are the caller's business in hot loops.
  std::size_t rows() const;
  std::size_t cols() const;
  double& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
  double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  bool operator==(const Tensor& other) const = default;
};

bool all_finite(std::span<const double> xs);

// Throws iml::error naming `what` if any element is NaN or infinite.
void ensure_finite(std::span<const double> xs, const char* what);
void ensure_finite(double x, const char* what);

std::size_t shape_numel(const std::vector<std::size_t>& shape);

}  // namespace iml

#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace iml {

class error : public std::runtime_error {
 public:
  explicit error(const std::string& what) : std::runtime_error(what) {}
};

// Dimension / shape mismatch between tensors or parameter collections.
class shape_error : public error {
 public:
  explicit shape_error(const std::string& what) : error(what) {}
};

// Malformed external input: dataset files, config text, checkpoints.
class format_error : public error {
 public:
  explicit format_error(const std::string& what) : error(what) {}
};

// An iterative computation produced a non-finite or runaway value.
// `iteration` is the loop index (0-based) at which it was detected,
// or -1 when the failure is not tied to a particular iteration.
class divergence_error : public error {
 public:
  divergence_error(const std::string& what, std::int64_t iteration)
      : error(what), iteration(iteration) {}
  std::int64_t iteration;
};

// A dense linear solve hit a numerically singular pivot.
class ill_conditioned_error : public error {
 public:
  explicit ill_conditioned_error(const std::string& what) : error(what) {}
};

}  // namespace iml

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>

#include "mal/tape.hpp"
#include "mal/tensor.hpp"

namespace mal {

/// Builds a scalar on `tape` from the given input handle.
using ScalarFunction = std::function<Tensor(Tape& tape, const Tensor& x)>;

struct GradientReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t coords_checked = 0;
  bool passed = false;
};

struct GradientCheckOptions {
  double step = 1e-3;
  double tolerance = 1e-3;
  /// Denominator floor of the relative error, so coordinates where both
  /// gradients vanish compare on absolute error.
  double rel_floor = 1e-7;
  /// 0 checks every coordinate; otherwise a seeded random subset.
  std::size_t max_coords = 0;
  std::uint64_t seed = 0;
};

/// Compares the tape gradient of `f` at `x` with central differences.
/// rel_err_i = |a_i - n_i| / max(|a_i|, |n_i|, rel_floor).
/// Throws ShapeError when f is not scalar and std::invalid_argument when
/// step <= 0. `x` is restored before returning.
GradientReport check_gradient(const ScalarFunction& f, Tensor x, const GradientCheckOptions& opts = {});

}  // namespace mal

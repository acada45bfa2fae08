#include "mal/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace mal {
namespace {

double evaluate(const ScalarFunction& f, const Tensor& x) {
  Tape tape(false);
  Tensor y = f(tape, x);
  return y.item();
}

}  // namespace

GradientReport check_gradient(const ScalarFunction& f, Tensor x, const GradientCheckOptions& opts) {
  if (!(opts.step > 0.0)) throw std::invalid_argument("check_gradient: step must be positive");

  x.set_requires_grad(true);
  x.clear_grad();
  Tape tape;
  Tensor y = f(tape, x);
  if (y.numel() != 1) {
    throw ShapeError("check_gradient: function output must be scalar, got " + shape_str(y.shape()));
  }
  tape.backward(y);
  std::vector<double> analytic(x.numel(), 0.0);
  if (x.has_grad()) std::copy(x.grad().begin(), x.grad().end(), analytic.begin());

  std::vector<std::size_t> coords(x.numel());
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (opts.max_coords && opts.max_coords < coords.size()) {
    std::mt19937_64 rng(opts.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(opts.max_coords);
    std::sort(coords.begin(), coords.end());
  }

  GradientReport report;
  auto data = x.data();
  for (std::size_t i : coords) {
    const double saved = data[i];
    data[i] = saved + opts.step;
    const double up = evaluate(f, x);
    data[i] = saved - opts.step;
    const double down = evaluate(f, x);
    data[i] = saved;
    const double numeric = (up - down) / (2.0 * opts.step);
    const double abs_err = std::abs(analytic[i] - numeric);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), opts.rel_floor});
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
    report.max_rel_error = std::max(report.max_rel_error, abs_err / denom);
  }
  report.coords_checked = coords.size();
  report.passed = report.max_rel_error < opts.tolerance;
  x.clear_grad();
  return report;
}

}  // namespace mal

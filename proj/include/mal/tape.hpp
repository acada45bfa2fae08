#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "mal/tensor.hpp"

namespace mal {

/// Records differentiable ops for one computation and replays them in
/// reverse. A tape is owned by the caller; there is no global recording
/// state, so independent computations can run on separate threads.
class Tape {
 public:
  /// Receives the gradient of the op output and accumulates into inputs.
  using BackwardFn = std::function<void(std::span<const double> out_grad)>;

  explicit Tape(bool enabled = true) : enabled_(enabled) {}

  /// A disabled tape records nothing; forward passes skip saved buffers.
  bool enabled() const { return enabled_; }

  /// True when an op over `inputs` must be recorded.
  bool should_record(std::initializer_list<const Tensor*> inputs) const;

  void record(Tensor output, BackwardFn backward);

  /// Seeds `output` with `seed` and replays every recorded op once, newest
  /// first. Gradients accumulate into existing buffers. Returns the number
  /// of entries replayed.
  std::size_t backward(const Tensor& output, const Tensor& seed);
  /// Scalar convenience: seed of 1.
  std::size_t backward(const Tensor& scalar_output);

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    Tensor output;
    BackwardFn backward;
  };
  bool enabled_;
  std::vector<Entry> entries_;
};

}  // namespace mal

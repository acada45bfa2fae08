#include "mal/tape.hpp"

#include <algorithm>

namespace mal {

bool Tape::should_record(std::initializer_list<const Tensor*> inputs) const {
  if (!enabled_) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t && t->requires_grad(); });
}

void Tape::record(Tensor output, BackwardFn backward) {
  output.set_requires_grad(true);
  entries_.push_back(Entry{std::move(output), std::move(backward)});
}

std::size_t Tape::backward(const Tensor& output, const Tensor& seed) {
  if (seed.shape() != output.shape()) {
    throw ShapeError("backward: seed shape " + shape_str(seed.shape()) +
                     " does not match output " + shape_str(output.shape()));
  }
  Tensor out = output;
  auto g = out.mutable_grad();
  auto s = seed.data();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += s[i];

  std::size_t visited = 0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    ++visited;
    // Entries off the path to `output` never received a gradient.
    if (!it->output.has_grad()) continue;
    it->backward(it->output.grad());
  }
  return visited;
}

std::size_t Tape::backward(const Tensor& scalar_output) {
  if (scalar_output.numel() != 1) {
    throw ShapeError("backward: implicit seed needs a scalar output, got " +
                     shape_str(scalar_output.shape()));
  }
  return backward(scalar_output, Tensor(scalar_output.shape(), std::vector<double>{1.0}));
}

}  // namespace mal

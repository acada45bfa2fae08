#include "mal/optim.hpp"

namespace mal {

void sgd_momentum_step(std::span<Tensor> params, std::span<const Tensor> grads, double lr,
                       double momentum, std::span<Tensor> buffers) {
  if (params.size() != grads.size() || params.size() != buffers.size()) {
    throw ShapeError("sgd_momentum_step: " + std::to_string(params.size()) + " params, " +
                     std::to_string(grads.size()) + " grads, " + std::to_string(buffers.size()) +
                     " buffers");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].shape() || buffers[i].shape() != params[i].shape()) {
      throw ShapeError("sgd_momentum_step: entry " + std::to_string(i) + " param " +
                       shape_str(params[i].shape()) + ", grad " + shape_str(grads[i].shape()) +
                       ", buffer " + shape_str(buffers[i].shape()));
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    auto g = grads[i].data();
    auto b = buffers[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      b[j] = momentum * b[j] + g[j];
      p[j] -= lr * b[j];
    }
  }
}

}  // namespace mal

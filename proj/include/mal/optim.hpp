#pragma once

#include <span>

#include "mal/tensor.hpp"

namespace mal {

/// buffer <- momentum * buffer + grad; param <- param - lr * buffer.
/// All three lists must match element-wise in shape.
void sgd_momentum_step(std::span<Tensor> params, std::span<const Tensor> grads, double lr,
                       double momentum, std::span<Tensor> buffers);

}  // namespace mal

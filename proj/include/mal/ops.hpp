#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "mal/tape.hpp"
#include "mal/tensor.hpp"

namespace mal {

// Differentiable primitives. Each records a backward rule on `tape` when any
// input requires grad; the output then requires grad as well.

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);

/// [m,k] x [k,n] -> [m,n]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);

/// x [N,in], weight [out,in], bias [out] -> [N,out]. Rows are computed
/// independently so a row's result does not depend on the rest of the batch.
Tensor linear(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias);

/// x [N,C,H,W], weight [O,C,kh,kw], bias [O]; stride 1, zero padding.
Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t padding = 0);
Tensor conv2d(Tape& tape, const Tensor& x, const Tensor& weight, std::size_t padding = 0);

Tensor relu(Tape& tape, const Tensor& x);

/// x [N,C,H,W] with even H and W -> [N,C,H/2,W/2]. Ties go to the first
/// element in row-major window order.
Tensor max_pool2x2(Tape& tape, const Tensor& x);

/// [N, ...] -> [N, prod(...)]
Tensor flatten(Tape& tape, const Tensor& x);

/// Mean over the leading (batch) axis: [N, ...] -> [...].
Tensor batch_mean(Tape& tape, const Tensor& x);

/// Sum of all elements -> scalar.
Tensor sum(Tape& tape, const Tensor& x);

/// Per-sample loss: logits [N,C], targets in [0,C) -> [N].
Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, std::span<const int> targets);

/// sum_i (a_i - b_i)^2 as a scalar.
Tensor squared_l2_distance(Tape& tape, const Tensor& a, const Tensor& b);

// Non-differentiable helpers.

/// -1, 0 or +1 per element; sign(0) = 0.
Tensor sign_elementwise(const Tensor& t);

/// Raised by l1_normalize on an all-zero input.
class ZeroGradientError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// t / ||t||_1. Throws ZeroGradientError when the norm is zero.
Tensor l1_normalize(const Tensor& t);

/// Generic dispatch over the primitive set.
enum class OpKind {
  kAdd,
  kSub,
  kMultiply,
  kMatmul,
  kConv2d,
  kRelu,
  kMaxPool2x2,
  kFlatten,
  kLinear,
  kBatchMean,
  kSoftmaxCrossEntropy,
  kSquaredL2,
};

struct OpParams {
  std::size_t padding = 0;
  std::vector<int> targets;
};

Tensor forward_primitive(Tape& tape, OpKind kind, std::span<const Tensor> inputs,
                         const OpParams& params = {});

}  // namespace mal

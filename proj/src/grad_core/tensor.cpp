#include "mal/tensor.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace mal {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor() : node_(std::make_shared<Node>()) { node_->data.assign(1, 0.0); }

Tensor::Tensor(Shape shape) : node_(std::make_shared<Node>()) {
  node_->data.assign(shape_numel(shape), 0.0);
  node_->shape = std::move(shape);
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Tensor t(std::move(shape));
  t.set_requires_grad(requires_grad);
  return t;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad)
    : node_(std::make_shared<Node>()) {
  if (shape_numel(shape) != data.size()) {
    throw ShapeError("Tensor: shape " + shape_str(shape) + " needs " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  }
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, std::vector<double>{value}, requires_grad);
}

Tensor Tensor::filled(Shape shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.node_->data.begin(), t.node_->data.end(), value);
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw ShapeError("Tensor::dim: axis " + std::to_string(axis) + " out of range for " +
                     shape_str(shape()));
  }
  return node_->shape[axis];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("Tensor::item: expected one element, shape " + shape_str(shape()));
  }
  return node_->data[0];
}

std::span<double> Tensor::mutable_grad() {
  if (node_->grad.size() != node_->data.size()) node_->grad.assign(node_->data.size(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

Tensor Tensor::clone() const { return Tensor(node_->shape, node_->data, node_->requires_grad); }

Tensor Tensor::detached() const { return Tensor(node_->shape, node_->data, false); }

}  // namespace mal

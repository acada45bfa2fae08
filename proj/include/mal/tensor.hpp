#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mal {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Raised when operand shapes do not conform to an op. The message names
/// the op and the offending dimensions.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major tensor with an optional gradient slot.
///
/// Tensor is a handle: copies share storage, as the tape needs to reach the
/// same buffers from recorded ops. Use clone() for an independent copy.
/// Storage is double precision throughout.
class Tensor {
 public:
  /// Rank-0 scalar holding 0.
  Tensor();
  /// Zero-filled.
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor filled(Shape shape, double value, bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const { return node_->data.size(); }

  std::span<double> data() { return node_->data; }
  std::span<const double> data() const { return node_->data; }
  double& operator[](std::size_t i) { return node_->data[i]; }
  double operator[](std::size_t i) const { return node_->data[i]; }

  /// Value of a single-element tensor.
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return !node_->grad.empty(); }
  /// Empty span when no gradient has been allocated yet.
  std::span<const double> grad() const { return node_->grad; }
  /// Gradient buffer, zero-allocated on first access.
  std::span<double> mutable_grad();
  void zero_grad();
  void clear_grad() { node_->grad.clear(); }

  /// Deep copy of shape and data; keeps requires_grad, drops the gradient.
  Tensor clone() const;
  /// Deep copy that never records on a tape.
  Tensor detached() const;

  bool shares_storage_with(const Tensor& other) const { return node_ == other.node_; }

 private:
  struct Node {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Node> node_;
};

}  // namespace mal

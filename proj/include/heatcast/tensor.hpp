#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace heatcast {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;
using Shape = std::vector<Eigen::Index>;

/// Raised when operand extents are incompatible.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  Matrix value;
  Matrix grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad, accumulates into parents' grads.
  std::function<void(Node&)> backward;
};

}  // namespace detail

/// Handle to a node of the differentiation tape.
///
/// Tensors are rank 0, 1 or 2. Storage is a row-major Eigen matrix: a rank-1
/// tensor of extent n is stored as 1 x n, a scalar as 1 x 1. Copies share the
/// node, so a Tensor behaves like a reference to a value on the tape.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Matrix values, Shape shape);
  static Tensor constant(Matrix values);  // rank 2
  static Tensor parameter(Matrix values, Shape shape);
  static Tensor parameter(Matrix values);
  static Tensor scalar(double v);
  static Tensor vector(const std::vector<double>& v, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  Eigen::Index rank() const { return static_cast<Eigen::Index>(node_->shape.size()); }
  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  Eigen::Index size() const { return node_->value.size(); }

  const Matrix& value() const { return node_->value; }
  Matrix& mutable_value() { return node_->value; }
  const Matrix& grad() const { return node_->grad; }
  Matrix& mutable_grad() { return node_->grad; }
  bool requires_grad() const { return node_->requires_grad; }
  double item() const;

  void zero_grad();

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

  /// Builds a result node. `backward` is only attached when some parent needs gradients.
  static Tensor make_result(Matrix value, Shape shape, std::vector<Tensor> parents,
                            std::function<void(detail::Node&)> backward);

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

/// Reverse sweep from a scalar root. Parameter (leaf) gradients accumulate
/// across calls; intermediate gradients are reset at the start of each call.
void backward(const Tensor& loss);

}  // namespace heatcast

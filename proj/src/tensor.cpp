#include "heatcast/tensor.hpp"

#include <sstream>
#include <unordered_set>

namespace heatcast {

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << " x ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_storage(const Matrix& values, const Shape& shape) {
  Eigen::Index rows = 1, cols = 1;
  if (shape.size() == 1) {
    cols = shape[0];
  } else if (shape.size() == 2) {
    rows = shape[0];
    cols = shape[1];
  } else if (!shape.empty()) {
    throw DimensionError("tensors are limited to rank 2, got " + shape_string(shape));
  }
  for (auto e : shape)
    if (e <= 0) throw DimensionError("non-positive extent in " + shape_string(shape));
  if (values.rows() != rows || values.cols() != cols)
    throw DimensionError("storage " + std::to_string(values.rows()) + "x" +
                         std::to_string(values.cols()) + " does not match shape " +
                         shape_string(shape));
}

}  // namespace

Tensor Tensor::constant(Matrix values, Shape shape) {
  check_storage(values, shape);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  return Tensor(std::move(node));
}

Tensor Tensor::constant(Matrix values) {
  Shape shape{values.rows(), values.cols()};
  return constant(std::move(values), std::move(shape));
}

Tensor Tensor::parameter(Matrix values, Shape shape) {
  Tensor t = constant(std::move(values), std::move(shape));
  t.node_->requires_grad = true;
  t.node_->grad = Matrix::Zero(t.rows(), t.cols());
  return t;
}

Tensor Tensor::parameter(Matrix values) {
  Shape shape{values.rows(), values.cols()};
  return parameter(std::move(values), std::move(shape));
}

Tensor Tensor::scalar(double v) {
  Matrix m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m), Shape{});
}

Tensor Tensor::vector(const std::vector<double>& v, bool requires_grad) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) m(0, static_cast<Eigen::Index>(i)) = v[i];
  Shape shape{static_cast<Eigen::Index>(v.size())};
  return requires_grad ? parameter(std::move(m), std::move(shape))
                       : constant(std::move(m), std::move(shape));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  Eigen::Index rows = shape.size() == 2 ? shape[0] : 1;
  Eigen::Index cols = shape.size() == 2 ? shape[1] : (shape.size() == 1 ? shape[0] : 1);
  Matrix m = Matrix::Zero(rows, cols);
  return requires_grad ? parameter(std::move(m), std::move(shape))
                       : constant(std::move(m), std::move(shape));
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
  return node_->value(0, 0);
}

void Tensor::zero_grad() {
  if (node_->requires_grad) node_->grad.setZero(rows(), cols());
}

Tensor Tensor::make_result(Matrix value, Shape shape, std::vector<Tensor> parents,
                           std::function<void(detail::Node&)> backward) {
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.requires_grad();
  if (needs) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1)
    throw DimensionError("backward requires a scalar root, got " +
                         (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
  detail::Node* root = loss.node();
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack{{root, 0}};
  seen.insert(root);
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  for (detail::Node* n : order)
    if (n->backward) n->grad.setZero(n->value.rows(), n->value.cols());
  root->grad(0, 0) += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward) (*it)->backward(**it);
}

}  // namespace heatcast

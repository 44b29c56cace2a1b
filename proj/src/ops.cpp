#include "heatcast/ops.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace heatcast {

namespace {

using detail::Node;

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

void accumulate(Node& p, const Matrix& g) {
  if (p.requires_grad) p.grad.noalias() += g;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
}

bool is_scalar(const Tensor& t) { return t.size() == 1 && t.rank() == 0; }

Shape matrix_shape(Eigen::Index r, Eigen::Index c) { return Shape{r, c}; }

// Shape for row-vector-like results: keeps rank 1 when the source was rank 1.
Shape shape_like(const Tensor& src, Eigen::Index rows, Eigen::Index cols) {
  if (src.rank() <= 1 && rows == 1) return Shape{cols};
  return matrix_shape(rows, cols);
}

void check_finite(const Matrix& m, const char* op) {
  if (!m.allFinite()) throw std::domain_error(std::string(op) + ": non-finite input");
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() == 0 || b.rank() != 2 || a.cols() != b.rows())
    throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) + " by " +
                         shape_string(b.shape()));
  Matrix out = a.value() * b.value();
  Shape shape = shape_like(a, out.rows(), out.cols());
  return Tensor::make_result(std::move(out), std::move(shape), {a, b}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) pa.grad.noalias() += self.grad * pb.value.transpose();
    if (pb.requires_grad) pb.grad.noalias() += pa.value.transpose() * self.grad;
  });
}

Tensor transpose(const Tensor& x) {
  Matrix out = x.value().transpose();
  return Tensor::make_result(std::move(out), matrix_shape(x.cols(), x.rows()), {x},
                             [](Node& self) { accumulate(parent(self, 0), self.grad.transpose()); });
}

Tensor sparse_matmul(const SparseMatrix& a, const Tensor& x) {
  if (a.cols() != x.rows())
    throw DimensionError("sparse_matmul: cannot multiply [" + std::to_string(a.rows()) + " x " +
                         std::to_string(a.cols()) + "] by " + shape_string(x.shape()));
  Matrix out = a * x.value();
  Shape shape = matrix_shape(out.rows(), out.cols());
  return Tensor::make_result(std::move(out), std::move(shape), {x},
                             [at = SparseMatrix(a.transpose())](Node& self) {
    Node& px = parent(self, 0);
    if (px.requires_grad) px.grad.noalias() += at * self.grad;
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (is_scalar(b) && !is_scalar(a)) {
    Matrix out = a.value().array() + b.value()(0, 0);
    return Tensor::make_result(std::move(out), a.shape(), {a, b}, [](Node& self) {
      accumulate(parent(self, 0), self.grad);
      Node& pb = parent(self, 1);
      if (pb.requires_grad) pb.grad(0, 0) += self.grad.sum();
    });
  }
  if (is_scalar(a) && !is_scalar(b)) return add(b, a);
  require_same_shape(a, b, "add");
  Matrix out = a.value() + b.value();
  return Tensor::make_result(std::move(out), a.shape(), {a, b}, [](Node& self) {
    accumulate(parent(self, 0), self.grad);
    accumulate(parent(self, 1), self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Matrix out = a.value() - b.value();
  return Tensor::make_result(std::move(out), a.shape(), {a, b}, [](Node& self) {
    accumulate(parent(self, 0), self.grad);
    Node& pb = parent(self, 1);
    if (pb.requires_grad) pb.grad -= self.grad;
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (is_scalar(b) && !is_scalar(a)) {
    Matrix out = a.value() * b.value()(0, 0);
    return Tensor::make_result(std::move(out), a.shape(), {a, b}, [](Node& self) {
      Node& pa = parent(self, 0);
      Node& pb = parent(self, 1);
      if (pa.requires_grad) pa.grad += self.grad * pb.value(0, 0);
      if (pb.requires_grad) pb.grad(0, 0) += self.grad.cwiseProduct(pa.value).sum();
    });
  }
  if (is_scalar(a) && !is_scalar(b)) return mul(b, a);
  require_same_shape(a, b, "mul");
  Matrix out = a.value().cwiseProduct(b.value());
  return Tensor::make_result(std::move(out), a.shape(), {a, b}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) pa.grad += self.grad.cwiseProduct(pb.value);
    if (pb.requires_grad) pb.grad += self.grad.cwiseProduct(pa.value);
  });
}

Tensor add(const Tensor& a, double s) {
  Matrix out = a.value().array() + s;
  return Tensor::make_result(std::move(out), a.shape(), {a},
                             [](Node& self) { accumulate(parent(self, 0), self.grad); });
}

Tensor mul(const Tensor& a, double s) {
  Matrix out = a.value() * s;
  return Tensor::make_result(std::move(out), a.shape(), {a}, [s](Node& self) {
    Node& pa = parent(self, 0);
    if (pa.requires_grad) pa.grad += self.grad * s;
  });
}

Tensor relu(const Tensor& x) {
  Matrix out = x.value().cwiseMax(0.0);
  return Tensor::make_result(std::move(out), x.shape(), {x}, [](Node& self) {
    Node& px = parent(self, 0);
    if (px.requires_grad)
      px.grad.array() += (px.value.array() > 0.0).select(self.grad.array(), 0.0);
  });
}

Tensor tanh(const Tensor& x) {
  Matrix out = x.value().array().tanh();
  return Tensor::make_result(std::move(out), x.shape(), {x}, [](Node& self) {
    Node& px = parent(self, 0);
    if (px.requires_grad)
      px.grad.array() += self.grad.array() * (1.0 - self.value.array().square());
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols())
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not fit " +
                         shape_string(x.shape()));
  Matrix out = x.value().rowwise() + bias.value().row(0);
  return Tensor::make_result(std::move(out), x.shape(), {x, bias}, [](Node& self) {
    accumulate(parent(self, 0), self.grad);
    Node& pb = parent(self, 1);
    if (pb.requires_grad) pb.grad.row(0) += self.grad.colwise().sum();
  });
}

Tensor softmax(const Tensor& x) {
  if (x.size() == 0) throw DimensionError("softmax: empty input");
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.value().row(r).maxCoeff();
    out.row(r) = (x.value().row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return Tensor::make_result(std::move(out), x.shape(), {x}, [](Node& self) {
    Node& px = parent(self, 0);
    if (!px.requires_grad) return;
    for (Eigen::Index r = 0; r < self.value.rows(); ++r) {
      const double dot = self.grad.row(r).dot(self.value.row(r));
      px.grad.row(r).array() += self.value.row(r).array() * (self.grad.row(r).array() - dot);
    }
  });
}

Tensor reduce_max_over_set(const Tensor& x, const std::vector<bool>& mask) {
  if (static_cast<Eigen::Index>(mask.size()) != x.rows())
    throw DimensionError("reduce_max_over_set: mask length " + std::to_string(mask.size()) +
                         " vs " + shape_string(x.shape()));
  const Eigen::Index d = x.cols();
  Matrix out(1, d);
  std::vector<Eigen::Index> arg(static_cast<std::size_t>(d), -1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    if (!mask[static_cast<std::size_t>(r)]) continue;
    for (Eigen::Index c = 0; c < d; ++c) {
      auto& a = arg[static_cast<std::size_t>(c)];
      if (a < 0 || x.value()(r, c) > out(0, c)) {
        a = r;
        out(0, c) = x.value()(r, c);
      }
    }
  }
  if (d > 0 && arg[0] < 0) throw std::invalid_argument("reduce_max_over_set: all rows masked");
  return Tensor::make_result(std::move(out), Shape{d}, {x}, [arg = std::move(arg)](Node& self) {
    Node& px = parent(self, 0);
    if (!px.requires_grad) return;
    for (std::size_t c = 0; c < arg.size(); ++c)
      px.grad(arg[c], static_cast<Eigen::Index>(c)) += self.grad(0, static_cast<Eigen::Index>(c));
  });
}

Tensor reduce_max_over_set(const Tensor& x) {
  return reduce_max_over_set(x, std::vector<bool>(static_cast<std::size_t>(x.rows()), true));
}

Tensor sum(const Tensor& x) {
  return Tensor::make_result(Matrix::Constant(1, 1, x.value().sum()), Shape{}, {x},
                             [](Node& self) {
                               Node& px = parent(self, 0);
                               if (px.requires_grad) px.grad.array() += self.grad(0, 0);
                             });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.size());
  return Tensor::make_result(Matrix::Constant(1, 1, x.value().sum() / n), Shape{}, {x},
                             [n](Node& self) {
                               Node& px = parent(self, 0);
                               if (px.requires_grad) px.grad.array() += self.grad(0, 0) / n;
                             });
}

Tensor reshape(const Tensor& x, Shape shape) {
  Eigen::Index rows = shape.size() == 2 ? shape[0] : 1;
  Eigen::Index cols = shape.size() == 2 ? shape[1] : (shape.size() == 1 ? shape[0] : 1);
  if (rows * cols != x.size())
    throw DimensionError("reshape: " + shape_string(x.shape()) + " to " + shape_string(shape));
  Matrix out = Eigen::Map<const Matrix>(x.value().data(), rows, cols);
  return Tensor::make_result(std::move(out), std::move(shape), {x}, [](Node& self) {
    Node& px = parent(self, 0);
    if (px.requires_grad)
      px.grad += Eigen::Map<const Matrix>(self.grad.data(), px.value.rows(), px.value.cols());
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  bool all_vectors = true;
  for (const auto& p : parts) {
    if (p.rows() != rows)
      throw DimensionError("concat_cols: row mismatch " + shape_string(parts.front().shape()) +
                           " vs " + shape_string(p.shape()));
    cols += p.cols();
    all_vectors = all_vectors && p.rank() <= 1;
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  Shape shape = all_vectors ? Shape{cols} : matrix_shape(rows, cols);
  return Tensor::make_result(std::move(out), std::move(shape), parts,
                             [offsets = std::move(offsets)](Node& self) {
                               for (std::size_t i = 0; i < offsets.size(); ++i) {
                                 Node& p = parent(self, i);
                                 if (p.requires_grad)
                                   p.grad += self.grad.middleCols(offsets[i], p.value.cols());
                               }
                             });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const Eigen::Index cols = parts.front().cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols)
      throw DimensionError("concat_rows: column mismatch " +
                           shape_string(parts.front().shape()) + " vs " + shape_string(p.shape()));
    rows += p.rows();
  }
  Matrix out(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  return Tensor::make_result(std::move(out), matrix_shape(rows, cols), parts,
                             [offsets = std::move(offsets)](Node& self) {
                               for (std::size_t i = 0; i < offsets.size(); ++i) {
                                 Node& p = parent(self, i);
                                 if (p.requires_grad)
                                   p.grad += self.grad.middleRows(offsets[i], p.value.rows());
                               }
                             });
}

Tensor slice_rows(const Tensor& x, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count <= 0 || begin + count > x.rows())
    throw DimensionError("slice_rows: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                         ") out of " + shape_string(x.shape()));
  Matrix out = x.value().middleRows(begin, count);
  return Tensor::make_result(std::move(out), shape_like(x, count, x.cols()), {x},
                             [begin, count](Node& self) {
                               Node& px = parent(self, 0);
                               if (px.requires_grad) px.grad.middleRows(begin, count) += self.grad;
                             });
}

Tensor slice_cols(const Tensor& x, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count <= 0 || begin + count > x.cols())
    throw DimensionError("slice_cols: [" + std::to_string(begin) + ", +" + std::to_string(count) +
                         ") out of " + shape_string(x.shape()));
  Matrix out = x.value().middleCols(begin, count);
  return Tensor::make_result(std::move(out), shape_like(x, x.rows(), count), {x},
                             [begin, count](Node& self) {
                               Node& px = parent(self, 0);
                               if (px.requires_grad) px.grad.middleCols(begin, count) += self.grad;
                             });
}

Tensor gather_rows(const Tensor& x, std::span<const Eigen::Index> rows) {
  if (rows.empty()) throw DimensionError("gather_rows: empty index list");
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= x.rows())
      throw DimensionError("gather_rows: index " + std::to_string(rows[i]) + " out of " +
                           shape_string(x.shape()));
    out.row(static_cast<Eigen::Index>(i)) = x.value().row(rows[i]);
  }
  Shape shape = matrix_shape(static_cast<Eigen::Index>(rows.size()), x.cols());
  std::vector<Eigen::Index> idx(rows.begin(), rows.end());
  return Tensor::make_result(std::move(out), std::move(shape), {x}, [idx = std::move(idx)](Node& self) {
                               Node& px = parent(self, 0);
                               if (!px.requires_grad) return;
                               for (std::size_t i = 0; i < idx.size(); ++i)
                                 px.grad.row(idx[i]) += self.grad.row(static_cast<Eigen::Index>(i));
                             });
}

Tensor tile_rows(const Tensor& v, Eigen::Index m) {
  if (v.rows() != 1) throw DimensionError("tile_rows: expects one row, got " + shape_string(v.shape()));
  Matrix out = v.value().replicate(m, 1);
  return Tensor::make_result(std::move(out), matrix_shape(m, v.cols()), {v}, [](Node& self) {
    Node& pv = parent(self, 0);
    if (pv.requires_grad) pv.grad.row(0) += self.grad.colwise().sum();
  });
}

Tensor shift_rows(const Tensor& x, Eigen::Index k) {
  const Eigen::Index n = x.rows();
  Matrix out = Matrix::Zero(n, x.cols());
  const Eigen::Index len = n - std::abs(k);
  if (len > 0) {
    if (k >= 0) out.bottomRows(len) = x.value().topRows(len);
    else out.topRows(len) = x.value().bottomRows(len);
  }
  return Tensor::make_result(std::move(out), x.shape(), {x}, [k, len](Node& self) {
    Node& px = parent(self, 0);
    if (!px.requires_grad || len <= 0) return;
    if (k >= 0) px.grad.topRows(len) += self.grad.bottomRows(len);
    else px.grad.bottomRows(len) += self.grad.topRows(len);
  });
}

Tensor smooth_l1(const Tensor& pred, const Matrix& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw DimensionError("smooth_l1: prediction " + shape_string(pred.shape()) + " vs target " +
                         std::to_string(target.rows()) + "x" + std::to_string(target.cols()));
  check_finite(pred.value(), "smooth_l1");
  check_finite(target, "smooth_l1");
  const Matrix diff = pred.value() - target;
  const double rows = static_cast<double>(pred.rows());
  const double loss =
      diff.unaryExpr([](double x) { return std::abs(x) < 1.0 ? 0.5 * x * x : std::abs(x) - 0.5; })
          .sum() / rows;
  return Tensor::make_result(Matrix::Constant(1, 1, loss), Shape{}, {pred},
                             [diff, rows](Node& self) {
                               Node& p = parent(self, 0);
                               if (!p.requires_grad) return;
                               const double g = self.grad(0, 0) / rows;
                               p.grad += diff.unaryExpr([g](double x) {
                                 return g * (std::abs(x) < 1.0 ? x : (x > 0 ? 1.0 : -1.0));
                               });
                             });
}

Tensor binary_ce(const Tensor& logits, const Matrix& targets) {
  if (logits.rows() != targets.rows() || logits.cols() != targets.cols())
    throw DimensionError("binary_ce: logits " + shape_string(logits.shape()) + " vs targets " +
                         std::to_string(targets.rows()) + "x" + std::to_string(targets.cols()));
  check_finite(logits.value(), "binary_ce");
  check_finite(targets, "binary_ce");
  const double n = static_cast<double>(logits.size());
  // log(1 + e^z) - y z, written to avoid overflow.
  const Matrix& z = logits.value();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    const double zi = z.data()[i];
    loss += std::max(zi, 0.0) - zi * targets.data()[i] + std::log1p(std::exp(-std::abs(zi)));
  }
  loss /= n;
  return Tensor::make_result(Matrix::Constant(1, 1, loss), Shape{}, {logits},
                             [targets, n](Node& self) {
                               Node& p = parent(self, 0);
                               if (!p.requires_grad) return;
                               const double g = self.grad(0, 0) / n;
                               Matrix sig = (1.0 + (-p.value.array()).exp()).inverse();
                               p.grad += g * (sig - targets);
                             });
}

Tensor categorical_ce(const Tensor& logits, Eigen::Index target) {
  if (logits.rows() != 1 || target < 0 || target >= logits.cols())
    throw DimensionError("categorical_ce: target " + std::to_string(target) + " for logits " +
                         shape_string(logits.shape()));
  check_finite(logits.value(), "categorical_ce");
  const auto z = logits.value().row(0);
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  const double loss = lse - z(target);
  return Tensor::make_result(Matrix::Constant(1, 1, loss), Shape{}, {logits},
                             [target, lse](Node& self) {
                               Node& p = parent(self, 0);
                               if (!p.requires_grad) return;
                               Matrix g = (p.value.array() - lse).exp();
                               g(0, target) -= 1.0;
                               p.grad += self.grad(0, 0) * g;
                             });
}

}  // namespace heatcast

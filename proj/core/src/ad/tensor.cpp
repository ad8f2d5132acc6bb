#include "cdm/ad/tensor.hpp"

#include <cmath>
#include <string>
#include <unordered_set>

#include "cdm/error.hpp"

namespace cdm::ad {
namespace {

thread_local int no_grad_depth = 0;

std::string shape_str(const Mat& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

[[noreturn]] void shape_error(std::string_view op, const Mat& a, const Mat& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_str(a) + " and " +
                       shape_str(b));
}

void require_same_shape(std::string_view op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_error(op, a.value(), b.value());
}

// Creates the result node. Parents are only recorded when some parent needs a
// gradient and recording is enabled.
Tensor make_node(std::string_view op, Mat value, std::initializer_list<Tensor> parents,
                 std::function<void(Node&)> backward_fn) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = op;
  bool needs = false;
  for (const auto& p : parents) needs = needs || p.requires_grad();
  if (needs && grad_enabled()) {
    node->requires_grad = true;
    for (const auto& p : parents) node->parents.push_back(p.shared());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

Mat& pgrad(Node& n, std::size_t i) { return n.parents[i]->grad_buffer(); }
bool pneeds(const Node& n, std::size_t i) { return n.parents[i]->requires_grad; }

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

Mat& Node::grad_buffer() {
  if (!has_grad()) grad = Mat::Zero(value.rows(), value.cols());
  return grad;
}

Tensor Tensor::parameter(Mat value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = "parameter";
  node->requires_grad = true;
  return Tensor(std::move(node));
}

Tensor Tensor::constant(Mat value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->op = "constant";
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double v) { return constant(Mat::Constant(1, 1, v)); }

Mat Tensor::grad() const {
  if (node_->has_grad()) return node_->grad;
  return Mat::Zero(node_->value.rows(), node_->value.cols());
}

double Tensor::item() const {
  if (node_->value.size() != 1)
    throw ContractError("item: tensor is " + shape_str(node_->value) + ", not a scalar");
  return node_->value(0, 0);
}

NoGradGuard::NoGradGuard() { ++no_grad_depth; }
NoGradGuard::~NoGradGuard() { --no_grad_depth; }
bool grad_enabled() { return no_grad_depth == 0; }

void backward(const Tensor& root) {
  if (root.rows() != 1 || root.cols() != 1)
    throw ContractError("backward: root must be scalar, got " + shape_str(root.value()));
  if (!root.requires_grad()) return;

  // Iterative post-order DFS; detached nodes are never entered.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root.node()->grad_buffer().array() += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->has_grad()) n->backward_fn(*n);
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  return make_node("add", a.value() + b.value(), {a, b}, [](Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) += n.grad;
    if (pneeds(n, 1)) pgrad(n, 1) += n.grad;
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  return make_node("sub", a.value() - b.value(), {a, b}, [](Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) += n.grad;
    if (pneeds(n, 1)) pgrad(n, 1) -= n.grad;
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  return make_node("mul", a.value().cwiseProduct(b.value()), {a, b}, [](Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) += n.grad.cwiseProduct(n.parents[1]->value);
    if (pneeds(n, 1)) pgrad(n, 1) += n.grad.cwiseProduct(n.parents[0]->value);
  });
}

Tensor neg(const Tensor& a) {
  return make_node("neg", -a.value(), {a}, [](Node& n) { pgrad(n, 0) -= n.grad; });
}

Tensor scale(const Tensor& a, double s) {
  return make_node("scale", s * a.value(), {a}, [s](Node& n) { pgrad(n, 0) += s * n.grad; });
}

Tensor add_row(const Tensor& a, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != a.cols()) shape_error("add_row", a.value(), row.value());
  Mat out = a.value();
  out.rowwise() += row.value().row(0);
  return make_node("add_row", std::move(out), {a, row}, [](Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0) += n.grad;
    if (pneeds(n, 1)) pgrad(n, 1) += n.grad.colwise().sum();
  });
}

Tensor mul_col(const Tensor& a, const Tensor& col) {
  if (col.cols() != 1 || col.rows() != a.rows()) shape_error("mul_col", a.value(), col.value());
  Mat out = a.value();
  for (Eigen::Index i = 0; i < out.rows(); ++i) out.row(i) *= col.value()(i, 0);
  return make_node("mul_col", std::move(out), {a, col}, [](Node& n) {
    const Mat& av = n.parents[0]->value;
    const Mat& cv = n.parents[1]->value;
    if (pneeds(n, 0)) {
      Mat& g = pgrad(n, 0);
      for (Eigen::Index i = 0; i < g.rows(); ++i) g.row(i) += cv(i, 0) * n.grad.row(i);
    }
    if (pneeds(n, 1)) pgrad(n, 1) += n.grad.cwiseProduct(av).rowwise().sum();
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a.value(), b.value());
  Mat out = a.value() * b.value();
  return make_node("matmul", std::move(out), {a, b}, [](Node& n) {
    if (pneeds(n, 0)) pgrad(n, 0).noalias() += n.grad * n.parents[1]->value.transpose();
    if (pneeds(n, 1)) pgrad(n, 1).noalias() += n.parents[0]->value.transpose() * n.grad;
  });
}

Tensor tanh(const Tensor& a) {
  Mat out = a.value().array().tanh().matrix();
  return make_node("tanh", std::move(out), {a}, [](Node& n) {
    pgrad(n, 0).array() += n.grad.array() * (1.0 - n.value.array().square());
  });
}

Tensor silu(const Tensor& a) {
  Mat out = a.value().unaryExpr([](double x) { return x * sigmoid(x); });
  return make_node("silu", std::move(out), {a}, [](Node& n) {
    const Mat& x = n.parents[0]->value;
    Mat& g = pgrad(n, 0);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double s = sigmoid(x.data()[i]);
      g.data()[i] += n.grad.data()[i] * (s + x.data()[i] * s * (1.0 - s));
    }
  });
}

Tensor square(const Tensor& a) {
  return make_node("square", a.value().cwiseAbs2(), {a}, [](Node& n) {
    pgrad(n, 0) += 2.0 * n.grad.cwiseProduct(n.parents[0]->value);
  });
}

Tensor sum(const Tensor& a) {
  return make_node("sum", Mat::Constant(1, 1, a.value().sum()), {a},
                   [](Node& n) { pgrad(n, 0).array() += n.grad(0, 0); });
}

Tensor mean(const Tensor& a) {
  const double count = static_cast<double>(a.value().size());
  if (count == 0) throw DimensionError("mean: empty tensor");
  return make_node("mean", Mat::Constant(1, 1, a.value().sum() / count), {a},
                   [count](Node& n) { pgrad(n, 0).array() += n.grad(0, 0) / count; });
}

Tensor row_sum(const Tensor& a) {
  Mat out = a.value().rowwise().sum();
  return make_node("row_sum", std::move(out), {a}, [](Node& n) {
    Mat& g = pgrad(n, 0);
    for (Eigen::Index i = 0; i < g.rows(); ++i) g.row(i).array() += n.grad(i, 0);
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) shape_error("concat_cols", parts[0].value(), p.value());
    cols += p.cols();
  }
  Mat out(rows, cols);
  std::vector<Eigen::Index> offsets;
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    offsets.push_back(off);
    off += p.cols();
  }

  auto node = std::make_shared<Node>();
  node->value = std::move(out);
  node->op = "concat_cols";
  bool needs = false;
  for (const auto& p : parts) needs = needs || p.requires_grad();
  if (needs && grad_enabled()) {
    node->requires_grad = true;
    for (const auto& p : parts) node->parents.push_back(p.shared());
    node->backward_fn = [offsets](Node& n) {
      for (std::size_t i = 0; i < n.parents.size(); ++i) {
        if (!pneeds(n, i)) continue;
        pgrad(n, i) += n.grad.middleCols(offsets[i], n.parents[i]->value.cols());
      }
    };
  }
  return Tensor(std::move(node));
}

Tensor gather_rows(const Tensor& table, std::span<const int> index) {
  Mat out(static_cast<Eigen::Index>(index.size()), table.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= table.rows())
      throw DimensionError("gather_rows: index " + std::to_string(index[i]) +
                           " out of range for table " + shape_str(table.value()));
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(index[i]);
  }
  std::vector<int> idx(index.begin(), index.end());
  return make_node("gather_rows", std::move(out), {table}, [idx = std::move(idx)](Node& n) {
    Mat& g = pgrad(n, 0);
    for (std::size_t i = 0; i < idx.size(); ++i) g.row(idx[i]) += n.grad.row(static_cast<Eigen::Index>(i));
  });
}

Tensor detach(const Tensor& a) {
  auto node = std::make_shared<Node>();
  node->value = a.value();
  node->op = "detach";
  node->detached = true;
  node->parents.push_back(a.shared());  // provenance only; never traversed
  return Tensor(std::move(node));
}

}  // namespace cdm::ad

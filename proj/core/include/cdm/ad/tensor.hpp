#pragma once

// Define-by-run reverse-mode differentiation over batch-major matrices.
//
// A Tensor is a handle to a graph node. Ops build new nodes that remember
// their parents and a closure that pushes the node's gradient into them.
// Graphs are rebuilt for every loss evaluation and released when the last
// handle goes away.

#include <functional>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

#include "cdm/matrix.hpp"

namespace cdm::ad {

struct Node {
  Mat value;
  Mat grad;  // empty until something flows into it
  std::string_view op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
  bool requires_grad = false;
  bool detached = false;

  bool has_grad() const { return grad.size() != 0; }
  // Allocates a zero gradient of the value's shape on first use.
  Mat& grad_buffer();
};

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  // Trainable leaf.
  static Tensor parameter(Mat value);
  // Leaf that never receives gradient.
  static Tensor constant(Mat value);
  static Tensor scalar(double v);

  const Mat& value() const { return node_->value; }
  Mat& mutable_value() { return node_->value; }
  // Zero matrix of the value's shape when no gradient has been accumulated.
  Mat grad() const;
  bool has_grad() const { return node_->has_grad(); }
  void zero_grad() { node_->grad.resize(0, 0); }

  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  bool detached() const { return node_->detached; }
  std::string_view op() const { return node_->op; }

  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

// While alive on this thread, ops record no parents (pure evaluation).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};
bool grad_enabled();

// Accumulates d(root)/d(leaf) into every requires-grad leaf reachable from
// root. Each node is visited once, in reverse topological order. Throws
// ContractError if root is not 1x1.
void backward(const Tensor& root);

// --- ops --------------------------------------------------------------------
// Shapes: elementwise ops need equal shapes; *_col broadcasts a (B x 1) column
// across features and *_row broadcasts a (1 x F) row across the batch.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double s);
Tensor add_row(const Tensor& a, const Tensor& row);
Tensor mul_col(const Tensor& a, const Tensor& col);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor tanh(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Per-row sum, (B x F) -> (B x 1).
Tensor row_sum(const Tensor& a);
Tensor concat_cols(std::span<const Tensor> parts);
// Row lookup into an embedding table; gradients scatter-add back.
Tensor gather_rows(const Tensor& table, std::span<const int> index);
// Stop-gradient: same value, zero gradient to everything upstream.
Tensor detach(const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

}  // namespace cdm::ad

#pragma once

// Random differentiable tensor programs and a central-difference gradient
// checker, used as an independent oracle for reverse-mode differentiation.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "cdm/ad/tensor.hpp"
#include "cdm/rng.hpp"

namespace cdm::testing {

struct Slot {
  enum Kind { leaf, add, sub, mul, neg, scale, tanh, silu, square, matmul, add_row, mul_col, concat, gather, row_sum, detach };
  Kind kind = leaf;
  int a = -1, b = -1;  // operand slots
  int leaf_index = -1;
  double factor = 0.0;
  std::vector<int> index;  // gather rows
};

struct RandomProgram {
  std::vector<Mat> leaves;
  std::vector<Slot> slots;
  bool use_mean = false;
  std::string description;

  // Replays the program on the given leaf tensors and returns the scalar
  // output. With `frozen`, detach slots take those values (in slot order)
  // instead of their inputs; `captured` receives each detach slot's value.
  ad::Tensor run(const std::vector<ad::Tensor>& leaf, const std::vector<Mat>* frozen = nullptr,
                 std::vector<Mat>* captured = nullptr) const {
    std::size_t detach_count = 0;
    std::vector<ad::Tensor> v;
    v.reserve(slots.size());
    for (const Slot& s : slots) {
      switch (s.kind) {
        case Slot::leaf: v.push_back(leaf[static_cast<std::size_t>(s.leaf_index)]); break;
        case Slot::add: v.push_back(ad::add(v[s.a], v[s.b])); break;
        case Slot::sub: v.push_back(ad::sub(v[s.a], v[s.b])); break;
        case Slot::mul: v.push_back(ad::mul(v[s.a], v[s.b])); break;
        case Slot::neg: v.push_back(ad::neg(v[s.a])); break;
        case Slot::scale: v.push_back(ad::scale(v[s.a], s.factor)); break;
        case Slot::tanh: v.push_back(ad::tanh(v[s.a])); break;
        case Slot::silu: v.push_back(ad::silu(v[s.a])); break;
        case Slot::square: v.push_back(ad::square(v[s.a])); break;
        case Slot::matmul: v.push_back(ad::matmul(v[s.a], v[s.b])); break;
        case Slot::add_row: v.push_back(ad::add_row(v[s.a], v[s.b])); break;
        case Slot::mul_col: v.push_back(ad::mul_col(v[s.a], v[s.b])); break;
        case Slot::concat: {
          const ad::Tensor parts[] = {v[s.a], v[s.b]};
          v.push_back(ad::concat_cols(parts));
          break;
        }
        case Slot::gather: v.push_back(ad::gather_rows(v[s.a], s.index)); break;
        case Slot::row_sum: v.push_back(ad::row_sum(v[s.a])); break;
        case Slot::detach:
          v.push_back(frozen ? ad::Tensor::constant((*frozen)[detach_count]) : ad::detach(v[s.a]));
          if (captured) captured->push_back(v.back().value());
          ++detach_count;
          break;
      }
    }
    return use_mean ? ad::mean(v.back()) : ad::sum(v.back());
  }

  double value(const std::vector<Mat>& leaf_values, const std::vector<Mat>* frozen = nullptr) const {
    ad::NoGradGuard guard;
    std::vector<ad::Tensor> t;
    for (const auto& m : leaf_values) t.push_back(ad::Tensor::constant(m));
    return run(t, frozen).item();
  }
};

inline RandomProgram make_random_program(Rng& rng) {
  RandomProgram p;
  const int rows = rng.uniform_int(1, 4);
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shape;  // per slot

  auto new_leaf = [&](Eigen::Index r, Eigen::Index c) {
    p.leaves.push_back(0.8 * rng.normal(r, c));
    Slot s;
    s.leaf_index = static_cast<int>(p.leaves.size()) - 1;
    p.slots.push_back(s);
    shape.emplace_back(r, c);
    return static_cast<int>(p.slots.size()) - 1;
  };
  auto push = [&](Slot s, Eigen::Index r, Eigen::Index c) {
    p.slots.push_back(std::move(s));
    shape.emplace_back(r, c);
    return static_cast<int>(p.slots.size()) - 1;
  };
  // A batch-shaped slot (rows x anything), chosen uniformly.
  auto pick = [&]() {
    std::vector<int> ok;
    for (int i = 0; i < static_cast<int>(shape.size()); ++i)
      if (shape[static_cast<std::size_t>(i)].first == rows) ok.push_back(i);
    return ok[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(ok.size()) - 1))];
  };
  auto same_shape = [&](int a) {
    std::vector<int> ok;
    for (int i = 0; i < static_cast<int>(shape.size()); ++i)
      if (i != a && shape[static_cast<std::size_t>(i)] == shape[static_cast<std::size_t>(a)]) ok.push_back(i);
    if (ok.empty() || rng.uniform() < 0.3) return new_leaf(shape[static_cast<std::size_t>(a)].first, shape[static_cast<std::size_t>(a)].second);
    return ok[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(ok.size()) - 1))];
  };

  new_leaf(rows, rng.uniform_int(1, 3));
  const int ops = rng.uniform_int(3, 10);
  static const char* names[] = {"add", "sub", "mul", "neg", "scale", "tanh", "silu", "square",
                                "matmul", "add_row", "mul_col", "concat", "gather", "row_sum", "detach"};
  for (int k = 0; k < ops; ++k) {
    const int a = pick();
    const auto [r, c] = shape[static_cast<std::size_t>(a)];
    const int op = rng.uniform_int(0, 14);
    Slot s;
    s.a = a;
    switch (op) {
      case 0: s.kind = Slot::add; s.b = same_shape(a); push(s, r, c); break;
      case 1: s.kind = Slot::sub; s.b = same_shape(a); push(s, r, c); break;
      case 2: s.kind = Slot::mul; s.b = same_shape(a); push(s, r, c); break;
      case 3: s.kind = Slot::neg; push(s, r, c); break;
      case 4: s.kind = Slot::scale; s.factor = rng.uniform(-2.0, 2.0); push(s, r, c); break;
      case 5: s.kind = Slot::tanh; push(s, r, c); break;
      case 6: s.kind = Slot::silu; push(s, r, c); break;
      case 7: s.kind = Slot::square; push(s, r, c); break;
      case 8: {
        const int g = rng.uniform_int(1, 3);
        s.kind = Slot::matmul;
        s.b = new_leaf(c, g);
        push(s, r, g);
        break;
      }
      case 9: s.kind = Slot::add_row; s.b = new_leaf(1, c); push(s, r, c); break;
      case 10: {
        s.kind = Slot::mul_col;
        std::vector<int> cols;
        for (int i = 0; i < static_cast<int>(shape.size()); ++i)
          if (shape[static_cast<std::size_t>(i)] == std::make_pair<Eigen::Index, Eigen::Index>(rows, 1)) cols.push_back(i);
        s.b = cols.empty() || rng.uniform() < 0.4 ? new_leaf(rows, 1)
                                                   : cols[static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(cols.size()) - 1))];
        push(s, r, c);
        break;
      }
      case 11: {
        s.kind = Slot::concat;
        s.b = pick();
        push(s, r, c + shape[static_cast<std::size_t>(s.b)].second);
        break;
      }
      case 12: {
        const int table_rows = rng.uniform_int(1, 4);
        s.kind = Slot::gather;
        s.a = new_leaf(table_rows, rng.uniform_int(1, 3));
        for (int i = 0; i < rows; ++i) s.index.push_back(rng.uniform_int(0, table_rows - 1));
        push(s, rows, shape[static_cast<std::size_t>(s.a)].second);
        break;
      }
      case 13: s.kind = Slot::row_sum; push(s, r, 1); break;
      default: s.kind = Slot::detach; push(s, r, c); break;
    }
    p.description += std::string(k ? " " : "") + names[op];
  }
  p.use_mean = rng.uniform() < 0.5;
  return p;
}

struct GradCheck {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  double max_abs_grad = 0.0;
  // Every leaf is within rtol relative error or within the absolute floor.
  bool passed = true;
};

// Compares reverse-mode gradients of every leaf with central differences of
// the program whose detached subexpressions are held at their values at the
// base point. Per leaf, with e = ||g_ad - g_fd||: passes if e / ||g_fd|| <= rtol
// or e <= floor.
inline GradCheck check_gradients(const RandomProgram& p, double h = 1e-5, double rtol = 1e-4,
                                 double floor = 1e-8) {
  std::vector<ad::Tensor> leaves;
  for (const auto& m : p.leaves) leaves.push_back(ad::Tensor::parameter(m));
  std::vector<Mat> frozen;
  ad::backward(p.run(leaves, nullptr, &frozen));

  GradCheck out;
  std::vector<Mat> values = p.leaves;
  for (std::size_t k = 0; k < values.size(); ++k) {
    Mat fd(values[k].rows(), values[k].cols());
    for (Eigen::Index i = 0; i < values[k].size(); ++i) {
      const double x = values[k].data()[i];
      const double step = h * std::max(1.0, std::abs(x));
      values[k].data()[i] = x + step;
      const double up = p.value(values, &frozen);
      values[k].data()[i] = x - step;
      const double down = p.value(values, &frozen);
      values[k].data()[i] = x;
      fd.data()[i] = (up - down) / (2.0 * step);
    }
    const Mat g = leaves[k].grad();
    const double err = (g - fd).norm();
    const double rel = err / std::max(fd.norm(), std::numeric_limits<double>::min());
    out.max_rel_error = std::max(out.max_rel_error, err <= floor ? 0.0 : rel);
    out.max_abs_error = std::max(out.max_abs_error, err);
    out.passed = out.passed && (rel <= rtol || err <= floor);
    out.max_abs_grad = std::max(out.max_abs_grad, g.cwiseAbs().maxCoeff());
  }
  return out;
}

}  // namespace cdm::testing

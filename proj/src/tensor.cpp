#include "ctcn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>
#include <utility>

namespace ctcn {

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until first needed
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  BackwardFn backward;
};
}  // namespace detail

using detail::Node;

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape, std::size_t n, bool check_count = true) {
  for (auto e : shape) {
    if (e == 0) throw std::invalid_argument("tensor extents must be positive, got " + shape_str(shape));
  }
  if (check_count && shape_numel(shape) != n) {
    throw std::invalid_argument("shape " + shape_str(shape) + " does not match " +
                                std::to_string(n) + " values");
  }
}

}  // namespace

Tensor::Tensor() : Tensor(Shape{1}, 0.0) {}

Tensor::Tensor(Shape shape, double fill)
    : Tensor(std::move(shape), std::vector<double>()) {
  node_->data.assign(shape_numel(node_->shape), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : node_(std::make_shared<Node>()) {
  check_shape(shape, values.size(), !values.empty());
  node_->shape = std::move(shape);
  node_->data = std::move(values);
}

Tensor::Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t(std::move(shape), std::move(values));
  t.set_requires_grad(true);
  return t;
}

Tensor Tensor::from_op(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                       BackwardFn backward) {
  check_shape(shape, values.size());
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  bool any = std::any_of(inputs.begin(), inputs.end(),
                         [](const Tensor& t) { return t.requires_grad(); });
  if (any) {
    node->requires_grad = true;
    node->backward = std::move(backward);
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node_);
  }
  return Tensor(std::move(node));
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::extent(std::size_t axis) const {
  if (axis >= rank()) {
    throw std::out_of_range("axis " + std::to_string(axis) + " out of range for shape " +
                            shape_str(shape()));
  }
  return node_->shape[axis];
}

std::size_t Tensor::numel() const { return node_->data.size(); }
std::span<const double> Tensor::data() const { return node_->data; }
std::span<double> Tensor::mutable_data() { return node_->data; }

double Tensor::item() const {
  if (numel() != 1) {
    throw std::invalid_argument("item() on tensor of shape " + shape_str(shape()));
  }
  return node_->data[0];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  if (!is_leaf()) throw std::logic_error("requires_grad can only be set on leaf tensors");
  node_->requires_grad = on;
}

bool Tensor::is_leaf() const { return !node_->backward; }
bool Tensor::has_grad() const { return !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }

std::span<double> Tensor::mutable_grad() {
  if (node_->grad.empty()) node_->grad.assign(numel(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

Tensor Tensor::detach() const { return Tensor(shape(), node_->data); }

void Tensor::backward() const {
  if (numel() != 1) {
    throw std::invalid_argument("backward() needs a scalar loss, got shape " + shape_str(shape()));
  }
  if (!requires_grad()) return;

  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->inputs.size()) {
      Node* child = node->inputs[next++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (n->backward) n->grad.assign(n->data.size(), 0.0);
  }
  if (node_->grad.empty()) node_->grad.assign(1, 0.0);
  node_->grad[0] += 1.0;

  std::vector<std::span<double>> spans;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (!n->backward) continue;
    spans.clear();
    for (auto& in : n->inputs) {
      if (in->requires_grad) {
        if (in->grad.empty()) in->grad.assign(in->data.size(), 0.0);
        spans.emplace_back(in->grad);
      } else {
        spans.emplace_back();
      }
    }
    n->backward(n->grad, spans);
  }
}

// ---- elementwise -----------------------------------------------------------

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
  if (b.numel() == 1 && a.numel() != 1) {
    // scalar broadcast keeps b in the graph
    auto ad = a.data();
    const double s = b.item();
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      switch (op) {
        case BinaryOp::Add: out[i] = ad[i] + s; break;
        case BinaryOp::Sub: out[i] = ad[i] - s; break;
        case BinaryOp::Mul: out[i] = ad[i] * s; break;
      }
    }
    return Tensor::from_op(a.shape(), std::move(out), {a, b},
                           [op, a, b](std::span<const double> g, std::span<const std::span<double>> gi) {
                             auto ad = a.data();
                             const double s = b.item();
                             for (std::size_t i = 0; i < g.size(); ++i) {
                               double da = op == BinaryOp::Mul ? g[i] * s : g[i];
                               double db = op == BinaryOp::Mul ? g[i] * ad[i]
                                           : op == BinaryOp::Sub ? -g[i] : g[i];
                               if (!gi[0].empty()) gi[0][i] += da;
                               if (!gi[1].empty()) gi[1][0] += db;
                             }
                           });
  }
  if (a.shape() != b.shape()) {
    throw std::invalid_argument("elementwise shape mismatch: " + shape_str(a.shape()) + " vs " +
                                shape_str(b.shape()));
  }
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (op) {
      case BinaryOp::Add: out[i] = ad[i] + bd[i]; break;
      case BinaryOp::Sub: out[i] = ad[i] - bd[i]; break;
      case BinaryOp::Mul: out[i] = ad[i] * bd[i]; break;
    }
  }
  return Tensor::from_op(a.shape(), std::move(out), {a, b},
                         [op, a, b](std::span<const double> g, std::span<const std::span<double>> gi) {
                           auto ad = a.data();
                           auto bd = b.data();
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             switch (op) {
                               case BinaryOp::Add:
                                 if (!gi[0].empty()) gi[0][i] += g[i];
                                 if (!gi[1].empty()) gi[1][i] += g[i];
                                 break;
                               case BinaryOp::Sub:
                                 if (!gi[0].empty()) gi[0][i] += g[i];
                                 if (!gi[1].empty()) gi[1][i] -= g[i];
                                 break;
                               case BinaryOp::Mul:
                                 if (!gi[0].empty()) gi[0][i] += g[i] * bd[i];
                                 if (!gi[1].empty()) gi[1][i] += g[i] * ad[i];
                                 break;
                             }
                           }
                         });
}

Tensor elementwise(BinaryOp op, const Tensor& a, double b) {
  auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (op) {
      case BinaryOp::Add: out[i] = ad[i] + b; break;
      case BinaryOp::Sub: out[i] = ad[i] - b; break;
      case BinaryOp::Mul: out[i] = ad[i] * b; break;
    }
  }
  const double scale = op == BinaryOp::Mul ? b : 1.0;
  return Tensor::from_op(a.shape(), std::move(out), {a},
                         [scale](std::span<const double> g, std::span<const std::span<double>> gi) {
                           for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i] * scale;
                         });
}

Tensor elementwise(UnaryOp op, const Tensor& a) {
  auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    switch (op) {
      case UnaryOp::Neg: out[i] = -ad[i]; break;
      case UnaryOp::Exp: out[i] = std::exp(ad[i]); break;
      case UnaryOp::Log: out[i] = std::log(ad[i]); break;
      case UnaryOp::Relu: out[i] = ad[i] <= 0.0 ? 0.0 : ad[i]; break;  // NaN passes through
    }
  }
  // exp reuses its own output in the backward pass
  std::vector<double> saved = op == UnaryOp::Exp ? out : std::vector<double>{};
  return Tensor::from_op(
      a.shape(), std::move(out), {a},
      [op, a, saved = std::move(saved)](std::span<const double> g,
                                        std::span<const std::span<double>> gi) {
        auto ad = a.data();
        for (std::size_t i = 0; i < g.size(); ++i) {
          switch (op) {
            case UnaryOp::Neg: gi[0][i] -= g[i]; break;
            case UnaryOp::Exp: gi[0][i] += g[i] * saved[i]; break;
            case UnaryOp::Log: gi[0][i] += g[i] / ad[i]; break;
            case UnaryOp::Relu:
              if (ad[i] > 0.0) gi[0][i] += g[i];
              break;
          }
        }
      });
}

Tensor smooth_l1(const Tensor& a) {
  auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = ad[i];
    out[i] = std::abs(x) < 1.0 ? 0.5 * x * x : std::abs(x) - 0.5;
  }
  return Tensor::from_op(a.shape(), std::move(out), {a},
                         [a](std::span<const double> g, std::span<const std::span<double>> gi) {
                           auto ad = a.data();
                           for (std::size_t i = 0; i < g.size(); ++i) {
                             const double x = ad[i];
                             const double d = std::abs(x) < 1.0 ? x : (x > 0 ? 1.0 : -1.0);
                             gi[0][i] += g[i] * d;
                           }
                         });
}

Tensor minimum(const Tensor& a, double cap) {
  auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(ad[i], cap);
  return Tensor::from_op(a.shape(), std::move(out), {a},
                         [a, cap](std::span<const double> g, std::span<const std::span<double>> gi) {
                           auto ad = a.data();
                           for (std::size_t i = 0; i < g.size(); ++i)
                             if (ad[i] < cap) gi[0][i] += g[i];
                         });
}

// ---- structural / reductions ------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw std::invalid_argument("matmul needs rank-2 operands, got " + shape_str(a.shape()) +
                                " and " + shape_str(b.shape()));
  }
  const std::size_t n = a.extent(0), k = a.extent(1), m = b.extent(1);
  if (b.extent(0) != k) {
    throw std::invalid_argument("matmul inner extent mismatch: " + shape_str(a.shape()) + " x " +
                                shape_str(b.shape()));
  }
  auto ad = a.data();
  auto bd = b.data();
  std::vector<double> out(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ad[i * k + p];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < m; ++j) out[i * m + j] += av * bd[p * m + j];
    }
  }
  return Tensor::from_op(
      {n, m}, std::move(out), {a, b},
      [a, b, n, k, m](std::span<const double> g, std::span<const std::span<double>> gi) {
        auto ad = a.data();
        auto bd = b.data();
        if (!gi[0].empty()) {  // g * b^T
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              double acc = 0.0;
              for (std::size_t j = 0; j < m; ++j) acc += g[i * m + j] * bd[p * m + j];
              gi[0][i * k + p] += acc;
            }
        }
        if (!gi[1].empty()) {  // a^T * g
          for (std::size_t i = 0; i < n; ++i)
            for (std::size_t p = 0; p < k; ++p) {
              const double av = ad[i * k + p];
              if (av == 0.0) continue;
              for (std::size_t j = 0; j < m; ++j) gi[1][p * m + j] += av * g[i * m + j];
            }
        }
      });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return Tensor::from_op({1}, {total}, {a},
                         [](std::span<const double> g, std::span<const std::span<double>> gi) {
                           for (auto& v : gi[0]) v += g[0];
                         });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw std::invalid_argument("cannot reshape " + shape_str(a.shape()) + " to " +
                                shape_str(shape));
  }
  std::vector<double> out(a.data().begin(), a.data().end());
  return Tensor::from_op(std::move(shape), std::move(out), {a},
                         [](std::span<const double> g, std::span<const std::span<double>> gi) {
                           for (std::size_t i = 0; i < g.size(); ++i) gi[0][i] += g[i];
                         });
}

Tensor add_leading_bias(const Tensor& a, const Tensor& bias) {
  const std::size_t rows = a.extent(0);
  if (bias.numel() != rows) {
    throw std::invalid_argument("bias of shape " + shape_str(bias.shape()) +
                                " does not match leading extent of " + shape_str(a.shape()));
  }
  const std::size_t inner = a.numel() / rows;
  auto ad = a.data();
  auto bd = bias.data();
  std::vector<double> out(ad.size());
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < inner; ++i) out[r * inner + i] = ad[r * inner + i] + bd[r];
  return Tensor::from_op(a.shape(), std::move(out), {a, bias},
                         [rows, inner](std::span<const double> g,
                                       std::span<const std::span<double>> gi) {
                           for (std::size_t r = 0; r < rows; ++r)
                             for (std::size_t i = 0; i < inner; ++i) {
                               const double v = g[r * inner + i];
                               if (!gi[0].empty()) gi[0][r * inner + i] += v;
                               if (!gi[1].empty()) gi[1][r] += v;
                             }
                         });
}

Tensor concat_flat(std::span<const Tensor> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_flat needs at least one tensor");
  std::vector<double> out;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(out.size());
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  const std::size_t n = out.size();
  return Tensor::from_op({n}, std::move(out), std::vector<Tensor>(parts.begin(), parts.end()),
                         [offsets](std::span<const double> g,
                                   std::span<const std::span<double>> gi) {
                           for (std::size_t p = 0; p < gi.size(); ++p) {
                             if (gi[p].empty()) continue;
                             for (std::size_t i = 0; i < gi[p].size(); ++i)
                               gi[p][i] += g[offsets[p] + i];
                           }
                         });
}

Tensor gather(const Tensor& a, std::span<const std::size_t> flat_indices, Shape shape) {
  if (shape_numel(shape) != flat_indices.size()) {
    throw std::invalid_argument("gather shape " + shape_str(shape) + " does not match " +
                                std::to_string(flat_indices.size()) + " indices");
  }
  auto ad = a.data();
  std::vector<double> out(flat_indices.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (flat_indices[i] >= ad.size()) {
      throw std::out_of_range("gather index " + std::to_string(flat_indices[i]) +
                              " out of range for shape " + shape_str(a.shape()));
    }
    out[i] = ad[flat_indices[i]];
  }
  std::vector<std::size_t> idx(flat_indices.begin(), flat_indices.end());
  return Tensor::from_op(std::move(shape), std::move(out), {a},
                         [idx = std::move(idx)](std::span<const double> g,
                                                std::span<const std::span<double>> gi) {
                           for (std::size_t i = 0; i < idx.size(); ++i) gi[0][idx[i]] += g[i];
                         });
}

Tensor log_softmax_rows(const Tensor& a) {
  if (a.rank() != 2) {
    throw std::invalid_argument("log_softmax_rows needs a rank-2 tensor, got " +
                                shape_str(a.shape()));
  }
  const std::size_t rows = a.extent(0), cols = a.extent(1);
  auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = ad.data() + r * cols;
    const double mx = *std::max_element(row, row + cols);
    double z = 0.0;
    for (std::size_t c = 0; c < cols; ++c) z += std::exp(row[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < cols; ++c) out[r * cols + c] = row[c] - lse;
  }
  std::vector<double> saved = out;
  return Tensor::from_op(
      a.shape(), std::move(out), {a},
      [rows, cols, saved = std::move(saved)](std::span<const double> g,
                                             std::span<const std::span<double>> gi) {
        for (std::size_t r = 0; r < rows; ++r) {
          double gsum = 0.0;
          for (std::size_t c = 0; c < cols; ++c) gsum += g[r * cols + c];
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            gi[0][i] += g[i] - std::exp(saved[i]) * gsum;
          }
        }
      });
}

}  // namespace ctcn

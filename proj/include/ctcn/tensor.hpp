#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace ctcn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Tensor;

// Receives the gradient of an op's output and accumulates into the gradient
// buffers of its inputs. Buffers of inputs that do not require a gradient are
// empty spans.
using BackwardFn =
    std::function<void(std::span<const double> grad_out,
                       std::span<const std::span<double>> grad_in)>;

namespace detail {
struct Node;
}

/// Dense row-major tensor of f64 values with optional reverse-mode gradient.
///
/// A Tensor is a handle: copies share the same storage and graph node, the
/// way framework tensors do. Operations never mutate their inputs, so a
/// tensor produced by an op can be passed around freely. The only mutating
/// entry points are mutable_data() (used by the optimizer on leaves) and the
/// gradient accessors.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double value);
  /// Leaf tensor flagged as trainable.
  static Tensor parameter(Shape shape, std::vector<double> values);

  /// Result of a differentiable op. The graph edge is only recorded when at
  /// least one input requires a gradient.
  static Tensor from_op(Shape shape, std::vector<double> values,
                        std::vector<Tensor> inputs, BackwardFn backward);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t extent(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Reverse-mode sweep from this scalar. Leaf gradients accumulate across
  /// calls; intermediate gradients are recomputed each time.
  void backward() const;

  /// Copy of the values without graph history.
  Tensor detach() const;

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node);
  std::shared_ptr<detail::Node> node_;
};

struct Parameter {
  std::string name;
  Tensor tensor;
};

// ---- elementwise -----------------------------------------------------------

enum class BinaryOp { Add, Sub, Mul };
enum class UnaryOp { Neg, Exp, Log, Relu };

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b);
Tensor elementwise(BinaryOp op, const Tensor& a, double b);
Tensor elementwise(UnaryOp op, const Tensor& a);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::Add, a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::Sub, a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::Mul, a, b); }
inline Tensor operator+(const Tensor& a, double b) { return elementwise(BinaryOp::Add, a, b); }
inline Tensor operator*(const Tensor& a, double b) { return elementwise(BinaryOp::Mul, a, b); }
inline Tensor operator-(const Tensor& a) { return elementwise(UnaryOp::Neg, a); }

inline Tensor relu(const Tensor& a) { return elementwise(UnaryOp::Relu, a); }
inline Tensor exp(const Tensor& a) { return elementwise(UnaryOp::Exp, a); }
inline Tensor log(const Tensor& a) { return elementwise(UnaryOp::Log, a); }

/// 0.5x^2 for |x| < 1, |x| - 0.5 otherwise.
Tensor smooth_l1(const Tensor& a);

/// min(a, cap) elementwise; the gradient is zero where the cap is active.
Tensor minimum(const Tensor& a, double cap);

// ---- structural / reductions ------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor sum(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
/// Adds bias[i] to every element of row i, where rows are the leading axis.
Tensor add_leading_bias(const Tensor& a, const Tensor& bias);
/// Flattens and concatenates all inputs into a rank-1 tensor.
Tensor concat_flat(std::span<const Tensor> parts);
/// Picks flat elements of `a`; the result has the given shape.
Tensor gather(const Tensor& a, std::span<const std::size_t> flat_indices,
              Shape shape);
/// Row-wise log-softmax of a rank-2 tensor, with max subtraction.
Tensor log_softmax_rows(const Tensor& a);

}  // namespace ctcn

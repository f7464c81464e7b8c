#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tdq/error.hpp"

namespace tdq {

enum class DType { Float64, Float32, Int64, Bool };

using Shape = std::vector<std::int64_t>;

const char* dtype_name(DType dtype);
bool is_floating(DType dtype);
std::int64_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

class Tensor;

namespace detail {

// One recorded operation. Inputs always carry a smaller sequence number than
// the node itself, so sorting by descending sequence is a valid reverse
// topological order.
struct Node {
  std::uint64_t seq = 0;
  const char* op = "";
  std::vector<std::shared_ptr<Node>> inputs;  // nullptr for untracked inputs
  // Maps the output gradient to one gradient per input. Entries for untracked
  // inputs are ignored.
  std::function<std::vector<Tensor>(const Tensor&)> backward;
  Shape shape;
  DType dtype = DType::Float64;

  // Leaves (parameters) accumulate their gradient here across backward calls.
  bool leaf = false;
  std::shared_ptr<Tensor> grad;
};

std::uint64_t next_sequence();

}  // namespace detail

// Dense row-major tensor. Values are immutable after construction; copies
// share storage. Floating data lives in a double buffer (float32 tensors are
// rounded to single precision after every kernel), integer and bool data in an
// int64 buffer.
class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape, DType dtype = DType::Float64);
  static Tensor ones(Shape shape, DType dtype = DType::Float64);
  static Tensor full(Shape shape, double fill, DType dtype = DType::Float64);
  static Tensor from_data(Shape shape, std::vector<double> data, DType dtype = DType::Float64);
  static Tensor from_ints(Shape shape, std::vector<std::int64_t> data, DType dtype = DType::Int64);
  static Tensor scalar(double value, DType dtype = DType::Float64);
  static Tensor vector(std::initializer_list<double> values, DType dtype = DType::Float64);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       DType dtype = DType::Float64);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::int64_t dim(int axis) const;
  std::int64_t numel() const noexcept;
  DType dtype() const noexcept { return dtype_; }
  bool is_floating() const noexcept { return tdq::is_floating(dtype_); }

  // Float data. Throws TypeError for int64/bool tensors.
  std::span<const double> values() const;
  // Int64/bool data. Throws TypeError for float tensors.
  std::span<const std::int64_t> ints() const;

  // Element access by flat index, converted to double.
  double flat(std::int64_t index) const;
  double item() const;
  std::vector<double> to_vector() const;

  bool tracked() const noexcept { return node_ != nullptr; }
  Tensor detach() const;
  Tensor to(DType dtype) const;

  const std::shared_ptr<detail::Node>& node() const noexcept { return node_; }
  void set_node(std::shared_ptr<detail::Node> node) { node_ = std::move(node); }

 private:
  Shape shape_;
  DType dtype_ = DType::Float64;
  std::shared_ptr<const std::vector<double>> fdata_;
  std::shared_ptr<const std::vector<std::int64_t>> idata_;
  std::shared_ptr<detail::Node> node_;
};

// ---------------------------------------------------------------------------
// Recording sessions.

// A recording session. While at least one Tape is alive on a thread,
// parameters hand out tape-tracked tensors and every kernel that consumes a
// tracked tensor records a node. Tracking then propagates through the results
// even after the session ends, so a loss computed after a query run still
// reaches the parameters.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static bool recording();
};

// Suspends recording and tracking propagation on this thread.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool active();
};

// Gradients of every node reachable from a backward root.
class Gradients {
 public:
  // Gradient of the root with respect to `t`. Throws if `t` was not reached.
  Tensor of(const Tensor& t) const;
  bool contains(const Tensor& t) const;
  std::size_t size() const noexcept { return grads_.size(); }

 private:
  friend Gradients backward(const Tensor& root);
  std::unordered_map<const detail::Node*, Tensor> grads_;
  std::vector<std::shared_ptr<detail::Node>> keep_alive_;
};

// Reverse sweep from a scalar, tracked root. Leaf gradients are accumulated
// into their parameters.
Gradients backward(const Tensor& root);

// A named, trainable tensor. The leaf node persists across assignments so
// gradients keep flowing to the same parameter while its value changes.
class Parameter {
 public:
  Parameter(std::string name, Tensor value, bool requires_grad = true);

  const std::string& name() const noexcept { return name_; }
  const Tensor& value() const noexcept { return value_; }
  // Tracked view of the value when a Tape is recording and requires_grad.
  Tensor tensor() const;
  void assign(Tensor value);

  bool requires_grad() const noexcept { return requires_grad_; }
  void set_requires_grad(bool value) noexcept { requires_grad_ = value; }

  std::optional<Tensor> grad() const;
  void zero_grad();

 private:
  std::string name_;
  Tensor value_;
  bool requires_grad_;
  std::shared_ptr<detail::Node> leaf_;
};

using ParameterPtr = std::shared_ptr<Parameter>;

// ---------------------------------------------------------------------------
// Kernels.

enum class UnaryOp { Neg, Log, Exp, Square, Relu };
enum class BinaryOp { Add, Sub, Mul, Div };
enum class ReduceOp { Sum, Mean, Max };

Shape broadcast_shapes(const Shape& a, const Shape& b);

Tensor unary(UnaryOp op, const Tensor& a);
Tensor binary(BinaryOp op, const Tensor& a, const Tensor& b);

inline Tensor neg(const Tensor& a) { return unary(UnaryOp::Neg, a); }
inline Tensor log(const Tensor& a) { return unary(UnaryOp::Log, a); }
inline Tensor exp(const Tensor& a) { return unary(UnaryOp::Exp, a); }
inline Tensor square(const Tensor& a) { return unary(UnaryOp::Square, a); }
inline Tensor relu(const Tensor& a) { return unary(UnaryOp::Relu, a); }
inline Tensor add(const Tensor& a, const Tensor& b) { return binary(BinaryOp::Add, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return binary(BinaryOp::Sub, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return binary(BinaryOp::Mul, a, b); }
inline Tensor div(const Tensor& a, const Tensor& b) { return binary(BinaryOp::Div, a, b); }

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a);
Tensor operator+(const Tensor& a, double b);
Tensor operator-(const Tensor& a, double b);
Tensor operator*(const Tensor& a, double b);
Tensor operator/(const Tensor& a, double b);
Tensor operator*(double a, const Tensor& b);

Tensor matmul(const Tensor& a, const Tensor& b);

Tensor reduce(ReduceOp op, const Tensor& a, std::optional<int> axis = std::nullopt,
              bool keepdims = false);
inline Tensor sum(const Tensor& a, std::optional<int> axis = std::nullopt, bool keepdims = false) {
  return reduce(ReduceOp::Sum, a, axis, keepdims);
}
inline Tensor mean(const Tensor& a, std::optional<int> axis = std::nullopt, bool keepdims = false) {
  return reduce(ReduceOp::Mean, a, axis, keepdims);
}
inline Tensor max(const Tensor& a, std::optional<int> axis = std::nullopt, bool keepdims = false) {
  return reduce(ReduceOp::Max, a, axis, keepdims);
}

Tensor softmax(const Tensor& logits, int axis = -1);

// -1 in `shape` is inferred from the element count.
Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<int>& order);
Tensor transpose(const Tensor& a, int axis0 = 0, int axis1 = 1);
Tensor concat(const std::vector<Tensor>& parts, int axis = 0);
Tensor slice(const Tensor& a, int axis, std::int64_t start, std::int64_t end);
Tensor gather(const Tensor& a, const Tensor& index, int axis = 0);
Tensor one_hot(const Tensor& codes, std::int64_t num_classes, DType dtype = DType::Float64);

// Stretch `a` to `shape` under the broadcast rule.
Tensor broadcast_to(const Tensor& a, const Shape& shape);
// Sum `a` down to `shape`, the adjoint of broadcast_to.
Tensor sum_to(const Tensor& a, const Shape& shape);

}  // namespace tdq

#include "tdq/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_set>

namespace tdq {

namespace {

thread_local int g_tape_depth = 0;
thread_local int g_nograd_depth = 0;

int normalize_axis(int axis, std::size_t rank, const char* op) {
  const int r = static_cast<int>(rank);
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for rank " +
                     std::to_string(rank));
  }
  return a;
}

DType promote(DType a, DType b) {
  if (is_floating(a) || is_floating(b)) {
    if (a == DType::Float64 || b == DType::Float64) return DType::Float64;
    return DType::Float32;
  }
  return DType::Int64;
}

void round_to(std::vector<double>& data, DType dtype) {
  if (dtype == DType::Float32) {
    for (double& v : data) v = static_cast<double>(static_cast<float>(v));
  }
}

// Strides of `in` expressed in the index space of `out`; broadcast axes get 0.
std::vector<std::int64_t> aligned_strides(const Shape& in, const Shape& out) {
  std::vector<std::int64_t> strides(out.size(), 0);
  std::int64_t s = 1;
  const std::size_t offset = out.size() - in.size();
  for (std::size_t i = in.size(); i-- > 0;) {
    strides[offset + i] = in[i] == 1 ? 0 : s;
    s *= in[i];
  }
  return strides;
}

template <class F>
void for_each_broadcast(const Shape& out, const std::vector<std::int64_t>& sa,
                        const std::vector<std::int64_t>& sb, F&& f) {
  const std::int64_t n = shape_numel(out);
  if (n == 0) return;
  const std::size_t r = out.size();
  std::vector<std::int64_t> idx(r, 0);
  std::int64_t ia = 0;
  std::int64_t ib = 0;
  for (std::int64_t k = 0; k < n; ++k) {
    f(k, ia, ib);
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
}

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (g_nograd_depth > 0) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) { return t->tracked(); });
}

bool should_record(const std::vector<Tensor>& inputs) {
  if (g_nograd_depth > 0) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.tracked(); });
}

void attach(Tensor& out, const char* op, std::vector<std::shared_ptr<detail::Node>> inputs,
            std::function<std::vector<Tensor>(const Tensor&)> backward) {
  auto node = std::make_shared<detail::Node>();
  node->seq = detail::next_sequence();
  node->op = op;
  node->inputs = std::move(inputs);
  node->backward = std::move(backward);
  node->shape = out.shape();
  node->dtype = out.dtype();
  out.set_node(std::move(node));
}

std::int64_t product(const Shape& shape, std::size_t begin, std::size_t end) {
  std::int64_t p = 1;
  for (std::size_t i = begin; i < end; ++i) p *= shape[i];
  return p;
}

// Contiguous strides of a row-major shape.
std::vector<std::int64_t> row_strides(const Shape& shape) {
  std::vector<std::int64_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

}  // namespace

// ---------------------------------------------------------------------------

const char* dtype_name(DType dtype) {
  switch (dtype) {
    case DType::Float64: return "float64";
    case DType::Float32: return "float32";
    case DType::Int64: return "int64";
    case DType::Bool: return "bool";
  }
  return "?";
}

bool is_floating(DType dtype) { return dtype == DType::Float64 || dtype == DType::Float32; }

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

std::uint64_t detail::next_sequence() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

// ---------------------------------------------------------------------------
// Tensor

Tensor::Tensor() : shape_{0}, fdata_(std::make_shared<const std::vector<double>>()) {}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, DType dtype) {
  for (auto e : shape) {
    if (e < 0) throw ShapeError("negative extent in shape " + shape_to_string(shape));
  }
  if (static_cast<std::int64_t>(data.size()) != shape_numel(shape)) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_to_string(shape));
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.dtype_ = dtype;
  if (tdq::is_floating(dtype)) {
    round_to(data, dtype);
    t.fdata_ = std::make_shared<const std::vector<double>>(std::move(data));
  } else {
    std::vector<std::int64_t> ints(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double v = data[i];
      if (v != std::floor(v)) throw TypeError("non-integral value for integer tensor");
      ints[i] = dtype == DType::Bool ? (v != 0.0 ? 1 : 0) : static_cast<std::int64_t>(v);
    }
    t.fdata_.reset();
    t.idata_ = std::make_shared<const std::vector<std::int64_t>>(std::move(ints));
  }
  return t;
}

Tensor Tensor::from_ints(Shape shape, std::vector<std::int64_t> data, DType dtype) {
  if (tdq::is_floating(dtype)) {
    std::vector<double> f(data.begin(), data.end());
    return from_data(std::move(shape), std::move(f), dtype);
  }
  for (auto e : shape) {
    if (e < 0) throw ShapeError("negative extent in shape " + shape_to_string(shape));
  }
  if (static_cast<std::int64_t>(data.size()) != shape_numel(shape)) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_to_string(shape));
  }
  if (dtype == DType::Bool) {
    for (auto& v : data) v = v != 0 ? 1 : 0;
  }
  Tensor t;
  t.shape_ = std::move(shape);
  t.dtype_ = dtype;
  t.fdata_.reset();
  t.idata_ = std::make_shared<const std::vector<std::int64_t>>(std::move(data));
  return t;
}

Tensor Tensor::full(Shape shape, double fill, DType dtype) {
  if (dtype == DType::Bool && fill != 0.0 && fill != 1.0) {
    throw TypeError("bool tensors can only be filled with 0 or 1");
  }
  if (dtype == DType::Int64 && fill != std::floor(fill)) {
    throw TypeError("int64 tensors cannot be filled with a fractional value");
  }
  const auto n = shape_numel(shape);
  if (n < 0) throw ShapeError("negative extent in shape " + shape_to_string(shape));
  return from_data(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), fill), dtype);
}

Tensor Tensor::zeros(Shape shape, DType dtype) { return full(std::move(shape), 0.0, dtype); }
Tensor Tensor::ones(Shape shape, DType dtype) { return full(std::move(shape), 1.0, dtype); }
Tensor Tensor::scalar(double value, DType dtype) { return from_data({}, {value}, dtype); }

Tensor Tensor::vector(std::initializer_list<double> values, DType dtype) {
  return from_data({static_cast<std::int64_t>(values.size())}, std::vector<double>(values), dtype);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows, DType dtype) {
  const auto n = static_cast<std::int64_t>(rows.size());
  const auto m = n == 0 ? 0 : static_cast<std::int64_t>(rows.begin()->size());
  std::vector<double> data;
  for (const auto& row : rows) {
    if (static_cast<std::int64_t>(row.size()) != m) throw ShapeError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return from_data({n, m}, std::move(data), dtype);
}

std::int64_t Tensor::dim(int axis) const { return shape_[normalize_axis(axis, rank(), "dim")]; }

std::int64_t Tensor::numel() const noexcept { return shape_numel(shape_); }

std::span<const double> Tensor::values() const {
  if (!fdata_) throw TypeError(std::string("values() on ") + dtype_name(dtype_) + " tensor");
  return {fdata_->data(), fdata_->size()};
}

std::span<const std::int64_t> Tensor::ints() const {
  if (!idata_) throw TypeError(std::string("ints() on ") + dtype_name(dtype_) + " tensor");
  return {idata_->data(), idata_->size()};
}

double Tensor::flat(std::int64_t index) const {
  if (fdata_) return (*fdata_)[static_cast<std::size_t>(index)];
  return static_cast<double>((*idata_)[static_cast<std::size_t>(index)]);
}

double Tensor::item() const {
  if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_to_string(shape_));
  return flat(0);
}

std::vector<double> Tensor::to_vector() const {
  if (fdata_) return *fdata_;
  return std::vector<double>(idata_->begin(), idata_->end());
}

Tensor Tensor::detach() const {
  Tensor t = *this;
  t.node_.reset();
  return t;
}

Tensor Tensor::to(DType dtype) const {
  if (dtype == dtype_) return *this;
  Tensor out;
  if (tdq::is_floating(dtype)) {
    out = from_data(shape_, to_vector(), dtype);
    if (tdq::is_floating(dtype_) && should_record({this})) {
      const DType src = dtype_;
      attach(out, "cast", {node_}, [src](const Tensor& g) { return std::vector<Tensor>{g.to(src)}; });
    }
    return out;
  }
  std::vector<std::int64_t> ints(static_cast<std::size_t>(numel()));
  for (std::int64_t i = 0; i < numel(); ++i) ints[i] = static_cast<std::int64_t>(flat(i));
  return from_ints(shape_, std::move(ints), dtype);
}

// ---------------------------------------------------------------------------
// Sessions and backward

Tape::Tape() { ++g_tape_depth; }
Tape::~Tape() { --g_tape_depth; }
bool Tape::recording() { return g_tape_depth > 0 && g_nograd_depth == 0; }

NoGradGuard::NoGradGuard() { ++g_nograd_depth; }
NoGradGuard::~NoGradGuard() { --g_nograd_depth; }
bool NoGradGuard::active() { return g_nograd_depth > 0; }

Tensor Gradients::of(const Tensor& t) const {
  if (!t.node()) throw AutogradError("tensor is not tracked");
  auto it = grads_.find(t.node().get());
  if (it == grads_.end()) throw AutogradError("tensor was not reached by backward");
  return it->second;
}

bool Gradients::contains(const Tensor& t) const {
  return t.node() && grads_.count(t.node().get()) > 0;
}

Gradients backward(const Tensor& root) {
  if (!root.tracked()) throw AutogradError("backward: root is not tracked");
  if (root.numel() != 1) {
    throw AutogradError("backward: root must be scalar, got shape " + shape_to_string(root.shape()));
  }
  NoGradGuard guard;

  std::vector<std::shared_ptr<detail::Node>> order;
  std::unordered_set<const detail::Node*> seen;
  std::vector<std::shared_ptr<detail::Node>> stack{root.node()};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto node = std::move(stack.back());
    stack.pop_back();
    for (const auto& in : node->inputs) {
      if (in && seen.insert(in.get()).second) stack.push_back(in);
    }
    order.push_back(std::move(node));
  }
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) { return a->seq > b->seq; });

  Gradients result;
  auto& grads = result.grads_;
  grads.emplace(root.node().get(), Tensor::ones(root.shape(), root.dtype()));

  for (const auto& node : order) {
    auto it = grads.find(node.get());
    if (it == grads.end()) continue;
    const Tensor g = it->second;
    if (node->leaf) {
      node->grad = std::make_shared<Tensor>(node->grad ? add(*node->grad, g) : g);
      continue;
    }
    auto input_grads = node->backward(g);
    for (std::size_t i = 0; i < node->inputs.size(); ++i) {
      const auto& in = node->inputs[i];
      if (!in) continue;
      Tensor gi = input_grads.at(i);
      if (gi.shape() != in->shape) gi = reshape(gi, in->shape);
      auto [slot, inserted] = grads.emplace(in.get(), gi);
      if (!inserted) slot->second = add(slot->second, gi);
    }
  }
  for (const auto& node : order) {
    if (!grads.count(node.get())) grads.emplace(node.get(), Tensor::zeros(node->shape, node->dtype));
  }
  result.keep_alive_ = std::move(order);
  return result;
}

Parameter::Parameter(std::string name, Tensor value, bool requires_grad)
    : name_(std::move(name)), value_(value.detach()), requires_grad_(requires_grad) {
  if (!value_.is_floating()) throw TypeError("parameter '" + name_ + "' must be floating point");
  leaf_ = std::make_shared<detail::Node>();
  leaf_->seq = detail::next_sequence();
  leaf_->op = "leaf";
  leaf_->leaf = true;
  leaf_->shape = value_.shape();
  leaf_->dtype = value_.dtype();
}

Tensor Parameter::tensor() const {
  if (!requires_grad_ || !Tape::recording()) return value_;
  Tensor t = value_;
  t.set_node(leaf_);
  return t;
}

void Parameter::assign(Tensor value) {
  if (value.shape() != value_.shape()) {
    throw ShapeError("parameter '" + name_ + "' shape " + shape_to_string(value_.shape()) +
                     " cannot take " + shape_to_string(value.shape()));
  }
  value_ = value.detach().to(value_.dtype());
}

std::optional<Tensor> Parameter::grad() const {
  if (!leaf_->grad) return std::nullopt;
  return *leaf_->grad;
}

void Parameter::zero_grad() { leaf_->grad.reset(); }

// ---------------------------------------------------------------------------
// Elementwise

Shape broadcast_shapes(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    const std::int64_t ea = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::int64_t eb = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (ea != eb && ea != 1 && eb != 1) {
      throw ShapeError("shapes " + shape_to_string(a) + " and " + shape_to_string(b) +
                       " are not broadcast-compatible");
    }
    out[i] = ea == 1 ? eb : ea;
  }
  return out;
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  if (a.shape() == shape) return a;
  if (broadcast_shapes(a.shape(), shape) != shape) {
    throw ShapeError("cannot broadcast " + shape_to_string(a.shape()) + " to " + shape_to_string(shape));
  }
  const auto sa = aligned_strides(a.shape(), shape);
  const std::vector<std::int64_t> zero(shape.size(), 0);
  Tensor out;
  if (a.is_floating()) {
    const auto src = a.values();
    std::vector<double> data(static_cast<std::size_t>(shape_numel(shape)));
    for_each_broadcast(shape, sa, zero, [&](std::int64_t k, std::int64_t ia, std::int64_t) { data[k] = src[ia]; });
    out = Tensor::from_data(shape, std::move(data), a.dtype());
  } else {
    const auto src = a.ints();
    std::vector<std::int64_t> data(static_cast<std::size_t>(shape_numel(shape)));
    for_each_broadcast(shape, sa, zero, [&](std::int64_t k, std::int64_t ia, std::int64_t) { data[k] = src[ia]; });
    return Tensor::from_ints(shape, std::move(data), a.dtype());
  }
  if (should_record({&a})) {
    const Shape in_shape = a.shape();
    attach(out, "broadcast_to", {a.node()},
           [in_shape](const Tensor& g) { return std::vector<Tensor>{sum_to(g, in_shape)}; });
  }
  return out;
}

Tensor sum_to(const Tensor& a, const Shape& shape) {
  if (a.shape() == shape) return a;
  if (broadcast_shapes(shape, a.shape()) != a.shape()) {
    throw ShapeError("cannot sum " + shape_to_string(a.shape()) + " down to " + shape_to_string(shape));
  }
  const auto st = aligned_strides(shape, a.shape());
  const std::vector<std::int64_t> zero(a.rank(), 0);
  std::vector<double> data(static_cast<std::size_t>(shape_numel(shape)), 0.0);
  for_each_broadcast(a.shape(), st, zero,
                     [&](std::int64_t k, std::int64_t it, std::int64_t) { data[it] += a.flat(k); });
  Tensor out = Tensor::from_data(shape, std::move(data), a.is_floating() ? a.dtype() : DType::Float64);
  if (should_record({&a})) {
    const Shape in_shape = a.shape();
    attach(out, "sum_to", {a.node()},
           [in_shape](const Tensor& g) { return std::vector<Tensor>{broadcast_to(g, in_shape)}; });
  }
  return out;
}

Tensor unary(UnaryOp op, const Tensor& a) {
  const bool float_out = a.is_floating() || op == UnaryOp::Log || op == UnaryOp::Exp;
  if (!float_out) {
    const auto src = a.ints();
    std::vector<std::int64_t> data(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) {
      const auto v = src[i];
      data[i] = op == UnaryOp::Neg ? -v : op == UnaryOp::Square ? v * v : std::max<std::int64_t>(v, 0);
    }
    return Tensor::from_ints(a.shape(), std::move(data), DType::Int64);
  }
  const DType dtype = a.is_floating() ? a.dtype() : DType::Float64;
  const auto n = static_cast<std::size_t>(a.numel());
  std::vector<double> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = a.flat(static_cast<std::int64_t>(i));
    switch (op) {
      case UnaryOp::Neg: data[i] = -v; break;
      case UnaryOp::Log: data[i] = std::log(v); break;
      case UnaryOp::Exp: data[i] = std::exp(v); break;
      case UnaryOp::Square: data[i] = v * v; break;
      case UnaryOp::Relu: data[i] = v > 0.0 ? v : 0.0; break;
    }
  }
  Tensor out = Tensor::from_data(a.shape(), std::move(data), dtype);
  if (should_record({&a})) {
    const Tensor x = a.detach();
    const Tensor y = out.detach();
    static constexpr const char* names[] = {"neg", "log", "exp", "square", "relu"};
    attach(out, names[static_cast<int>(op)], {a.node()}, [op, x, y](const Tensor& g) {
      switch (op) {
        case UnaryOp::Neg: return std::vector<Tensor>{neg(g)};
        case UnaryOp::Log: return std::vector<Tensor>{g / x};
        case UnaryOp::Exp: return std::vector<Tensor>{g * y};
        case UnaryOp::Square: return std::vector<Tensor>{g * x * 2.0};
        case UnaryOp::Relu: {
          std::vector<double> mask(static_cast<std::size_t>(x.numel()));
          const auto xv = x.values();
          for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = xv[i] > 0.0 ? 1.0 : 0.0;
          return std::vector<Tensor>{g * Tensor::from_data(x.shape(), std::move(mask), x.dtype())};
        }
      }
      return std::vector<Tensor>{g};
    });
  }
  return out;
}

Tensor binary(BinaryOp op, const Tensor& a, const Tensor& b) {
  const Shape out_shape = broadcast_shapes(a.shape(), b.shape());
  const auto sa = aligned_strides(a.shape(), out_shape);
  const auto sb = aligned_strides(b.shape(), out_shape);
  const auto n = static_cast<std::size_t>(shape_numel(out_shape));
  const DType dtype = promote(a.dtype(), b.dtype());

  if (dtype == DType::Int64 && op != BinaryOp::Div) {
    const auto av = a.ints();
    const auto bv = b.ints();
    std::vector<std::int64_t> data(n);
    for_each_broadcast(out_shape, sa, sb, [&](std::int64_t k, std::int64_t ia, std::int64_t ib) {
      switch (op) {
        case BinaryOp::Add: data[k] = av[ia] + bv[ib]; break;
        case BinaryOp::Sub: data[k] = av[ia] - bv[ib]; break;
        default: data[k] = av[ia] * bv[ib]; break;
      }
    });
    return Tensor::from_ints(out_shape, std::move(data), DType::Int64);
  }

  const DType fdtype = is_floating(dtype) ? dtype : DType::Float64;
  std::vector<double> data(n);
  const bool fast = a.shape() == out_shape && b.shape() == out_shape && a.is_floating() && b.is_floating();
  if (fast) {
    const auto av = a.values();
    const auto bv = b.values();
    switch (op) {
      case BinaryOp::Add: for (std::size_t i = 0; i < n; ++i) data[i] = av[i] + bv[i]; break;
      case BinaryOp::Sub: for (std::size_t i = 0; i < n; ++i) data[i] = av[i] - bv[i]; break;
      case BinaryOp::Mul: for (std::size_t i = 0; i < n; ++i) data[i] = av[i] * bv[i]; break;
      case BinaryOp::Div: for (std::size_t i = 0; i < n; ++i) data[i] = av[i] / bv[i]; break;
    }
  } else {
    for_each_broadcast(out_shape, sa, sb, [&](std::int64_t k, std::int64_t ia, std::int64_t ib) {
      const double x = a.flat(ia);
      const double y = b.flat(ib);
      switch (op) {
        case BinaryOp::Add: data[k] = x + y; break;
        case BinaryOp::Sub: data[k] = x - y; break;
        case BinaryOp::Mul: data[k] = x * y; break;
        case BinaryOp::Div: data[k] = x / y; break;
      }
    });
  }
  Tensor out = Tensor::from_data(out_shape, std::move(data), fdtype);
  if (should_record({&a, &b})) {
    const Tensor x = a.detach();
    const Tensor y = b.detach();
    static constexpr const char* names[] = {"add", "sub", "mul", "div"};
    attach(out, names[static_cast<int>(op)], {a.node(), b.node()}, [op, x, y](const Tensor& g) {
      switch (op) {
        case BinaryOp::Add:
          return std::vector<Tensor>{sum_to(g, x.shape()), sum_to(g, y.shape())};
        case BinaryOp::Sub:
          return std::vector<Tensor>{sum_to(g, x.shape()), sum_to(neg(g), y.shape())};
        case BinaryOp::Mul:
          return std::vector<Tensor>{sum_to(g * y, x.shape()), sum_to(g * x, y.shape())};
        case BinaryOp::Div:
          return std::vector<Tensor>{sum_to(g / y, x.shape()), sum_to(neg(g * x) / (y * y), y.shape())};
      }
      return std::vector<Tensor>{};
    });
  }
  return out;
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
Tensor operator-(const Tensor& a) { return neg(a); }

namespace {
Tensor scalar_like(const Tensor& a, double v) {
  return Tensor::scalar(v, a.is_floating() ? a.dtype() : DType::Float64);
}
}  // namespace

Tensor operator+(const Tensor& a, double b) { return add(a, scalar_like(a, b)); }
Tensor operator-(const Tensor& a, double b) { return sub(a, scalar_like(a, b)); }
Tensor operator*(const Tensor& a, double b) { return mul(a, scalar_like(a, b)); }
Tensor operator/(const Tensor& a, double b) { return div(a, scalar_like(a, b)); }
Tensor operator*(double a, const Tensor& b) { return mul(scalar_like(b, a), b); }

// ---------------------------------------------------------------------------
// Linear algebra

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul expects 2-d operands, got " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()));
  }
  if (!a.is_floating() || !b.is_floating()) throw TypeError("matmul expects floating operands");
  const auto m = a.shape()[0];
  const auto k = a.shape()[1];
  const auto n = b.shape()[1];
  if (b.shape()[0] != k) {
    throw ShapeError("matmul inner dimensions differ: " + shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> data(static_cast<std::size_t>(m * n), 0.0);
  for (std::int64_t i = 0; i < m; ++i) {
    double* row = data.data() + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const double s = av[i * k + p];
      if (s == 0.0) continue;
      const double* brow = bv.data() + p * n;
      for (std::int64_t j = 0; j < n; ++j) row[j] += s * brow[j];
    }
  }
  Tensor out = Tensor::from_data({m, n}, std::move(data), promote(a.dtype(), b.dtype()));
  if (should_record({&a, &b})) {
    const Tensor x = a.detach();
    const Tensor y = b.detach();
    attach(out, "matmul", {a.node(), b.node()}, [x, y](const Tensor& g) {
      return std::vector<Tensor>{matmul(g, transpose(y)), matmul(transpose(x), g)};
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reductions

Tensor reduce(ReduceOp op, const Tensor& a, std::optional<int> axis, bool keepdims) {
  if (!axis) {
    Tensor flat = reshape(a, {a.numel()});
    Tensor r = reduce(op, flat, 0, false);
    if (keepdims) return reshape(r, Shape(a.rank(), 1));
    return r;
  }
  const int ax = normalize_axis(*axis, a.rank(), "reduce");
  const Shape& in = a.shape();
  const std::int64_t outer = product(in, 0, ax);
  const std::int64_t len = in[ax];
  const std::int64_t inner = product(in, ax + 1, in.size());
  Shape out_shape = in;
  if (keepdims) {
    out_shape[ax] = 1;
  } else {
    out_shape.erase(out_shape.begin() + ax);
  }
  if (op == ReduceOp::Max && len == 0) throw ShapeError("max over an empty axis");

  if (!a.is_floating() && op != ReduceOp::Mean) {
    const auto src = a.ints();
    std::vector<std::int64_t> data(static_cast<std::size_t>(outer * inner));
    for (std::int64_t o = 0; o < outer; ++o) {
      for (std::int64_t i = 0; i < inner; ++i) {
        std::int64_t acc = op == ReduceOp::Sum ? 0 : std::numeric_limits<std::int64_t>::min();
        for (std::int64_t l = 0; l < len; ++l) {
          const auto v = src[(o * len + l) * inner + i];
          acc = op == ReduceOp::Sum ? acc + v : std::max(acc, v);
        }
        data[o * inner + i] = acc;
      }
    }
    return Tensor::from_ints(out_shape, std::move(data), DType::Int64);
  }

  std::vector<double> data(static_cast<std::size_t>(outer * inner));
  std::vector<std::int64_t> argmax;
  if (op == ReduceOp::Max) argmax.resize(data.size());
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t i = 0; i < inner; ++i) {
      double acc = 0.0;
      std::int64_t best = 0;
      if (op == ReduceOp::Max) acc = a.flat(o * len * inner + i);
      for (std::int64_t l = 0; l < len; ++l) {
        const double v = a.flat((o * len + l) * inner + i);
        if (op == ReduceOp::Max) {
          if (v > acc) {
            acc = v;
            best = l;
          }
        } else {
          acc += v;
        }
      }
      if (op == ReduceOp::Mean) acc /= static_cast<double>(len);
      data[o * inner + i] = acc;
      if (op == ReduceOp::Max) argmax[o * inner + i] = best;
    }
  }
  const DType dtype = a.is_floating() ? a.dtype() : DType::Float64;
  Tensor out = Tensor::from_data(out_shape, std::move(data), dtype);
  if (should_record({&a})) {
    Shape kept = in;
    kept[ax] = 1;
    attach(out, op == ReduceOp::Sum ? "sum" : op == ReduceOp::Mean ? "mean" : "max", {a.node()},
           [op, in, kept, len, outer, inner, argmax = std::move(argmax), dtype](const Tensor& g) {
             if (op == ReduceOp::Max) {
               std::vector<double> grad(static_cast<std::size_t>(shape_numel(in)), 0.0);
               for (std::int64_t o = 0; o < outer; ++o) {
                 for (std::int64_t i = 0; i < inner; ++i) {
                   grad[(o * len + argmax[o * inner + i]) * inner + i] = g.flat(o * inner + i);
                 }
               }
               return std::vector<Tensor>{Tensor::from_data(in, std::move(grad), dtype)};
             }
             Tensor expanded = broadcast_to(reshape(g, kept), in);
             if (op == ReduceOp::Mean) expanded = expanded / static_cast<double>(len);
             return std::vector<Tensor>{expanded};
           });
  }
  return out;
}

Tensor softmax(const Tensor& logits, int axis) {
  if (!logits.is_floating()) throw TypeError("softmax expects a floating tensor");
  const int ax = normalize_axis(axis, logits.rank(), "softmax");
  const Shape& in = logits.shape();
  const std::int64_t outer = product(in, 0, ax);
  const std::int64_t len = in[ax];
  const std::int64_t inner = product(in, ax + 1, in.size());
  const auto src = logits.values();
  std::vector<double> data(src.size());
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t i = 0; i < inner; ++i) {
      const auto at = [&](std::int64_t l) { return (o * len + l) * inner + i; };
      double peak = -std::numeric_limits<double>::infinity();
      for (std::int64_t l = 0; l < len; ++l) peak = std::max(peak, src[at(l)]);
      double total = 0.0;
      for (std::int64_t l = 0; l < len; ++l) {
        const double e = std::exp(src[at(l)] - peak);
        data[at(l)] = e;
        total += e;
      }
      for (std::int64_t l = 0; l < len; ++l) data[at(l)] /= total;
    }
  }
  Tensor out = Tensor::from_data(in, std::move(data), logits.dtype());
  if (should_record({&logits})) {
    const Tensor y = out.detach();
    attach(out, "softmax", {logits.node()}, [y, ax](const Tensor& g) {
      Tensor gy = g * y;
      return std::vector<Tensor>{gy - y * sum(gy, ax, true)};
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape manipulation

Tensor reshape(const Tensor& a, Shape shape) {
  std::int64_t known = 1;
  int infer = -1;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == -1) {
      if (infer >= 0) throw ShapeError("reshape: more than one inferred extent");
      infer = static_cast<int>(i);
    } else if (shape[i] < 0) {
      throw ShapeError("reshape: negative extent");
    } else {
      known *= shape[i];
    }
  }
  if (infer >= 0) {
    if (known == 0 || a.numel() % known != 0) {
      throw ShapeError("reshape: cannot infer extent for " + shape_to_string(a.shape()));
    }
    shape[infer] = a.numel() / known;
  }
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: " + shape_to_string(a.shape()) + " has " + std::to_string(a.numel()) +
                     " elements, target " + shape_to_string(shape) + " has " +
                     std::to_string(shape_numel(shape)));
  }
  if (shape == a.shape()) return a;
  Tensor out = a.is_floating()
                   ? Tensor::from_data(shape, std::vector<double>(a.values().begin(), a.values().end()), a.dtype())
                   : Tensor::from_ints(shape, std::vector<std::int64_t>(a.ints().begin(), a.ints().end()), a.dtype());
  if (should_record({&a})) {
    const Shape in = a.shape();
    attach(out, "reshape", {a.node()}, [in](const Tensor& g) { return std::vector<Tensor>{reshape(g, in)}; });
  }
  return out;
}

Tensor permute(const Tensor& a, const std::vector<int>& order) {
  const std::size_t r = a.rank();
  if (order.size() != r) throw ShapeError("permute: order length does not match rank");
  std::vector<int> axes(r);
  std::vector<bool> used(r, false);
  for (std::size_t i = 0; i < r; ++i) {
    axes[i] = normalize_axis(order[i], r, "permute");
    if (used[axes[i]]) throw ShapeError("permute: repeated axis");
    used[axes[i]] = true;
  }
  Shape out_shape(r);
  const auto in_strides = row_strides(a.shape());
  std::vector<std::int64_t> strides(r);
  for (std::size_t i = 0; i < r; ++i) {
    out_shape[i] = a.shape()[axes[i]];
    strides[i] = in_strides[axes[i]];
  }
  const std::vector<std::int64_t> zero(r, 0);
  std::vector<std::int64_t> gather_index(static_cast<std::size_t>(a.numel()));
  for_each_broadcast(out_shape, strides, zero,
                     [&](std::int64_t k, std::int64_t src, std::int64_t) { gather_index[k] = src; });
  Tensor out;
  if (a.is_floating()) {
    const auto src = a.values();
    std::vector<double> data(gather_index.size());
    for (std::size_t k = 0; k < data.size(); ++k) data[k] = src[gather_index[k]];
    out = Tensor::from_data(out_shape, std::move(data), a.dtype());
  } else {
    const auto src = a.ints();
    std::vector<std::int64_t> data(gather_index.size());
    for (std::size_t k = 0; k < data.size(); ++k) data[k] = src[gather_index[k]];
    return Tensor::from_ints(out_shape, std::move(data), a.dtype());
  }
  if (should_record({&a})) {
    std::vector<int> inverse(r);
    for (std::size_t i = 0; i < r; ++i) inverse[axes[i]] = static_cast<int>(i);
    attach(out, "permute", {a.node()},
           [inverse](const Tensor& g) { return std::vector<Tensor>{permute(g, inverse)}; });
  }
  return out;
}

Tensor transpose(const Tensor& a, int axis0, int axis1) {
  std::vector<int> order(a.rank());
  std::iota(order.begin(), order.end(), 0);
  const int x = normalize_axis(axis0, a.rank(), "transpose");
  const int y = normalize_axis(axis1, a.rank(), "transpose");
  std::swap(order[x], order[y]);
  return permute(a, order);
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const Tensor& first = parts.front();
  const int ax = normalize_axis(axis, first.rank(), "concat");
  Shape out_shape = first.shape();
  out_shape[ax] = 0;
  DType dtype = first.dtype();
  for (const auto& p : parts) {
    if (p.rank() != first.rank()) throw ShapeError("concat: rank mismatch");
    for (std::size_t d = 0; d < p.rank(); ++d) {
      if (static_cast<int>(d) != ax && p.shape()[d] != first.shape()[d]) {
        throw ShapeError("concat: extent mismatch on axis " + std::to_string(d));
      }
    }
    if (p.is_floating() != first.is_floating()) throw TypeError("concat: mixed float and integer parts");
    dtype = promote(dtype, p.dtype());
    out_shape[ax] += p.shape()[ax];
  }
  if (!is_floating(first.dtype()) && first.dtype() == DType::Bool) dtype = DType::Bool;
  const std::int64_t outer = product(out_shape, 0, ax);
  const std::int64_t inner = product(out_shape, ax + 1, out_shape.size());
  const std::int64_t total = out_shape[ax];
  std::vector<double> data(static_cast<std::size_t>(shape_numel(out_shape)));
  std::int64_t offset = 0;
  for (const auto& p : parts) {
    const std::int64_t len = p.shape()[ax];
    for (std::int64_t o = 0; o < outer; ++o) {
      for (std::int64_t l = 0; l < len; ++l) {
        for (std::int64_t i = 0; i < inner; ++i) {
          data[(o * total + offset + l) * inner + i] = p.flat((o * len + l) * inner + i);
        }
      }
    }
    offset += len;
  }
  if (!first.is_floating()) {
    std::vector<std::int64_t> ints(data.begin(), data.end());
    return Tensor::from_ints(out_shape, std::move(ints), dtype);
  }
  Tensor out = Tensor::from_data(out_shape, std::move(data), dtype);
  if (should_record(parts)) {
    std::vector<std::shared_ptr<detail::Node>> inputs;
    std::vector<std::int64_t> extents;
    for (const auto& p : parts) {
      inputs.push_back(p.node());
      extents.push_back(p.shape()[ax]);
    }
    attach(out, "concat", std::move(inputs), [extents, ax](const Tensor& g) {
      std::vector<Tensor> grads;
      std::int64_t start = 0;
      for (auto e : extents) {
        grads.push_back(slice(g, ax, start, start + e));
        start += e;
      }
      return grads;
    });
  }
  return out;
}

namespace {

// Scatter `g` (shaped like a slice of `full` along `ax` starting at `start`)
// into zeros of shape `full`.
Tensor pad_slice(const Tensor& g, const Shape& full, int ax, std::int64_t start) {
  const std::int64_t outer = product(full, 0, ax);
  const std::int64_t inner = product(full, ax + 1, full.size());
  const std::int64_t total = full[ax];
  const std::int64_t len = g.shape()[ax];
  std::vector<double> data(static_cast<std::size_t>(shape_numel(full)), 0.0);
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t l = 0; l < len; ++l) {
      for (std::int64_t i = 0; i < inner; ++i) {
        data[(o * total + start + l) * inner + i] = g.flat((o * len + l) * inner + i);
      }
    }
  }
  return Tensor::from_data(full, std::move(data), g.is_floating() ? g.dtype() : DType::Float64);
}

}  // namespace

Tensor slice(const Tensor& a, int axis, std::int64_t start, std::int64_t end) {
  const int ax = normalize_axis(axis, a.rank(), "slice");
  const std::int64_t extent = a.shape()[ax];
  if (start < 0 || end < start || end > extent) {
    throw ShapeError("slice [" + std::to_string(start) + ", " + std::to_string(end) +
                     ") out of bounds for extent " + std::to_string(extent));
  }
  std::vector<std::int64_t> index(static_cast<std::size_t>(end - start));
  std::iota(index.begin(), index.end(), start);
  Tensor idx = Tensor::from_ints({end - start}, std::move(index));
  Tensor out;
  {
    NoGradGuard guard;
    out = gather(a, idx, ax);
  }
  if (a.is_floating() && should_record({&a})) {
    const Shape full = a.shape();
    attach(out, "slice", {a.node()},
           [full, ax, start](const Tensor& g) { return std::vector<Tensor>{pad_slice(g, full, ax, start)}; });
  }
  return out;
}

Tensor gather(const Tensor& a, const Tensor& index, int axis) {
  if (index.is_floating()) throw TypeError("gather: index must be int64");
  if (index.rank() != 1) throw ShapeError("gather: index must be 1-d");
  const int ax = normalize_axis(axis, a.rank(), "gather");
  const Shape& in = a.shape();
  const std::int64_t outer = product(in, 0, ax);
  const std::int64_t len = in[ax];
  const std::int64_t inner = product(in, ax + 1, in.size());
  const auto idx = index.ints();
  for (auto i : idx) {
    if (i < 0 || i >= len) {
      throw ShapeError("gather: index " + std::to_string(i) + " out of range for extent " + std::to_string(len));
    }
  }
  const auto count = static_cast<std::int64_t>(idx.size());
  Shape out_shape = in;
  out_shape[ax] = count;
  Tensor out;
  if (a.is_floating()) {
    const auto src = a.values();
    std::vector<double> data(static_cast<std::size_t>(outer * count * inner));
    for (std::int64_t o = 0; o < outer; ++o) {
      for (std::int64_t c = 0; c < count; ++c) {
        const double* from = src.data() + (o * len + idx[c]) * inner;
        std::copy(from, from + inner, data.data() + (o * count + c) * inner);
      }
    }
    out = Tensor::from_data(out_shape, std::move(data), a.dtype());
  } else {
    const auto src = a.ints();
    std::vector<std::int64_t> data(static_cast<std::size_t>(outer * count * inner));
    for (std::int64_t o = 0; o < outer; ++o) {
      for (std::int64_t c = 0; c < count; ++c) {
        const std::int64_t* from = src.data() + (o * len + idx[c]) * inner;
        std::copy(from, from + inner, data.data() + (o * count + c) * inner);
      }
    }
    return Tensor::from_ints(out_shape, std::move(data), a.dtype());
  }
  if (should_record({&a})) {
    const Tensor index_copy = index.detach();
    attach(out, "gather", {a.node()}, [in, ax, outer, len, inner, index_copy](const Tensor& g) {
      const auto ix = index_copy.ints();
      const auto cnt = static_cast<std::int64_t>(ix.size());
      std::vector<double> grad(static_cast<std::size_t>(shape_numel(in)), 0.0);
      for (std::int64_t o = 0; o < outer; ++o) {
        for (std::int64_t c = 0; c < cnt; ++c) {
          for (std::int64_t i = 0; i < inner; ++i) {
            grad[(o * len + ix[c]) * inner + i] += g.flat((o * cnt + c) * inner + i);
          }
        }
      }
      return std::vector<Tensor>{Tensor::from_data(in, std::move(grad), g.dtype())};
    });
  }
  return out;
}

Tensor one_hot(const Tensor& codes, std::int64_t num_classes, DType dtype) {
  if (codes.is_floating()) throw TypeError("one_hot: codes must be int64");
  if (num_classes < 0) throw ShapeError("one_hot: negative class count");
  const auto src = codes.ints();
  Shape out_shape = codes.shape();
  out_shape.push_back(num_classes);
  std::vector<double> data(src.size() * static_cast<std::size_t>(num_classes), 0.0);
  for (std::size_t i = 0; i < src.size(); ++i) {
    if (src[i] < 0 || src[i] >= num_classes) {
      throw ShapeError("one_hot: code " + std::to_string(src[i]) + " outside [0, " +
                       std::to_string(num_classes) + ")");
    }
    data[i * num_classes + src[i]] = 1.0;
  }
  return Tensor::from_data(out_shape, std::move(data), dtype);
}

}  // namespace tdq

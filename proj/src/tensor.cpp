#include "tgq/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>

#include "tgq/errors.hpp"

namespace tgq {

using detail::Node;
using NodePtr = std::shared_ptr<Node>;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::span<double> Node::grad_buffer() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

namespace {

thread_local bool g_grad_enabled = true;

struct Dims {
  std::size_t r, c;
};

Dims dims_of(const Shape& s) {
  if (s.size() == 1) return {1, s[0]};
  if (s.size() == 2) return {s[0], s[1]};
  throw DimensionError("operation expects a rank-1 or rank-2 tensor, got " + shape_str(s));
}

Dims dims_of(const Tensor& t) { return dims_of(t.shape()); }

void check_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

Tensor make_result(Shape shape, std::vector<double> value, std::vector<NodePtr> inputs,
                   std::function<void(Node&)> bw) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& p : inputs) any = any || p->requires_grad;
    if (any) {
      node->requires_grad = true;
      node->parents = std::move(inputs);
      node->backward = std::move(bw);
    }
  }
  return Tensor(std::move(node));
}

// Broadcast helper for 2-D binary ops.
struct Broadcast {
  Dims a, b, out;
  std::size_t ia(std::size_t i, std::size_t j) const {
    return (a.r == 1 ? 0 : i) * a.c + (a.c == 1 ? 0 : j);
  }
  std::size_t ib(std::size_t i, std::size_t j) const {
    return (b.r == 1 ? 0 : i) * b.c + (b.c == 1 ? 0 : j);
  }
};

Broadcast broadcast(const Tensor& a, const Tensor& b, const char* op) {
  Dims da = dims_of(a), db = dims_of(b);
  auto join = [&](std::size_t x, std::size_t y) -> std::size_t {
    if (x == y) return x;
    if (x == 1) return y;
    if (y == 1) return x;
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a.shape()) +
                         " with " + shape_str(b.shape()));
  };
  return {da, db, {join(da.r, db.r), join(da.c, db.c)}};
}

// f(x, y) -> value; ga(x, y, out) -> d out / d x; gb likewise for y.
template <class F, class GA, class GB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* name, F f, GA ga, GB gb) {
  check_defined(a, name);
  check_defined(b, name);
  const Broadcast bc = broadcast(a, b, name);
  const auto& av = a.node()->value;
  const auto& bv = b.node()->value;
  std::vector<double> out(bc.out.r * bc.out.c);
  const bool same = bc.a.r == bc.b.r && bc.a.c == bc.b.c;
  if (same) {
    for (std::size_t k = 0; k < out.size(); ++k) out[k] = f(av[k], bv[k]);
  } else {
    for (std::size_t i = 0; i < bc.out.r; ++i)
      for (std::size_t j = 0; j < bc.out.c; ++j)
        out[i * bc.out.c + j] = f(av[bc.ia(i, j)], bv[bc.ib(i, j)]);
  }
  return make_result({bc.out.r, bc.out.c}, std::move(out), {a.node(), b.node()},
                     [bc, ga, gb](Node& self) {
                       Node& pa = *self.parents[0];
                       Node& pb = *self.parents[1];
                       const auto& g = self.grad;
                       const auto& y = self.value;
                       if (pa.requires_grad) {
                         auto da = pa.grad_buffer();
                         for (std::size_t i = 0; i < bc.out.r; ++i)
                           for (std::size_t j = 0; j < bc.out.c; ++j) {
                             const std::size_t k = i * bc.out.c + j;
                             da[bc.ia(i, j)] +=
                                 g[k] * ga(pa.value[bc.ia(i, j)], pb.value[bc.ib(i, j)], y[k]);
                           }
                       }
                       if (pb.requires_grad) {
                         auto db = pb.grad_buffer();
                         for (std::size_t i = 0; i < bc.out.r; ++i)
                           for (std::size_t j = 0; j < bc.out.c; ++j) {
                             const std::size_t k = i * bc.out.c + j;
                             db[bc.ib(i, j)] +=
                                 g[k] * gb(pa.value[bc.ia(i, j)], pb.value[bc.ib(i, j)], y[k]);
                           }
                       }
                     });
}

// f(x) -> y; df(x, y) -> dy/dx.
template <class F, class DF>
Tensor unary_op(const Tensor& x, const char* name, F f, DF df) {
  check_defined(x, name);
  const Dims d = dims_of(x);
  const auto& xv = x.node()->value;
  std::vector<double> out(xv.size());
  for (std::size_t k = 0; k < xv.size(); ++k) out[k] = f(xv[k]);
  return make_result({d.r, d.c}, std::move(out), {x.node()}, [df](Node& self) {
    Node& p = *self.parents[0];
    auto dp = p.grad_buffer();
    for (std::size_t k = 0; k < self.value.size(); ++k)
      dp[k] += self.grad[k] * df(p.value[k], self.value[k]);
  });
}

void check_axis(int axis, const char* op) {
  if (axis != 0 && axis != 1)
    throw DimensionError(std::string(op) + ": axis must be 0 or 1, got " + std::to_string(axis));
}

void check_eps(double eps, const char* op) {
  if (!(eps > 0.0)) throw ConfigError(std::string(op) + ": eps must be positive");
}

// Iterates the slices of a 2-D buffer along `axis`: for axis 1 each slice is
// a row, for axis 0 each slice is a column.
struct Slices {
  std::size_t count, length, outer_stride, inner_stride;
};

Slices slices_of(Dims d, int axis) {
  if (axis == 1) return {d.r, d.c, d.c, 1};
  return {d.c, d.r, 1, d.c};
}

}  // namespace

// ---- Tensor -----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape.empty()) throw DimensionError("tensor shape must have at least one dimension");
  for (auto d : shape)
    if (d == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  if (shape_numel(shape) != data.size())
    throw DimensionError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from({1, 1}, {value}); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows,
                      bool requires_grad) {
  std::vector<double> data;
  std::size_t cols = 0;
  for (const auto& r : rows) {
    if (cols == 0) cols = r.size();
    if (r.size() != cols) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), r.begin(), r.end());
  }
  return from({rows.size(), cols}, std::move(data), requires_grad);
}

const Shape& Tensor::shape() const {
  check_defined(*this, "shape");
  return node_->shape;
}

std::size_t Tensor::numel() const { return shape_numel(shape()); }
std::size_t Tensor::rows() const { return dims_of(*this).r; }
std::size_t Tensor::cols() const { return dims_of(*this).c; }

std::span<const double> Tensor::data() const {
  check_defined(*this, "data");
  return node_->value;
}

std::span<double> Tensor::mutable_data() {
  check_defined(*this, "mutable_data");
  if (!node_->parents.empty()) throw StateError("mutable_data on a non-leaf tensor");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on tensor of shape " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  const Dims d = dims_of(*this);
  if (r >= d.r || c >= d.c) throw DimensionError("index out of range");
  return node_->value[r * d.c + c];
}

bool Tensor::requires_grad() const { return defined() && node_->requires_grad; }
bool Tensor::has_grad() const { return defined() && !node_->grad.empty(); }

std::vector<double> Tensor::grad() const {
  check_defined(*this, "grad");
  if (node_->grad.empty()) return std::vector<double>(node_->value.size(), 0.0);
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  check_defined(*this, "mutable_grad");
  return node_->grad_buffer();
}

void Tensor::zero_grad() {
  if (defined()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  check_defined(*this, "detach");
  auto node = std::make_shared<Node>();
  node->shape = node_->shape;
  node->value = node_->value;
  return Tensor(std::move(node));
}

Tensor Tensor::clone(bool requires_grad) const {
  Tensor t = detach();
  t.node_->requires_grad = requires_grad;
  return t;
}

// ---- graph ------------------------------------------------------------------

bool grad_enabled() noexcept { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

void backward(const Tensor& loss) {
  check_defined(loss, "backward");
  if (loss.numel() != 1)
    throw ContractError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a deterministic topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  loss.node()->grad_buffer()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

// ---- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary_op(
      a, "add_scalar", [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor scale(const Tensor& a, double c) {
  return unary_op(
      a, "scale", [c](double x) { return x * c; }, [c](double, double) { return c; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      x, "sigmoid",
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor centered_sigmoid(const Tensor& x) {
  // tanh rounds to exactly +-1 past |x| ~ 38; keep the range open
  static const double edge = std::nextafter(1.0, 0.0);
  return unary_op(
      x, "centered_sigmoid", [](double v) { return std::clamp(std::tanh(0.5 * v), -edge, edge); },
      [](double, double y) { return 0.5 * (1.0 - y * y); });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      x, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor gelu(const Tensor& x) {
  constexpr double inv_sqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary_op(
      x, "gelu", [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
      [inv_sqrt_2pi](double v, double) {
        return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
      });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      x, "exp", [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary_op(
      x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Tensor sqrt(const Tensor& x) {
  return unary_op(
      x, "sqrt", [](double v) { return std::sqrt(v); },
      // zero at the origin so constant inputs do not poison the graph with inf
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor square(const Tensor& x) {
  return unary_op(
      x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

// ---- linear algebra ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  const Dims da = dims_of(a), db = dims_of(b);
  if (da.c != db.r)
    throw DimensionError("matmul: inner dimensions differ for " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  std::vector<double> out(da.r * db.c);
  Map(out.data(), da.r, db.c).noalias() =
      MapC(a.node()->value.data(), da.r, da.c) * MapC(b.node()->value.data(), db.r, db.c);
  return make_result({da.r, db.c}, std::move(out), {a.node(), b.node()}, [da, db](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    MapC g(self.grad.data(), da.r, db.c);
    if (pa.requires_grad)
      Map(pa.grad_buffer().data(), da.r, da.c).noalias() +=
          g * MapC(pb.value.data(), db.r, db.c).transpose();
    if (pb.requires_grad)
      Map(pb.grad_buffer().data(), db.r, db.c).noalias() +=
          MapC(pa.value.data(), da.r, da.c).transpose() * g;
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul_nt");
  check_defined(b, "matmul_nt");
  const Dims da = dims_of(a), db = dims_of(b);
  if (da.c != db.c)
    throw DimensionError("matmul_nt: inner dimensions differ for " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()) + "^T");
  std::vector<double> out(da.r * db.r);
  Map(out.data(), da.r, db.r).noalias() =
      MapC(a.node()->value.data(), da.r, da.c) *
      MapC(b.node()->value.data(), db.r, db.c).transpose();
  return make_result({da.r, db.r}, std::move(out), {a.node(), b.node()}, [da, db](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    MapC g(self.grad.data(), da.r, db.r);
    if (pa.requires_grad)
      Map(pa.grad_buffer().data(), da.r, da.c).noalias() += g * MapC(pb.value.data(), db.r, db.c);
    if (pb.requires_grad)
      Map(pb.grad_buffer().data(), db.r, db.c).noalias() +=
          g.transpose() * MapC(pa.value.data(), da.r, da.c);
  });
}

Tensor transpose(const Tensor& a) {
  check_defined(a, "transpose");
  const Dims d = dims_of(a);
  std::vector<double> out(d.r * d.c);
  Map(out.data(), d.c, d.r) = MapC(a.node()->value.data(), d.r, d.c).transpose();
  return make_result({d.c, d.r}, std::move(out), {a.node()}, [d](Node& self) {
    Node& p = *self.parents[0];
    Map(p.grad_buffer().data(), d.r, d.c) += MapC(self.grad.data(), d.c, d.r).transpose();
  });
}

// ---- reductions and normalisers ---------------------------------------------

Tensor softmax(const Tensor& x, int axis) {
  check_defined(x, "softmax");
  check_axis(axis, "softmax");
  const Dims d = dims_of(x);
  const Slices s = slices_of(d, axis);
  const auto& xv = x.node()->value;
  std::vector<double> out(xv.size());
  for (std::size_t q = 0; q < s.count; ++q) {
    const std::size_t base = q * s.outer_stride;
    double mx = -INFINITY;
    for (std::size_t k = 0; k < s.length; ++k) mx = std::max(mx, xv[base + k * s.inner_stride]);
    double z = 0.0;
    for (std::size_t k = 0; k < s.length; ++k) {
      const std::size_t i = base + k * s.inner_stride;
      out[i] = std::exp(xv[i] - mx);
      z += out[i];
    }
    for (std::size_t k = 0; k < s.length; ++k) out[base + k * s.inner_stride] /= z;
  }
  return make_result({d.r, d.c}, std::move(out), {x.node()}, [s](Node& self) {
    Node& p = *self.parents[0];
    auto dp = p.grad_buffer();
    for (std::size_t q = 0; q < s.count; ++q) {
      const std::size_t base = q * s.outer_stride;
      double dot = 0.0;
      for (std::size_t k = 0; k < s.length; ++k) {
        const std::size_t i = base + k * s.inner_stride;
        dot += self.grad[i] * self.value[i];
      }
      for (std::size_t k = 0; k < s.length; ++k) {
        const std::size_t i = base + k * s.inner_stride;
        dp[i] += self.value[i] * (self.grad[i] - dot);
      }
    }
  });
}

Tensor log_softmax(const Tensor& x, int axis) {
  check_defined(x, "log_softmax");
  check_axis(axis, "log_softmax");
  const Dims d = dims_of(x);
  const Slices s = slices_of(d, axis);
  const auto& xv = x.node()->value;
  std::vector<double> out(xv.size());
  for (std::size_t q = 0; q < s.count; ++q) {
    const std::size_t base = q * s.outer_stride;
    double mx = -INFINITY;
    for (std::size_t k = 0; k < s.length; ++k) mx = std::max(mx, xv[base + k * s.inner_stride]);
    double z = 0.0;
    for (std::size_t k = 0; k < s.length; ++k) z += std::exp(xv[base + k * s.inner_stride] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t k = 0; k < s.length; ++k) {
      const std::size_t i = base + k * s.inner_stride;
      out[i] = xv[i] - lse;
    }
  }
  return make_result({d.r, d.c}, std::move(out), {x.node()}, [s](Node& self) {
    Node& p = *self.parents[0];
    auto dp = p.grad_buffer();
    for (std::size_t q = 0; q < s.count; ++q) {
      const std::size_t base = q * s.outer_stride;
      double gsum = 0.0;
      for (std::size_t k = 0; k < s.length; ++k) gsum += self.grad[base + k * s.inner_stride];
      for (std::size_t k = 0; k < s.length; ++k) {
        const std::size_t i = base + k * s.inner_stride;
        dp[i] += self.grad[i] - std::exp(self.value[i]) * gsum;
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, int axis, double eps) {
  check_defined(x, "layer_norm");
  check_axis(axis, "layer_norm");
  check_eps(eps, "layer_norm");
  const Dims d = dims_of(x);
  const Slices s = slices_of(d, axis);
  const auto& xv = x.node()->value;
  std::vector<double> out(xv.size());
  std::vector<double> inv_std(s.count);
  const double n = static_cast<double>(s.length);
  for (std::size_t q = 0; q < s.count; ++q) {
    const std::size_t base = q * s.outer_stride;
    double mu = 0.0;
    for (std::size_t k = 0; k < s.length; ++k) mu += xv[base + k * s.inner_stride];
    mu /= n;
    double var = 0.0;
    for (std::size_t k = 0; k < s.length; ++k) {
      const double c = xv[base + k * s.inner_stride] - mu;
      var += c * c;
    }
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[q] = is;
    for (std::size_t k = 0; k < s.length; ++k) {
      const std::size_t i = base + k * s.inner_stride;
      out[i] = (xv[i] - mu) * is;
    }
  }
  return make_result({d.r, d.c}, std::move(out), {x.node()},
                     [s, n, inv_std = std::move(inv_std)](Node& self) {
                       Node& p = *self.parents[0];
                       auto dp = p.grad_buffer();
                       for (std::size_t q = 0; q < s.count; ++q) {
                         const std::size_t base = q * s.outer_stride;
                         double mg = 0.0, mgy = 0.0;
                         for (std::size_t k = 0; k < s.length; ++k) {
                           const std::size_t i = base + k * s.inner_stride;
                           mg += self.grad[i];
                           mgy += self.grad[i] * self.value[i];
                         }
                         mg /= n;
                         mgy /= n;
                         for (std::size_t k = 0; k < s.length; ++k) {
                           const std::size_t i = base + k * s.inner_stride;
                           dp[i] += inv_std[q] * (self.grad[i] - mg - self.value[i] * mgy);
                         }
                       }
                     });
}

Tensor sum(const Tensor& x, int axis) {
  check_defined(x, "sum");
  check_axis(axis, "sum");
  const Dims d = dims_of(x);
  const Slices s = slices_of(d, axis);
  const auto& xv = x.node()->value;
  std::vector<double> out(s.count, 0.0);
  for (std::size_t q = 0; q < s.count; ++q)
    for (std::size_t k = 0; k < s.length; ++k) out[q] += xv[q * s.outer_stride + k * s.inner_stride];
  Shape shape = axis == 1 ? Shape{d.r, 1} : Shape{1, d.c};
  return make_result(std::move(shape), std::move(out), {x.node()}, [s](Node& self) {
    Node& p = *self.parents[0];
    auto dp = p.grad_buffer();
    for (std::size_t q = 0; q < s.count; ++q)
      for (std::size_t k = 0; k < s.length; ++k)
        dp[q * s.outer_stride + k * s.inner_stride] += self.grad[q];
  });
}

Tensor mean(const Tensor& x, int axis) {
  check_axis(axis, "mean");
  const Dims d = dims_of(x);
  return scale(sum(x, axis), 1.0 / static_cast<double>(axis == 1 ? d.c : d.r));
}

Tensor sum(const Tensor& x) {
  check_defined(x, "sum");
  double total = 0.0;
  for (double v : x.node()->value) total += v;
  return make_result({1, 1}, {total}, {x.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    auto dp = p.grad_buffer();
    for (auto& g : dp) g += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor l2_normalize(const Tensor& x, int axis, double eps) {
  check_defined(x, "l2_normalize");
  check_axis(axis, "l2_normalize");
  check_eps(eps, "l2_normalize");
  const Dims d = dims_of(x);
  const Slices s = slices_of(d, axis);
  const auto& xv = x.node()->value;
  std::vector<double> out(xv.size());
  std::vector<double> denom(s.count);
  std::vector<char> clamped(s.count);
  for (std::size_t q = 0; q < s.count; ++q) {
    const std::size_t base = q * s.outer_stride;
    double ss = 0.0;
    for (std::size_t k = 0; k < s.length; ++k) {
      const double v = xv[base + k * s.inner_stride];
      ss += v * v;
    }
    const double nrm = std::sqrt(ss);
    clamped[q] = nrm <= eps;
    denom[q] = clamped[q] ? eps : nrm;
    for (std::size_t k = 0; k < s.length; ++k) {
      const std::size_t i = base + k * s.inner_stride;
      out[i] = xv[i] / denom[q];
    }
  }
  return make_result({d.r, d.c}, std::move(out), {x.node()},
                     [s, denom = std::move(denom), clamped = std::move(clamped)](Node& self) {
                       Node& p = *self.parents[0];
                       auto dp = p.grad_buffer();
                       for (std::size_t q = 0; q < s.count; ++q) {
                         const std::size_t base = q * s.outer_stride;
                         double dot = 0.0;
                         if (!clamped[q])
                           for (std::size_t k = 0; k < s.length; ++k) {
                             const std::size_t i = base + k * s.inner_stride;
                             dot += self.grad[i] * self.value[i];
                           }
                         for (std::size_t k = 0; k < s.length; ++k) {
                           const std::size_t i = base + k * s.inner_stride;
                           dp[i] += (self.grad[i] - self.value[i] * dot) / denom[q];
                         }
                       }
                     });
}

// ---- structural -------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  check_axis(axis, "concat");
  if (parts.empty()) throw DimensionError("concat: no inputs");
  std::vector<Dims> ds;
  std::vector<NodePtr> inputs;
  for (const auto& p : parts) {
    check_defined(p, "concat");
    ds.push_back(dims_of(p));
    inputs.push_back(p.node());
  }
  std::size_t rows = 0, cols = 0;
  std::ostringstream sizes;
  for (std::size_t i = 0; i < ds.size(); ++i) sizes << (i ? "," : "") << shape_str(parts[i].shape());
  if (axis == 0) {
    cols = ds[0].c;
    for (const auto& d : ds) {
      if (d.c != cols) throw DimensionError("concat rows: column counts differ " + sizes.str());
      rows += d.r;
    }
  } else {
    rows = ds[0].r;
    for (const auto& d : ds) {
      if (d.r != rows) throw DimensionError("concat cols: row counts differ " + sizes.str());
      cols += d.c;
    }
  }
  std::vector<double> out(rows * cols);
  std::size_t offset = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto& v = parts[pi].node()->value;
    const Dims d = ds[pi];
    if (axis == 0) {
      std::copy(v.begin(), v.end(), out.begin() + static_cast<std::ptrdiff_t>(offset * cols));
      offset += d.r;
    } else {
      for (std::size_t i = 0; i < d.r; ++i)
        for (std::size_t j = 0; j < d.c; ++j) out[i * cols + offset + j] = v[i * d.c + j];
      offset += d.c;
    }
  }
  return make_result({rows, cols}, std::move(out), std::move(inputs),
                     [ds, axis, cols](Node& self) {
                       std::size_t off = 0;
                       for (std::size_t pi = 0; pi < ds.size(); ++pi) {
                         Node& p = *self.parents[pi];
                         const Dims d = ds[pi];
                         if (p.requires_grad) {
                           auto dp = p.grad_buffer();
                           for (std::size_t i = 0; i < d.r; ++i)
                             for (std::size_t j = 0; j < d.c; ++j) {
                               const std::size_t src =
                                   axis == 0 ? (off + i) * cols + j : i * cols + off + j;
                               dp[i * d.c + j] += self.grad[src];
                             }
                         }
                         off += axis == 0 ? d.r : d.c;
                       }
                     });
}

Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end) {
  check_defined(x, "slice");
  check_axis(axis, "slice");
  const Dims d = dims_of(x);
  const std::size_t extent = axis == 0 ? d.r : d.c;
  if (begin >= end || end > extent)
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of range for axis of size " + std::to_string(extent));
  const std::size_t n = end - begin;
  const Dims od = axis == 0 ? Dims{n, d.c} : Dims{d.r, n};
  const auto& xv = x.node()->value;
  std::vector<double> out(od.r * od.c);
  for (std::size_t i = 0; i < od.r; ++i)
    for (std::size_t j = 0; j < od.c; ++j)
      out[i * od.c + j] = axis == 0 ? xv[(begin + i) * d.c + j] : xv[i * d.c + begin + j];
  return make_result({od.r, od.c}, std::move(out), {x.node()}, [d, od, axis, begin](Node& self) {
    Node& p = *self.parents[0];
    auto dp = p.grad_buffer();
    for (std::size_t i = 0; i < od.r; ++i)
      for (std::size_t j = 0; j < od.c; ++j) {
        const std::size_t dst = axis == 0 ? (begin + i) * d.c + j : i * d.c + begin + j;
        dp[dst] += self.grad[i * od.c + j];
      }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  check_defined(x, "reshape");
  if (shape_numel(shape) != x.numel())
    throw DimensionError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  auto values = x.node()->value;
  return make_result(std::move(shape), std::move(values), {x.node()}, [](Node& self) {
    Node& p = *self.parents[0];
    auto dp = p.grad_buffer();
    for (std::size_t k = 0; k < dp.size(); ++k) dp[k] += self.grad[k];
  });
}

Tensor diagonal(const Tensor& x) {
  check_defined(x, "diagonal");
  const Dims d = dims_of(x);
  const std::size_t n = std::min(d.r, d.c);
  const auto& xv = x.node()->value;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = xv[i * d.c + i];
  return make_result({n, 1}, std::move(out), {x.node()}, [d, n](Node& self) {
    Node& p = *self.parents[0];
    auto dp = p.grad_buffer();
    for (std::size_t i = 0; i < n; ++i) dp[i * d.c + i] += self.grad[i];
  });
}

Tensor embedding(const Tensor& table, std::span<const std::size_t> ids) {
  check_defined(table, "embedding");
  const Dims d = dims_of(table);
  if (ids.empty()) throw DimensionError("embedding: empty id list");
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  const auto& tv = table.node()->value;
  std::vector<double> out(idv.size() * d.c);
  for (std::size_t i = 0; i < idv.size(); ++i) {
    if (idv[i] >= d.r)
      throw DimensionError("embedding: id " + std::to_string(idv[i]) + " outside table of " +
                           std::to_string(d.r) + " rows");
    std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(idv[i] * d.c), d.c,
                out.begin() + static_cast<std::ptrdiff_t>(i * d.c));
  }
  const std::size_t n = idv.size();
  return make_result({n, d.c}, std::move(out), {table.node()},
                     [d, idv = std::move(idv)](Node& self) {
                       Node& p = *self.parents[0];
                       auto dp = p.grad_buffer();
                       for (std::size_t i = 0; i < idv.size(); ++i)
                         for (std::size_t j = 0; j < d.c; ++j)
                           dp[idv[i] * d.c + j] += self.grad[i * d.c + j];
                     });
}

std::size_t conv1d_out_len(std::size_t length, std::size_t stride) {
  if (stride < 1) throw ConfigError("conv1d: stride must be >= 1");
  return (length + stride - 1) / stride;
}

Tensor conv1d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t kernel,
              std::size_t stride) {
  check_defined(input, "conv1d");
  check_defined(weight, "conv1d");
  check_defined(bias, "conv1d");
  if (kernel < 1) throw ConfigError("conv1d: kernel must be >= 1");
  if (stride < 1) throw ConfigError("conv1d: stride must be >= 1");
  const Dims dx = dims_of(input), dw = dims_of(weight), db = dims_of(bias);
  if (dw.r != kernel * dx.c)
    throw DimensionError("conv1d: weight " + shape_str(weight.shape()) + " needs " +
                         std::to_string(kernel * dx.c) + " rows for kernel " +
                         std::to_string(kernel) + " over input " + shape_str(input.shape()));
  if (db.r != 1 || db.c != dw.c)
    throw DimensionError("conv1d: bias " + shape_str(bias.shape()) + " does not match weight " +
                         shape_str(weight.shape()));
  const std::size_t out_len = conv1d_out_len(dx.r, stride);
  const std::size_t width = kernel * dx.c;
  // im2col with implicit right zero padding.
  std::vector<double> cols(out_len * width, 0.0);
  const auto& xv = input.node()->value;
  for (std::size_t t = 0; t < out_len; ++t)
    for (std::size_t j = 0; j < kernel; ++j) {
      const std::size_t src = t * stride + j;
      if (src >= dx.r) break;
      std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(src * dx.c), dx.c,
                  cols.begin() + static_cast<std::ptrdiff_t>(t * width + j * dx.c));
    }
  std::vector<double> out(out_len * dw.c);
  Map o(out.data(), out_len, dw.c);
  o.noalias() = MapC(cols.data(), out_len, width) * MapC(weight.node()->value.data(), dw.r, dw.c);
  o.rowwise() += MapC(bias.node()->value.data(), 1, dw.c).row(0);
  return make_result(
      {out_len, dw.c}, std::move(out), {input.node(), weight.node(), bias.node()},
      [dx, dw, kernel, stride, out_len, width, cols = std::move(cols)](Node& self) {
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        MapC g(self.grad.data(), out_len, dw.c);
        if (pw.requires_grad)
          Map(pw.grad_buffer().data(), dw.r, dw.c).noalias() +=
              MapC(cols.data(), out_len, width).transpose() * g;
        if (pb.requires_grad) {
          auto dbias = pb.grad_buffer();
          for (std::size_t t = 0; t < out_len; ++t)
            for (std::size_t c = 0; c < dw.c; ++c) dbias[c] += self.grad[t * dw.c + c];
        }
        if (px.requires_grad) {
          RowMat dcols = g * MapC(pw.value.data(), dw.r, dw.c).transpose();
          auto dxb = px.grad_buffer();
          for (std::size_t t = 0; t < out_len; ++t)
            for (std::size_t j = 0; j < kernel; ++j) {
              const std::size_t src = t * stride + j;
              if (src >= dx.r) break;
              for (std::size_t c = 0; c < dx.c; ++c) dxb[src * dx.c + c] += dcols(t, j * dx.c + c);
            }
        }
      });
}

bool all_finite(const Tensor& t) {
  for (double v : t.data())
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace tgq

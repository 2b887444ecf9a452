#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tgq {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient reaches the node
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::span<double> grad_buffer();
};
}  // namespace detail

/// Dense row-major float64 tensor with reverse-mode gradient tracking.
///
/// A Tensor is a cheap handle; copies share storage and graph position.
/// Operations accept rank-1 tensors as single rows and always return rank-2
/// results, so vectors flow through the graph as 1xN matrices.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                       bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  /// Row/column view; a rank-1 tensor of length n reads as 1 x n.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  /// Mutable access to a tensor's values. Only legal on graph leaves.
  std::span<double> mutable_data();
  double item() const;
  double at(std::size_t r, std::size_t c) const;

  bool requires_grad() const;
  bool has_grad() const;
  /// Gradient buffer; zeros when no gradient has reached the tensor.
  std::vector<double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  /// Same values, cut from the graph.
  Tensor detach() const;
  /// Deep copy of the values as a fresh leaf.
  Tensor clone(bool requires_grad = false) const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Populate gradients of every tensor that `loss` depends on.
/// Throws ContractError when `loss` is not a single element.
void backward(const Tensor& loss);

/// Disables graph construction on the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled() noexcept;

// ---- operations -----------------------------------------------------------
// Binary elementwise ops broadcast 2-D shapes whose dims are equal or 1.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, double c);
Tensor scale(const Tensor& a, double c);

Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T without materialising the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor sigmoid(const Tensor& x);
/// 2*sigmoid(x) - 1, evaluated as tanh(x/2) so the result is exactly odd.
Tensor centered_sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
/// Exact (erf-based) GELU.
Tensor gelu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor square(const Tensor& x);

Tensor softmax(const Tensor& x, int axis);
Tensor log_softmax(const Tensor& x, int axis);
/// Normalises each slice along `axis` to zero mean and unit (population)
/// variance; no affine part.
Tensor layer_norm(const Tensor& x, int axis, double eps = 1e-5);
Tensor mean(const Tensor& x, int axis);
Tensor sum(const Tensor& x, int axis);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// x / max(||x||, eps) along `axis`.
Tensor l2_normalize(const Tensor& x, int axis, double eps = 1e-12);

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& x, int axis, std::size_t begin, std::size_t end);
Tensor reshape(const Tensor& x, Shape shape);
Tensor diagonal(const Tensor& x);
/// Row gather: out[i] = table[ids[i]].
Tensor embedding(const Tensor& table, std::span<const std::size_t> ids);

/// Strided 1-D convolution over the row axis of an L x d_in input.
/// `weight` is (kernel*d_in) x d_out (tap-major), `bias` is 1 x d_out.
/// Rows past the end read as zeros, giving ceil(L/stride) output rows.
Tensor conv1d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              std::size_t kernel, std::size_t stride);

/// Number of output rows produced by conv1d for an input of `length` rows.
std::size_t conv1d_out_len(std::size_t length, std::size_t stride);

bool all_finite(const Tensor& t);

}  // namespace tgq

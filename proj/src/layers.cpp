#include "tgq/layers.hpp"

#include <cmath>

#include "tgq/errors.hpp"

namespace tgq {

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
               bool zero_init) {
  if (zero_init) {
    w = store.constant(name + ".w", {in, out}, 0.0);
    b = store.constant(name + ".b", {1, out}, 0.0);
  } else {
    w = store.uniform(name + ".w", {in, out}, in);
    b = store.uniform(name + ".b", {1, out}, in);
  }
}

Tensor Linear::operator()(const Tensor& x) const { return add(matmul(x, w), b); }

Norm::Norm(ParameterStore& store, const std::string& name, std::size_t d) {
  gain = store.constant(name + ".gain", {1, d}, 1.0);
  bias = store.constant(name + ".bias", {1, d}, 0.0);
}

Tensor Norm::operator()(const Tensor& x) const { return add(mul(layer_norm(x, 1), gain), bias); }

Attention::Attention(ParameterStore& store, const std::string& name, std::size_t d_model,
                     std::size_t d_kv, std::size_t n_heads)
    : q(store, name + ".wq", d_model, d_model),
      k(store, name + ".wk", d_kv, d_model),
      v(store, name + ".wv", d_kv, d_model),
      o(store, name + ".wo", d_model, d_model),
      heads(n_heads) {
  if (n_heads == 0 || d_model % n_heads != 0)
    throw ConfigError(name + ": model width " + std::to_string(d_model) + " not divisible by " +
                      std::to_string(n_heads) + " heads");
}

Tensor Attention::operator()(const Tensor& queries, const Tensor& memory, std::vector<Tensor>* maps) const {
  const Tensor qp = q(queries), kp = k(memory), vp = v(memory);
  const std::size_t d = qp.cols(), dh = d / heads;
  const double scale_by = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = heads == 1 ? qp : slice(qp, 1, h * dh, (h + 1) * dh);
    const Tensor kh = heads == 1 ? kp : slice(kp, 1, h * dh, (h + 1) * dh);
    const Tensor vh = heads == 1 ? vp : slice(vp, 1, h * dh, (h + 1) * dh);
    const Tensor a = softmax(scale(matmul_nt(qh, kh), scale_by), 1);
    if (maps) maps->push_back(a.detach());
    outs.push_back(matmul(a, vh));
  }
  return o(heads == 1 ? outs[0] : concat(outs, 1));
}

FeedForward::FeedForward(ParameterStore& store, const std::string& name, std::size_t d, std::size_t hidden)
    : up(store, name + ".up", d, hidden), down(store, name + ".down", hidden, d) {}

Tensor FeedForward::operator()(const Tensor& x) const { return down(gelu(up(x))); }

}  // namespace tgq

#pragma once

#include <string>
#include <vector>

#include "tgq/params.hpp"
#include "tgq/tensor.hpp"

namespace tgq {

/// y = x W + b, W stored in x out.
struct Linear {
  Tensor w, b;
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
         bool zero_init = false);
  Tensor operator()(const Tensor& x) const;
};

/// Row-wise layer norm with learned gain and bias.
struct Norm {
  Tensor gain, bias;
  Norm() = default;
  Norm(ParameterStore& store, const std::string& name, std::size_t d);
  Tensor operator()(const Tensor& x) const;
};

struct Attention {
  Linear q, k, v, o;
  std::size_t heads = 1;
  Attention() = default;
  Attention(ParameterStore& store, const std::string& name, std::size_t d_model, std::size_t d_kv,
            std::size_t heads);
  /// Multi-head scaled dot-product attention of `queries` over `memory`.
  /// When `maps` is non-null the per-head weights are appended (detached).
  Tensor operator()(const Tensor& queries, const Tensor& memory, std::vector<Tensor>* maps = nullptr) const;
};

struct FeedForward {
  Linear up, down;
  FeedForward() = default;
  FeedForward(ParameterStore& store, const std::string& name, std::size_t d, std::size_t hidden);
  Tensor operator()(const Tensor& x) const;
};

}  // namespace tgq

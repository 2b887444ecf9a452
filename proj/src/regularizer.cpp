#include "tgq/regularizer.hpp"

#include <iostream>

#include "tgq/errors.hpp"

namespace tgq {

Tensor standardize(const Tensor& s, double eps) {
  if (!(eps > 0)) throw ConfigError("standardize: eps must be positive");
  if (s.rows() < 2) throw ContractError("standardize: need at least two rows, got " + std::to_string(s.rows()));
  const Tensor centred = sub(s, mean(s, 0));
  const Tensor std_dev = sqrt(mean(square(centred), 0));
  return div(centred, add_scalar(std_dev, eps));
}

Tensor cross_correlation(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw DimensionError("cross_correlation: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  return scale(matmul(transpose(a), b), 1.0 / static_cast<double>(a.rows()));
}

Tensor rr_loss(const Tensor& c) {
  if (c.rows() != c.cols()) throw DimensionError("rr_loss: matrix " + shape_str(c.shape()) + " is not square");
  return mean(square(diagonal(c)));
}

Tensor redundancy_loss(const Tensor& s_txt, const Tensor& s_rnd, double eps) {
  if (s_txt.rows() < 2) {
    std::cerr << "warning: redundancy loss skipped for a batch of " << s_txt.rows() << " item(s)\n";
    return Tensor::scalar(0.0);
  }
  return rr_loss(cross_correlation(standardize(s_txt, eps), standardize(s_rnd, eps)));
}

}  // namespace tgq

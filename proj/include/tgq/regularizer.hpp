#pragma once

#include "tgq/tensor.hpp"

namespace tgq {

/// Per-column (x - mean) / (population std + eps).
Tensor standardize(const Tensor& s, double eps = 1e-5);
/// (1/B) A^T B for two B x d standardized batches.
Tensor cross_correlation(const Tensor& a, const Tensor& b);
/// Mean of the squared diagonal of C.
Tensor rr_loss(const Tensor& c);
/// Full pipeline on raw summaries. Batches with fewer than two rows give a
/// constant 0 (with a warning on stderr).
Tensor redundancy_loss(const Tensor& s_txt, const Tensor& s_rnd, double eps = 1e-5);

}  // namespace tgq

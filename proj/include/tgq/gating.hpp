#pragma once

#include <string>

#include "tgq/layers.hpp"
#include "tgq/params.hpp"

namespace tgq {

/// Cosine of two vectors; NumericError when either norm is ~0.
double agreement_score(const Tensor& f_img, const Tensor& f_title, double eps = 1e-12);

struct GateInputs {
  double s_title = 0.0;
  Tensor e_bar_txt;  // 1 x d_llm, mean of the raw semantic stream
  Tensor e_bar_rnd;  // 1 x d_llm, mean of the raw exploratory stream
  Tensor f_img;      // 1 x d_v
  Tensor f_title;    // 1 x d_v
};

struct ModulatedStreams {
  Tensor e_txt, e_rnd;
  Tensor beta_txt, beta_rnd;  // 1 x d_llm, each entry in (-1, 1)
};

/// Two-layer GELU MLP whose last layer starts at zero.
class GateMlp {
 public:
  GateMlp() = default;
  GateMlp(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden, std::size_t out);
  Tensor operator()(const Tensor& u) const;
  std::size_t in_dim() const { return in_; }
  const Linear& first() const { return l1_; }
  const Linear& last() const { return l2_; }

 private:
  Linear l1_, l2_;
  std::size_t in_ = 0;
};

/// E (1 + beta), beta broadcast over token rows.
Tensor modulate_stream(const Tensor& e, const Tensor& beta);

class DualGate {
 public:
  DualGate(ParameterStore& store, std::size_t d_v, std::size_t d_llm, std::size_t hidden);
  /// u_txt = [f_img; f_title; S; e_bar_txt; e_bar_rnd], u_rnd = [f_img; e_bar_rnd].
  ModulatedStreams modulate(const Tensor& e_txt, const Tensor& e_rnd, const GateInputs& in) const;
  const GateMlp& txt() const { return g_txt_; }
  const GateMlp& rnd() const { return g_rnd_; }

 private:
  std::size_t d_v_, d_llm_;
  GateMlp g_txt_, g_rnd_;
};

/// Running means for the optional per-batch gate dump.
struct GateDiagnostics {
  double sum_abs_beta_txt = 0, sum_abs_beta_rnd = 0, sum_s_title = 0;
  std::size_t n = 0;
  void add(const ModulatedStreams& m, double s_title);
  std::string to_text() const;  // key=value lines
};

}  // namespace tgq

#include "tgq/gating.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tgq/errors.hpp"

namespace tgq {

double agreement_score(const Tensor& f_img, const Tensor& f_title, double eps) {
  const auto a = f_img.data(), b = f_title.data();
  if (a.size() != b.size())
    throw DimensionError("agreement_score: " + shape_str(f_img.shape()) + " vs " + shape_str(f_title.shape()));
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na <= eps || nb <= eps) throw NumericError("agreement_score: zero-norm input");
  return std::clamp(dot / (na * nb), -1.0, 1.0);
}

GateMlp::GateMlp(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden,
                 std::size_t out)
    : l1_(store, name + ".fc1", in, hidden), l2_(store, name + ".fc2", hidden, out, true), in_(in) {}

Tensor GateMlp::operator()(const Tensor& u) const { return l2_(gelu(l1_(u))); }

Tensor modulate_stream(const Tensor& e, const Tensor& beta) { return mul(e, add_scalar(beta, 1.0)); }

DualGate::DualGate(ParameterStore& store, std::size_t d_v, std::size_t d_llm, std::size_t hidden)
    : d_v_(d_v),
      d_llm_(d_llm),
      g_txt_(store, "gate.txt", 2 * d_v + 1 + 2 * d_llm, hidden, d_llm),
      g_rnd_(store, "gate.rnd", d_v + d_llm, hidden, d_llm) {}

ModulatedStreams DualGate::modulate(const Tensor& e_txt, const Tensor& e_rnd, const GateInputs& in) const {
  const std::size_t seg[5] = {in.f_img.numel(), in.f_title.numel(), 1, in.e_bar_txt.numel(),
                              in.e_bar_rnd.numel()};
  if (seg[0] != d_v_ || seg[1] != d_v_ || seg[3] != d_llm_ || seg[4] != d_llm_)
    throw DimensionError("gate input segments f_img=" + std::to_string(seg[0]) +
                         " f_title=" + std::to_string(seg[1]) + " S=1 e_txt=" + std::to_string(seg[3]) +
                         " e_rnd=" + std::to_string(seg[4]) + "; expected " + std::to_string(d_v_) + "," +
                         std::to_string(d_v_) + ",1," + std::to_string(d_llm_) + "," + std::to_string(d_llm_));
  const Tensor f_img = reshape(in.f_img, {1, d_v_});
  const Tensor f_title = reshape(in.f_title, {1, d_v_});
  const Tensor s = Tensor::from({1, 1}, {in.s_title});
  const Tensor u_txt = concat({f_img, f_title, s, in.e_bar_txt, in.e_bar_rnd}, 1);
  const Tensor u_rnd = concat({f_img, in.e_bar_rnd}, 1);
  ModulatedStreams m;
  m.beta_txt = centered_sigmoid(g_txt_(u_txt));
  m.beta_rnd = centered_sigmoid(g_rnd_(u_rnd));
  m.e_txt = modulate_stream(e_txt, m.beta_txt);
  m.e_rnd = modulate_stream(e_rnd, m.beta_rnd);
  return m;
}

void GateDiagnostics::add(const ModulatedStreams& m, double s_title) {
  auto mean_abs = [](const Tensor& t) {
    double s = 0;
    for (double v : t.data()) s += std::abs(v);
    return s / static_cast<double>(t.numel());
  };
  sum_abs_beta_txt += mean_abs(m.beta_txt);
  sum_abs_beta_rnd += mean_abs(m.beta_rnd);
  sum_s_title += s_title;
  ++n;
}

std::string GateDiagnostics::to_text() const {
  const double d = n ? static_cast<double>(n) : 1.0;
  std::ostringstream os;
  os << "mean_abs_beta_txt=" << sum_abs_beta_txt / d << "\n"
     << "mean_abs_beta_rnd=" << sum_abs_beta_rnd / d << "\n"
     << "mean_s_title=" << sum_s_title / d << "\n";
  return os.str();
}

}  // namespace tgq

#include <cmath>

#include "doctest.h"
#include "tgq/errors.hpp"
#include "tgq/gating.hpp"
#include "tgq/rng.hpp"

using namespace tgq;

namespace {

Tensor random_row(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.uniform(-1, 1);
  return Tensor::from({r, c}, std::move(v));
}

GateInputs inputs(std::size_t d_v, std::size_t d_llm, std::uint64_t seed) {
  GateInputs in;
  in.f_img = random_row(1, d_v, seed);
  in.f_title = random_row(1, d_v, seed + 1);
  in.s_title = agreement_score(in.f_img, in.f_title);
  in.e_bar_txt = random_row(1, d_llm, seed + 2);
  in.e_bar_rnd = random_row(1, d_llm, seed + 3);
  return in;
}

}  // namespace

TEST_CASE("agreement score examples") {
  const Tensor v = Tensor::from({1, 3}, {0.3, -2, 5});
  CHECK(agreement_score(v, v) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(agreement_score(v, scale(v, -1)) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(agreement_score(Tensor::from({1, 2}, {1, 0}), Tensor::from({1, 2}, {0, 1})) == 0.0);
  CHECK_THROWS_AS(agreement_score(Tensor::from({1, 3}, {0, 0, 0}), v), NumericError);
}

TEST_CASE("centered sigmoid values") {
  CHECK(centered_sigmoid(Tensor::scalar(0.0)).item() == 0.0);
  // 2 sigma(10) - 1 computed directly
  const double ref = 2.0 / (1.0 + std::exp(-10.0)) - 1.0;
  CHECK(centered_sigmoid(Tensor::scalar(10.0)).item() == doctest::Approx(ref).epsilon(1e-14));
  CHECK(centered_sigmoid(Tensor::scalar(10.0)).item() == doctest::Approx(0.9999092).epsilon(1e-7));
}

TEST_CASE("centered sigmoid is odd over 1000 random points") {
  Rng rng(5);
  for (int i = 0; i < 1000; ++i) {
    const double x = rng.uniform(-40, 40);
    const double a = centered_sigmoid(Tensor::scalar(x)).item();
    const double b = centered_sigmoid(Tensor::scalar(-x)).item();
    CHECK(std::abs(a + b) <= 1e-12);
    CHECK(a > -1.0);
    CHECK(a < 1.0);
  }
}

TEST_CASE("zero-initialised gates leave the streams bit-identical") {
  ParameterStore store(3);
  DualGate gate(store, 4, 6, 8);
  const Tensor e_txt = random_row(2, 6, 1), e_rnd = random_row(3, 6, 2);
  const auto m = gate.modulate(e_txt, e_rnd, inputs(4, 6, 10));
  CHECK(std::equal(m.e_txt.data().begin(), m.e_txt.data().end(), e_txt.data().begin()));
  CHECK(std::equal(m.e_rnd.data().begin(), m.e_rnd.data().end(), e_rnd.data().begin()));
  for (double b : m.beta_txt.data()) CHECK(b == 0.0);
}

TEST_CASE("gate outputs stay strictly inside (-1, 1) after random weights") {
  ParameterStore store(4);
  DualGate gate(store, 4, 6, 8);
  Rng rng(9);
  for (const auto& p : store.params())
    for (Tensor t = p.tensor; auto& w : t.mutable_data()) w = rng.normal() * 3.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto m = gate.modulate(random_row(2, 6, s), random_row(3, 6, s + 7), inputs(4, 6, s * 13));
    for (double b : m.beta_txt.data()) CHECK((b > -1.0 && b < 1.0));
    for (double b : m.beta_rnd.data()) CHECK((b > -1.0 && b < 1.0));
  }
}

TEST_CASE("modulation is channel-wise") {
  const Tensor e = random_row(3, 4, 1);
  const Tensor beta = Tensor::from({1, 4}, {0.5, -0.25, 0.0, 0.9});
  const auto out = modulate_stream(e, beta);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c) CHECK(out.at(r, c) == doctest::Approx(e.at(r, c) * (1 + beta.at(0, c))));
  std::vector<double> bv(beta.data().begin(), beta.data().end());
  bv[1] = -0.9;
  const auto out2 = modulate_stream(e, Tensor::from({1, 4}, bv));
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c)
      if (c != 1) CHECK(out2.at(r, c) == out.at(r, c));
}

TEST_CASE("beta near -1 drives the stream to zero") {
  const Tensor e = random_row(2, 3, 4);
  const Tensor beta = centered_sigmoid(Tensor::from({1, 3}, {-60, -60, -60}));
  const Tensor out = modulate_stream(e, beta);
  for (double v : out.data()) CHECK(std::abs(v) < 1e-15);
}

TEST_CASE("segment mismatch lists the sizes") {
  ParameterStore store(1);
  DualGate gate(store, 4, 6, 8);
  GateInputs in = inputs(4, 6, 1);
  in.f_img = random_row(1, 5, 1);
  try {
    gate.modulate(random_row(2, 6, 1), random_row(3, 6, 2), in);
    FAIL("expected a dimension error");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find('5') != std::string::npos);
  }
}

TEST_CASE("gate diagnostics report means") {
  GateDiagnostics d;
  ModulatedStreams m;
  m.beta_txt = Tensor::from({1, 2}, {0.5, -0.5});
  m.beta_rnd = Tensor::from({1, 2}, {0.25, 0.25});
  d.add(m, 0.8);
  const auto text = d.to_text();
  CHECK(text.find("mean_abs_beta_txt=0.5") != std::string::npos);
  CHECK(text.find("mean_s_title=0.8") != std::string::npos);
}

#include <cmath>

#include "doctest.h"
#include "tgq/errors.hpp"
#include "tgq/hqc.hpp"
#include "tgq/rng.hpp"

using namespace tgq;

namespace {

Tensor rows(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.normal();
  return Tensor::from({r, c}, std::move(v));
}

HqcConfig small_cfg(bool self_attention = true, std::size_t heads = 2) {
  HqcConfig c;
  c.d_q = 8;
  c.d_llm = 6;
  c.n_heads = heads;
  c.n_layers = 2;
  c.self_attention = self_attention;
  return c;
}

}  // namespace

TEST_CASE("T_g = ceil(L_t / s)") {
  for (std::size_t s : {1, 2, 5, 7})
    for (std::size_t L = 1; L <= 50; ++L) {
      HqcConfig c = small_cfg();
      c.stride = s;
      c.kernel = s;
      ParameterStore store(1);
      Hqc h(store, c, 4, true, true);
      const auto q = h.downsample(rows(L, 4, L));
      CHECK(q.rows() == (L + s - 1) / s);
      CHECK(h.t_g(L) == (L + s - 1) / s);
    }
}

TEST_CASE("downsampling examples") {
  const std::size_t d = 3;
  const Tensor w = rows(5 * d, d, 1), b = rows(1, d, 2);
  CHECK(downsample_text(rows(50, d, 3), w, b, 5, 5).rows() == 10);
  CHECK(downsample_text(rows(1, d, 3), w, b, 5, 5).rows() == 1);
  // L_t = 7: second window sees two real rows and three zero rows
  const Tensor h = rows(7, d, 4);
  const Tensor out = downsample_text(h, w, b, 5, 5);
  REQUIRE(out.rows() == 2);
  for (std::size_t c = 0; c < d; ++c) {
    double ref = b.at(0, c);
    for (std::size_t k = 0; k < 2; ++k)
      for (std::size_t j = 0; j < d; ++j) ref += h.at(5 + k, j) * w.at(k * d + j, c);
    CHECK(out.at(1, c) == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("semantic query projection") {
  const Tensor h = rows(3, 4, 1);
  const Tensor eye = Tensor::matrix({{1, 0, 0, 0}, {0, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}});
  const auto q = project_semantic_queries(h, eye);
  for (std::size_t k = 0; k < h.numel(); ++k) CHECK(q.data()[k] == h.data()[k]);
  const Tensor z = project_semantic_queries(Tensor::zeros({3, 4}), rows(4, 5, 2));
  for (double v : z.data()) CHECK(v == 0.0);
  CHECK_THROWS_AS(project_semantic_queries(h, rows(5, 2, 1)), DimensionError);
}

TEST_CASE("forward splits the output into the two streams") {
  ParameterStore store(3);
  HqcConfig c = small_cfg();
  Hqc h(store, c, 4, true, true);
  EncodedItem it;
  it.h_txt = rows(50, 4, 1);
  it.h_img = rows(16, 4, 2);
  const auto out = h.run(it);
  CHECK(out.e_txt.shape() == Shape{10, 6});
  CHECK(out.e_rnd.shape() == Shape{3, 6});
  CHECK_THROWS_AS(h.forward(rows(3, 7, 1), it.h_img, 0), DimensionError);
}

TEST_CASE("attention is invariant to a permutation of image tokens") {
  ParameterStore store(5);
  Hqc h(store, small_cfg(true, 1), 4, true, true);
  const Tensor q = h.queries(rows(9, 4, 1));
  const Tensor img = rows(6, 4, 2);
  std::vector<std::size_t> perm{4, 2, 0, 5, 1, 3};
  std::vector<double> v;
  for (auto r : perm)
    for (std::size_t c = 0; c < 4; ++c) v.push_back(img.at(r, c));
  const auto a = h.forward(q, img, 2), b = h.forward(q, Tensor::from({6, 4}, v), 2);
  for (std::size_t k = 0; k < a.e_txt.numel(); ++k) CHECK(a.e_txt.data()[k] == doctest::Approx(b.e_txt.data()[k]).epsilon(1e-12));
  for (std::size_t k = 0; k < a.e_rnd.numel(); ++k) CHECK(a.e_rnd.data()[k] == doctest::Approx(b.e_rnd.data()[k]).epsilon(1e-12));
}

TEST_CASE("zeroed cross-attention values cut the image off") {
  ParameterStore store(6);
  Hqc h(store, small_cfg(), 4, true, true);
  for (const auto& p : store.params())
    if (p.name.find("cross_attn.wv") != std::string::npos)
      for (Tensor t = p.tensor; auto& w : t.mutable_data()) w = 0.0;
  const Tensor q = h.queries(rows(9, 4, 1));
  const auto a = h.forward(q, rows(16, 4, 2), 2), b = h.forward(q, rows(16, 4, 3), 2);
  for (std::size_t k = 0; k < a.e_rnd.numel(); ++k) CHECK(a.e_rnd.data()[k] == b.e_rnd.data()[k]);
}

TEST_CASE("without self-attention, changing Q_rnd changes only the last T_r rows") {
  ParameterStore store(7);
  Hqc h(store, small_cfg(false), 4, true, true);
  const Tensor q = h.queries(rows(9, 4, 1));
  std::vector<double> v(q.data().begin(), q.data().end());
  for (std::size_t k = 2 * 8; k < v.size(); ++k) v[k] = 0.0;
  const Tensor img = rows(16, 4, 2);
  const auto a = h.forward(q, img, 2), b = h.forward(Tensor::from(q.shape(), v), img, 2);
  for (std::size_t k = 0; k < a.e_txt.numel(); ++k) CHECK(a.e_txt.data()[k] == b.e_txt.data()[k]);
  bool changed = false;
  for (std::size_t k = 0; k < a.e_rnd.numel(); ++k) changed = changed || a.e_rnd.data()[k] != b.e_rnd.data()[k];
  CHECK(changed);
}

TEST_CASE("variants own only their query parameters") {
  ParameterStore a(1), b(1);
  Hqc exploratory(a, small_cfg(), 4, false, true);
  Hqc semantic(b, small_cfg(), 4, true, false);
  CHECK(a.scope("hqc.semantic").empty());
  CHECK_FALSE(a.scope("hqc.exploratory").empty());
  CHECK(b.scope("hqc.exploratory").empty());
  EncodedItem it;
  it.h_txt = rows(12, 4, 1);
  it.h_img = rows(16, 4, 2);
  CHECK(exploratory.run(it).e_rnd.rows() == 3);
  CHECK_FALSE(exploratory.run(it).e_txt.defined());
  CHECK(semantic.run(it).e_txt.rows() == 3);
}

TEST_CASE("attention export") {
  ParameterStore store(8);
  Hqc h(store, small_cfg(), 4, true, true);
  EncodedItem it;
  it.h_txt = rows(12, 4, 1);
  it.h_img = rows(16, 4, 2);
  CHECK_THROWS_AS(export_attention(h.run(it)), StateError);
  const auto out = h.run(it, true);
  const auto ex = export_attention(out);
  REQUIRE(ex.layers.size() == 2);
  for (const auto& layer : ex.layers) {
    REQUIRE(layer.size() == 2);
    for (const auto& head : layer) {
      CHECK(head.shape() == Shape{6, 16});
      for (std::size_t r = 0; r < head.rows(); ++r) {
        double s = 0;
        for (std::size_t c = 0; c < head.cols(); ++c) s += head.at(r, c);
        CHECK(std::abs(s - 1.0) < 1e-9);
      }
    }
  }
  CHECK(ex.semantic_mean.shape() == Shape{1, 16});
  CHECK(ex.exploratory.shape() == Shape{3, 16});
}

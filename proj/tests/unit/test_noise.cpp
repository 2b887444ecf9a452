#include <cmath>

#include "doctest.h"
#include "tgq/corpus.hpp"
#include "tgq/errors.hpp"
#include "tgq/noise.hpp"

using namespace tgq;

namespace {

Image product_image(int w, int h) {
  Image img(w, h);
  fill_rect(img, w * 0.3, h * 0.3, w * 0.7, h * 0.7, {90, 60, 30});
  return img;
}

Image donor_image(int w, int h, std::uint64_t seed) {
  Image img(w, h);
  Rng rng(seed);
  for (auto& b : img.pixels) b = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

// 3-sigma binomial half-width
double band(double p, int n) { return 3.0 * std::sqrt(p * (1 - p) / n); }

}  // namespace

TEST_CASE("severity table") {
  const auto l = severity_spec(Severity::light), m = severity_spec(Severity::medium), h = severity_spec(Severity::heavy);
  CHECK(severity_spec(Severity::clean).p_bg == 0.0);
  CHECK(severity_spec(Severity::clean).n_overlays == 0);
  CHECK((l.p_bg == 0.0 && l.p_overlay == 0.4 && l.n_overlays == 1));
  CHECK((m.p_bg == 0.5 && m.p_overlay == 0.7 && m.n_overlays == 3));
  CHECK((h.p_bg == 0.8 && h.p_overlay == 0.9 && h.n_overlays == 5));
  CHECK(parse_severity("heavy") == Severity::heavy);
  try {
    parse_severity("extreme");
    FAIL("expected a usage error");
  } catch (const UsageError& e) {
    const std::string m2 = e.what();
    for (auto s : {"clean", "light", "medium", "heavy"}) CHECK(m2.find(s) != std::string::npos);
  }
}

TEST_CASE("center crop") {
  CHECK(center_crop(Image(640, 480), 0.9).width == 432);
  CHECK(center_crop(Image(640, 480), 0.9).height == 432);
  CHECK(center_crop(Image(100, 100), 0.8).width == 80);
  const Image sq = donor_image(20, 20, 1);
  CHECK(center_crop(sq, 1.0) == sq);
  CHECK_THROWS_AS(center_crop(sq, 0.0), ConfigError);
}

TEST_CASE("foreground threshold is inclusive at 240") {
  Image img(3, 1);
  img.set(0, 0, {245, 250, 241});
  img.set(1, 0, {239, 255, 255});
  img.set(2, 0, {240, 240, 240});
  const auto m = foreground_mask(img);
  CHECK_FALSE(m[0]);
  CHECK(m[1]);
  CHECK_FALSE(m[2]);
  for (bool b : foreground_mask(Image(8, 8))) CHECK_FALSE(b);
}

TEST_CASE("background replacement") {
  const std::vector<Image> donors{donor_image(40, 40, 1), donor_image(40, 40, 2)};
  SUBCASE("no background pixels means no change") {
    Image full(16, 16, {10, 20, 30});
    Rng rng(1);
    CHECK(replace_background(full, donors, rng) == full);
  }
  SUBCASE("all-white image becomes the blurred donor crop") {
    const Image white(16, 16);
    Rng a(5), b(5);
    const Image out = replace_background(white, donors, a);
    // replay the same draws by hand
    const Image& d = donors[b.below(donors.size())];
    const int x0 = static_cast<int>(b.below(40 - 20 + 1)), y0 = static_cast<int>(b.below(40 - 20 + 1));
    CHECK(out == gaussian_blur(resize_bilinear(crop(d, x0, y0, 20, 20), 16, 16), 2.0));
  }
  SUBCASE("fixed seed gives identical bytes and the foreground survives") {
    const Image img = product_image(32, 32);
    Rng a(9), b(9);
    const Image x = replace_background(img, donors, a), y = replace_background(img, donors, b);
    CHECK(x == y);
    CHECK(x.at(16, 16) == img.at(16, 16));
  }
  Rng rng(1);
  CHECK_THROWS_AS(replace_background(Image(4, 4), {}, rng), ConfigError);
}

TEST_CASE("clean corruption is byte identity") {
  const Image img = product_image(48, 40);
  const std::vector<Image> donors{donor_image(48, 40, 3)};
  for (std::uint64_t s = 0; s < 20; ++s) {
    Rng rng = corruption_rng(s, "item");
    CHECK(corrupt(img, severity_spec(Severity::clean), rng, donors).pixels == img.pixels);
  }
}

TEST_CASE("decision frequencies match the severity table over 10000 draws") {
  const int n = 10000;
  for (Severity s : kSeverities) {
    const auto spec = severity_spec(s);
    int bg = 0, ov = 0;
    std::vector<int> counts(spec.n_overlays + 1, 0);
    for (int i = 0; i < n; ++i) {
      Rng rng = corruption_rng(42, "item" + std::to_string(i));
      const auto d = decide(spec, rng);
      bg += d.background;
      ov += d.overlay;
      if (d.overlay) {
        REQUIRE(d.n_overlays >= 1);
        REQUIRE(d.n_overlays <= spec.n_overlays);
        ++counts[d.n_overlays];
      }
    }
    CAPTURE(severity_name(s));
    CHECK(std::abs(bg / double(n) - spec.p_bg) <= band(spec.p_bg, n) + 1e-12);
    CHECK(std::abs(ov / double(n) - spec.p_overlay) <= band(spec.p_overlay, n) + 1e-12);
    for (std::size_t k = 1; k <= spec.n_overlays; ++k) {
      const double p = 1.0 / spec.n_overlays;
      CHECK(std::abs(counts[k] / double(ov) - p) <= band(p, ov) + 1e-12);
    }
  }
}

TEST_CASE("same seed and item give the same decisions; severities nest") {
  for (int i = 0; i < 200; ++i) {
    const std::string id = "it" + std::to_string(i);
    Rng a = corruption_rng(7, id), b = corruption_rng(7, id);
    const auto da = decide(severity_spec(Severity::medium), a), db = decide(severity_spec(Severity::medium), b);
    CHECK(da.background == db.background);
    CHECK(da.n_overlays == db.n_overlays);
    Rng m = corruption_rng(7, id), h = corruption_rng(7, id);
    const auto dm = decide(severity_spec(Severity::medium), m), dh = decide(severity_spec(Severity::heavy), h);
    if (dm.background) CHECK(dh.background);
    if (dm.overlay) CHECK(dh.overlay);
  }
}

TEST_CASE("overlay geometry stays within the sampled ranges over 1000 draws") {
  Rng rng(11);
  const int W = 200, H = 160;
  const double S = std::min(W, H);
  int seen[3] = {0, 0, 0};
  for (int i = 0; i < 1000; ++i) {
    std::vector<OverlayRecord> recs;
    apply_overlays(Image(W, H), 1, rng, &recs);
    REQUIRE(recs.size() == 1);
    const auto& r = recs[0];
    ++seen[static_cast<int>(r.kind)];
    switch (r.kind) {
      case OverlayKind::badge:
        CHECK((r.size >= 0.15 * S && r.size <= 0.20 * S));
        CHECK((r.corner >= 0 && r.corner < 4));
        break;
      case OverlayKind::banner:
        CHECK((r.size >= 0.35 * S && r.size <= 0.45 * S));
        CHECK((r.corner == 0 || r.corner == 1));
        CHECK(r.anchor_y <= 0.1 * H);
        break;
      case OverlayKind::bar:
        CHECK((r.size >= 0.15 * H && r.size <= 0.20 * H));
        CHECK((r.anchor_y == 0.0 || r.anchor_y == doctest::Approx(H - r.size)));
        break;
    }
    if (r.kind != OverlayKind::bar) {
      const bool left = r.corner % 2 == 0, top = r.corner < 2;
      CHECK((left ? r.anchor_x <= 0.1 * W : r.anchor_x >= 0.9 * W));
      CHECK((top ? r.anchor_y <= 0.1 * H : r.anchor_y >= 0.9 * H));
    }
  }
  for (int k : seen) CHECK(std::abs(k / 1000.0 - 1.0 / 3) <= band(1.0 / 3, 1000));
}

TEST_CASE("badge radius and bar height on reference sizes") {
  Rng rng(3);
  for (int i = 0; i < 300; ++i) {
    std::vector<OverlayRecord> recs;
    apply_overlays(Image(200, 200), 1, rng, &recs);
    if (recs[0].kind == OverlayKind::badge) CHECK((recs[0].size >= 30 && recs[0].size <= 40));
    std::vector<OverlayRecord> bars;
    apply_overlays(Image(64, 480), 1, rng, &bars);
    if (bars[0].kind == OverlayKind::bar) CHECK((bars[0].size >= 72 && bars[0].size <= 96));
  }
}

TEST_CASE("heavy severity draws up to five overlays and they change pixels") {
  const Image img = product_image(64, 64);
  const std::vector<Image> donors{donor_image(64, 64, 1)};
  std::size_t most = 0;
  for (int i = 0; i < 200; ++i) {
    Rng rng = corruption_rng(42, "x" + std::to_string(i));
    CorruptionLog log;
    const Image out = corrupt(img, severity_spec(Severity::heavy), rng, donors, &log);
    CHECK(log.overlays.size() == log.decision.n_overlays);
    most = std::max(most, log.overlays.size());
    if (log.decision.overlay || log.decision.background) CHECK_FALSE(out == img);
  }
  CHECK(most == 5);
}

TEST_CASE("token corruption") {
  SynthOptions opt;
  opt.n_items = 10;
  const auto c = synth_corpus(opt);
  Encoder enc(EncoderConfig{});
  std::vector<EncodedItem> items;
  for (std::size_t i = 0; i < 10; ++i) items.push_back(enc.encode_latent(c.items[i], c.latents[i]));
  std::vector<const EncodedItem*> donors;
  for (std::size_t i = 1; i < 10; ++i) donors.push_back(&items[i]);

  SUBCASE("clean is identity") {
    Rng rng(1);
    const auto out = token_corrupt(enc, items[0], severity_spec(Severity::clean), rng, donors);
    CHECK(std::equal(out.h_img.data().begin(), out.h_img.data().end(), items[0].h_img.data().begin()));
  }
  SUBCASE("heavy: at most five blocks, orthogonal to the planted factor") {
    const std::size_t L = items[0].h_img.rows(), d = items[0].h_img.cols();
    const auto& factor = items[0].latent->factor;
    std::size_t most = 0;
    for (int s = 0; s < 100; ++s) {
      Rng rng = corruption_rng(s, "x");
      CorruptionLog log;
      const auto out = token_corrupt(enc, items[0], severity_spec(Severity::heavy), rng, donors, &log);
      most = std::max(most, log.overlays.size());
      CHECK(log.overlays.size() <= 5);
      for (const auto& rec : log.overlays)
        for (std::size_t l = rec.anchor_x; l < rec.anchor_x + rec.size; ++l) {
          REQUIRE(l < L);
          for (std::size_t f = 0; f < factor.rows(); ++f) {
            double dot = 0;
            for (std::size_t j = 0; j < d; ++j) dot += out.h_img.at(l, j) * factor.at(f, j);
            CHECK(std::abs(dot) < 1e-12);
          }
        }
    }
    CHECK(most == 5);
  }
  SUBCASE("ingested encodings are rejected") {
    EncodedItem bare = items[0];
    bare.latent.reset();
    Rng rng(1);
    CHECK_THROWS_AS(token_corrupt(enc, bare, severity_spec(Severity::heavy), rng, donors), ContractError);
  }
}

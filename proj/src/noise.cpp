#include "tgq/noise.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tgq/errors.hpp"

namespace tgq {

CorruptionSpec severity_spec(Severity s, std::uint64_t seed) {
  switch (s) {
    case Severity::clean: return {s, 0.0, 0.0, 0, seed};
    case Severity::light: return {s, 0.0, 0.4, 1, seed};
    case Severity::medium: return {s, 0.5, 0.7, 3, seed};
    case Severity::heavy: return {s, 0.8, 0.9, 5, seed};
  }
  return {};
}

Severity parse_severity(std::string_view name) {
  if (name == "clean") return Severity::clean;
  if (name == "light") return Severity::light;
  if (name == "medium") return Severity::medium;
  if (name == "heavy") return Severity::heavy;
  throw UsageError("unknown severity '" + std::string(name) + "' (valid: clean, light, medium, heavy)");
}

std::string severity_name(Severity s) {
  switch (s) {
    case Severity::clean: return "clean";
    case Severity::light: return "light";
    case Severity::medium: return "medium";
    case Severity::heavy: return "heavy";
  }
  return "clean";
}

Rng corruption_rng(std::uint64_t seed, std::string_view item_id) {
  return Rng::stream(seed, "corrupt:" + std::string(item_id));
}

CorruptionDecision decide(const CorruptionSpec& spec, Rng& rng) {
  const double u_bg = rng.uniform(), u_ov = rng.uniform(), u_n = rng.uniform();
  CorruptionDecision d;
  d.background = u_bg < spec.p_bg;
  d.overlay = spec.n_overlays > 0 && u_ov < spec.p_overlay;
  if (d.overlay)
    d.n_overlays = 1 + std::min(spec.n_overlays - 1, static_cast<std::size_t>(u_n * static_cast<double>(spec.n_overlays)));
  return d;
}

Image center_crop(const Image& img, double r) {
  if (!(r > 0.0) || r > 1.0) throw ConfigError("center_crop: ratio must lie in (0, 1]");
  const int S = std::min(img.width, img.height);
  const int s = static_cast<int>(std::floor(r * S));
  if (s < 1) throw ConfigError("center_crop: crop side would be " + std::to_string(s) + " pixels");
  return crop(img, (img.width - s) / 2, (img.height - s) / 2, s, s);
}

std::vector<bool> foreground_mask(const Image& img) {
  std::vector<bool> mask(static_cast<std::size_t>(img.width) * img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const Rgb p = img.at(x, y);
      mask[static_cast<std::size_t>(y) * img.width + x] = std::min({p.r, p.g, p.b}) < 240;
    }
  return mask;
}

Image replace_background(const Image& img, std::span<const Image> donors, Rng& rng, double blur_radius) {
  if (donors.empty()) throw ConfigError("replace_background: donor pool is empty");
  const Image& donor = donors[rng.below(donors.size())];
  const int cw = std::max(1, donor.width / 2), ch = std::max(1, donor.height / 2);
  const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(donor.width - cw + 1)));
  const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(donor.height - ch + 1)));
  Image bg = gaussian_blur(resize_bilinear(crop(donor, x0, y0, cw, ch), img.width, img.height), blur_radius);
  const auto fg = foreground_mask(img);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      if (fg[static_cast<std::size_t>(y) * img.width + x]) bg.set(x, y, img.at(x, y));
  return bg;
}

namespace {

const std::array<Rgb, 5> kPromoColours{{{220, 30, 40}, {240, 120, 0}, {200, 0, 120}, {20, 60, 200}, {0, 140, 60}}};

// anchor uniform inside the outer 10% box of the given corner
Point corner_anchor(const Image& img, int corner, Rng& rng) {
  const double mw = 0.1 * img.width, mh = 0.1 * img.height;
  const double x = (corner % 2 == 0) ? rng.uniform(0.0, mw) : rng.uniform(img.width - mw, img.width);
  const double y = (corner < 2) ? rng.uniform(0.0, mh) : rng.uniform(img.height - mh, img.height);
  return {x, y};
}

int fit_scale(std::string_view text, double width) {
  const int w1 = text_width(text, 1);
  return std::max(1, static_cast<int>(width / std::max(1, w1)));
}

}  // namespace

Image apply_overlays(const Image& img, std::size_t n, Rng& rng, std::vector<OverlayRecord>* records) {
  if (n < 1) throw ContractError("apply_overlays: n must be >= 1");
  Image out = img;
  const double S = std::min(img.width, img.height);
  const Rgb white{255, 255, 255};
  for (std::size_t i = 0; i < n; ++i) {
    OverlayRecord rec;
    rec.kind = static_cast<OverlayKind>(rng.below(3));
    const Rgb colour = kPromoColours[rng.below(kPromoColours.size())];
    switch (rec.kind) {
      case OverlayKind::badge: {
        rec.size = rng.uniform(0.15, 0.20) * S;
        rec.corner = static_cast<int>(rng.below(4));
        const Point a = corner_anchor(img, rec.corner, rng);
        rec.anchor_x = a.x;
        rec.anchor_y = a.y;
        rec.rotation = rng.uniform(0.0, 2 * std::numbers::pi);
        rec.text = kBadgeWords[rng.below(kBadgeWords.size())];
        std::vector<Point> star;
        for (int k = 0; k < 16; ++k) {
          const double r = k % 2 == 0 ? rec.size : 0.5 * rec.size;
          const double t = rec.rotation + k * std::numbers::pi / 8;
          star.push_back({a.x + r * std::cos(t), a.y + r * std::sin(t)});
        }
        fill_polygon(out, star, colour);
        draw_text(out, rec.text, a.x, a.y, fit_scale(rec.text, rec.size), white);
        break;
      }
      case OverlayKind::banner: {
        rec.size = rng.uniform(0.35, 0.45) * S;
        rec.corner = static_cast<int>(rng.below(2));
        const Point a = corner_anchor(img, rec.corner, rng);
        rec.anchor_x = a.x;
        rec.anchor_y = a.y;
        rec.text = kBannerWords[rng.below(kBannerWords.size())];
        const double dx = rec.corner == 0 ? rec.size : -rec.size;
        fill_polygon(out, {{a.x, a.y}, {a.x + dx, a.y}, {a.x, a.y + rec.size}}, colour);
        draw_text(out, rec.text, a.x + dx / 3, a.y + rec.size / 3, fit_scale(rec.text, rec.size * 0.6), white);
        break;
      }
      case OverlayKind::bar: {
        rec.size = rng.uniform(0.15, 0.20) * img.height;
        rec.corner = static_cast<int>(rng.below(2));
        rec.anchor_x = 0.0;
        rec.anchor_y = rec.corner == 0 ? 0.0 : img.height - rec.size;
        rec.text = kBannerWords[rng.below(kBannerWords.size())];
        fill_rect(out, 0, rec.anchor_y, img.width, rec.anchor_y + rec.size, colour);
        const int sc = std::min(fit_scale(rec.text, img.width * 0.9), std::max(1, static_cast<int>(rec.size / 8)));
        draw_text(out, rec.text, img.width / 2.0, rec.anchor_y + rec.size / 2, sc, white);
        break;
      }
    }
    if (records) records->push_back(rec);
  }
  return out;
}

Image corrupt(const Image& img, const CorruptionSpec& spec, Rng& rng, std::span<const Image> donors,
              CorruptionLog* log) {
  const CorruptionDecision d = decide(spec, rng);
  if (log) log->decision = d;
  Image out = img;
  if (d.background) out = replace_background(out, donors, rng);
  if (d.overlay) out = apply_overlays(out, d.n_overlays, rng, log ? &log->overlays : nullptr);
  return out;
}

std::size_t overlay_block_len(std::size_t L_v) { return std::max<std::size_t>(1, L_v / 8); }

EncodedItem token_corrupt(const Encoder& enc, const EncodedItem& item, const CorruptionSpec& spec, Rng& rng,
                          std::span<const EncodedItem* const> donors, CorruptionLog* log) {
  if (!item.latent) throw ContractError("token_corrupt needs a synthetic encoding (ingested features carry no latent parts)");
  const CorruptionDecision d = decide(spec, rng);
  if (log) log->decision = d;
  if (!d.background && !d.overlay) return item;

  const std::size_t L = item.h_img.rows(), dim = item.h_img.cols();
  const LatentParts& lat = *item.latent;
  std::vector<double> p(lat.product.data().begin(), lat.product.data().end());
  std::vector<double> n(lat.noise.data().begin(), lat.noise.data().end());
  const auto factor = lat.factor.data();
  const std::size_t n_factor = lat.factor.rows();

  if (d.background) {
    // clutter: object-token content of a donor (or a fresh random object when no donor is given)
    std::vector<std::vector<double>> clutter;
    const EncodedItem* donor = donors.empty() ? nullptr : donors[rng.below(donors.size())];
    if (donor && donor->latent) {
      for (std::size_t l = 0; l < L; ++l)
        if (donor->latent->object_mask[l]) {
          auto row = donor->h_img.data().subspan(l * dim, dim);
          clutter.emplace_back(row.begin(), row.end());
        }
    }
    if (clutter.empty()) {
      std::vector<double> v(dim);
      for (auto& x : v) x = rng.normal() * 1.5 / std::sqrt(static_cast<double>(dim));
      clutter.push_back(v);
    }
    std::size_t k = 0;
    for (std::size_t l = 0; l < L; ++l) {
      if (lat.object_mask[l]) continue;
      const auto& c = clutter[k++ % clutter.size()];
      for (std::size_t j = 0; j < dim; ++j) n[l * dim + j] = c[j] + 0.1 * rng.normal() / std::sqrt(static_cast<double>(dim));
    }
  }
  if (d.overlay) {
    const std::size_t len = std::min(L, overlay_block_len(L));
    for (std::size_t o = 0; o < d.n_overlays; ++o) {
      const std::size_t start = rng.below(L - len + 1);
      const Tensor pattern_t = enc.promo_pattern(rng.below(Encoder::kPromoPatterns));
      const auto pattern = pattern_t.data();
      OverlayRecord rec;
      rec.kind = OverlayKind::badge;
      rec.anchor_x = static_cast<double>(start);
      rec.size = static_cast<double>(len);
      for (std::size_t l = start; l < start + len; ++l) {
        std::vector<double> v(dim);
        for (std::size_t j = 0; j < dim; ++j) v[j] = 2.0 * pattern[j] + 0.1 * rng.normal() / std::sqrt(static_cast<double>(dim));
        for (std::size_t f = 0; f < n_factor; ++f) {
          double proj = 0;
          for (std::size_t j = 0; j < dim; ++j) proj += v[j] * factor[f * dim + j];
          for (std::size_t j = 0; j < dim; ++j) v[j] -= proj * factor[f * dim + j];
        }
        for (std::size_t j = 0; j < dim; ++j) {
          p[l * dim + j] = 0.0;
          n[l * dim + j] = v[j];
        }
      }
      if (log) log->overlays.push_back(rec);
    }
  }
  std::vector<double> h(L * dim);
  for (std::size_t k = 0; k < h.size(); ++k) h[k] = p[k] + n[k];
  EncodedItem out = item;
  out.h_img = Tensor::from({L, dim}, std::move(h));
  out.f_img = mean_rows(out.h_img);
  out.latent = LatentParts{Tensor::from({L, dim}, std::move(p)), Tensor::from({L, dim}, std::move(n)), lat.factor,
                           lat.object_mask};
  return out;
}

}  // namespace tgq

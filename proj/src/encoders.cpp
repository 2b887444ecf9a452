#include "tgq/encoders.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tgq/blob.hpp"
#include "tgq/errors.hpp"
#include "tgq/rng.hpp"

namespace tgq {

namespace {

bool word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

// Planted-signal weights for object tokens and noise levels.
constexpr double kFamilyWeight = 1.0;
constexpr double kProductWeight = 1.5;
constexpr double kNoiseFloor = 0.15;
constexpr double kBackgroundNorm = 1.0;
constexpr double kObjectHalfWidth = 0.3;

std::vector<double> unit_gaussian(Rng rng, std::size_t d) {
  std::vector<double> v(d);
  double n = 0;
  for (auto& x : v) {
    x = rng.normal();
    n += x * x;
  }
  n = std::sqrt(n);
  for (auto& x : v) x /= n;
  return v;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const unsigned char c = text[i];
    if (std::isspace(c)) {
      ++i;
    } else if (text.substr(i, 5) == "<IMG>") {
      out.emplace_back("<IMG>");
      i += 5;
    } else if (word_byte(c)) {
      std::size_t j = i;
      while (j < text.size() && word_byte(static_cast<unsigned char>(text[j]))) ++j;
      out.emplace_back(text.substr(i, j - i));
      i = j;
    } else {
      out.emplace_back(1, static_cast<char>(c));
      ++i;
    }
  }
  return out;
}

std::size_t token_id(std::string_view token, std::size_t vocab_size) {
  return static_cast<std::size_t>(fnv1a(token) % vocab_size);
}

std::string metadata_text(const ItemRecord& item) {
  std::string s = item.brand;
  for (const auto& c : item.categories) s += " " + c;
  return s + " " + item.title;
}

Tensor mean_rows(const Tensor& t) {
  const std::size_t r = t.rows(), c = t.cols();
  std::vector<double> out(c, 0.0);
  const auto d = t.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += d[i * c + j];
  for (auto& v : out) v /= static_cast<double>(r);
  return Tensor::from({1, c}, std::move(out));
}

std::map<std::string, FeatureEntry> read_feature_manifest(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read feature manifest " + path.string());
  std::map<std::string, FeatureEntry> out;
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string id, img, txt;
    std::getline(ls, id, '\t');
    std::getline(ls, img, '\t');
    std::getline(ls, txt, '\t');
    if (id.empty() || img.empty()) throw IoError("malformed feature manifest line: " + line);
    out[id] = {img, txt};
  }
  return out;
}

Encoder::Encoder(EncoderConfig cfg) : cfg_(std::move(cfg)) {
  if (cfg_.d_v < 2) throw ConfigError("encoder d_v must be >= 2");
  if (cfg_.L_v < 1) throw ConfigError("encoder L_v must be >= 1");
  grid_r_ = 1;
  for (std::size_t r = 1; r * r <= cfg_.L_v; ++r)
    if (cfg_.L_v % r == 0) grid_r_ = r;
  grid_c_ = cfg_.L_v / grid_r_;

  Rng proj = Rng::stream(cfg_.seed, "pixel-projection");
  pixel_proj_.resize(cfg_.d_v * 9);
  for (auto& v : pixel_proj_) v = proj.normal() / 3.0;
  background_ = unit_gaussian(Rng::stream(cfg_.seed, "background"), cfg_.d_v);
  for (auto& v : background_) v *= kBackgroundNorm;
}

Tensor Encoder::token_embedding(std::string_view token) const {
  Rng rng = Rng::stream(cfg_.seed, "token:" + std::to_string(token_id(token, cfg_.vocab_size)));
  std::vector<double> v(cfg_.d_v);
  const double s = 1.0 / std::sqrt(static_cast<double>(cfg_.d_v));
  for (auto& x : v) x = rng.normal() * s;
  return Tensor::from({1, cfg_.d_v}, std::move(v));
}

Tensor Encoder::positional(std::size_t pos) const {
  std::vector<double> v(cfg_.d_v);
  for (std::size_t i = 0; i < cfg_.d_v; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i / 2 * 2) / cfg_.d_v);
    v[i] = cfg_.pos_scale * (i % 2 == 0 ? std::sin(pos * freq) : std::cos(pos * freq));
  }
  return Tensor::from({1, cfg_.d_v}, std::move(v));
}

Tensor Encoder::encode_text(std::string_view text) const {
  auto toks = tokenize(text);
  if (toks.empty()) throw ContractError("encode_text: text has no tokens");
  if (toks.size() > cfg_.max_title_tokens) toks.resize(cfg_.max_title_tokens);
  std::vector<double> out;
  out.reserve(toks.size() * cfg_.d_v);
  for (std::size_t p = 0; p < toks.size(); ++p) {
    const Tensor et = token_embedding(toks[p]);
    const auto e = et.data();
    const Tensor qt = positional(p);
    const auto q = qt.data();
    for (std::size_t j = 0; j < cfg_.d_v; ++j) out.push_back(e[j] + q[j]);
  }
  return Tensor::from({toks.size(), cfg_.d_v}, std::move(out));
}

Tensor Encoder::encode_title_global(std::string_view title) const {
  auto toks = tokenize(title);
  if (toks.empty()) throw ContractError("encode_title_global: title has no tokens");
  if (toks.size() > cfg_.max_title_tokens) toks.resize(cfg_.max_title_tokens);
  std::vector<double> acc(cfg_.d_v, 0.0);
  for (const auto& t : toks) {
    const Tensor et = token_embedding(t);
    const auto e = et.data();
    for (std::size_t j = 0; j < cfg_.d_v; ++j) acc[j] += e[j];
  }
  for (auto& v : acc) v /= static_cast<double>(toks.size());
  return Tensor::from({1, cfg_.d_v}, std::move(acc));
}

std::pair<Tensor, Tensor> Encoder::encode_image(const Image& img) const {
  if (img.width < static_cast<int>(grid_c_) || img.height < static_cast<int>(grid_r_))
    throw DimensionError("image " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                         " is smaller than the patch grid");
  std::vector<double> out(cfg_.L_v * cfg_.d_v);
  for (std::size_t gr = 0; gr < grid_r_; ++gr)
    for (std::size_t gc = 0; gc < grid_c_; ++gc) {
      const int x0 = static_cast<int>(gc * img.width / grid_c_);
      const int x1 = static_cast<int>((gc + 1) * img.width / grid_c_);
      const int y0 = static_cast<int>(gr * img.height / grid_r_);
      const int y1 = static_cast<int>((gr + 1) * img.height / grid_r_);
      double sum[3] = {0, 0, 0}, sq[3] = {0, 0, 0}, white = 0, gx = 0, gy = 0;
      const double n = static_cast<double>((x1 - x0) * (y1 - y0));
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) {
          const Rgb p = img.at(x, y);
          const double ch[3] = {p.r / 255.0, p.g / 255.0, p.b / 255.0};
          for (int k = 0; k < 3; ++k) {
            sum[k] += ch[k];
            sq[k] += ch[k] * ch[k];
          }
          if (std::min({p.r, p.g, p.b}) >= 240) white += 1;
          if (x + 1 < x1) {
            const Rgb q = img.at(x + 1, y);
            gx += std::abs((q.r + q.g + q.b) - (p.r + p.g + p.b)) / 765.0;
          }
          if (y + 1 < y1) {
            const Rgb q = img.at(x, y + 1);
            gy += std::abs((q.r + q.g + q.b) - (p.r + p.g + p.b)) / 765.0;
          }
        }
      double phi[9];
      for (int k = 0; k < 3; ++k) {
        const double m = sum[k] / n;
        phi[k] = 2 * m - 1;
        phi[3 + k] = 4 * std::sqrt(std::max(0.0, sq[k] / n - m * m));
      }
      phi[6] = 2 * white / n - 1;
      phi[7] = 4 * gx / n;
      phi[8] = 4 * gy / n;
      const std::size_t tok = gr * grid_c_ + gc;
      for (std::size_t j = 0; j < cfg_.d_v; ++j) {
        double v = 0;
        for (int k = 0; k < 9; ++k) v += pixel_proj_[j * 9 + k] * phi[k];
        out[tok * cfg_.d_v + j] = v;
      }
    }
  Tensor h = Tensor::from({cfg_.L_v, cfg_.d_v}, std::move(out));
  return {h, mean_rows(h)};
}

std::pair<Tensor, Tensor> Encoder::encode_image_blob(const Tensor& blob) const {
  const Shape want{cfg_.L_v, cfg_.d_v};
  if (blob.shape() != want)
    throw DimensionError("image feature blob has shape " + shape_str(blob.shape()) + ", expected " +
                         shape_str(want));
  Tensor h = blob.clone();
  return {h, mean_rows(h)};
}

std::vector<bool> Encoder::object_mask() const {
  std::vector<bool> mask(cfg_.L_v);
  for (std::size_t r = 0; r < grid_r_; ++r)
    for (std::size_t c = 0; c < grid_c_; ++c) {
      const double y = (r + 0.5) / grid_r_ - 0.5, x = (c + 0.5) / grid_c_ - 0.5;
      mask[r * grid_c_ + c] = std::abs(x) <= kObjectHalfWidth && std::abs(y) <= kObjectHalfWidth;
    }
  // degenerate grids (1 token, thin strips) keep at least one object token
  if (std::find(mask.begin(), mask.end(), true) == mask.end()) mask[cfg_.L_v / 2] = true;
  return mask;
}

Tensor Encoder::promo_pattern(std::size_t k) const {
  auto v = unit_gaussian(Rng::stream(cfg_.seed, "promo:" + std::to_string(k % kPromoPatterns)), cfg_.d_v);
  return Tensor::from({1, cfg_.d_v}, std::move(v));
}

EncodedItem Encoder::encode_latent(const ItemRecord& item, const LatentImage& latent) const {
  const std::size_t d = cfg_.d_v, L = cfg_.L_v;
  // family direction: normalised mean of the anchor words
  std::vector<double> fam(d, 0.0);
  for (const auto& w : latent.anchor_tokens) {
    const Tensor et = token_embedding(w);
    const auto e = et.data();
    for (std::size_t j = 0; j < d; ++j) fam[j] += e[j];
  }
  double fn = 0;
  for (double v : fam) fn += v * v;
  fn = std::sqrt(fn);
  if (fn > 0)
    for (auto& v : fam) v /= fn;
  const auto prod = unit_gaussian(Rng::stream(cfg_.seed, "product:" + latent.product_key), d);

  const double rho = latent.overlap;
  const double sigma = (kNoiseFloor + (1.0 - rho)) / std::sqrt(static_cast<double>(d));
  Rng noise(latent.noise_seed);
  const auto mask = object_mask();
  std::vector<double> p(L * d, 0.0), n(L * d, 0.0);
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t j = 0; j < d; ++j) {
      const double eps = noise.normal() * sigma;
      if (mask[l]) {
        p[l * d + j] = rho * (kFamilyWeight * fam[j] + kProductWeight * prod[j]);
        n[l * d + j] = eps;
      } else {
        n[l * d + j] = background_[j] + eps;
      }
    }
  // orthonormal basis of span{fam, prod}
  std::vector<double> b2 = prod;
  double dot = 0;
  for (std::size_t j = 0; j < d; ++j) dot += b2[j] * fam[j];
  double bn = 0;
  for (std::size_t j = 0; j < d; ++j) {
    b2[j] -= dot * fam[j];
    bn += b2[j] * b2[j];
  }
  bn = std::sqrt(bn);
  for (auto& v : b2) v /= bn;
  std::vector<double> factor(fam);
  factor.insert(factor.end(), b2.begin(), b2.end());

  std::vector<double> h(L * d);
  for (std::size_t k = 0; k < h.size(); ++k) h[k] = p[k] + n[k];
  EncodedItem out;
  out.h_img = Tensor::from({L, d}, std::move(h));
  out.f_img = mean_rows(out.h_img);
  out.h_txt = encode_text(metadata_text(item));
  out.f_title = encode_title_global(item.title);
  out.latent = LatentParts{Tensor::from({L, d}, std::move(p)), Tensor::from({L, d}, std::move(n)),
                           Tensor::from({2, d}, std::move(factor)), mask};
  return out;
}

EncodedItem Encoder::encode(const ItemRecord& item, const std::filesystem::path& base_dir,
                            const std::map<std::string, FeatureEntry>* manifest) const {
  EncodedItem out;
  const FeatureEntry* entry = nullptr;
  if (manifest) {
    auto it = manifest->find(item.item_id);
    if (it != manifest->end()) entry = &it->second;
  }
  if (cfg_.mode == "ingest" || entry || item.feature_ref) {
    std::filesystem::path blob_path;
    if (entry) blob_path = base_dir / entry->image_blob;
    else if (item.feature_ref) blob_path = base_dir / *item.feature_ref;
    else throw LookupError("no feature blob for item " + item.item_id);
    std::tie(out.h_img, out.f_img) = encode_image_blob(read_blob(blob_path));
  } else if (item.image_ref) {
    std::tie(out.h_img, out.f_img) = encode_image(read_ppm(base_dir / *item.image_ref));
  } else {
    throw ContractError("item " + item.item_id + " has neither image_ref nor feature_ref");
  }
  if (entry && !entry->text_blob.empty()) {
    Tensor t = read_blob(base_dir / entry->text_blob);
    if (t.rank() != 2 || t.cols() != cfg_.d_v)
      throw DimensionError("text feature blob for " + item.item_id + " has shape " +
                           shape_str(t.shape()) + ", expected [L_t x " + std::to_string(cfg_.d_v) + "]");
    if (t.rows() > cfg_.max_title_tokens) t = slice(t, 0, 0, cfg_.max_title_tokens).detach();
    out.h_txt = t.clone();
    out.f_title = mean_rows(out.h_txt);
  } else {
    out.h_txt = encode_text(metadata_text(item));
    out.f_title = encode_title_global(item.title);
  }
  return out;
}

}  // namespace tgq

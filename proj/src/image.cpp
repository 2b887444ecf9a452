#include "tgq/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "tgq/errors.hpp"

namespace tgq {

Image::Image(int w, int h, Rgb fill) : width(w), height(h) {
  if (w <= 0 || h <= 0)
    throw DimensionError("image size must be positive, got " + std::to_string(w) + "x" +
                         std::to_string(h));
  pixels.resize(static_cast<std::size_t>(w) * h * 3);
  for (std::size_t i = 0; i < pixels.size(); i += 3) {
    pixels[i] = fill.r;
    pixels[i + 1] = fill.g;
    pixels[i + 2] = fill.b;
  }
}

Rgb Image::at(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  return {pixels[i], pixels[i + 1], pixels[i + 2]};
}

void Image::set(int x, int y, Rgb c) {
  const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
  pixels[i] = c.r;
  pixels[i + 1] = c.g;
  pixels[i + 2] = c.b;
}

// ---- PPM --------------------------------------------------------------------

namespace {

int read_header_int(const std::vector<std::uint8_t>& b, std::size_t& pos, std::string_view origin) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(b[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  if (pos >= b.size() || !std::isdigit(b[pos]))
    throw IoError("malformed PPM header: " + std::string(origin));
  long v = 0;
  while (pos < b.size() && std::isdigit(b[pos])) {
    v = v * 10 + (b[pos] - '0');
    if (v > (1 << 24)) throw IoError("PPM dimension too large: " + std::string(origin));
    ++pos;
  }
  return static_cast<int>(v);
}

}  // namespace

Image decode_ppm(const std::vector<std::uint8_t>& bytes, std::string_view origin) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
    throw IoError("not a binary PPM (P6): " + std::string(origin));
  std::size_t pos = 2;
  const int w = read_header_int(bytes, pos, origin);
  const int h = read_header_int(bytes, pos, origin);
  const int maxval = read_header_int(bytes, pos, origin);
  if (maxval != 255) throw IoError("only maxval 255 PPMs are supported: " + std::string(origin));
  if (pos >= bytes.size() || !std::isspace(bytes[pos]))
    throw IoError("malformed PPM header: " + std::string(origin));
  ++pos;
  Image img(w, h);
  if (bytes.size() - pos < img.pixels.size())
    throw IoError("truncated PPM payload: " + std::string(origin));
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(pos), img.pixels.size(), img.pixels.begin());
  return img;
}

std::vector<std::uint8_t> encode_ppm(const Image& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.pixels.begin(), img.pixels.end());
  return out;
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read image " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  return decode_ppm(bytes, path.string());
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
  const auto bytes = encode_ppm(img);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write image " + path.string());
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("write failed: " + path.string());
}

// ---- drawing ----------------------------------------------------------------

void fill_rect(Image& img, double x0, double y0, double x1, double y1, Rgb c) {
  const int xa = std::max(0, static_cast<int>(std::ceil(std::min(x0, x1) - 0.5)));
  const int xb = std::min(img.width - 1, static_cast<int>(std::floor(std::max(x0, x1) - 0.5)));
  const int ya = std::max(0, static_cast<int>(std::ceil(std::min(y0, y1) - 0.5)));
  const int yb = std::min(img.height - 1, static_cast<int>(std::floor(std::max(y0, y1) - 0.5)));
  for (int y = ya; y <= yb; ++y)
    for (int x = xa; x <= xb; ++x) img.set(x, y, c);
}

void fill_polygon(Image& img, const std::vector<Point>& poly, Rgb c) {
  if (poly.size() < 3) return;
  std::vector<double> xs;
  for (int y = 0; y < img.height; ++y) {
    const double sy = y + 0.5;
    xs.clear();
    for (std::size_t i = 0; i < poly.size(); ++i) {
      const Point& a = poly[i];
      const Point& b = poly[(i + 1) % poly.size()];
      if ((a.y <= sy && b.y > sy) || (b.y <= sy && a.y > sy))
        xs.push_back(a.x + (sy - a.y) * (b.x - a.x) / (b.y - a.y));
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t k = 0; k + 1 < xs.size(); k += 2) {
      const int xa = std::max(0, static_cast<int>(std::ceil(xs[k] - 0.5)));
      const int xb = std::min(img.width - 1, static_cast<int>(std::floor(xs[k + 1] - 0.5)));
      for (int x = xa; x <= xb; ++x) img.set(x, y, c);
    }
  }
}

const std::array<std::uint8_t, 7>& glyph(char ch) {
  static const std::array<std::uint8_t, 7> blank{};
  static const std::array<std::array<std::uint8_t, 7>, 26> letters{{
      {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11},  // A
      {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E},  // B
      {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E},  // C
      {0x1E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x1E},  // D
      {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F},  // E
      {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10},  // F
      {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F},  // G
      {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11},  // H
      {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E},  // I
      {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C},  // J
      {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11},  // K
      {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F},  // L
      {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11},  // M
      {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11},  // N
      {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E},  // O
      {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10},  // P
      {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D},  // Q
      {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11},  // R
      {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E},  // S
      {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04},  // T
      {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E},  // U
      {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04},  // V
      {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A},  // W
      {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11},  // X
      {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04},  // Y
      {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F},  // Z
  }};
  static const std::array<std::array<std::uint8_t, 7>, 10> digits{{
      {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E},
      {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},
      {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F},
      {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},
      {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02},
      {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},
      {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E},
      {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},
      {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E},
      {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C},
  }};
  static const std::array<std::uint8_t, 7> percent{0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03};
  static const std::array<std::uint8_t, 7> dot{0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C};
  if (ch >= 'a' && ch <= 'z') ch = static_cast<char>(ch - 'a' + 'A');
  if (ch >= 'A' && ch <= 'Z') return letters[ch - 'A'];
  if (ch >= '0' && ch <= '9') return digits[ch - '0'];
  if (ch == '%') return percent;
  if (ch == '.') return dot;
  return blank;
}

int text_width(std::string_view text, int scale) {
  if (text.empty()) return 0;
  return static_cast<int>(text.size()) * 6 * scale - scale;
}

void draw_text(Image& img, std::string_view text, double cx, double cy, int scale, Rgb c) {
  if (scale < 1) scale = 1;
  const int x0 = static_cast<int>(std::lround(cx - text_width(text, scale) / 2.0));
  const int y0 = static_cast<int>(std::lround(cy - 3.5 * scale));
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto& g = glyph(text[i]);
    const int gx = x0 + static_cast<int>(i) * 6 * scale;
    for (int row = 0; row < 7; ++row)
      for (int col = 0; col < 5; ++col) {
        if (!(g[row] & (0x10 >> col))) continue;
        for (int dy = 0; dy < scale; ++dy)
          for (int dx = 0; dx < scale; ++dx) {
            const int x = gx + col * scale + dx, y = y0 + row * scale + dy;
            if (img.contains(x, y)) img.set(x, y, c);
          }
      }
  }
}

// ---- resampling -------------------------------------------------------------

Image crop(const Image& img, int x0, int y0, int w, int h) {
  if (w < 1 || h < 1 || x0 < 0 || y0 < 0 || x0 + w > img.width || y0 + h > img.height)
    throw DimensionError("crop " + std::to_string(w) + "x" + std::to_string(h) + "+" +
                         std::to_string(x0) + "+" + std::to_string(y0) + " outside " +
                         std::to_string(img.width) + "x" + std::to_string(img.height));
  Image out(w, h);
  for (int y = 0; y < h; ++y)
    std::copy_n(img.pixels.begin() + ((static_cast<std::ptrdiff_t>(y0 + y) * img.width + x0) * 3),
                w * 3, out.pixels.begin() + static_cast<std::ptrdiff_t>(y) * w * 3);
  return out;
}

Image resize_bilinear(const Image& img, int w, int h) {
  Image out(w, h);
  const double sx = static_cast<double>(img.width) / w;
  const double sy = static_cast<double>(img.height) / h;
  for (int y = 0; y < h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - y0;
    for (int x = 0; x < w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - x0;
      for (int ch = 0; ch < 3; ++ch) {
        auto px = [&](int xx, int yy) {
          return static_cast<double>(img.pixels[(static_cast<std::size_t>(yy) * img.width + xx) * 3 + ch]);
        };
        const double top = px(x0, y0) * (1 - wx) + px(x1, y0) * wx;
        const double bot = px(x0, y1) * (1 - wx) + px(x1, y1) * wx;
        const double v = top * (1 - wy) + bot * wy;
        out.pixels[(static_cast<std::size_t>(y) * w + x) * 3 + ch] =
            static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
      }
    }
  }
  return out;
}

Image gaussian_blur(const Image& img, double radius) {
  if (radius <= 0) return img;
  const double sigma = radius / 2.0;
  const int half = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * half + 1);
  double total = 0.0;
  for (int i = -half; i <= half; ++i) {
    k[i + half] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    total += k[i + half];
  }
  for (auto& v : k) v /= total;

  const int w = img.width, h = img.height;
  std::vector<double> tmp(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (int i = -half; i <= half; ++i) {
          const int xx = std::clamp(x + i, 0, w - 1);
          acc += k[i + half] * img.pixels[(static_cast<std::size_t>(y) * w + xx) * 3 + ch];
        }
        tmp[(static_cast<std::size_t>(y) * w + x) * 3 + ch] = acc;
      }
  Image out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (int i = -half; i <= half; ++i) {
          const int yy = std::clamp(y + i, 0, h - 1);
          acc += k[i + half] * tmp[(static_cast<std::size_t>(yy) * w + x) * 3 + ch];
        }
        out.pixels[(static_cast<std::size_t>(y) * w + x) * 3 + ch] =
            static_cast<std::uint8_t>(std::clamp(std::lround(acc), 0L, 255L));
      }
  return out;
}

}  // namespace tgq

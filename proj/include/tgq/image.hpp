#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

namespace tgq {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// 8-bit RGB raster, row-major, 3 bytes per pixel.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, Rgb fill = {255, 255, 255});

  Rgb at(int x, int y) const;
  void set(int x, int y, Rgb c);
  bool contains(int x, int y) const { return x >= 0 && y >= 0 && x < width && y < height; }
  friend bool operator==(const Image&, const Image&) = default;
};

struct Point {
  double x, y;
};

// Binary PPM (P6, maxval 255). Comments in the header are skipped.
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& img);
Image decode_ppm(const std::vector<std::uint8_t>& bytes, std::string_view origin = "<memory>");
std::vector<std::uint8_t> encode_ppm(const Image& img);

// Drawing primitives clip silently at the image border.
void fill_rect(Image& img, double x0, double y0, double x1, double y1, Rgb c);
/// Even-odd scanline fill sampled at pixel centres.
void fill_polygon(Image& img, const std::vector<Point>& poly, Rgb c);
/// Renders `text` with the built-in 5x7 font, centred on (cx, cy). Lowercase
/// letters use the uppercase glyphs; unknown characters render blank.
void draw_text(Image& img, std::string_view text, double cx, double cy, int scale, Rgb c);
/// Pixel width of `text` at `scale` (6 columns per glyph, minus trailing gap).
int text_width(std::string_view text, int scale);
/// 7 rows of 5-bit masks (MSB = leftmost column).
const std::array<std::uint8_t, 7>& glyph(char ch);

Image crop(const Image& img, int x0, int y0, int w, int h);
/// Bilinear resample with half-pixel centres and edge clamping.
Image resize_bilinear(const Image& img, int w, int h);
/// Separable Gaussian blur, sigma = radius / 2, kernel truncated at 3 sigma,
/// edge pixels clamped.
Image gaussian_blur(const Image& img, double radius);

}  // namespace tgq

#include "uma/image.hpp"

#include <cmath>
#include <fstream>
#include <string>

#include "uma/errors.hpp"

namespace uma {

void write_ppm(const std::filesystem::path& path, const Image& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

namespace {

std::size_t read_header_number(std::istream& in, const std::filesystem::path& path) {
  int c = in.peek();
  while (c != EOF) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
    c = in.peek();
  }
  long long value = -1;
  in >> value;
  if (!in || value <= 0) throw ParseError(path.string() + ": malformed PPM header");
  return static_cast<std::size_t>(value);
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string magic;
  in >> magic;
  if (magic != "P6") throw ParseError(path.string() + ": not a binary PPM (P6)");
  const std::size_t w = read_header_number(in, path);
  const std::size_t h = read_header_number(in, path);
  const std::size_t maxval = read_header_number(in, path);
  if (maxval != 255) throw ParseError(path.string() + ": only maxval 255 is supported");
  in.get();  // single whitespace before the raster
  Image image(w, h);
  in.read(reinterpret_cast<char*>(image.rgb.data()), static_cast<std::streamsize>(image.rgb.size()));
  if (in.gcount() != static_cast<std::streamsize>(image.rgb.size())) {
    throw ParseError(path.string() + ": truncated raster");
  }
  return image;
}

std::array<double, 3> channel_mean(const Image& image) {
  std::array<double, 3> sum{0, 0, 0};
  const std::size_t n = image.width * image.height;
  for (std::size_t p = 0; p < n; ++p) {
    for (int c = 0; c < 3; ++c) sum[c] += image.rgb[p * 3 + c];
  }
  for (auto& s : sum) s /= 255.0 * static_cast<double>(n == 0 ? 1 : n);
  return sum;
}

Tensor crop_patch(const Image& image, double cx, double cy, double side, std::size_t out_side,
                  const std::array<double, 3>& fill) {
  Tensor patch(Shape{out_side, out_side, 3});
  const double step = side / static_cast<double>(out_side);
  const double left = cx - 0.5 * side, top = cy - 0.5 * side;
  const double max_x = static_cast<double>(image.width) - 1.0;
  const double max_y = static_cast<double>(image.height) - 1.0;
  auto data = patch.data();
  for (std::size_t r = 0; r < out_side; ++r) {
    // Pixel-centre coordinates: pixel i is centred at i.
    const double y = top + (static_cast<double>(r) + 0.5) * step - 0.5;
    for (std::size_t c = 0; c < out_side; ++c) {
      const double x = left + (static_cast<double>(c) + 0.5) * step - 0.5;
      double* out = &data[(r * out_side + c) * 3];
      if (x < -0.5 || y < -0.5 || x > max_x + 0.5 || y > max_y + 0.5) {
        for (int ch = 0; ch < 3; ++ch) out[ch] = fill[ch];
        continue;
      }
      const double xc = std::clamp(x, 0.0, max_x), yc = std::clamp(y, 0.0, max_y);
      const auto x0 = static_cast<std::size_t>(std::floor(xc)), y0 = static_cast<std::size_t>(std::floor(yc));
      const std::size_t x1 = std::min(x0 + 1, image.width - 1), y1 = std::min(y0 + 1, image.height - 1);
      const double fx = xc - static_cast<double>(x0), fy = yc - static_cast<double>(y0);
      const std::uint8_t* p00 = image.pixel(x0, y0);
      const std::uint8_t* p01 = image.pixel(x1, y0);
      const std::uint8_t* p10 = image.pixel(x0, y1);
      const std::uint8_t* p11 = image.pixel(x1, y1);
      for (int ch = 0; ch < 3; ++ch) {
        const double top_row = (1 - fx) * p00[ch] + fx * p01[ch];
        const double bottom_row = (1 - fx) * p10[ch] + fx * p11[ch];
        out[ch] = ((1 - fy) * top_row + fy * bottom_row) / 255.0;
      }
    }
  }
  return patch;
}

namespace {

// 3x5 glyphs for 0-9, one row per 3-bit group, most significant bit leftmost.
constexpr std::array<std::array<std::uint8_t, 5>, 10> kDigits = {{
    {7, 5, 5, 5, 7}, {2, 6, 2, 2, 7}, {7, 1, 7, 4, 7}, {7, 1, 7, 1, 7}, {5, 5, 7, 1, 1},
    {7, 4, 7, 1, 7}, {7, 4, 7, 5, 7}, {7, 1, 1, 1, 1}, {7, 5, 7, 5, 7}, {7, 5, 7, 1, 7},
}};

void put(Image& image, long x, long y, std::array<std::uint8_t, 3> color) {
  if (x < 0 || y < 0 || x >= static_cast<long>(image.width) || y >= static_cast<long>(image.height)) return;
  std::uint8_t* p = image.pixel(static_cast<std::size_t>(x), static_cast<std::size_t>(y));
  p[0] = color[0];
  p[1] = color[1];
  p[2] = color[2];
}

}  // namespace

void draw_box(Image& image, const BBox& box, std::array<std::uint8_t, 3> color, long label) {
  const long x0 = std::lround(box.x), y0 = std::lround(box.y);
  const long x1 = std::lround(box.right()) - 1, y1 = std::lround(box.bottom()) - 1;
  for (long x = x0; x <= x1; ++x) {
    put(image, x, y0, color);
    put(image, x, y1, color);
  }
  for (long y = y0; y <= y1; ++y) {
    put(image, x0, y, color);
    put(image, x1, y, color);
  }
  const std::string text = std::to_string(label);
  long pen = x0;
  for (char ch : text) {
    if (ch < '0' || ch > '9') {
      pen += 4;
      continue;
    }
    const auto& glyph = kDigits[static_cast<std::size_t>(ch - '0')];
    for (long row = 0; row < 5; ++row) {
      for (long col = 0; col < 3; ++col) {
        if (glyph[static_cast<std::size_t>(row)] & (4 >> col)) put(image, pen + col, y0 - 6 + row, color);
      }
    }
    pen += 4;
  }
}

}  // namespace uma

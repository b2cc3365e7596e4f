#include "mlvae/image.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <memory>

#include <png.h>

#include "mlvae/errors.hpp"

namespace mlvae {

RgbImage::RgbImage(Index w, Index h, std::uint8_t fill)
    : width(w), height(h), rgb(static_cast<std::size_t>(w * h * 3), fill) {}

void RgbImage::set(Index x, Index y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  if (x < 0 || y < 0 || x >= width || y >= height) return;
  auto* p = &rgb[static_cast<std::size_t>((y * width + x) * 3)];
  p[0] = r;
  p[1] = g;
  p[2] = b;
}

RgbImage tile_grid(std::span<const Real> tiles, Index rows, Index cols, Index tile_height, Index tile_width,
                   Index gap) {
  const Index per_tile = tile_height * tile_width;
  if (static_cast<Index>(tiles.size()) != rows * cols * per_tile) {
    throw ShapeError("tile_grid: tile buffer does not hold rows * cols tiles");
  }
  RgbImage img(cols * tile_width + (cols + 1) * gap, rows * tile_height + (rows + 1) * gap);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) {
      const Real* tile = tiles.data() + (r * cols + c) * per_tile;
      const Index ox = gap + c * (tile_width + gap), oy = gap + r * (tile_height + gap);
      for (Index y = 0; y < tile_height; ++y) {
        for (Index x = 0; x < tile_width; ++x) {
          const double v = std::clamp(static_cast<double>(tile[y * tile_width + x]), 0.0, 1.0);
          const auto g = static_cast<std::uint8_t>(std::lround(255.0 * v));
          img.set(ox + x, oy + y, g, g, g);
        }
      }
    }
  }
  return img;
}

RgbImage scatter_plot(std::span<const double> xs, std::span<const double> ys, std::span<const int> labels,
                      Index size) {
  if (xs.size() != ys.size() || xs.size() != labels.size()) throw ShapeError("scatter_plot: length mismatch");
  static constexpr std::array<std::array<std::uint8_t, 3>, 10> kPalette{{{31, 119, 180},
                                                                        {255, 127, 14},
                                                                        {44, 160, 44},
                                                                        {214, 39, 40},
                                                                        {148, 103, 189},
                                                                        {140, 86, 75},
                                                                        {227, 119, 194},
                                                                        {127, 127, 127},
                                                                        {188, 189, 34},
                                                                        {23, 190, 207}}};
  RgbImage img(size, size);
  if (xs.empty()) return img;
  const auto [xmin, xmax] = std::minmax_element(xs.begin(), xs.end());
  const auto [ymin, ymax] = std::minmax_element(ys.begin(), ys.end());
  const double margin = 0.05 * static_cast<double>(size);
  const double span_x = std::max(*xmax - *xmin, 1e-12), span_y = std::max(*ymax - *ymin, 1e-12);
  const double scale = static_cast<double>(size) - 2 * margin;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const auto px = static_cast<Index>(margin + (xs[i] - *xmin) / span_x * scale);
    const auto py = static_cast<Index>(margin + (*ymax - ys[i]) / span_y * scale);
    const auto& color = kPalette[static_cast<std::size_t>(((labels[i] % 10) + 10) % 10)];
    for (Index dy = -1; dy <= 1; ++dy) {
      for (Index dx = -1; dx <= 1; ++dx) img.set(px + dx, py + dy, color[0], color[1], color[2]);
    }
  }
  return img;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  std::unique_ptr<FILE, int (*)(FILE*)> file(std::fopen(path.string().c_str(), "wb"), &std::fclose);
  if (!file) throw Error("cannot write image '" + path.string() + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (png == nullptr || info == nullptr) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("libpng failed while writing '" + path.string() + "'");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (Index y = 0; y < image.height; ++y) {
    png_write_row(png, const_cast<png_bytep>(&image.rgb[static_cast<std::size_t>(y * image.width * 3)]));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace mlvae

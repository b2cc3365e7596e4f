#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "mlvae/tensor.hpp"

namespace mlvae {

struct RgbImage {
  Index width = 0, height = 0;
  std::vector<std::uint8_t> rgb;  // height * width * 3

  RgbImage() = default;
  RgbImage(Index w, Index h, std::uint8_t fill = 255);
  void set(Index x, Index y, std::uint8_t r, std::uint8_t g, std::uint8_t b);
};

/// Tiles rows x cols single-channel tiles (values in [0, 1], row-major tile
/// order) into one image with `gap` pixels of separation.
RgbImage tile_grid(std::span<const Real> tiles, Index rows, Index cols, Index tile_height, Index tile_width,
                   Index gap = 2);

/// 2-D scatter plot of labeled points on a square canvas.
RgbImage scatter_plot(std::span<const double> xs, std::span<const double> ys, std::span<const int> labels,
                      Index size = 512);

void write_png(const std::filesystem::path& path, const RgbImage& image);

}  // namespace mlvae

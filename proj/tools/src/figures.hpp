#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "octfluid/detect.hpp"
#include "octfluid/types.hpp"

namespace octfluid::cli {

/// 8-bit RGB raster, row-major.
struct Rgb {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // 3 * width * height

  std::array<std::uint8_t, 3> at(int x, int y) const {
    const auto* p = pixels.data() + 3 * (std::size_t(y) * width + x);
    return {p[0], p[1], p[2]};
  }
};

/// IRF red, SRF yellow, PED blue.
std::array<std::uint8_t, 3> class_color(FluidClass c);

/// Grayscale B-scan with fluid pixels blended 50/50 with their class color.
Rgb overlay(std::span<const float> bscan, std::span<const std::uint8_t> labels, int width, int height);
/// Two images next to each other.
Rgb side_by_side(const Rgb& left, const Rgb& right);

void write_ppm(const std::filesystem::path& path, const Rgb& image);
Rgb read_ppm(const std::filesystem::path& path);

/// One overlay PPM per B-scan (bscan_000.ppm, ...). With `truth`, each image
/// shows truth on the left and `labels` on the right.
std::vector<std::filesystem::path> render_volume(const Volume& volume, const LabelMask& labels,
                                                 const std::optional<LabelMask>& truth,
                                                 const std::filesystem::path& out_dir);

struct RocSeries {
  FluidClass cls;
  std::vector<detect::RocPoint> points;
  double auc = 0.0;
};

/// SVG with one polyline per class and the AUCs in the legend.
std::string roc_svg(std::span<const RocSeries> series);

}  // namespace octfluid::cli

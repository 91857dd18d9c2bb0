#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "octfluid/types.hpp"

namespace octfluid::distmap {

enum class Form {
  // (y - Y1) / (Y2 - Y1): ILM -> 0, RPE -> 1. Default.
  NormalizedSpan,
  // (y - Y1) / (Y1 - Y2) exactly as printed; the retina maps to [0, -1].
  SignedVerbatim,
};

/// Relative axial position of every pixel of one B-scan, row-major H x W.
struct RelativeDistanceMap {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> values;

  double at(std::size_t x, std::size_t y) const { return values[y * width + x]; }
};

RelativeDistanceMap relative_distance_map(std::span<const float> ilm, std::span<const float> rpe,
                                          std::size_t width, std::size_t height,
                                          Form form = Form::NormalizedSpan);

RelativeDistanceMap relative_distance_map(const SurfacePair& surfaces, std::size_t bscan,
                                          Form form = Form::NormalizedSpan);

/// Debug dump: blue (negative) to white (0.5) to red (>= 1) heatmap, binary PPM.
void write_heatmap_ppm(const std::filesystem::path& path, const RelativeDistanceMap& map);

}  // namespace octfluid::distmap

#include "octfluid/distmap.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace octfluid::distmap {

RelativeDistanceMap relative_distance_map(std::span<const float> ilm, std::span<const float> rpe,
                                          std::size_t width, std::size_t height, Form form) {
  if (ilm.size() != width || rpe.size() != width)
    throw DimensionError("surface rows must have one entry per column");
  RelativeDistanceMap m{width, height, std::vector<double>(width * height)};
  for (std::size_t x = 0; x < width; ++x) {
    const double y1 = ilm[x], y2 = rpe[x];
    if (!(y2 != y1) || !std::isfinite(y1) || !std::isfinite(y2))
      throw GeometryError("degenerate surfaces at column " + std::to_string(x));
    const double denom = form == Form::NormalizedSpan ? (y2 - y1) : (y1 - y2);
    for (std::size_t y = 0; y < height; ++y) m.values[y * width + x] = (double(y) - y1) / denom;
  }
  return m;
}

RelativeDistanceMap relative_distance_map(const SurfacePair& surfaces, std::size_t bscan,
                                          Form form) {
  const Dims& d = surfaces.dims();
  return relative_distance_map(surfaces.ilm_bscan(bscan), surfaces.rpe_bscan(bscan), d.width,
                               d.height, form);
}

void write_heatmap_ppm(const std::filesystem::path& path, const RelativeDistanceMap& map) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << "P6\n" << map.width << " " << map.height << "\n255\n";
  for (double v : map.values) {
    const double t = std::clamp(v, 0.0, 1.0);
    unsigned char rgb[3];
    if (v < 0) {
      rgb[0] = rgb[1] = 0;
      rgb[2] = 160;
    } else {
      rgb[0] = static_cast<unsigned char>(255 * std::min(1.0, 2 * t));
      rgb[1] = static_cast<unsigned char>(255 * (1 - std::abs(2 * t - 1)));
      rgb[2] = static_cast<unsigned char>(255 * std::min(1.0, 2 * (1 - t)));
    }
    out.write(reinterpret_cast<const char*>(rgb), 3);
  }
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace octfluid::distmap

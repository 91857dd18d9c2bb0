#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "octfluid/distmap.hpp"
#include "octfluid/types.hpp"

namespace octfluid::regions {

inline constexpr std::size_t kNumFeatures = 16;
using Features = std::array<double, kNumFeatures>;

/// Frozen feature order (CSV header names).
extern const std::array<const char*, kNumFeatures> kFeatureNames;

/// Inclusive pixel box.
struct BBox {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;

  int width() const { return x1 - x0 + 1; }
  int height() const { return y1 - y0 + 1; }
  bool contains(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
  bool operator==(const BBox&) const = default;
};

struct CandidateRegion {
  int bscan = 0;
  FluidClass cls = FluidClass::Background;
  std::vector<int> pixels;  // sorted linear indices y * width + x
  BBox tight;
  BBox expanded;
  Features features{};
  bool outside_degenerate = false;  // expanded box held no outside pixels
  std::optional<bool> label;        // ground truth (training only)
  double probability = 0.0;         // forest output, filled by vetting
};

/// All 8-connected components of the non-zero pixels, each as sorted linear
/// indices; components are ordered by their first pixel in raster order.
std::vector<std::vector<int>> components_8(std::span<const std::uint8_t> binary, int width, int height);

/// A box `factor` times the tight box on each side, centred on it and
/// clamped to the image.
BBox expand_box(const BBox& tight, double factor, int width, int height);

/// 8-connected components of `cls` with at least min_size pixels.
std::vector<CandidateRegion> extract_candidates(std::span<const std::uint8_t> labels, int width, int height,
                                                FluidClass cls, int bscan = 0, int min_size = 3);

/// Fills region.features (and outside_degenerate) from the raw B-scan and the
/// relative distance map of the same scan.
void compute_features(CandidateRegion& region, std::span<const float> raw, const distmap::RelativeDistanceMap& dmap);

/// r = |S1 n S2| / min(|S1|, |S2|) over sorted index sets. S1 must be non-empty.
double overlap_ratio(std::span<const int> s1, std::span<const int> s2);
/// True when r > 0.7.
bool label_region(std::span<const int> s1, std::span<const int> s2);

/// Pixels of class `cls` in one B-scan of a label image, sorted.
std::vector<int> class_pixels(std::span<const std::uint8_t> labels, FluidClass cls);

/// CSV: volume,bscan,class,<16 features>,label,probability
void write_candidates_csv(const std::filesystem::path& path, const std::string& volume_id,
                          std::span<const CandidateRegion> candidates, bool append = false);

}  // namespace octfluid::regions

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "octfluid/types.hpp"

namespace octfluid {

// Binary containers: 4-byte magic, little-endian u32 width/height/n_bscans,
// f32 spacing triple (dx, dy, dz), then the raw payload in voxel order.
//   "OCTV": f32 intensities
//   "OCTM": u8 class codes
//   "OCTS": u32 width/height/n_bscans, f32 ILM table then f32 RPE table
namespace io {

void write_volume(const std::filesystem::path& path, const Volume& volume);
Volume read_volume(const std::filesystem::path& path);

void write_mask(const std::filesystem::path& path, const LabelMask& mask);
LabelMask read_mask(const std::filesystem::path& path);
/// Reads a mask and checks its dims against the paired volume's.
LabelMask read_mask(const std::filesystem::path& path, const Dims& expected);

void write_surfaces(const std::filesystem::path& path, const SurfacePair& surfaces);
SurfacePair read_surfaces(const std::filesystem::path& path);

/// Header-only peek at a volume or mask container.
Dims read_dims(const std::filesystem::path& path);

}  // namespace io

struct ManifestEntry {
  std::string id;
  std::filesystem::path volume;
  std::filesystem::path mask;
  std::string profile;
  std::optional<std::filesystem::path> truth_surfaces;
  std::optional<std::filesystem::path> jitter;

  bool operator==(const ManifestEntry&) const = default;
};

/// Plain-text dataset listing. Relative paths resolve against the manifest's
/// own directory.
///
///   # comment
///   seed=7
///   entry id=vol_000 volume=vol_000.octv mask=vol_000.octm profile=spectralis
struct DatasetManifest {
  std::uint64_t seed = 0;
  std::vector<ManifestEntry> entries;
  std::filesystem::path base_dir;

  std::filesystem::path resolve(const std::filesystem::path& p) const {
    return p.is_absolute() ? p : base_dir / p;
  }
  const ManifestEntry& find(const std::string& id) const;

  /// Checks that every referenced file exists and mask dims match volume dims.
  void validate() const;

  static DatasetManifest read(const std::filesystem::path& path);
  void write(const std::filesystem::path& path) const;
  std::string to_text() const;
};

}  // namespace octfluid

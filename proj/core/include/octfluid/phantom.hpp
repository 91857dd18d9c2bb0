#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "octfluid/io.hpp"
#include "octfluid/types.hpp"

namespace octfluid::phantom {

/// Scanner geometry stand-in. B-scan counts follow the three devices; the
/// in-plane size is shrunk to desk scale and spacing is a placeholder derived
/// from a 6 mm field of view.
struct DeviceProfile {
  std::string id;
  std::uint32_t n_bscans = 0;
  std::uint32_t width = 128;
  std::uint32_t height = 128;
  double noise = 0.3;
  double scan_depth_um = 2000.0;

  static DeviceProfile named(const std::string& id);
  Spacing spacing() const;
  Dims dims() const { return {width, height, n_bscans}; }
};

/// Sizes are relative: rx to the B-scan width, ry to the local retinal
/// thickness, rz to the number of B-scans.
struct BlobRange {
  int min_count = 1;
  int max_count = 2;
  double min_rx = 0.05, max_rx = 0.10;
  double min_ry = 0.10, max_ry = 0.18;
  double min_rz = 0.10, max_rz = 0.25;
};

struct FluidSpec {
  std::array<BlobRange, 3> blobs;  // IRF, SRF, PED
  std::array<bool, 3> present = {true, true, true};
  int max_jitter = 3;
  double fluid_intensity = 0.05;
  double max_tilt_deg = 20.0;

  static FluidSpec standard();
  /// Larger, higher-contrast blobs; used for the end-to-end learnability runs.
  static FluidSpec easy();
};

struct PhantomVolume {
  Volume volume;
  LabelMask mask;
  SurfacePair surfaces;     // true ILM/RPE in the (jittered) image frame
  std::vector<int> jitter;  // axial displacement applied to each B-scan; jitter[0] == 0
};

// Normalized-depth windows (relative to ILM=0, RPE=1) that bound each class.
struct DepthWindow {
  double lo;
  double hi;
};
DepthWindow depth_window(FluidClass c);

PhantomVolume generate_volume(std::uint64_t seed, const DeviceProfile& profile,
                              const FluidSpec& spec);

/// Per-volume class presence for a dataset of n volumes: cycles through
/// seeded shuffles of the seven non-empty subsets of {IRF, SRF, PED}.
std::vector<std::array<bool, 3>> presence_table(std::uint64_t seed, int n_volumes);

/// Writes n volumes (+masks, true surfaces, jitter tables, presence.csv and
/// manifest.txt) into out_dir and returns the manifest.
DatasetManifest generate_dataset(std::uint64_t seed, const DeviceProfile& profile,
                                 const FluidSpec& spec, int n_volumes,
                                 const std::filesystem::path& out_dir);

std::vector<int> read_jitter(const std::filesystem::path& path);

}  // namespace octfluid::phantom

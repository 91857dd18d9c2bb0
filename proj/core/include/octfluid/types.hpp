#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace octfluid {

// Error hierarchy. The CLI maps IoError to exit code 2 and everything else
// derived from Error to exit code 3.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};
class FormatError : public Error {
 public:
  using Error::Error;
};
class ValidationError : public Error {
 public:
  using Error::Error;
};
class DimensionError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};
class ShapeError : public Error {
 public:
  using Error::Error;
};
class GeometryError : public Error {
 public:
  using Error::Error;
};
class DataError : public Error {
 public:
  using Error::Error;
};
class ContractError : public Error {
 public:
  using Error::Error;
};
class CheckpointError : public Error {
 public:
  using Error::Error;
};
class SpecError : public Error {
 public:
  using Error::Error;
};
/// A metric is undefined for the given input (e.g. AUC with one label class).
class MetricError : public Error {
 public:
  using Error::Error;
};

enum class FluidClass : std::uint8_t { Background = 0, IRF = 1, SRF = 2, PED = 3 };

inline constexpr int kNumClasses = 4;
inline constexpr std::array<FluidClass, 3> kFluidClasses = {FluidClass::IRF, FluidClass::SRF,
                                                             FluidClass::PED};

constexpr int code(FluidClass c) { return static_cast<int>(c); }
constexpr bool is_fluid(FluidClass c) { return c != FluidClass::Background; }
std::string_view class_name(FluidClass c);
FluidClass class_from_name(std::string_view name);

struct Spacing {
  float dx = 1.0F;  // along a B-scan row (micrometers)
  float dy = 1.0F;  // axial
  float dz = 1.0F;  // between B-scans

  double voxel_mm3() const { return double(dx) * double(dy) * double(dz) * 1e-9; }
  bool operator==(const Spacing&) const = default;
};

struct Dims {
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  std::uint32_t n_bscans = 0;

  std::size_t bscan_size() const { return std::size_t(width) * height; }
  std::size_t voxels() const { return bscan_size() * n_bscans; }
  bool operator==(const Dims&) const = default;
};

std::string to_string(const Dims& d);

/// A stack of B-scans. Voxel (x, y, z) lives at z*H*W + y*W + x; y grows
/// downward. Intensities are finite and in [0, 1].
class Volume {
 public:
  Volume() = default;
  Volume(Dims dims, Spacing spacing, std::vector<float> voxels);

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::uint32_t width() const { return dims_.width; }
  std::uint32_t height() const { return dims_.height; }
  std::uint32_t n_bscans() const { return dims_.n_bscans; }

  float at(std::size_t x, std::size_t y, std::size_t z) const {
    return voxels_[z * dims_.bscan_size() + y * dims_.width + x];
  }
  std::span<const float> bscan(std::size_t z) const {
    return {voxels_.data() + z * dims_.bscan_size(), dims_.bscan_size()};
  }
  std::span<const float> voxels() const { return voxels_; }

  bool operator==(const Volume&) const = default;

 private:
  Dims dims_;
  Spacing spacing_;
  std::vector<float> voxels_;
};

/// Per-voxel fluid class codes, laid out like Volume.
class LabelMask {
 public:
  LabelMask() = default;
  LabelMask(Dims dims, Spacing spacing, std::vector<std::uint8_t> labels);
  static LabelMask background(Dims dims, Spacing spacing);

  const Dims& dims() const { return dims_; }
  const Spacing& spacing() const { return spacing_; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t z) const {
    return labels_[z * dims_.bscan_size() + y * dims_.width + x];
  }
  std::span<const std::uint8_t> bscan(std::size_t z) const {
    return {labels_.data() + z * dims_.bscan_size(), dims_.bscan_size()};
  }
  std::span<const std::uint8_t> labels() const { return labels_; }
  std::size_t count(FluidClass c) const;
  bool contains(FluidClass c) const { return count(c) > 0; }

  bool operator==(const LabelMask&) const = default;

 private:
  Dims dims_;
  Spacing spacing_;
  std::vector<std::uint8_t> labels_;
};

void require_same_dims(const Volume& v, const LabelMask& m);

/// ILM (y1) and RPE (y2) axial coordinates per (x, bscan), index z*W + x.
class SurfacePair {
 public:
  SurfacePair() = default;
  SurfacePair(Dims dims, std::vector<float> ilm, std::vector<float> rpe);

  const Dims& dims() const { return dims_; }
  float ilm(std::size_t x, std::size_t z) const { return ilm_[z * dims_.width + x]; }
  float rpe(std::size_t x, std::size_t z) const { return rpe_[z * dims_.width + x]; }
  std::span<const float> ilm_bscan(std::size_t z) const {
    return {ilm_.data() + z * dims_.width, dims_.width};
  }
  std::span<const float> rpe_bscan(std::size_t z) const {
    return {rpe_.data() + z * dims_.width, dims_.width};
  }
  std::span<const float> ilm() const { return ilm_; }
  std::span<const float> rpe() const { return rpe_; }

  bool operator==(const SurfacePair&) const = default;

 private:
  Dims dims_;
  std::vector<float> ilm_;
  std::vector<float> rpe_;
};

}  // namespace octfluid

#include "octfluid/types.hpp"

#include <algorithm>
#include <cmath>

namespace octfluid {

std::string_view class_name(FluidClass c) {
  switch (c) {
    case FluidClass::Background: return "background";
    case FluidClass::IRF: return "IRF";
    case FluidClass::SRF: return "SRF";
    case FluidClass::PED: return "PED";
  }
  return "?";
}

FluidClass class_from_name(std::string_view name) {
  for (int c = 0; c < kNumClasses; ++c) {
    auto fc = static_cast<FluidClass>(c);
    if (class_name(fc) == name) return fc;
  }
  throw ValidationError("unknown fluid class '" + std::string(name) + "'");
}

std::string to_string(const Dims& d) {
  return std::to_string(d.width) + "x" + std::to_string(d.height) + "x" +
         std::to_string(d.n_bscans);
}

namespace {

void check_dims(const Dims& d) {
  if (d.width == 0 || d.height == 0 || d.n_bscans == 0)
    throw DimensionError("dimensions must be positive, got " + to_string(d));
}

void check_spacing(const Spacing& s) {
  if (!(std::isfinite(s.dx) && std::isfinite(s.dy) && std::isfinite(s.dz)) || s.dx <= 0 ||
      s.dy <= 0 || s.dz <= 0)
    throw ValidationError("voxel spacing must be finite and positive");
}

}  // namespace

Volume::Volume(Dims dims, Spacing spacing, std::vector<float> voxels)
    : dims_(dims), spacing_(spacing), voxels_(std::move(voxels)) {
  check_dims(dims_);
  check_spacing(spacing_);
  if (voxels_.size() != dims_.voxels())
    throw DimensionError("voxel count " + std::to_string(voxels_.size()) + " does not match " +
                         to_string(dims_));
  for (float v : voxels_)
    if (!std::isfinite(v) || v < 0.0F || v > 1.0F)
      throw ValidationError("volume intensities must be finite and within [0,1]");
}

LabelMask::LabelMask(Dims dims, Spacing spacing, std::vector<std::uint8_t> labels)
    : dims_(dims), spacing_(spacing), labels_(std::move(labels)) {
  check_dims(dims_);
  check_spacing(spacing_);
  if (labels_.size() != dims_.voxels())
    throw DimensionError("label count does not match " + to_string(dims_));
  for (auto l : labels_)
    if (l >= kNumClasses)
      throw ValidationError("label value " + std::to_string(int(l)) + " outside {0..3}");
}

LabelMask LabelMask::background(Dims dims, Spacing spacing) {
  return LabelMask(dims, spacing, std::vector<std::uint8_t>(dims.voxels(), 0));
}

std::size_t LabelMask::count(FluidClass c) const {
  const auto v = static_cast<std::uint8_t>(c);
  return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), v));
}

void require_same_dims(const Volume& v, const LabelMask& m) {
  if (!(v.dims() == m.dims()))
    throw DimensionError("mask dims " + to_string(m.dims()) + " differ from volume dims " +
                         to_string(v.dims()));
}

SurfacePair::SurfacePair(Dims dims, std::vector<float> ilm, std::vector<float> rpe)
    : dims_(dims), ilm_(std::move(ilm)), rpe_(std::move(rpe)) {
  check_dims(dims_);
  const std::size_t n = std::size_t(dims_.width) * dims_.n_bscans;
  if (ilm_.size() != n || rpe_.size() != n)
    throw DimensionError("surface table size does not match " + to_string(dims_));
  const auto h = static_cast<float>(dims_.height);
  for (std::size_t i = 0; i < n; ++i) {
    const float a = ilm_[i];
    const float b = rpe_[i];
    if (!std::isfinite(a) || !std::isfinite(b) || a < 0.0F || !(a < b) || !(b < h))
      throw GeometryError("surface invariant 0 <= ILM < RPE < height violated at column " +
                          std::to_string(i % dims_.width) + ", bscan " +
                          std::to_string(i / dims_.width));
  }
}

}  // namespace octfluid

#include "octfluid/pipeline.hpp"

#include <algorithm>

namespace octfluid::pipeline {

void PreprocessConfig::validate() const {
  if (!(bv_lambda > 0.0)) throw ValidationError("bv_lambda must be > 0");
  if (bv_iters < 0) throw ValidationError("bv_iters must be >= 0");
  if (layers.rpe_margin < 1) throw ValidationError("rpe_margin must be >= 1");
}

Prepared prepare(const std::string& id, const Volume& volume, const std::optional<LabelMask>& truth,
                 const PreprocessConfig& config) {
  config.validate();
  if (truth) require_same_dims(volume, *truth);
  Prepared p;
  p.id = id;
  if (config.motion) {
    auto mc = preproc::motion_correct(volume);
    p.corrected = std::move(mc.volume);
    p.shifts = std::move(mc.table);
  } else {
    p.corrected = volume;
    p.shifts.shifts.assign(volume.n_bscans(), 0);
  }
  const Volume smoothed = config.bv_iters > 0 ? preproc::bv_smooth(p.corrected, config.bv_lambda, config.bv_iters)
                                              : p.corrected;
  p.surfaces = preproc::segment_layers(smoothed, config.layers);
  for (std::size_t z = 0; z < volume.n_bscans(); ++z)
    p.dmaps.push_back(distmap::relative_distance_map(p.surfaces, z, config.form));
  if (truth) {
    p.truth_original = *truth;
    p.truth = preproc::apply_shifts(*truth, p.shifts);
  }
  return p;
}

trainer::Sample bscan_sample(const Prepared& prepared, std::size_t z) {
  const auto& d = prepared.corrected.dims();
  trainer::Sample s;
  s.width = int(d.width);
  s.height = int(d.height);
  s.source = prepared.id + ":" + std::to_string(z);
  const std::size_t plane = d.bscan_size();
  s.image.resize(2 * plane);
  const auto raw = prepared.corrected.bscan(z);
  std::copy(raw.begin(), raw.end(), s.image.begin());
  const auto& dm = prepared.dmaps[z].values;
  std::copy(dm.begin(), dm.end(), s.image.begin() + std::ptrdiff_t(plane));
  if (prepared.truth) {
    const auto lab = prepared.truth->bscan(z);
    s.labels.assign(lab.begin(), lab.end());
  } else {
    s.labels.assign(plane, 0);
  }
  return s;
}

std::vector<trainer::Sample> make_samples(const Prepared& prepared) {
  std::vector<trainer::Sample> out;
  for (std::size_t z = 0; z < prepared.corrected.n_bscans(); ++z) out.push_back(bscan_sample(prepared, z));
  return out;
}

LabelMask segment(unet::Network& net, const Prepared& prepared) {
  const auto& d = prepared.corrected.dims();
  std::vector<std::uint8_t> labels;
  labels.reserve(d.voxels());
  for (std::size_t z = 0; z < d.n_bscans; ++z) {
    const trainer::Sample s = bscan_sample(prepared, z);
    const trainer::Sample* one[] = {&s};
    const auto pred = unet::predict_labels(net.predict(trainer::stack_images(one)));
    labels.insert(labels.end(), pred.begin(), pred.end());
  }
  return LabelMask(d, prepared.corrected.spacing(), std::move(labels));
}

std::vector<regions::CandidateRegion> candidates(const Prepared& prepared, const LabelMask& segmentation,
                                                 int min_size) {
  const auto& d = prepared.corrected.dims();
  if (!(segmentation.dims() == d)) throw DimensionError("segmentation does not match the prepared volume");
  std::vector<regions::CandidateRegion> out;
  for (std::size_t z = 0; z < d.n_bscans; ++z) {
    for (FluidClass c : kFluidClasses) {
      auto found = regions::extract_candidates(segmentation.bscan(z), int(d.width), int(d.height), c, int(z),
                                               min_size);
      if (found.empty()) continue;
      std::vector<int> truth_px;
      if (prepared.truth) truth_px = regions::class_pixels(prepared.truth->bscan(z), c);
      for (auto& r : found) {
        regions::compute_features(r, prepared.corrected.bscan(z), prepared.dmaps[z]);
        if (prepared.truth) r.label = regions::label_region(r.pixels, truth_px);
        out.push_back(std::move(r));
      }
    }
  }
  return out;
}

}  // namespace octfluid::pipeline

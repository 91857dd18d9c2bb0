#pragma once

#include <optional>
#include <string>
#include <vector>

#include "octfluid/distmap.hpp"
#include "octfluid/preproc.hpp"
#include "octfluid/regions.hpp"
#include "octfluid/trainer.hpp"
#include "octfluid/unet.hpp"

namespace octfluid::pipeline {

struct PreprocessConfig {
  bool motion = true;
  double bv_lambda = 0.05;
  int bv_iters = 40;
  preproc::LayerParams layers;
  distmap::Form form = distmap::Form::NormalizedSpan;

  void validate() const;
};

/// A volume brought into the network's frame: motion-corrected raw
/// intensities, layer surfaces, one distance map per B-scan and (when
/// available) the ground truth moved into the same frame.
struct Prepared {
  std::string id;
  Volume corrected;
  preproc::ShiftTable shifts;
  SurfacePair surfaces;
  std::vector<distmap::RelativeDistanceMap> dmaps;
  std::optional<LabelMask> truth;           // corrected frame
  std::optional<LabelMask> truth_original;  // as loaded
};

Prepared prepare(const std::string& id, const Volume& volume, const std::optional<LabelMask>& truth,
                 const PreprocessConfig& config);

/// 2-channel sample of B-scan z: (corrected raw, distance map). Labels come
/// from the corrected-frame truth, or background without one.
trainer::Sample bscan_sample(const Prepared& prepared, std::size_t z);
std::vector<trainer::Sample> make_samples(const Prepared& prepared);

/// Network labels for every B-scan, in the corrected frame.
LabelMask segment(unet::Network& net, const Prepared& prepared);

/// Candidates of every fluid class and B-scan of a label volume (corrected
/// frame), with features. When the prepared volume carries truth, each
/// candidate is labelled by overlap with same-class truth on its B-scan.
std::vector<regions::CandidateRegion> candidates(const Prepared& prepared, const LabelMask& segmentation,
                                                 int min_size = 3);

}  // namespace octfluid::pipeline

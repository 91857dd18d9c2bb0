#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "octfluid/regions.hpp"
#include "octfluid/types.hpp"

namespace octfluid::detect {

/// Highest candidate probability within one B-scan; 0 without candidates.
double bscan_probability(std::span<const double> candidate_probabilities);

/// Per-B-scan probabilities of class `cls` from candidates carrying forest
/// probabilities.
std::vector<double> bscan_probabilities(std::span<const regions::CandidateRegion> candidates, FluidClass cls,
                                        std::size_t n_bscans);

/// Mean of the k largest values (mean of all when fewer than k).
double volume_probability(std::span<const double> bscan_probabilities, std::size_t k = 10);

/// Voxel counts of one class in a truth/prediction pair.
struct Overlap {
  std::size_t truth = 0;
  std::size_t predicted = 0;
  std::size_t both = 0;
};
Overlap overlap(const LabelMask& truth, const LabelMask& predicted, FluidClass cls);

/// 2|S1 n S2| / (|S1| + |S2|); nullopt when both sets are empty.
std::optional<double> dice(const Overlap& o);
/// | |S1| - |S2| | in voxels.
double avd_voxels(const Overlap& o);

struct SegmentationMetrics {
  std::optional<double> dice;  // absent when the truth lacks the class
  std::optional<double> avd_vox;
  std::optional<double> avd_mm3;
};
SegmentationMetrics segmentation_metrics(const LabelMask& truth, const LabelMask& predicted, FluidClass cls);

struct RocPoint {
  double threshold;  // positive iff score >= threshold
  double fpr;
  double tpr;
};

/// ROC points from (0, 0) to (1, 1), one per distinct score in descending
/// order. Throws MetricError unless both labels occur.
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const std::uint8_t> labels);
/// Trapezoidal area under roc_curve.
double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

}  // namespace octfluid::detect

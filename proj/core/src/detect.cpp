#include "octfluid/detect.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace octfluid::detect {

double bscan_probability(std::span<const double> p) {
  double best = 0.0;
  for (double v : p) best = std::max(best, v);
  return best;
}

std::vector<double> bscan_probabilities(std::span<const regions::CandidateRegion> candidates, FluidClass cls,
                                        std::size_t n_bscans) {
  std::vector<double> out(n_bscans, 0.0);
  for (const auto& c : candidates) {
    if (c.cls != cls) continue;
    if (c.bscan < 0 || std::size_t(c.bscan) >= n_bscans) throw DimensionError("candidate B-scan out of range");
    out[std::size_t(c.bscan)] = std::max(out[std::size_t(c.bscan)], c.probability);
  }
  return out;
}

double volume_probability(std::span<const double> p, std::size_t k) {
  if (p.empty()) throw ContractError("volume_probability needs at least one B-scan");
  if (k == 0) throw ValidationError("top-k must be >= 1");
  std::vector<double> v(p.begin(), p.end());
  const std::size_t n = std::min(k, v.size());
  std::partial_sort(v.begin(), v.begin() + std::ptrdiff_t(n), v.end(), std::greater<>());
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += v[i];
  return sum / double(n);
}

Overlap overlap(const LabelMask& truth, const LabelMask& predicted, FluidClass cls) {
  if (!(truth.dims() == predicted.dims())) throw DimensionError("truth and prediction differ in dimensions");
  const auto code = static_cast<std::uint8_t>(cls);
  const auto t = truth.labels(), p = predicted.labels();
  Overlap o;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const bool a = t[i] == code, b = p[i] == code;
    o.truth += a;
    o.predicted += b;
    o.both += a && b;
  }
  return o;
}

std::optional<double> dice(const Overlap& o) {
  if (o.truth + o.predicted == 0) return std::nullopt;
  return 2.0 * double(o.both) / double(o.truth + o.predicted);
}

double avd_voxels(const Overlap& o) {
  return o.truth > o.predicted ? double(o.truth - o.predicted) : double(o.predicted - o.truth);
}

SegmentationMetrics segmentation_metrics(const LabelMask& truth, const LabelMask& predicted, FluidClass cls) {
  const Overlap o = overlap(truth, predicted, cls);
  SegmentationMetrics m;
  if (o.truth == 0) return m;
  m.dice = dice(o);
  m.avd_vox = avd_voxels(o);
  m.avd_mm3 = *m.avd_vox * truth.spacing().voxel_mm3();
  return m;
}

std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw DimensionError("scores and labels differ in length");
  std::size_t n_pos = 0;
  for (auto l : labels) n_pos += l ? 1 : 0;
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw MetricError("ROC needs both positive and negative labels");
  for (double s : scores)
    if (!std::isfinite(s)) throw ValidationError("non-finite score");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<RocPoint> curve{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double t = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == t; ++i) (labels[order[i]] ? tp : fp) += 1;
    curve.push_back({t, double(fp) / double(n_neg), double(tp) / double(n_pos)});
  }
  return curve;
}

double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  const auto c = roc_curve(scores, labels);
  double area = 0.0;
  for (std::size_t i = 1; i < c.size(); ++i) area += (c[i].fpr - c[i - 1].fpr) * (c[i].tpr + c[i - 1].tpr) / 2.0;
  return area;
}

}  // namespace octfluid::detect

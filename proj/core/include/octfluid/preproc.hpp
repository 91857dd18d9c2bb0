#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "octfluid/types.hpp"

namespace octfluid::preproc {

/// Per-B-scan integer axial correction; B-scan 0 is the reference (shift 0).
/// A shift s moves content by s rows: corrected(y) = original(y - s).
struct ShiftTable {
  std::vector<int> shifts;
};

struct MotionResult {
  Volume volume;
  ShiftTable table;
};

/// Chained normalized cross-correlation alignment: each B-scan takes the lag
/// in [-H/4, H/4] that best matches its corrected predecessor. Ties go to the
/// lag of smallest magnitude (negative first). Vacated rows replicate the edge.
MotionResult motion_correct(const Volume& volume);

/// Applies a shift table to a volume (edge replication).
Volume apply_shifts(const Volume& volume, const ShiftTable& table);
/// Applies a shift table to a mask; vacated rows become background.
LabelMask apply_shifts(const LabelMask& mask, const ShiftTable& table);
/// Inverse mapping of apply_shifts for masks (background fill).
LabelMask undo_shifts(const LabelMask& mask, const ShiftTable& table);

/// Total variation with forward differences and Neumann boundary.
double total_variation(std::span<const double> image, std::size_t width, std::size_t height);
/// ROF energy 0.5*||u - f||^2 + lambda * TV(u).
double rof_energy(std::span<const double> u, std::span<const double> f, std::size_t width,
                  std::size_t height, double lambda);

struct RofTrace {
  std::vector<double> energies;  // energy of the returned iterate after each iteration
};

/// ROF denoising of one image with Chambolle's projected dual iteration
/// (step 1/8). The primal iterate is only replaced when the energy does not
/// increase, so the reported energy sequence is monotone.
std::vector<double> rof_denoise(std::span<const double> f, std::size_t width, std::size_t height,
                                double lambda, int n_iters, RofTrace* trace = nullptr);

/// Per-B-scan ROF smoothing of a whole volume; output clamped to [0,1].
Volume bv_smooth(const Volume& volume, double lambda, int n_iters);

/// Minimum-cost left-to-right path through a row-major cost matrix with
/// |dy| <= 1 between neighbouring columns. Infinite entries are forbidden.
/// Ties resolve to the smaller row. Throws GeometryError when no finite path
/// exists.
struct Path {
  std::vector<int> rows;
  double cost = 0.0;
};
Path min_cost_path(std::span<const double> cost, std::size_t width, std::size_t height);

struct LayerParams {
  int rpe_margin = 3;          // RPE rows must lie at least this far below the ILM
  double topmost_bias = 1.0;   // added to the ILM cost per unit of normalized depth
};

/// ILM from the strongest dark-to-bright transition (biased toward the top),
/// RPE from the brightest band below ILM + margin.
SurfacePair segment_layers(const Volume& smoothed, const LayerParams& params = {});

}  // namespace octfluid::preproc

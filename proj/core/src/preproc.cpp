#include "octfluid/preproc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace octfluid::preproc {

namespace {

// corrected(y) = src(clamp(y - shift)).
void shift_rows(std::span<const float> src, std::span<float> dst, std::size_t width,
                std::size_t height, int shift) {
  for (std::size_t y = 0; y < height; ++y) {
    const long s = std::clamp<long>(long(y) - shift, 0, long(height) - 1);
    std::copy_n(src.begin() + s * long(width), width, dst.begin() + long(y * width));
  }
}

double ncc(std::span<const float> a, std::span<const float> b) {
  const double n = double(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa <= 0 || sbb <= 0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

MotionResult motion_correct(const Volume& volume) {
  const Dims d = volume.dims();
  const std::size_t plane = d.bscan_size();
  const int max_lag = int(d.height / 4);
  std::vector<float> out(volume.voxels().begin(), volume.voxels().end());
  ShiftTable table;
  table.shifts.assign(d.n_bscans, 0);
  // Search order 0, -1, +1, -2, +2, ... with a strict improvement test gives
  // the tie-break toward zero lag.
  std::vector<int> lags{0};
  for (int m = 1; m <= max_lag; ++m) {
    lags.push_back(-m);
    lags.push_back(m);
  }
  std::vector<float> candidate(plane);
  for (std::uint32_t z = 1; z < d.n_bscans; ++z) {
    std::span<const float> prev(out.data() + (z - 1) * plane, plane);
    const auto cur = volume.bscan(z);
    int best_lag = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (int lag : lags) {
      shift_rows(cur, candidate, d.width, d.height, lag);
      const double score = ncc(candidate, prev);
      if (score > best) {
        best = score;
        best_lag = lag;
      }
    }
    table.shifts[z] = best_lag;
    shift_rows(cur, std::span<float>(out.data() + z * plane, plane), d.width, d.height, best_lag);
  }
  return {Volume(d, volume.spacing(), std::move(out)), std::move(table)};
}

Volume apply_shifts(const Volume& volume, const ShiftTable& table) {
  const Dims d = volume.dims();
  if (table.shifts.size() != d.n_bscans) throw DimensionError("shift table length mismatch");
  std::vector<float> out(d.voxels());
  for (std::uint32_t z = 0; z < d.n_bscans; ++z)
    shift_rows(volume.bscan(z), std::span<float>(out.data() + z * d.bscan_size(), d.bscan_size()),
               d.width, d.height, table.shifts[z]);
  return Volume(d, volume.spacing(), std::move(out));
}

namespace {

LabelMask shift_mask(const LabelMask& mask, const ShiftTable& table, int sign) {
  const Dims d = mask.dims();
  if (table.shifts.size() != d.n_bscans) throw DimensionError("shift table length mismatch");
  std::vector<std::uint8_t> out(d.voxels(), 0);
  for (std::uint32_t z = 0; z < d.n_bscans; ++z) {
    const int s = sign * table.shifts[z];
    const auto src = mask.bscan(z);
    for (std::size_t y = 0; y < d.height; ++y) {
      const long sy = long(y) - s;
      if (sy < 0 || sy >= long(d.height)) continue;
      std::copy_n(src.begin() + sy * long(d.width), d.width,
                  out.begin() + long(z * d.bscan_size() + y * d.width));
    }
  }
  return LabelMask(d, mask.spacing(), std::move(out));
}

}  // namespace

LabelMask apply_shifts(const LabelMask& mask, const ShiftTable& table) {
  return shift_mask(mask, table, 1);
}

LabelMask undo_shifts(const LabelMask& mask, const ShiftTable& table) {
  return shift_mask(mask, table, -1);
}

double total_variation(std::span<const double> u, std::size_t w, std::size_t h) {
  double tv = 0.0;
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const double c = u[y * w + x];
      const double gx = x + 1 < w ? u[y * w + x + 1] - c : 0.0;
      const double gy = y + 1 < h ? u[(y + 1) * w + x] - c : 0.0;
      tv += std::sqrt(gx * gx + gy * gy);
    }
  }
  return tv;
}

double rof_energy(std::span<const double> u, std::span<const double> f, std::size_t w,
                  std::size_t h, double lambda) {
  double fid = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) fid += (u[i] - f[i]) * (u[i] - f[i]);
  return 0.5 * fid + lambda * total_variation(u, w, h);
}

std::vector<double> rof_denoise(std::span<const double> f, std::size_t w, std::size_t h,
                                double lambda, int n_iters, RofTrace* trace) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ValidationError("lambda must be > 0");
  if (n_iters < 1) throw ValidationError("n_iters must be >= 1");
  for (double v : f)
    if (!std::isfinite(v)) throw ValidationError("ROF input must be finite");

  constexpr double kTau = 0.125;
  const std::size_t n = w * h;
  std::vector<double> px(n, 0.0), py(n, 0.0), div(n, 0.0), term(n, 0.0);
  std::vector<double> u(f.begin(), f.end());
  std::vector<double> trial(n);
  double energy = rof_energy(u, f, w, h, lambda);
  if (trace) trace->energies.clear();

  auto divergence = [&] {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t i = y * w + x;
        double dx;
        if (x == 0) dx = px[i];
        else if (x + 1 == w) dx = -px[i - 1];
        else dx = px[i] - px[i - 1];
        double dy;
        if (y == 0) dy = py[i];
        else if (y + 1 == h) dy = -py[i - w];
        else dy = py[i] - py[i - w];
        div[i] = dx + dy;
      }
    }
  };

  for (int it = 0; it < n_iters; ++it) {
    divergence();
    for (std::size_t i = 0; i < n; ++i) term[i] = div[i] - f[i] / lambda;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::size_t i = y * w + x;
        const double gx = x + 1 < w ? term[i + 1] - term[i] : 0.0;
        const double gy = y + 1 < h ? term[i + w] - term[i] : 0.0;
        const double norm = std::sqrt(gx * gx + gy * gy);
        px[i] = (px[i] + kTau * gx) / (1.0 + kTau * norm);
        py[i] = (py[i] + kTau * gy) / (1.0 + kTau * norm);
      }
    }
    divergence();
    for (std::size_t i = 0; i < n; ++i) trial[i] = f[i] - lambda * div[i];
    const double e = rof_energy(trial, f, w, h, lambda);
    if (e <= energy) {
      u.swap(trial);
      energy = e;
    }
    if (trace) trace->energies.push_back(energy);
  }
  return u;
}

Volume bv_smooth(const Volume& volume, double lambda, int n_iters) {
  const Dims d = volume.dims();
  std::vector<float> out(d.voxels());
  std::vector<double> f(d.bscan_size());
  for (std::uint32_t z = 0; z < d.n_bscans; ++z) {
    const auto scan = volume.bscan(z);
    std::copy(scan.begin(), scan.end(), f.begin());
    const auto u = rof_denoise(f, d.width, d.height, lambda, n_iters);
    for (std::size_t i = 0; i < u.size(); ++i)
      out[z * d.bscan_size() + i] = float(std::clamp(u[i], 0.0, 1.0));
  }
  return Volume(d, volume.spacing(), std::move(out));
}

Path min_cost_path(std::span<const double> cost, std::size_t w, std::size_t h) {
  if (w == 0 || h == 0 || cost.size() != w * h) throw ShapeError("cost matrix shape mismatch");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> acc(w * h, kInf);
  std::vector<int> from(w * h, -1);
  for (std::size_t y = 0; y < h; ++y) acc[y * w] = cost[y * w];
  for (std::size_t x = 1; x < w; ++x) {
    for (std::size_t y = 0; y < h; ++y) {
      const double c = cost[y * w + x];
      if (c == kInf) continue;
      double best = kInf;
      int arg = -1;
      for (long py = long(y) - 1; py <= long(y) + 1; ++py) {
        if (py < 0 || py >= long(h)) continue;
        const double a = acc[std::size_t(py) * w + x - 1];
        if (a < best) {
          best = a;
          arg = int(py);
        }
      }
      if (arg < 0) continue;
      acc[y * w + x] = best + c;
      from[y * w + x] = arg;
    }
  }
  double best = kInf;
  int end = -1;
  for (std::size_t y = 0; y < h; ++y) {
    if (acc[y * w + w - 1] < best) {
      best = acc[y * w + w - 1];
      end = int(y);
    }
  }
  if (end < 0 || !std::isfinite(best)) throw GeometryError("no feasible layer path");
  Path p;
  p.cost = best;
  p.rows.assign(w, 0);
  int y = end;
  for (std::size_t x = w; x-- > 0;) {
    p.rows[x] = y;
    if (x > 0) y = from[std::size_t(y) * w + x];
  }
  return p;
}

SurfacePair segment_layers(const Volume& smoothed, const LayerParams& params) {
  const Dims d = smoothed.dims();
  const std::size_t w = d.width, h = d.height;
  if (h < std::size_t(params.rpe_margin) + 3)
    throw GeometryError("B-scan height too small to hold both layer paths");
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<float> ilm(w * d.n_bscans), rpe(w * d.n_bscans);
  std::vector<double> cost(w * h);
  const std::size_t last_ilm_row = h - 1 - std::size_t(params.rpe_margin);
  for (std::uint32_t z = 0; z < d.n_bscans; ++z) {
    const auto img = smoothed.bscan(z);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        if (y == 0 || y > last_ilm_row) {
          cost[y * w + x] = kInf;
          continue;
        }
        const double grad = double(img[y * w + x]) - double(img[(y - 1) * w + x]);
        cost[y * w + x] = -grad + params.topmost_bias * double(y) / double(h);
      }
    }
    const Path top = min_cost_path(cost, w, h);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        cost[y * w + x] =
            long(y) < top.rows[x] + params.rpe_margin ? kInf : -double(img[y * w + x]);
      }
    }
    const Path bottom = min_cost_path(cost, w, h);
    for (std::size_t x = 0; x < w; ++x) {
      ilm[z * w + x] = float(top.rows[x]);
      rpe[z * w + x] = float(bottom.rows[x]);
    }
  }
  return SurfacePair(d, std::move(ilm), std::move(rpe));
}

}  // namespace octfluid::preproc

#include "octfluid/regions.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

namespace octfluid::regions {

const std::array<const char*, kNumFeatures> kFeatureNames = {
    "major_axis",     "minor_axis",      "axis_ratio",      "perimeter",
    "area",           "perimeter_area",  "eccentricity",    "orientation",
    "height_var",     "mean_inside",     "mean_outside",    "inside_outside_diff",
    "var_inside",     "kurtosis_inside", "skewness_inside", "center_rel_distance",
};

namespace {

// Union-find over provisional labels with path halving.
int find_root(std::vector<int>& parent, int a) {
  while (parent[std::size_t(a)] != a) {
    parent[std::size_t(a)] = parent[std::size_t(parent[std::size_t(a)])];
    a = parent[std::size_t(a)];
  }
  return a;
}

void unite(std::vector<int>& parent, int a, int b) {
  a = find_root(parent, a);
  b = find_root(parent, b);
  if (a != b) parent[std::size_t(std::max(a, b))] = std::min(a, b);
}

}  // namespace

std::vector<std::vector<int>> components_8(std::span<const std::uint8_t> binary, int width, int height) {
  if (binary.size() != std::size_t(width) * std::size_t(height))
    throw DimensionError("components_8: image size mismatch");
  // Two-pass labelling: raster scan against the four already-visited
  // neighbours (W, NW, N, NE), then resolve equivalences.
  std::vector<int> label(binary.size(), -1);
  std::vector<int> parent;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = std::size_t(y) * width + x;
      if (!binary[i]) continue;
      int l = -1;
      const int nb[4][2] = {{x - 1, y}, {x - 1, y - 1}, {x, y - 1}, {x + 1, y - 1}};
      for (const auto& q : nb) {
        if (q[0] < 0 || q[1] < 0 || q[0] >= width) continue;
        const int ql = label[std::size_t(q[1]) * width + q[0]];
        if (ql < 0) continue;
        if (l < 0) l = ql;
        else unite(parent, l, ql);
      }
      if (l < 0) {
        l = int(parent.size());
        parent.push_back(l);
      }
      label[i] = l;
    }
  }
  std::vector<int> slot(parent.size(), -1);
  std::vector<std::vector<int>> out;
  for (std::size_t i = 0; i < label.size(); ++i) {
    if (label[i] < 0) continue;
    const int r = find_root(parent, label[i]);
    if (slot[std::size_t(r)] < 0) {
      slot[std::size_t(r)] = int(out.size());
      out.emplace_back();
    }
    out[std::size_t(slot[std::size_t(r)])].push_back(int(i));
  }
  return out;
}

BBox expand_box(const BBox& t, double factor, int width, int height) {
  const double cx = (t.x0 + t.x1 + 1) / 2.0, cy = (t.y0 + t.y1 + 1) / 2.0;
  const double hw = factor * t.width() / 2.0, hh = factor * t.height() / 2.0;
  BBox e;
  e.x0 = std::max(0, int(std::floor(cx - hw)));
  e.y0 = std::max(0, int(std::floor(cy - hh)));
  e.x1 = std::min(width - 1, int(std::ceil(cx + hw)) - 1);
  e.y1 = std::min(height - 1, int(std::ceil(cy + hh)) - 1);
  return e;
}

std::vector<CandidateRegion> extract_candidates(std::span<const std::uint8_t> labels, int width, int height,
                                                FluidClass cls, int bscan, int min_size) {
  std::vector<std::uint8_t> binary(labels.size());
  const auto code = static_cast<std::uint8_t>(cls);
  for (std::size_t i = 0; i < labels.size(); ++i) binary[i] = labels[i] == code ? 1 : 0;
  std::vector<CandidateRegion> out;
  for (auto& comp : components_8(binary, width, height)) {
    if (int(comp.size()) < min_size) continue;
    CandidateRegion r;
    r.bscan = bscan;
    r.cls = cls;
    r.tight = {width, height, -1, -1};
    for (int p : comp) {
      const int x = p % width, y = p / width;
      r.tight.x0 = std::min(r.tight.x0, x);
      r.tight.y0 = std::min(r.tight.y0, y);
      r.tight.x1 = std::max(r.tight.x1, x);
      r.tight.y1 = std::max(r.tight.y1, y);
    }
    r.expanded = expand_box(r.tight, 1.2, width, height);
    r.pixels = std::move(comp);
    out.push_back(std::move(r));
  }
  return out;
}

void compute_features(CandidateRegion& region, std::span<const float> raw, const distmap::RelativeDistanceMap& dmap) {
  const int w = int(dmap.width), h = int(dmap.height);
  if (raw.size() != std::size_t(w) * std::size_t(h)) throw DimensionError("compute_features: raw B-scan size mismatch");
  const auto& px = region.pixels;
  if (px.size() < 3) throw ContractError("compute_features: region needs at least 3 pixels");
  const double n = double(px.size());

  // Membership bitmap over the tight box (expanded box contains it).
  const BBox& tb = region.tight;
  std::vector<std::uint8_t> inside(std::size_t(tb.width()) * tb.height(), 0);
  auto member = [&](int x, int y) {
    return tb.contains(x, y) && inside[std::size_t(y - tb.y0) * tb.width() + (x - tb.x0)] != 0;
  };
  double cx = 0, cy = 0;
  for (int p : px) {
    const int x = p % w, y = p / w;
    inside[std::size_t(y - tb.y0) * tb.width() + (x - tb.x0)] = 1;
    cx += x;
    cy += y;
  }
  cx /= n;
  cy /= n;

  double mu20 = 0, mu02 = 0, mu11 = 0;
  for (int p : px) {
    const double dx = p % w - cx, dy = p / w - cy;
    mu20 += dx * dx;
    mu02 += dy * dy;
    mu11 += dx * dy;
  }
  mu20 /= n;
  mu02 /= n;
  mu11 /= n;
  const double mean = (mu20 + mu02) / 2.0;
  const double disc = std::sqrt(((mu20 - mu02) / 2.0) * ((mu20 - mu02) / 2.0) + mu11 * mu11);
  const double l1 = mean + disc, l2 = std::max(0.0, mean - disc);
  const double major = 4.0 * std::sqrt(l1);
  const double minor = std::max(1.0, 4.0 * std::sqrt(l2));
  const double ecc = l1 > 0 ? std::sqrt(std::max(0.0, 1.0 - l2 / l1)) : 0.0;
  // Counter-clockwise from +x with rows pointing down, so negate.
  double orientation = -0.5 * std::atan2(2.0 * mu11, mu20 - mu02) * 180.0 / std::numbers::pi;
  if (orientation <= -90.0) orientation += 180.0;
  if (orientation == 0.0) orientation = 0.0;  // drop negative zero

  int perimeter = 0;
  for (int p : px) {
    const int x = p % w, y = p / w;
    const int nb[4][2] = {{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}};
    for (const auto& q : nb)
      if (!member(q[0], q[1])) ++perimeter;
  }

  std::vector<double> heights(std::size_t(tb.width()), 0.0);
  for (int p : px) heights[std::size_t(p % w - tb.x0)] += 1.0;
  const double hmean = std::accumulate(heights.begin(), heights.end(), 0.0) / double(heights.size());
  double hvar = 0;
  for (double v : heights) hvar += (v - hmean) * (v - hmean);
  hvar /= double(heights.size());

  double in_mean = 0;
  for (int p : px) in_mean += raw[std::size_t(p)];
  in_mean /= n;
  double m2 = 0, m3 = 0, m4 = 0;
  for (int p : px) {
    const double d = raw[std::size_t(p)] - in_mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  const double skew = m2 > 0 ? m3 / std::pow(m2, 1.5) : 0.0;
  const double kurt = m2 > 0 ? m4 / (m2 * m2) : 0.0;

  double out_sum = 0;
  std::size_t out_n = 0;
  const BBox& eb = region.expanded;
  for (int y = eb.y0; y <= eb.y1; ++y)
    for (int x = eb.x0; x <= eb.x1; ++x)
      if (!member(x, y)) {
        out_sum += raw[std::size_t(y) * w + x];
        ++out_n;
      }
  region.outside_degenerate = out_n == 0;
  const double out_mean = out_n ? out_sum / double(out_n) : 0.0;

  const int ccx = std::clamp(int(std::lround(cx)), 0, w - 1);
  const int ccy = std::clamp(int(std::lround(cy)), 0, h - 1);

  region.features = {major,
                     minor,
                     major / minor,
                     double(perimeter),
                     n,
                     double(perimeter) / n,
                     ecc,
                     orientation,
                     hvar,
                     in_mean,
                     out_mean,
                     region.outside_degenerate ? 0.0 : in_mean - out_mean,
                     m2,
                     kurt,
                     skew,
                     dmap.at(std::size_t(ccx), std::size_t(ccy))};
}

double overlap_ratio(std::span<const int> s1, std::span<const int> s2) {
  if (s1.empty()) throw ContractError("overlap_ratio: segmented region is empty");
  if (s2.empty()) return 0.0;
  std::size_t inter = 0;
  auto a = s1.begin();
  auto b = s2.begin();
  while (a != s1.end() && b != s2.end()) {
    if (*a < *b) ++a;
    else if (*b < *a) ++b;
    else {
      ++inter;
      ++a;
      ++b;
    }
  }
  return double(inter) / double(std::min(s1.size(), s2.size()));
}

bool label_region(std::span<const int> s1, std::span<const int> s2) { return overlap_ratio(s1, s2) > 0.7; }

std::vector<int> class_pixels(std::span<const std::uint8_t> labels, FluidClass cls) {
  std::vector<int> out;
  const auto code = static_cast<std::uint8_t>(cls);
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == code) out.push_back(int(i));
  return out;
}

void write_candidates_csv(const std::filesystem::path& path, const std::string& volume_id,
                          std::span<const CandidateRegion> candidates, bool append) {
  const bool header = !append || !std::filesystem::exists(path);
  std::ofstream out(path, append ? std::ios::app : std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  if (header) {
    out << "volume,bscan,class";
    for (const char* name : kFeatureNames) out << "," << name;
    out << ",label,probability\n";
  }
  char buf[64];
  for (const auto& c : candidates) {
    out << volume_id << "," << c.bscan << "," << class_name(c.cls);
    for (double f : c.features) {
      std::snprintf(buf, sizeof buf, ",%.9g", f);
      out << buf;
    }
    out << "," << (c.label ? (*c.label ? "1" : "0") : "");
    std::snprintf(buf, sizeof buf, ",%.9g\n", c.probability);
    out << buf;
  }
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace octfluid::regions

#include "octfluid/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "octfluid/rng.hpp"

namespace octfluid::phantom {

DeviceProfile DeviceProfile::named(const std::string& id) {
  DeviceProfile p;
  p.id = id;
  if (id == "cirrus") {
    p.n_bscans = 128;
    p.scan_depth_um = 2000.0;
  } else if (id == "spectralis") {
    p.n_bscans = 49;
    p.scan_depth_um = 1900.0;
  } else if (id == "topcon") {
    p.n_bscans = 128;
    p.scan_depth_um = 2300.0;
  } else {
    throw ValidationError("unknown device profile '" + id + "' (cirrus, spectralis, topcon)");
  }
  return p;
}

Spacing DeviceProfile::spacing() const {
  constexpr double kFieldUm = 6000.0;
  return {float(kFieldUm / width), float(scan_depth_um / height), float(kFieldUm / n_bscans)};
}

FluidSpec FluidSpec::standard() {
  FluidSpec s;
  s.blobs[0] = {1, 3, 0.03, 0.08, 0.10, 0.18, 0.05, 0.20};
  s.blobs[1] = {1, 1, 0.06, 0.14, 0.05, 0.10, 0.10, 0.25};
  s.blobs[2] = {1, 1, 0.05, 0.12, 0.06, 0.12, 0.10, 0.25};
  return s;
}

FluidSpec FluidSpec::easy() {
  FluidSpec s;
  s.blobs[0] = {1, 2, 0.07, 0.12, 0.14, 0.20, 0.20, 0.35};
  s.blobs[1] = {1, 1, 0.12, 0.18, 0.08, 0.11, 0.25, 0.40};
  s.blobs[2] = {1, 1, 0.10, 0.15, 0.10, 0.14, 0.25, 0.40};
  s.max_tilt_deg = 15.0;
  return s;
}

DepthWindow depth_window(FluidClass c) {
  switch (c) {
    case FluidClass::IRF: return {0.05, 0.70};
    case FluidClass::SRF: return {0.70, 1.0};
    case FluidClass::PED: return {1.0, 1e9};
    default: break;
  }
  throw ValidationError("no depth window for background");
}

namespace {

constexpr double kPi = std::numbers::pi;
// Half-thickness of the bright RPE band; SRF and PED keep clear of it.
constexpr double kRpeHalfBand = 1.5;
constexpr double kBandClearance = 2.0;

struct Anatomy {
  double ilm_phase, ilm_zphase, rpe_phase, rpe_zphase;
  double pit_x, pit_z;
};

struct Blob {
  FluidClass cls;
  double cx, cy, cz;
  double rx, ry, rz;
  double cos_t, sin_t;
};

double tissue(double y, double ilm, double rpe, double height) {
  if (y < ilm) return 0.04;
  if (std::abs(y - rpe) <= kRpeHalfBand) return 0.95;
  if (y > rpe) {
    const double below = y - rpe - kRpeHalfBand;
    const double span = std::max(1.0, 0.5 * (height - rpe));
    return 0.1 + 0.45 * std::exp(-below / span);
  }
  const double d = (y - ilm) / (rpe - ilm);
  if (d < 0.12) return 0.75;
  if (d < 0.30) return 0.50;
  if (d < 0.42) return 0.30;
  if (d < 0.55) return 0.45;
  if (d < 0.80) return 0.22;
  return 0.40;
}

bool in_window(FluidClass c, double y, double ilm, double rpe) {
  const double d = (y - ilm) / (rpe - ilm);
  const DepthWindow w = depth_window(c);
  if (!(d > w.lo && d < w.hi)) return false;
  if (c == FluidClass::SRF) return y <= rpe - kBandClearance;
  if (c == FluidClass::PED) return y >= rpe + kBandClearance;
  return true;
}

}  // namespace

PhantomVolume generate_volume(std::uint64_t seed, const DeviceProfile& profile,
                              const FluidSpec& spec) {
  const Dims dims = profile.dims();
  if (dims.width < 16 || dims.height < 32 || dims.n_bscans < 1)
    throw SpecError("phantom needs at least 16 columns, 32 rows and one B-scan");
  if (std::none_of(spec.present.begin(), spec.present.end(), [](bool b) { return b; }))
    throw SpecError("every phantom volume must contain at least one fluid class");
  if (spec.max_jitter < 0 || spec.max_jitter > int(dims.height) / 8)
    throw SpecError("jitter bound must lie in [0, height/8]");

  Rng rng = derive_rng(seed, Stream::Phantom);
  const double W = dims.width, H = dims.height, NB = dims.n_bscans;

  Anatomy an{};
  an.ilm_phase = rng.uniform(0, 2 * kPi);
  an.ilm_zphase = rng.uniform(0, 2 * kPi);
  an.rpe_phase = rng.uniform(0, 2 * kPi);
  an.rpe_zphase = rng.uniform(0, 2 * kPi);
  an.pit_x = rng.uniform(0.4, 0.6) * W;
  an.pit_z = rng.uniform(0.4, 0.6) * NB;

  // Surfaces vary slowly across B-scans (well under half a pixel per scan for
  // the smooth terms) so that axial jitter dominates inter-scan differences.
  const double zscale = 2 * kPi * 0.5 / std::max(NB, 8.0);
  std::vector<double> ilm(dims.width * dims.n_bscans), rpe(ilm.size());
  for (std::uint32_t z = 0; z < dims.n_bscans; ++z) {
    for (std::uint32_t x = 0; x < dims.width; ++x) {
      const double u = x / W;
      const double pit = std::exp(-std::pow((x - an.pit_x) / (0.08 * W), 2) / 2 -
                                  std::pow((z - an.pit_z) / std::max(2.0, 0.2 * NB), 2) / 2);
      const double y1 = H * (0.22 + 0.03 * std::sin(2 * kPi * u + an.ilm_phase) +
                             0.015 * std::sin(zscale * z + an.ilm_zphase) + 0.05 * pit);
      const double y2 = H * (0.66 + 0.025 * std::sin(2 * kPi * 0.8 * u + an.rpe_phase) +
                             0.01 * std::sin(zscale * z + an.rpe_zphase));
      ilm[z * dims.width + x] = y1;
      rpe[z * dims.width + x] = y2;
    }
  }
  auto surf = [&](const std::vector<double>& s, double x, double z) {
    const auto xi = std::clamp<long>(std::lround(x), 0, long(dims.width) - 1);
    const auto zi = std::clamp<long>(std::lround(z), 0, long(dims.n_bscans) - 1);
    return s[std::size_t(zi) * dims.width + std::size_t(xi)];
  };

  // Blob placement.
  std::vector<Blob> blobs;
  for (std::size_t ci = 0; ci < 3; ++ci) {
    if (!spec.present[ci]) continue;
    const FluidClass cls = kFluidClasses[ci];
    const BlobRange& br = spec.blobs[ci];
    if (br.min_count < 1 || br.max_count < br.min_count)
      throw SpecError("blob count range must satisfy 1 <= min <= max");
    const auto count = rng.uniform_int(br.min_count, br.max_count);
    for (std::int64_t k = 0; k < count; ++k) {
      Blob b{};
      b.cls = cls;
      b.rx = std::max(2.0, rng.uniform(br.min_rx, br.max_rx) * W);
      b.rz = std::max(0.75, rng.uniform(br.min_rz, br.max_rz) * NB);
      b.cx = rng.uniform(b.rx, W - 1 - b.rx);
      b.cz = NB <= 1 ? 0.0 : rng.uniform(0.15 * (NB - 1), 0.85 * (NB - 1));
      const double y1 = surf(ilm, b.cx, b.cz), y2 = surf(rpe, b.cx, b.cz);
      const double t = y2 - y1;
      b.ry = std::max(2.0, rng.uniform(br.min_ry, br.max_ry) * t);
      const double tilt = rng.uniform(-spec.max_tilt_deg, spec.max_tilt_deg) * kPi / 180.0;
      b.cos_t = std::cos(tilt);
      b.sin_t = std::sin(tilt);
      switch (cls) {
        case FluidClass::IRF: {
          const double lo = y1 + 0.12 * t + b.ry, hi = y1 + 0.62 * t - b.ry;
          if (lo > hi) throw SpecError("IRF blob does not fit inside the retina");
          b.cy = rng.uniform(lo, hi);
          break;
        }
        case FluidClass::SRF: {
          const double lo = y1 + 0.72 * t, hi = y2 - kBandClearance - 1.0;
          if (lo > hi) throw SpecError("SRF blob does not fit above the RPE");
          b.cy = rng.uniform(lo, hi);
          break;
        }
        case FluidClass::PED: {
          b.cy = y2 + kBandClearance + 0.6 * b.ry;
          if (b.cy + b.ry > H - 2 - spec.max_jitter)
            throw SpecError("PED blob does not fit below the RPE");
          break;
        }
        default: break;
      }
      blobs.push_back(b);
    }
  }

  const std::size_t plane = dims.bscan_size();
  std::vector<float> vox(dims.voxels());
  std::vector<std::uint8_t> lab(dims.voxels(), 0);
  for (std::uint32_t z = 0; z < dims.n_bscans; ++z) {
    for (std::uint32_t y = 0; y < dims.height; ++y) {
      for (std::uint32_t x = 0; x < dims.width; ++x) {
        const double y1 = ilm[z * dims.width + x], y2 = rpe[z * dims.width + x];
        double v = tissue(y, y1, y2, H);
        std::uint8_t label = 0;
        for (const Blob& b : blobs) {
          const double dx = x - b.cx, dy = y - b.cy, dz = z - b.cz;
          const double a = (dx * b.cos_t + dy * b.sin_t) / b.rx;
          const double c = (-dx * b.sin_t + dy * b.cos_t) / b.ry;
          const double q = a * a + c * c + (dz / b.rz) * (dz / b.rz);
          if (q > 1.0 || !in_window(b.cls, y, y1, y2)) continue;
          const double alpha = 0.75 + 0.25 * std::clamp((1.0 - q) / 0.4, 0.0, 1.0);
          v = v * (1 - alpha) + spec.fluid_intensity * alpha;
          label = static_cast<std::uint8_t>(b.cls);
          break;
        }
        const double speckle = 1.0 + profile.noise * (2.0 * rng.uniform() - 1.0);
        vox[z * plane + y * dims.width + x] = float(std::clamp(v * speckle, 0.0, 1.0));
        lab[z * plane + y * dims.width + x] = label;
      }
    }
  }

  for (std::size_t ci = 0; ci < 3; ++ci) {
    if (!spec.present[ci]) continue;
    const auto code = static_cast<std::uint8_t>(kFluidClasses[ci]);
    if (std::find(lab.begin(), lab.end(), code) == lab.end())
      throw SpecError("a requested fluid class produced no voxels");
  }

  // Axial jitter: content of B-scan z moves down by jitter[z] rows.
  std::vector<int> jitter(dims.n_bscans, 0);
  for (std::uint32_t z = 1; z < dims.n_bscans; ++z)
    jitter[z] = int(rng.uniform_int(-spec.max_jitter, spec.max_jitter));
  std::vector<float> jvox(vox.size());
  std::vector<std::uint8_t> jlab(lab.size(), 0);
  std::vector<float> jilm(ilm.size()), jrpe(rpe.size());
  for (std::uint32_t z = 0; z < dims.n_bscans; ++z) {
    const int j = jitter[z];
    for (std::uint32_t y = 0; y < dims.height; ++y) {
      const long src = long(y) - j;
      const long clamped = std::clamp<long>(src, 0, long(dims.height) - 1);
      for (std::uint32_t x = 0; x < dims.width; ++x) {
        jvox[z * plane + y * dims.width + x] = vox[z * plane + std::size_t(clamped) * dims.width + x];
        if (src == clamped) jlab[z * plane + y * dims.width + x] = lab[z * plane + std::size_t(src) * dims.width + x];
      }
    }
    for (std::uint32_t x = 0; x < dims.width; ++x) {
      jilm[z * dims.width + x] = float(ilm[z * dims.width + x] + j);
      jrpe[z * dims.width + x] = float(rpe[z * dims.width + x] + j);
    }
  }

  const Spacing sp = profile.spacing();
  return PhantomVolume{Volume(dims, sp, std::move(jvox)), LabelMask(dims, sp, std::move(jlab)),
                       SurfacePair(dims, std::move(jilm), std::move(jrpe)), std::move(jitter)};
}

std::vector<std::array<bool, 3>> presence_table(std::uint64_t seed, int n_volumes) {
  std::vector<std::array<bool, 3>> subsets;
  for (int bits = 1; bits < 8; ++bits)
    subsets.push_back({(bits & 1) != 0, (bits & 2) != 0, (bits & 4) != 0});
  Rng rng = derive_rng(seed, Stream::Phantom, 0xFFFFFF);
  std::vector<std::array<bool, 3>> out;
  while (int(out.size()) < n_volumes) {
    auto round = subsets;
    rng.shuffle(round.begin(), round.end());
    for (const auto& s : round)
      if (int(out.size()) < n_volumes) out.push_back(s);
  }
  return out;
}

DatasetManifest generate_dataset(std::uint64_t seed, const DeviceProfile& profile,
                                 const FluidSpec& spec, int n_volumes,
                                 const std::filesystem::path& out_dir) {
  if (n_volumes < 2) throw ValidationError("a dataset needs at least 2 volumes");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir))
    throw IoError("cannot create dataset directory '" + out_dir.string() + "'");

  DatasetManifest manifest;
  manifest.seed = seed;
  manifest.base_dir = out_dir;
  const auto presence = presence_table(seed, n_volumes);
  std::ostringstream table;
  table << "id,IRF,SRF,PED\n";
  for (int i = 0; i < n_volumes; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "vol_%03d", i);
    const std::string id = buf;
    FluidSpec vs = spec;
    vs.present = presence[std::size_t(i)];
    const PhantomVolume pv = generate_volume(derive_seed(seed, Stream::Phantom, std::uint64_t(i) + 1), profile, vs);

    ManifestEntry e;
    e.id = id;
    e.volume = id + ".octv";
    e.mask = id + ".octm";
    e.profile = profile.id;
    e.truth_surfaces = id + ".truth.octs";
    e.jitter = id + ".jitter.csv";
    io::write_volume(out_dir / e.volume, pv.volume);
    io::write_mask(out_dir / e.mask, pv.mask);
    io::write_surfaces(out_dir / *e.truth_surfaces, pv.surfaces);
    std::ofstream jf(out_dir / *e.jitter);
    if (!jf) throw IoError("cannot write jitter table for " + id);
    jf << "bscan,jitter\n";
    for (std::size_t z = 0; z < pv.jitter.size(); ++z) jf << z << "," << pv.jitter[z] << "\n";
    table << id << "," << int(vs.present[0]) << "," << int(vs.present[1]) << ","
          << int(vs.present[2]) << "\n";
    manifest.entries.push_back(std::move(e));
  }
  std::ofstream pf(out_dir / "presence.csv");
  if (!pf) throw IoError("cannot write presence table");
  pf << table.str();
  manifest.write(out_dir / "manifest.txt");
  return manifest;
}

std::vector<int> read_jitter(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open jitter table '" + path.string() + "'");
  std::string line;
  std::getline(in, line);
  std::vector<int> out;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw FormatError("bad jitter row '" + line + "'");
    out.push_back(std::stoi(line.substr(comma + 1)));
  }
  return out;
}

}  // namespace octfluid::phantom

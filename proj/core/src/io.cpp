#include "octfluid/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace octfluid {
namespace io {

namespace {

constexpr char kVolumeMagic[4] = {'O', 'C', 'T', 'V'};
constexpr char kMaskMagic[4] = {'O', 'C', 'T', 'M'};
constexpr char kSurfaceMagic[4] = {'O', 'C', 'T', 'S'};

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

class Writer {
 public:
  explicit Writer(const std::filesystem::path& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open '" + path.string() + "' for writing");
  }
  void bytes(const void* p, std::size_t n) { out_.write(static_cast<const char*>(p), std::streamsize(n)); }
  template <class T>
  void pod(T v) { bytes(&v, sizeof(T)); }
  void finish() {
    out_.flush();
    if (!out_) throw IoError("write to '" + path_.string() + "' failed");
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open '" + path.string() + "'");
  }
  void bytes(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), std::streamsize(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw IoError("truncated file '" + path_.string() + "'");
  }
  template <class T>
  T pod() {
    T v{};
    bytes(&v, sizeof(T));
    return v;
  }
  void magic(const char (&expected)[4]) {
    char m[4] = {};
    in_.read(m, 4);
    if (in_.gcount() != 4 || std::memcmp(m, expected, 4) != 0)
      throw FormatError("'" + path_.string() + "' does not start with magic '" +
                        std::string(expected, 4) + "'");
  }
  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof())
      throw FormatError("trailing bytes in '" + path_.string() + "'");
  }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
};

void write_header(Writer& w, const char (&magic)[4], const Dims& d, const Spacing& s) {
  w.bytes(magic, 4);
  w.pod<std::uint32_t>(d.width);
  w.pod<std::uint32_t>(d.height);
  w.pod<std::uint32_t>(d.n_bscans);
  w.pod<float>(s.dx);
  w.pod<float>(s.dy);
  w.pod<float>(s.dz);
}

std::pair<Dims, Spacing> read_header(Reader& r, const char (&magic)[4]) {
  r.magic(magic);
  Dims d;
  d.width = r.pod<std::uint32_t>();
  d.height = r.pod<std::uint32_t>();
  d.n_bscans = r.pod<std::uint32_t>();
  Spacing s;
  s.dx = r.pod<float>();
  s.dy = r.pod<float>();
  s.dz = r.pod<float>();
  if (d.width == 0 || d.height == 0 || d.n_bscans == 0)
    throw DimensionError("container header has zero dimension: " + to_string(d));
  // Guard against absurd headers before allocating.
  if (d.voxels() > (std::size_t{1} << 34)) throw FormatError("container header too large");
  return {d, s};
}

}  // namespace

void write_volume(const std::filesystem::path& path, const Volume& volume) {
  Writer w(path);
  write_header(w, kVolumeMagic, volume.dims(), volume.spacing());
  w.bytes(volume.voxels().data(), volume.voxels().size() * sizeof(float));
  w.finish();
}

Volume read_volume(const std::filesystem::path& path) {
  Reader r(path);
  auto [d, s] = read_header(r, kVolumeMagic);
  std::vector<float> voxels(d.voxels());
  r.bytes(voxels.data(), voxels.size() * sizeof(float));
  r.expect_end();
  return Volume(d, s, std::move(voxels));
}

void write_mask(const std::filesystem::path& path, const LabelMask& mask) {
  Writer w(path);
  write_header(w, kMaskMagic, mask.dims(), mask.spacing());
  w.bytes(mask.labels().data(), mask.labels().size());
  w.finish();
}

LabelMask read_mask(const std::filesystem::path& path) {
  Reader r(path);
  auto [d, s] = read_header(r, kMaskMagic);
  std::vector<std::uint8_t> labels(d.voxels());
  r.bytes(labels.data(), labels.size());
  r.expect_end();
  return LabelMask(d, s, std::move(labels));
}

LabelMask read_mask(const std::filesystem::path& path, const Dims& expected) {
  LabelMask m = read_mask(path);
  if (!(m.dims() == expected))
    throw DimensionError("mask '" + path.string() + "' has dims " + to_string(m.dims()) +
                         ", expected " + to_string(expected));
  return m;
}

void write_surfaces(const std::filesystem::path& path, const SurfacePair& surfaces) {
  Writer w(path);
  const Dims& d = surfaces.dims();
  w.bytes(kSurfaceMagic, 4);
  w.pod<std::uint32_t>(d.width);
  w.pod<std::uint32_t>(d.height);
  w.pod<std::uint32_t>(d.n_bscans);
  w.bytes(surfaces.ilm().data(), surfaces.ilm().size() * sizeof(float));
  w.bytes(surfaces.rpe().data(), surfaces.rpe().size() * sizeof(float));
  w.finish();
}

SurfacePair read_surfaces(const std::filesystem::path& path) {
  Reader r(path);
  r.magic(kSurfaceMagic);
  Dims d;
  d.width = r.pod<std::uint32_t>();
  d.height = r.pod<std::uint32_t>();
  d.n_bscans = r.pod<std::uint32_t>();
  if (d.width == 0 || d.height == 0 || d.n_bscans == 0)
    throw DimensionError("surface header has zero dimension");
  const std::size_t n = std::size_t(d.width) * d.n_bscans;
  std::vector<float> ilm(n), rpe(n);
  r.bytes(ilm.data(), n * sizeof(float));
  r.bytes(rpe.data(), n * sizeof(float));
  r.expect_end();
  return SurfacePair(d, std::move(ilm), std::move(rpe));
}

Dims read_dims(const std::filesystem::path& path) {
  Reader r(path);
  char m[4];
  r.bytes(m, 4);
  if (std::memcmp(m, kVolumeMagic, 4) != 0 && std::memcmp(m, kMaskMagic, 4) != 0)
    throw FormatError("'" + path.string() + "' is not a volume or mask container");
  Dims d;
  d.width = r.pod<std::uint32_t>();
  d.height = r.pod<std::uint32_t>();
  d.n_bscans = r.pod<std::uint32_t>();
  return d;
}

}  // namespace io

const ManifestEntry& DatasetManifest::find(const std::string& id) const {
  for (const auto& e : entries)
    if (e.id == id) return e;
  throw ValidationError("manifest has no entry '" + id + "'");
}

void DatasetManifest::validate() const {
  for (const auto& e : entries) {
    for (const auto& p : {resolve(e.volume), resolve(e.mask)})
      if (!std::filesystem::exists(p)) throw IoError("missing file '" + p.string() + "'");
    const Dims vd = io::read_dims(resolve(e.volume));
    const Dims md = io::read_dims(resolve(e.mask));
    if (!(vd == md))
      throw DimensionError("entry '" + e.id + "': mask dims " + to_string(md) +
                           " differ from volume dims " + to_string(vd));
  }
}

std::string DatasetManifest::to_text() const {
  std::ostringstream os;
  os << "# octfluid dataset manifest v1\n";
  os << "seed=" << seed << "\n";
  for (const auto& e : entries) {
    os << "entry id=" << e.id << " volume=" << e.volume.generic_string()
       << " mask=" << e.mask.generic_string() << " profile=" << e.profile;
    if (e.truth_surfaces) os << " surfaces=" << e.truth_surfaces->generic_string();
    if (e.jitter) os << " jitter=" << e.jitter->generic_string();
    os << "\n";
  }
  return os.str();
}

void DatasetManifest::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest '" + path.string() + "'");
  out << to_text();
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

DatasetManifest DatasetManifest::read(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  DatasetManifest m;
  m.base_dir = path.parent_path();
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    auto fail = [&](const std::string& what) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " + what);
    };
    if (line.rfind("seed=", 0) == 0) {
      try {
        m.seed = std::stoull(line.substr(5));
      } catch (const std::exception&) {
        fail("bad seed");
      }
      continue;
    }
    std::istringstream ls(line);
    std::string head;
    ls >> head;
    if (head != "entry") fail("unrecognized line");
    ManifestEntry e;
    std::string tok;
    while (ls >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) fail("expected key=value, got '" + tok + "'");
      const std::string key = tok.substr(0, eq);
      const std::string val = tok.substr(eq + 1);
      if (key == "id") e.id = val;
      else if (key == "volume") e.volume = val;
      else if (key == "mask") e.mask = val;
      else if (key == "profile") e.profile = val;
      else if (key == "surfaces") e.truth_surfaces = val;
      else if (key == "jitter") e.jitter = val;
      else fail("unknown entry key '" + key + "'");
    }
    if (e.id.empty() || e.volume.empty() || e.mask.empty()) fail("entry needs id, volume and mask");
    m.entries.push_back(std::move(e));
  }
  return m;
}

}  // namespace octfluid

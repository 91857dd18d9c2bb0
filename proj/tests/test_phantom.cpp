#include <fstream>
#include <set>

#include "doctest.h"
#include "octfluid/phantom.hpp"
#include "support.hpp"

using namespace octfluid;
using phantom::DeviceProfile;
using phantom::FluidSpec;

TEST_CASE("named profiles carry the three device B-scan counts") {
  CHECK(DeviceProfile::named("cirrus").n_bscans == 128);
  CHECK(DeviceProfile::named("spectralis").n_bscans == 49);
  CHECK(DeviceProfile::named("topcon").n_bscans == 128);
  CHECK_THROWS_AS(DeviceProfile::named("oct2000"), ValidationError);
}

TEST_CASE("same seed gives bit-identical phantoms") {
  const auto p = testsupport::small_profile(48, 6);
  const auto a = phantom::generate_volume(9, p, FluidSpec::standard());
  const auto b = phantom::generate_volume(9, p, FluidSpec::standard());
  CHECK(a.volume == b.volume);
  CHECK(a.mask == b.mask);
  CHECK(a.surfaces == b.surfaces);
  CHECK(a.jitter == b.jitter);
  const auto c = phantom::generate_volume(10, p, FluidSpec::standard());
  CHECK_FALSE(a.volume == c.volume);
}

TEST_CASE("every fluid voxel lies in its class depth window (20 seeds)") {
  const auto p = testsupport::small_profile(64, 8);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (const FluidSpec& spec : {FluidSpec::standard(), FluidSpec::easy()}) {
      const auto ph = phantom::generate_volume(seed, p, spec);
      const auto& d = ph.mask.dims();
      std::size_t fluid = 0;
      for (std::size_t z = 0; z < d.n_bscans; ++z)
        for (std::size_t y = 0; y < d.height; ++y)
          for (std::size_t x = 0; x < d.width; ++x) {
            const auto c = static_cast<FluidClass>(ph.mask.at(x, y, z));
            if (!is_fluid(c)) continue;
            ++fluid;
            const double y1 = ph.surfaces.ilm(x, z), y2 = ph.surfaces.rpe(x, z);
            const double depth = (double(y) - y1) / (y2 - y1);
            const auto w = phantom::depth_window(c);
            REQUIRE(depth > w.lo);
            REQUIRE(depth < w.hi);
          }
      CHECK(fluid > 0);
    }
  }
}

TEST_CASE("intensities stay in [0,1] and jitter stays within its bound") {
  const auto p = testsupport::small_profile(64, 12);
  const FluidSpec spec = FluidSpec::standard();
  const auto ph = phantom::generate_volume(4, p, spec);
  for (float v : ph.volume.voxels()) {
    REQUIRE(v >= 0.0F);
    REQUIRE(v <= 1.0F);
  }
  REQUIRE(ph.jitter.size() == 12);
  CHECK(ph.jitter[0] == 0);
  for (int j : ph.jitter) CHECK(std::abs(j) <= spec.max_jitter);
}

TEST_CASE("generated volumes honour the presence flags") {
  const auto p = testsupport::small_profile(64, 8);
  FluidSpec spec = FluidSpec::easy();
  spec.present = {false, true, false};
  const auto ph = phantom::generate_volume(2, p, spec);
  CHECK_FALSE(ph.mask.contains(FluidClass::IRF));
  CHECK(ph.mask.contains(FluidClass::SRF));
  CHECK_FALSE(ph.mask.contains(FluidClass::PED));
}

TEST_CASE("blobs too large for the retina are rejected") {
  const auto p = testsupport::small_profile(16, 2);
  FluidSpec spec = FluidSpec::standard();
  spec.present = {true, false, false};
  spec.blobs[0].min_rx = spec.blobs[0].max_rx = 3.0;
  spec.blobs[0].min_ry = spec.blobs[0].max_ry = 5.0;
  CHECK_THROWS_AS(phantom::generate_volume(1, p, spec), SpecError);
}

TEST_CASE("presence table: every volume has fluid and every class is absent somewhere") {
  const auto t = phantom::presence_table(7, 12);
  REQUIRE(t.size() == 12);
  std::set<std::array<bool, 3>> distinct(t.begin(), t.end());
  CHECK(distinct.size() == 7);
  std::array<int, 3> absent{};
  for (const auto& row : t) {
    CHECK((row[0] || row[1] || row[2]));
    for (int k = 0; k < 3; ++k) absent[std::size_t(k)] += row[std::size_t(k)] ? 0 : 1;
  }
  for (int a : absent) CHECK(a > 0);
  CHECK(phantom::presence_table(7, 12) == t);
}

TEST_CASE("dataset generation writes n volumes, a manifest and matching presence") {
  const auto dir = testsupport::scratch_dir("phantom_dataset");
  const auto p = testsupport::small_profile(64, 4);
  const auto m = phantom::generate_dataset(7, p, FluidSpec::easy(), 5, dir);
  REQUIRE(m.entries.size() == 5);
  CHECK_NOTHROW(m.validate());
  const auto reread = DatasetManifest::read(dir / "manifest.txt");
  CHECK(reread.entries == m.entries);
  CHECK(reread.seed == 7);
  const auto table = phantom::presence_table(7, 5);
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const LabelMask mask = io::read_mask(m.resolve(m.entries[i].mask));
    for (std::size_t k = 0; k < 3; ++k) CHECK(mask.contains(kFluidClasses[k]) == table[i][k]);
    REQUIRE(m.entries[i].jitter);
    CHECK(phantom::read_jitter(m.resolve(*m.entries[i].jitter)).size() == 4);
  }
  // Same seed, same manifest text.
  const auto dir2 = testsupport::scratch_dir("phantom_dataset2");
  CHECK(phantom::generate_dataset(7, p, FluidSpec::easy(), 5, dir2).to_text() == m.to_text());
}

TEST_CASE("unwritable output directory is an I/O error") {
  const auto dir = testsupport::scratch_dir("phantom_unwritable");
  std::ofstream(dir / "file") << "x";
  CHECK_THROWS_AS(phantom::generate_dataset(1, testsupport::small_profile(16, 2), FluidSpec::easy(), 2,
                                            dir / "file" / "sub"),
                  IoError);
}

#include "doctest.h"
#include "octfluid/distmap.hpp"
#include "octfluid/phantom.hpp"
#include "support.hpp"

using namespace octfluid;

TEST_CASE("distance map is 0 on the ILM, 1 on the RPE and 0.5 midway") {
  const std::vector<float> ilm = {2, 4, 6}, rpe = {10, 12, 18};
  const auto m = distmap::relative_distance_map(ilm, rpe, 3, 20);
  CHECK(m.at(0, 2) == 0.0);
  CHECK(m.at(1, 4) == 0.0);
  CHECK(m.at(0, 10) == 1.0);
  CHECK(m.at(2, 18) == 1.0);
  CHECK(m.at(0, 6) == 0.5);
  CHECK(m.at(2, 12) == 0.5);
  CHECK(m.at(0, 0) < 0.0);
  CHECK(m.at(0, 19) > 1.0);
}

TEST_CASE("distance map is strictly increasing down every column") {
  const std::vector<float> ilm = {1.5F, 3.25F}, rpe = {7.0F, 9.5F};
  const auto m = distmap::relative_distance_map(ilm, rpe, 2, 16);
  for (std::size_t x = 0; x < 2; ++x)
    for (std::size_t y = 1; y < 16; ++y) CHECK(m.at(x, y) > m.at(x, y - 1));
}

TEST_CASE("distance map is translation equivariant") {
  const std::vector<float> ilm = {1, 2}, rpe = {5, 7};
  const std::vector<float> ilm3 = {4, 5}, rpe3 = {8, 10};
  const auto a = distmap::relative_distance_map(ilm, rpe, 2, 20);
  const auto b = distmap::relative_distance_map(ilm3, rpe3, 2, 20);
  for (std::size_t x = 0; x < 2; ++x)
    for (std::size_t y = 0; y + 3 < 20; ++y) CHECK(b.at(x, y + 3) == doctest::Approx(a.at(x, y)).epsilon(1e-15));
}

TEST_CASE("verbatim signed form is the negated normalized span") {
  const std::vector<float> ilm = {3}, rpe = {9};
  const auto n = distmap::relative_distance_map(ilm, rpe, 1, 12);
  const auto s = distmap::relative_distance_map(ilm, rpe, 1, 12, distmap::Form::SignedVerbatim);
  for (std::size_t y = 0; y < 12; ++y) CHECK(s.at(0, y) == -n.at(0, y));
  CHECK(s.at(0, 9) == -1.0);
}

TEST_CASE("phantom IRF sits inside (0,1) and PED below 1 on the true-surface map") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto ph = phantom::generate_volume(seed, testsupport::small_profile(64, 8), phantom::FluidSpec::standard());
    for (std::size_t z = 0; z < 8; ++z) {
      const auto m = distmap::relative_distance_map(ph.surfaces, z);
      for (std::size_t y = 0; y < 64; ++y)
        for (std::size_t x = 0; x < 64; ++x) {
          const auto c = static_cast<FluidClass>(ph.mask.at(x, y, z));
          REQUIRE(std::isfinite(m.at(x, y)));
          if (c == FluidClass::IRF) REQUIRE((m.at(x, y) > 0.0 && m.at(x, y) < 1.0));
          if (c == FluidClass::PED) REQUIRE(m.at(x, y) > 1.0);
        }
    }
  }
}

TEST_CASE("heatmap dump writes a binary PPM of the map size") {
  const auto dir = testsupport::scratch_dir("distmap_ppm");
  const std::vector<float> ilm = {1, 1, 1, 1}, rpe = {5, 5, 5, 5};
  const auto m = distmap::relative_distance_map(ilm, rpe, 4, 8);
  distmap::write_heatmap_ppm(dir / "h.ppm", m);
  CHECK(std::filesystem::file_size(dir / "h.ppm") == std::string("P6\n4 8\n255\n").size() + 4 * 8 * 3);
}

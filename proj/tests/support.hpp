#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "octfluid/phantom.hpp"

namespace testsupport {

/// Fresh empty directory under the system temp dir, unique per name.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("octfluid_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Small spectralis-like profile used throughout the tests.
inline octfluid::phantom::DeviceProfile small_profile(std::uint32_t size = 64, std::uint32_t n_bscans = 16) {
  auto p = octfluid::phantom::DeviceProfile::named("spectralis");
  p.width = size;
  p.height = size;
  p.n_bscans = n_bscans;
  return p;
}

}  // namespace testsupport

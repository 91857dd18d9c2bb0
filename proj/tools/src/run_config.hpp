#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "octfluid/evaluate.hpp"
#include "octfluid/phantom.hpp"

namespace octfluid::cli {

/// Everything a command can be configured with. Keys are dotted names such
/// as `train.lr`; see RunConfig::keys() for the full table.
struct Settings {
  evaluate::EvalConfig eval;
  std::string preset = "easy";  // phantom fluid preset: easy | standard
  int width = 64;
  int height = 64;
  int n_bscans = 0;  // 0 = the profile's own count
  double noise = 0.3;
};

struct KeyInfo {
  std::string name;
  std::string group;  // phantom, preprocess, net, train, forest, eval, run
  std::string help;
  std::function<void(Settings&, const std::string&)> set;
  std::function<std::string(const Settings&)> get;
};

class RunConfig {
 public:
  static const std::vector<KeyInfo>& keys();

  /// Applies one `key=value` assignment; unknown keys and malformed values
  /// throw ValidationError.
  void assign(const std::string& assignment);
  void set(const std::string& key, const std::string& value);
  /// Reads `key = value` lines; `#` starts a comment.
  void load(const std::filesystem::path& path);

  Settings& settings() { return settings_; }
  const Settings& settings() const { return settings_; }
  /// Current value of every key, in table order.
  std::vector<std::pair<std::string, std::string>> snapshot() const;

  /// Help text listing the keys of the given groups with their defaults.
  static std::string describe(const std::vector<std::string>& groups);

 private:
  Settings settings_;
};

phantom::FluidSpec fluid_preset(const std::string& name);

}  // namespace octfluid::cli

#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "octfluid/autograd.hpp"

namespace octfluid::unet {

/// U-Net shape: `depth` pooled contracting blocks whose channels double from
/// base_channels, a bottleneck block, then `depth` expansive blocks.
struct NetConfig {
  int depth = 4;
  int base_channels = 16;
  int in_channels = 2;   // raw B-scan + relative distance map
  int out_channels = 4;  // background, IRF, SRF, PED
  double keep_prob = 0.5;

  void validate() const;
  bool operator==(const NetConfig&) const = default;
};

class Network {
 public:
  static Network build(const NetConfig& config, std::uint64_t seed);

  const NetConfig& config() const { return config_; }
  std::vector<autograd::Parameter>& parameters() { return params_; }
  const std::vector<autograd::Parameter>& parameters() const { return params_; }
  std::size_t parameter_count() const;
  /// Output channels of each contracting block (excluding the bottleneck).
  std::vector<int> channel_ladder() const;
  /// Inputs are padded to multiples of this (2^depth).
  int size_multiple() const { return 1 << config_.depth; }
  void zero_grad();

  /// Records a forward pass on `tape` and returns per-pixel class
  /// probabilities with the input's spatial size. input: (N, in_channels, H, W).
  autograd::Var forward(autograd::Tape& tape, const autograd::Tensor& input, autograd::Mode mode,
                        Rng& dropout_rng);
  /// Test-mode probabilities, no gradient bookkeeping kept.
  autograd::Tensor predict(const autograd::Tensor& input);

  /// Checkpoint: "OCTW", u32 version, config block, then named f64 tensors.
  void save(const std::filesystem::path& path) const;
  static Network load(const std::filesystem::path& path);
  /// As load(), but throws CheckpointError unless the stored config matches.
  static Network load(const std::filesystem::path& path, const NetConfig& expected);

 private:
  NetConfig config_;
  std::vector<autograd::Parameter> params_;
};

/// Per-pixel argmax over channels, ties to the lowest class code. Output is
/// indexed (n, y, x).
std::vector<std::uint8_t> predict_labels(const autograd::Tensor& probabilities);

/// Mirror-pads the bottom/right edges up to the next multiple.
autograd::Tensor reflect_pad(const autograd::Tensor& input, int multiple);

}  // namespace octfluid::unet

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "octfluid/unet.hpp"

namespace octfluid::trainer {

/// One training example: a 2-channel (raw B-scan, relative distance map)
/// image and its ground-truth labels, both row-major H x W.
struct Sample {
  int width = 0;
  int height = 0;
  std::vector<double> image;         // channel-major, 2 * H * W
  std::vector<std::uint8_t> labels;  // H * W
  std::string source;                // e.g. "vol_003:7"

  bool operator==(const Sample&) const = default;
};

enum class Optimizer { Adam, Sgd };

enum class LossMaskMode {
  // Ground-truth fluid pixels plus pixels falsely predicted as fluid.
  HardPixel,
  // Only pixels predicted as fluid (true and false positives).
  PredictedOnly,
  // Every pixel (plain cross-entropy; for ablations).
  AllPixels,
};

struct TrainConfig {
  double learning_rate = 1e-4;
  int epochs = 10;
  int max_steps = 0;  // > 0 caps the number of optimizer steps
  int batch_size = 4;
  bool flip = true;
  bool rotate = true;
  bool zoom = true;
  double max_rotation_deg = 25.0;
  double zoom_min = 0.5;
  double zoom_max = 1.5;
  Optimizer optimizer = Optimizer::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  LossMaskMode loss_mask = LossMaskMode::HardPixel;
  int dense_warmup_steps = 0;  // leading steps trained on every pixel before loss_mask applies
  std::uint64_t seed = 0;

  void validate() const;
};

/// A concrete draw of the three augmentations.
struct Transform {
  bool flip = false;
  double angle_deg = 0.0;
  double scale = 1.0;
};

/// Draws a transform: each enabled augmentation is applied on an independent
/// fair coin flip.
Transform draw_transform(const TrainConfig& config, Rng& rng);
/// Bilinear resampling of the image channels with edge replication; nearest
/// neighbour for labels with background outside the frame.
Sample apply_transform(const Sample& sample, const Transform& transform);
Sample flip_horizontal(const Sample& sample);
Sample augment(const Sample& sample, const TrainConfig& config, Rng& rng);

/// Pixels that enter the loss. Falls back to every pixel when the selection
/// would be empty.
std::vector<std::uint8_t> loss_mask(std::span<const std::uint8_t> predicted,
                                    std::span<const std::uint8_t> truth,
                                    LossMaskMode mode = LossMaskMode::HardPixel);

/// Stacks samples into an (N, 2, H, W) tensor plus N*H*W labels.
autograd::Tensor stack_images(std::span<const Sample* const> batch);
std::vector<std::uint8_t> stack_labels(std::span<const Sample* const> batch);

/// Masked cross-entropy of a batch in Train mode with the dropout stream of
/// the given step; no parameter update.
double batch_loss(unet::Network& net, std::span<const Sample* const> batch,
                  const TrainConfig& config, std::int64_t step);

class Trainer {
 public:
  Trainer(unet::Network& net, TrainConfig config);

  /// One optimizer step on an (already augmented) batch; returns the loss
  /// measured before the update.
  double step(std::span<const Sample* const> batch);
  std::int64_t steps_taken() const { return step_; }

 private:
  unet::Network& net_;
  TrainConfig config_;
  std::int64_t step_ = 0;
  std::vector<autograd::Tensor> m_, v_;
};

struct TrainResult {
  std::vector<double> step_losses;
  std::vector<double> epoch_losses;
};

using ProgressFn = std::function<void(std::int64_t step, double loss)>;

/// Epoch loop: seeded shuffle, batching, augmentation, optimizer steps.
/// Throws DataError when no sample contains fluid.
TrainResult train(unet::Network& net, std::span<const Sample> samples, const TrainConfig& config,
                  const ProgressFn& progress = {});

/// Pooled multi-class fluid Dice of test-mode predictions on the samples.
double fluid_dice(unet::Network& net, std::span<const Sample> samples);

void write_loss_csv(const std::filesystem::path& path, std::span<const double> step_losses);

}  // namespace octfluid::trainer

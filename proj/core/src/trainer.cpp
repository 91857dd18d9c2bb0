#include "octfluid/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

namespace octfluid::trainer {

using autograd::Mode;
using autograd::Shape;
using autograd::Tape;
using autograd::Tensor;

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (epochs < 1 && max_steps < 1) throw ValidationError("need epochs >= 1 or max_steps >= 1");
  if (max_rotation_deg < 0.0 || max_rotation_deg > 25.0)
    throw ValidationError("rotation range must lie within [-25, 25] degrees");
  if (!(zoom_min > 0.0 && zoom_min <= zoom_max)) throw ValidationError("zoom range must satisfy 0 < min <= max");
  if (dense_warmup_steps < 0) throw ValidationError("dense_warmup_steps must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0))
    throw ValidationError("invalid Adam hyperparameters");
}

Transform draw_transform(const TrainConfig& config, Rng& rng) {
  Transform t;
  // Draw every coin and value unconditionally so toggling one augmentation
  // does not shift the stream seen by the others.
  const bool do_flip = rng.bernoulli(0.5);
  const bool do_rot = rng.bernoulli(0.5);
  const double angle = rng.uniform(-config.max_rotation_deg, config.max_rotation_deg);
  const bool do_zoom = rng.bernoulli(0.5);
  const double scale = rng.uniform(config.zoom_min, config.zoom_max);
  if (config.flip) t.flip = do_flip;
  if (config.rotate && do_rot) t.angle_deg = angle;
  if (config.zoom && do_zoom) t.scale = scale;
  return t;
}

Sample flip_horizontal(const Sample& s) {
  Sample out = s;
  const int w = s.width, h = s.height;
  const std::size_t plane = std::size_t(w) * h;
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        out.image[c * plane + std::size_t(y) * w + x] = s.image[c * plane + std::size_t(y) * w + (w - 1 - x)];
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out.labels[std::size_t(y) * w + x] = s.labels[std::size_t(y) * w + (w - 1 - x)];
  return out;
}

Sample apply_transform(const Sample& s, const Transform& t) {
  if (t.angle_deg == 0.0 && t.scale == 1.0) return t.flip ? flip_horizontal(s) : s;
  const int w = s.width, h = s.height;
  const std::size_t plane = std::size_t(w) * h;
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  const double th = t.angle_deg * std::numbers::pi / 180.0;
  const double c = std::cos(th), sn = std::sin(th);
  Sample out = s;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Output = flip(rotate(zoom(input))); walk the inverse chain.
      double ox = t.flip ? (w - 1 - x) : x;
      const double dx = ox - cx, dy = y - cy;
      const double sx = cx + (c * dx + sn * dy) / t.scale;
      const double sy = cy + (-sn * dx + c * dy) / t.scale;

      const double fx = std::clamp(sx, 0.0, double(w - 1)), fy = std::clamp(sy, 0.0, double(h - 1));
      const int x0 = std::min(int(fx), w - 1), y0 = std::min(int(fy), h - 1);
      const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
      const double ax = fx - x0, ay = fy - y0;
      for (int ch = 0; ch < 2; ++ch) {
        const double* src = s.image.data() + ch * plane;
        const double v = (1 - ay) * ((1 - ax) * src[std::size_t(y0) * w + x0] + ax * src[std::size_t(y0) * w + x1]) +
                         ay * ((1 - ax) * src[std::size_t(y1) * w + x0] + ax * src[std::size_t(y1) * w + x1]);
        out.image[ch * plane + std::size_t(y) * w + x] = v;
      }
      const long nx = std::lround(sx), ny = std::lround(sy);
      out.labels[std::size_t(y) * w + x] =
          (nx < 0 || ny < 0 || nx >= w || ny >= h) ? 0 : s.labels[std::size_t(ny) * w + std::size_t(nx)];
    }
  }
  return out;
}

Sample augment(const Sample& sample, const TrainConfig& config, Rng& rng) {
  return apply_transform(sample, draw_transform(config, rng));
}

std::vector<std::uint8_t> loss_mask(std::span<const std::uint8_t> predicted, std::span<const std::uint8_t> truth,
                                    LossMaskMode mode) {
  if (predicted.size() != truth.size()) throw DimensionError("loss_mask: prediction and truth sizes differ");
  std::vector<std::uint8_t> mask(truth.size(), 0);
  bool any = false;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool gt_fluid = truth[i] != 0;
    const bool pred_fluid = predicted[i] != 0;
    bool sel = true;
    if (mode == LossMaskMode::HardPixel) sel = gt_fluid || pred_fluid;
    else if (mode == LossMaskMode::PredictedOnly) sel = pred_fluid;
    mask[i] = sel ? 1 : 0;
    any = any || sel;
  }
  if (!any) std::fill(mask.begin(), mask.end(), 1);
  return mask;
}

Tensor stack_images(std::span<const Sample* const> batch) {
  if (batch.empty()) throw ContractError("empty batch");
  const int w = batch[0]->width, h = batch[0]->height;
  Tensor x(Shape{int(batch.size()), 2, h, w});
  for (std::size_t n = 0; n < batch.size(); ++n) {
    if (batch[n]->width != w || batch[n]->height != h) throw ShapeError("batch members differ in size");
    std::copy(batch[n]->image.begin(), batch[n]->image.end(), x.data() + n * 2 * std::size_t(w) * h);
  }
  return x;
}

std::vector<std::uint8_t> stack_labels(std::span<const Sample* const> batch) {
  std::vector<std::uint8_t> out;
  for (const Sample* s : batch) out.insert(out.end(), s->labels.begin(), s->labels.end());
  return out;
}

namespace {

struct LossGraph {
  Tape tape;
  autograd::Var loss;
};

void record_loss(LossGraph& g, unet::Network& net, std::span<const Sample* const> batch, const TrainConfig& config,
                 std::int64_t step) {
  Rng drop = derive_rng(config.seed, Stream::Dropout, std::uint64_t(step));
  const Tensor x = stack_images(batch);
  const auto labels = stack_labels(batch);
  const autograd::Var probs = net.forward(g.tape, x, Mode::Train, drop);
  const auto predicted = unet::predict_labels(g.tape.value(probs));
  const auto mode = step < config.dense_warmup_steps ? LossMaskMode::AllPixels : config.loss_mask;
  const auto mask = loss_mask(predicted, labels, mode);
  g.loss = autograd::masked_cross_entropy(g.tape, probs, labels, mask);
}

}  // namespace

double batch_loss(unet::Network& net, std::span<const Sample* const> batch, const TrainConfig& config,
                  std::int64_t step) {
  LossGraph g;
  record_loss(g, net, batch, config, step);
  return g.tape.value(g.loss)[0];
}

Trainer::Trainer(unet::Network& net, TrainConfig config) : net_(net), config_(config) {
  config_.validate();
  for (const auto& p : net_.parameters()) {
    m_.emplace_back(p.value.shape());
    v_.emplace_back(p.value.shape());
  }
}

double Trainer::step(std::span<const Sample* const> batch) {
  LossGraph g;
  record_loss(g, net_, batch, config_, step_);
  net_.zero_grad();
  g.tape.backward(g.loss);
  const double loss = g.tape.value(g.loss)[0];
  ++step_;

  auto& params = net_.parameters();
  const double lr = config_.learning_rate;
  if (config_.optimizer == Optimizer::Sgd) {
    for (auto& p : params)
      for (std::size_t i = 0; i < p.value.size(); ++i) p.value[i] -= lr * p.grad[i];
    return loss;
  }
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, double(step_));
  const double c2 = 1.0 - std::pow(b2, double(step_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = b1 * m[i] + (1 - b1) * g;
      v[i] = b2 * v[i] + (1 - b2) * g * g;
      p.value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config_.epsilon);
    }
  }
  return loss;
}

TrainResult train(unet::Network& net, std::span<const Sample> samples, const TrainConfig& config,
                  const ProgressFn& progress) {
  config.validate();
  if (samples.empty()) throw DataError("no training samples");
  const bool any_fluid = std::any_of(samples.begin(), samples.end(), [](const Sample& s) {
    return std::any_of(s.labels.begin(), s.labels.end(), [](std::uint8_t l) { return l != 0; });
  });
  if (!any_fluid) throw DataError("training set contains no fluid pixels");

  Trainer trainer(net, config);
  TrainResult result;
  std::vector<std::size_t> order(samples.size());
  std::vector<Sample> augmented;
  std::vector<const Sample*> batch;
  const int epochs = config.max_steps > 0 ? std::numeric_limits<int>::max() : config.epochs;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle = derive_rng(config.seed, Stream::Batch, std::uint64_t(epoch));
    shuffle.shuffle(order.begin(), order.end());
    double sum = 0.0;
    int count = 0;
    for (std::size_t start = 0; start < order.size(); start += std::size_t(config.batch_size)) {
      if (config.max_steps > 0 && trainer.steps_taken() >= config.max_steps) break;
      const std::size_t end = std::min(order.size(), start + std::size_t(config.batch_size));
      augmented.clear();
      for (std::size_t i = start; i < end; ++i) {
        Rng aug = derive_rng(config.seed, Stream::Augment,
                             std::uint64_t(trainer.steps_taken()) * 1024 + (i - start));
        augmented.push_back(augment(samples[order[i]], config, aug));
      }
      batch.clear();
      for (const auto& s : augmented) batch.push_back(&s);
      const double loss = trainer.step(batch);
      result.step_losses.push_back(loss);
      sum += loss;
      ++count;
      if (progress) progress(trainer.steps_taken(), loss);
    }
    if (count > 0) result.epoch_losses.push_back(sum / count);
    if (config.max_steps > 0 && trainer.steps_taken() >= config.max_steps) break;
  }
  return result;
}

double fluid_dice(unet::Network& net, std::span<const Sample> samples) {
  std::size_t inter = 0, total = 0;
  for (const Sample& s : samples) {
    const Sample* one[] = {&s};
    const auto pred = unet::predict_labels(net.predict(stack_images(one)));
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i] != 0) ++total;
      if (s.labels[i] != 0) ++total;
      if (pred[i] != 0 && pred[i] == s.labels[i]) inter += 2;
    }
  }
  return total == 0 ? 1.0 : double(inter) / double(total);
}

void write_loss_csv(const std::filesystem::path& path, std::span<const double> step_losses) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.precision(17);
  out << "step,loss\n";
  for (std::size_t i = 0; i < step_losses.size(); ++i) out << i << "," << step_losses[i] << "\n";
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

}  // namespace octfluid::trainer

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "doctest.h"
#include "octfluid/trainer.hpp"
#include "support.hpp"

using namespace octfluid;
using trainer::Sample;
using trainer::TrainConfig;

namespace {

// Random image; labels are `cls` inside the box and 0 elsewhere.
Sample box_sample(int w, int h, int x0, int y0, int x1, int y1, std::uint8_t cls, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Sample s;
  s.width = w;
  s.height = h;
  s.image.resize(std::size_t(2 * w * h));
  for (auto& v : s.image) v = uni(gen);
  s.labels.assign(std::size_t(w * h), 0);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) s.labels[std::size_t(y * w + x)] = cls;
  return s;
}

TrainConfig plain() {
  TrainConfig c;
  c.flip = c.rotate = c.zoom = false;
  return c;
}

std::size_t fluid_count(const Sample& s) {
  return std::size_t(std::count_if(s.labels.begin(), s.labels.end(), [](std::uint8_t v) { return v != 0; }));
}

}  // namespace

TEST_CASE("augmentation is the identity when every toggle is off") {
  const Sample s = box_sample(20, 16, 3, 4, 9, 8, 2, 1);
  Rng rng(5);
  for (int i = 0; i < 50; ++i) REQUIRE(trainer::augment(s, plain(), rng) == s);
}

TEST_CASE("flipping twice is the identity") {
  const Sample s = box_sample(17, 9, 1, 1, 4, 6, 1, 2);
  const Sample f = trainer::flip_horizontal(s);
  CHECK_FALSE(f == s);
  CHECK(trainer::flip_horizontal(f) == s);
  CHECK(f.labels[std::size_t(1 * 17 + 16 - 1)] == 1);
  trainer::Transform t;
  t.flip = true;
  CHECK(trainer::apply_transform(s, t) == f);
}

TEST_CASE("augmented labels stay in the label alphabet and images stay in range") {
  Sample s = box_sample(32, 32, 4, 4, 12, 20, 1, 3);
  for (int y = 22; y < 28; ++y)
    for (int x = 14; x < 30; ++x) s.labels[std::size_t(y * 32 + x)] = std::uint8_t(2 + (x % 2));
  TrainConfig c;
  Rng rng(7);
  for (int i = 0; i < 1000; ++i) {
    const Sample a = trainer::augment(s, c, rng);
    REQUIRE(a.labels.size() == s.labels.size());
    REQUIRE(std::all_of(a.labels.begin(), a.labels.end(), [](std::uint8_t v) { return v <= 3; }));
    REQUIRE(std::all_of(a.image.begin(), a.image.end(), [](double v) { return v >= 0.0 && v <= 1.0; }));
  }
}

TEST_CASE("transform draws respect the configured ranges") {
  TrainConfig c;
  Rng rng(11);
  int flips = 0, rotations = 0, zooms = 0;
  for (int i = 0; i < 2000; ++i) {
    const auto t = trainer::draw_transform(c, rng);
    flips += t.flip;
    rotations += t.angle_deg != 0.0;
    zooms += t.scale != 1.0;
    REQUIRE(std::abs(t.angle_deg) <= c.max_rotation_deg);
    REQUIRE((t.scale >= c.zoom_min && t.scale <= c.zoom_max));
  }
  for (int n : {flips, rotations, zooms}) CHECK(std::abs(n - 1000) < 120);
}

TEST_CASE("zoom and rotation move labelled area as expected") {
  const Sample s = box_sample(64, 64, 27, 27, 36, 36, 1, 4);  // centred 10x10
  trainer::Transform zoom_in;
  zoom_in.scale = 2.0;
  const std::size_t big = fluid_count(trainer::apply_transform(s, zoom_in));
  CHECK(big >= 360);
  CHECK(big <= 440);
  trainer::Transform zoom_out;
  zoom_out.scale = 0.5;
  const std::size_t small = fluid_count(trainer::apply_transform(s, zoom_out));
  CHECK(small >= 16);
  CHECK(small <= 36);

  // A horizontal bar rotated by 90 degrees becomes vertical.
  const Sample bar = box_sample(33, 33, 6, 15, 26, 17, 1, 5);
  trainer::Transform rot;
  rot.angle_deg = 90.0;
  const Sample r = trainer::apply_transform(bar, rot);
  int min_x = 99, max_x = -1, min_y = 99, max_y = -1;
  for (int y = 0; y < 33; ++y)
    for (int x = 0; x < 33; ++x)
      if (r.labels[std::size_t(y * 33 + x)]) {
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
      }
  CHECK(max_x - min_x == 2);
  CHECK(max_y - min_y == 20);
}

TEST_CASE("loss mask selection matches a set oracle") {
  std::mt19937_64 gen(13);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + gen() % 50;
    std::vector<std::uint8_t> pred(n), truth(n);
    for (std::size_t i = 0; i < n; ++i) {
      pred[i] = std::uint8_t(gen() % 5 == 0 ? 1 + gen() % 3 : 0);
      truth[i] = std::uint8_t(gen() % 5 == 0 ? 1 + gen() % 3 : 0);
    }
    for (auto mode : {trainer::LossMaskMode::HardPixel, trainer::LossMaskMode::PredictedOnly,
                      trainer::LossMaskMode::AllPixels}) {
      std::vector<std::uint8_t> want(n);
      bool any = false;
      for (std::size_t i = 0; i < n; ++i) {
        const bool sel = mode == trainer::LossMaskMode::HardPixel       ? (truth[i] || pred[i])
                         : mode == trainer::LossMaskMode::PredictedOnly ? pred[i] != 0
                                                                        : true;
        want[i] = sel;
        any = any || sel;
      }
      if (!any) std::fill(want.begin(), want.end(), 1);
      REQUIRE(trainer::loss_mask(pred, truth, mode) == want);
    }
  }
}

TEST_CASE("loss mask keeps hard pixels and falls back to all pixels") {
  const std::vector<std::uint8_t> pred = {0, 1, 0, 0, 3}, truth = {0, 0, 2, 0, 3};
  CHECK(trainer::loss_mask(pred, truth) == std::vector<std::uint8_t>{0, 1, 1, 0, 1});
  const std::vector<std::uint8_t> zeros(4, 0);
  CHECK(trainer::loss_mask(zeros, zeros) == std::vector<std::uint8_t>(4, 1));
  CHECK_THROWS_AS(trainer::loss_mask(zeros, pred), DimensionError);
}

TEST_CASE("a fresh network starts near the uniform-prediction loss") {
  unet::NetConfig nc;
  nc.base_channels = 2;
  auto net = unet::Network::build(nc, 3);
  const Sample s = box_sample(32, 32, 5, 5, 20, 12, 1, 6);
  const Sample* batch[] = {&s};
  CHECK(std::abs(trainer::batch_loss(net, batch, plain(), 0) - std::log(4.0)) < 0.2);
}

TEST_CASE("dense warm-up trains on every pixel before the loss mask applies") {
  unet::NetConfig nc;
  nc.base_channels = 2;
  auto net = unet::Network::build(nc, 8);
  const Sample s = box_sample(32, 32, 5, 5, 12, 9, 2, 9);
  const Sample* batch[] = {&s};
  TrainConfig hard = plain(), all = plain(), warm = plain();
  all.loss_mask = trainer::LossMaskMode::AllPixels;
  warm.dense_warmup_steps = 3;
  for (std::int64_t step : {0, 2}) CHECK(trainer::batch_loss(net, batch, warm, step) == trainer::batch_loss(net, batch, all, step));
  for (std::int64_t step : {3, 7}) CHECK(trainer::batch_loss(net, batch, warm, step) == trainer::batch_loss(net, batch, hard, step));
  CHECK(trainer::batch_loss(net, batch, hard, 0) != trainer::batch_loss(net, batch, all, 0));
  warm.dense_warmup_steps = -1;
  CHECK_THROWS_AS(warm.validate(), ValidationError);
}

TEST_CASE("training is deterministic and lowers the loss") {
  unet::NetConfig nc;
  nc.base_channels = 2;
  std::vector<Sample> samples;
  for (int i = 0; i < 4; ++i) samples.push_back(box_sample(16, 16, 2 + i, 3, 9 + i, 8, std::uint8_t(1 + i % 3), 20 + i));
  TrainConfig c;
  c.max_steps = 30;
  c.batch_size = 2;
  c.learning_rate = 1e-3;
  c.seed = 4;
  auto a = unet::Network::build(nc, 1);
  auto b = unet::Network::build(nc, 1);
  const auto ra = trainer::train(a, samples, c);
  const auto rb = trainer::train(b, samples, c);
  CHECK(ra.step_losses == rb.step_losses);
  REQUIRE(ra.step_losses.size() == 30);
  CHECK(ra.epoch_losses.size() == 15);
  const autograd::Tensor probe = trainer::stack_images(std::vector<const Sample*>{&samples[0]});
  CHECK(a.predict(probe) == b.predict(probe));
  CHECK(ra.step_losses.back() < ra.step_losses.front());
}

TEST_CASE("training needs fluid and a valid config") {
  unet::NetConfig nc;
  nc.base_channels = 1;
  auto net = unet::Network::build(nc, 1);
  const std::vector<Sample> dry = {box_sample(8, 8, 0, 0, -1, -1, 0, 1)};
  CHECK_THROWS_AS(trainer::train(net, dry, plain()), DataError);
  CHECK_THROWS_AS(trainer::train(net, std::vector<Sample>{}, plain()), DataError);
  auto c = plain();
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = plain();
  c.zoom_min = 2.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("loss CSV has one row per step") {
  const auto dir = testsupport::scratch_dir("trainer_csv");
  trainer::write_loss_csv(dir / "loss.csv", std::vector<double>{1.5, 1.25, 1.0});
  std::ifstream in(dir / "loss.csv");
  std::string line;
  int rows = 0;
  while (std::getline(in, line)) ++rows;
  CHECK(rows == 4);
}

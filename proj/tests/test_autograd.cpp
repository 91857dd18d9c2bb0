#include <random>

#include "doctest.h"
#include "octfluid/autograd.hpp"
#include "gradcheck.hpp"

using namespace octfluid;
using namespace octfluid::autograd;

namespace {

using gradcheck::fd_check;
using gradcheck::Probe;
using gradcheck::random_tensor;

Tensor probe_for(Shape s, std::mt19937_64& gen) { return random_tensor(s, gen); }

}  // namespace

TEST_CASE("conv3x3: identity kernel and constant-image sums") {
  Tape t;
  Tensor img(Shape{1, 1, 4, 5});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = double(i);
  Parameter w("w", Tensor(Shape{1, 1, 3, 3})), b("b", Tensor(Shape{1, 1, 1, 1}));
  w.value[4] = 1.0;
  const Var out = conv3x3(t, t.input(img), t.parameter(w), t.parameter(b));
  CHECK(t.value(out) == img);

  Tape t2;
  Parameter ones("w", Tensor(Shape{1, 1, 3, 3}, 1.0));
  const Var c = conv3x3(t2, t2.input(Tensor(Shape{1, 1, 5, 5}, 2.0)), t2.parameter(ones), t2.parameter(b));
  CHECK(t2.value(c).at(0, 0, 2, 2) == 18.0);
  CHECK(t2.value(c).at(0, 0, 0, 0) == 8.0);
  CHECK(t2.value(c).at(0, 0, 0, 2) == 12.0);
}

TEST_CASE("conv3x3 rejects channel mismatch") {
  Tape t;
  Parameter w("w", Tensor(Shape{2, 3, 3, 3})), b("b", Tensor(Shape{1, 2, 1, 1}));
  CHECK_THROWS_AS(conv3x3(t, t.input(Tensor(Shape{1, 2, 4, 4})), t.parameter(w), t.parameter(b)), ShapeError);
}

TEST_CASE("conv1x1: identity and channel sum") {
  Tape t;
  std::mt19937_64 gen(1);
  const Tensor x = random_tensor({1, 2, 3, 3}, gen);
  Parameter id("w", Tensor(Shape{2, 2, 1, 1})), b("b", Tensor(Shape{1, 2, 1, 1}));
  id.value[0] = id.value[3] = 1.0;
  CHECK(t.value(conv1x1(t, t.input(x), t.parameter(id), t.parameter(b))) == x);
  Parameter sum("w", Tensor(Shape{1, 2, 1, 1}, 1.0)), b1("b", Tensor(Shape{1, 1, 1, 1}));
  const Tensor& s = t.value(conv1x1(t, t.input(x), t.parameter(sum), t.parameter(b1)));
  for (int y = 0; y < 3; ++y)
    for (int xx = 0; xx < 3; ++xx) CHECK(s.at(0, 0, y, xx) == x.at(0, 0, y, xx) + x.at(0, 1, y, xx));
}

TEST_CASE("relu values and gradients") {
  Tape t;
  const Var x = t.input(Tensor(Shape{1, 1, 1, 3}, std::vector<double>{-1.0, 2.0, 0.0}), true);
  const Var y = relu(t, x);
  CHECK(t.value(y)[0] == 0.0);
  CHECK(t.value(y)[1] == 2.0);
  t.backward(weighted_sum(t, y, Tensor(Shape{1, 1, 1, 3}, 1.0)));
  CHECK(t.grad(x)[0] == 0.0);
  CHECK(t.grad(x)[1] == 1.0);
  CHECK(t.grad(x)[2] == 0.0);
}

TEST_CASE("maxpool: values, tie routing and odd sizes") {
  Tape t;
  const Var x = t.input(Tensor(Shape{1, 1, 2, 4}, std::vector<double>{1, 2, 5, 5, 3, 4, 5, 5}), true);
  const Var y = maxpool2x2(t, x);
  CHECK(t.value(y)[0] == 4.0);
  CHECK(t.value(y)[1] == 5.0);
  t.backward(weighted_sum(t, y, Tensor(Shape{1, 1, 1, 2}, 1.0)));
  CHECK(t.grad(x)[5] == 1.0);  // the 4
  CHECK(t.grad(x)[2] == 1.0);  // first of the tied 5s
  CHECK(t.grad(x)[3] == 0.0);
  CHECK(t.grad(x)[6] == 0.0);
  CHECK_THROWS_AS(maxpool2x2(t, t.input(Tensor(Shape{1, 1, 3, 4}))), ShapeError);
}

TEST_CASE("upconv: shape doubling and single-pixel tile") {
  Tape t;
  Parameter w("w", Tensor(Shape{1, 1, 2, 2}, std::vector<double>{1, 2, 3, 4})), b("b", Tensor(Shape{1, 1, 1, 1}));
  const Var y = upconv2x2(t, t.input(Tensor(Shape{1, 1, 1, 1}, 3.0)), t.parameter(w), t.parameter(b));
  CHECK(t.value(y).shape() == Shape{1, 1, 2, 2});
  CHECK(t.value(y)[0] == 3.0);
  CHECK(t.value(y)[3] == 12.0);
  Parameter w2("w", Tensor(Shape{2, 3, 2, 2})), b2("b", Tensor(Shape{1, 3, 1, 1}));
  CHECK(t.value(upconv2x2(t, t.input(Tensor(Shape{2, 2, 3, 5})), t.parameter(w2), t.parameter(b2))).shape() ==
        Shape{2, 3, 6, 10});
}

TEST_CASE("concat keeps a's channels first; crop keeps the top-left window") {
  Tape t;
  const Var a = t.input(Tensor(Shape{1, 2, 2, 2}, 1.0));
  const Var b = t.input(Tensor(Shape{1, 3, 2, 2}, 2.0));
  const Tensor& c = t.value(concat_channels(t, a, b));
  CHECK(c.shape() == Shape{1, 5, 2, 2});
  CHECK(c.at(0, 1, 1, 1) == 1.0);
  CHECK(c.at(0, 2, 0, 0) == 2.0);
  CHECK_THROWS_AS(concat_channels(t, a, t.input(Tensor(Shape{1, 1, 3, 2}))), ShapeError);
  Tensor r(Shape{1, 1, 3, 3});
  for (std::size_t i = 0; i < 9; ++i) r[i] = double(i);
  const Tensor& k = t.value(crop(t, t.input(r), 2, 2));
  CHECK(k.shape() == Shape{1, 1, 2, 2});
  CHECK(k[3] == 4.0);
}

TEST_CASE("softmax sums to one and is shift invariant") {
  std::mt19937_64 gen(4);
  Tape t;
  const Tensor logits = random_tensor({2, 4, 3, 3}, gen, -50.0, 50.0);
  const Tensor& p = t.value(softmax_channels(t, t.input(logits)));
  for (int n = 0; n < 2; ++n)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) {
        double s = 0;
        for (int c = 0; c < 4; ++c) {
          REQUIRE(std::isfinite(p.at(n, c, y, x)));
          s += p.at(n, c, y, x);
        }
        CHECK(std::abs(s - 1.0) < 1e-12);
      }
  const Tensor& eq = t.value(softmax_channels(t, t.input(Tensor(Shape{1, 4, 1, 1}, 3.0))));
  for (int c = 0; c < 4; ++c) CHECK(eq[std::size_t(c)] == doctest::Approx(0.25).epsilon(1e-15));
  const Tensor& a = t.value(softmax_channels(t, t.input(Tensor(Shape{1, 4, 1, 1}, std::vector<double>{0, 2, 0, 0}))));
  const Tensor& b = t.value(softmax_channels(t, t.input(Tensor(Shape{1, 4, 1, 1}, std::vector<double>{7, 9, 7, 7}))));
  for (std::size_t c = 0; c < 4; ++c) CHECK(a[c] == doctest::Approx(b[c]).epsilon(1e-14));
}

TEST_CASE("cross entropy: ln 4 at uniform, ~0 at one-hot, empty mask rejected") {
  Tape t;
  const std::vector<std::uint8_t> labels = {0, 1, 2, 3, 3, 1};
  const std::vector<std::uint8_t> mask = {1, 1, 1, 1, 0, 1};
  const Var u = t.input(Tensor(Shape{1, 4, 2, 3}, 0.25));
  CHECK(std::abs(t.value(masked_cross_entropy(t, u, labels, mask))[0] - std::log(4.0)) < 1e-9);
  Tensor onehot(Shape{1, 4, 2, 3});
  for (int i = 0; i < 6; ++i) onehot.at(0, labels[std::size_t(i)], i / 3, i % 3) = 1.0;
  CHECK(t.value(masked_cross_entropy(t, t.input(onehot), labels, mask))[0] <= 1e-9);
  const std::vector<std::uint8_t> none(6, 0);
  CHECK_THROWS_AS(masked_cross_entropy(t, u, labels, none), ContractError);
}

TEST_CASE("softmax + cross entropy gradient is (p - onehot)/N inside the mask, 0 outside") {
  std::mt19937_64 gen(8);
  Tape t;
  const Var z = t.input(random_tensor({1, 4, 2, 2}, gen), true);
  const Var p = softmax_channels(t, z);
  const std::vector<std::uint8_t> labels = {2, 0, 1, 3}, mask = {1, 0, 1, 1};
  t.backward(masked_cross_entropy(t, p, labels, mask));
  const Tensor& pv = t.value(p);
  for (int i = 0; i < 4; ++i)
    for (int c = 0; c < 4; ++c) {
      const double expect = mask[std::size_t(i)] ? (pv.at(0, c, i / 2, i % 2) - (labels[std::size_t(i)] == c)) / 3.0 : 0.0;
      CHECK(t.grad(z).at(0, c, i / 2, i % 2) == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("dropout: identity in test mode, unbiased in train mode, seeded") {
  Tape t;
  const Tensor x(Shape{1, 1, 100, 100}, 1.0);
  Rng rng(1);
  CHECK(t.value(dropout(t, t.input(x), 0.5, Mode::Test, rng)) == x);
  double mean = 0.0;
  const Tensor& y = t.value(dropout(t, t.input(x), 0.5, Mode::Train, rng));
  for (std::size_t i = 0; i < y.size(); ++i) {
    CHECK((y[i] == 0.0 || y[i] == 2.0));
    mean += y[i];
  }
  CHECK(std::abs(mean / double(y.size()) - 1.0) < 0.02);
  Rng r1(5), r2(5);
  const Tensor first = t.value(dropout(t, t.input(x), 0.5, Mode::Train, r1));
  const Tensor second = t.value(dropout(t, t.input(x), 0.5, Mode::Train, r2));
  CHECK(first == second);
}

TEST_CASE("finite-difference checks of every differentiable op") {
  std::mt19937_64 gen(2024);
  const std::vector<Shape> shapes = {{1, 2, 6, 6}, {2, 1, 4, 4}, {1, 3, 2, 4}, {2, 2, 4, 2}, {1, 1, 6, 4}};
  for (const Shape& s : shapes) {
    CAPTURE(to_string(s));
    {
      Probe pr;
      pr.input = random_tensor(s, gen);
      pr.params = {Parameter("w", random_tensor({3, s.c, 3, 3}, gen)), Parameter("b", random_tensor({1, 3, 1, 1}, gen))};
      pr.probe = probe_for({s.n, 3, s.h, s.w}, gen);
      pr.build = [](Tape& t, Var x, std::vector<Var>& p) { return conv3x3(t, x, p[0], p[1]); };
      CHECK(fd_check(pr) < 1e-6);
    }
    {
      Probe pr;
      pr.input = random_tensor(s, gen);
      pr.params = {Parameter("w", random_tensor({2, s.c, 1, 1}, gen)), Parameter("b", random_tensor({1, 2, 1, 1}, gen))};
      pr.probe = probe_for({s.n, 2, s.h, s.w}, gen);
      pr.build = [](Tape& t, Var x, std::vector<Var>& p) { return conv1x1(t, x, p[0], p[1]); };
      CHECK(fd_check(pr) < 1e-6);
    }
    {
      Probe pr;
      pr.input = random_tensor(s, gen);
      for (std::size_t i = 0; i < pr.input.size(); ++i)
        if (std::abs(pr.input[i]) < 0.05) pr.input[i] = 0.5;  // keep clear of the kink
      pr.probe = probe_for(s, gen);
      pr.build = [](Tape& t, Var x, std::vector<Var>&) { return relu(t, x); };
      CHECK(fd_check(pr) < 1e-6);
    }
    {
      Probe pr;
      pr.input = random_tensor(s, gen);
      pr.probe = probe_for({s.n, s.c, s.h / 2, s.w / 2}, gen);
      pr.build = [](Tape& t, Var x, std::vector<Var>&) { return maxpool2x2(t, x); };
      CHECK(fd_check(pr) < 1e-6);
    }
    {
      Probe pr;
      pr.input = random_tensor(s, gen);
      pr.params = {Parameter("w", random_tensor({s.c, 2, 2, 2}, gen)), Parameter("b", random_tensor({1, 2, 1, 1}, gen))};
      pr.probe = probe_for({s.n, 2, 2 * s.h, 2 * s.w}, gen);
      pr.build = [](Tape& t, Var x, std::vector<Var>& p) { return upconv2x2(t, x, p[0], p[1]); };
      CHECK(fd_check(pr) < 1e-6);
    }
    {
      Probe pr;
      pr.input = random_tensor(s, gen);
      pr.params = {Parameter("other", random_tensor({s.n, 2, s.h, s.w}, gen))};
      pr.probe = probe_for({s.n, s.c + 2, s.h, s.w}, gen);
      pr.build = [](Tape& t, Var x, std::vector<Var>& p) { return concat_channels(t, x, p[0]); };
      CHECK(fd_check(pr) < 1e-6);
    }
    {
      Probe pr;
      pr.input = random_tensor(s, gen);
      pr.probe = probe_for({s.n, s.c, s.h - 1, s.w - 1}, gen);
      pr.build = [](Tape& t, Var x, std::vector<Var>&) { return crop(t, x, t.value(x).shape().h - 1, t.value(x).shape().w - 1); };
      CHECK(fd_check(pr) < 1e-6);
    }
    {
      Probe pr;
      pr.input = random_tensor({s.n, 4, s.h, s.w}, gen, -3.0, 3.0);
      std::vector<std::uint8_t> labels(std::size_t(s.n * s.h * s.w)), mask(labels.size());
      for (std::size_t i = 0; i < labels.size(); ++i) {
        labels[i] = std::uint8_t(gen() % 4);
        mask[i] = std::uint8_t(i % 3 != 0);
      }
      pr.build = [labels, mask](Tape& t, Var x, std::vector<Var>&) {
        return masked_cross_entropy(t, softmax_channels(t, x), labels, mask);
      };
      CHECK(fd_check(pr) < 1e-6);
    }
    {
      Probe pr;
      pr.input = random_tensor(s, gen);
      pr.probe = probe_for(s, gen);
      pr.build = [](Tape& t, Var x, std::vector<Var>&) {
        Rng r(3);
        return dropout(t, x, 0.5, Mode::Train, r);
      };
      CHECK(fd_check(pr) < 1e-6);
    }
  }
}

TEST_CASE("full-graph finite-difference check on a two-layer toy net") {
  std::mt19937_64 gen(77);
  Probe pr;
  pr.input = random_tensor({2, 2, 4, 4}, gen);
  pr.params = {Parameter("c1w", random_tensor({3, 2, 3, 3}, gen)), Parameter("c1b", random_tensor({1, 3, 1, 1}, gen)),
               Parameter("upw", random_tensor({3, 2, 2, 2}, gen)), Parameter("upb", random_tensor({1, 2, 1, 1}, gen)),
               Parameter("hw", random_tensor({4, 4, 1, 1}, gen)), Parameter("hb", random_tensor({1, 4, 1, 1}, gen))};
  std::vector<std::uint8_t> labels(32);
  for (auto& l : labels) l = std::uint8_t(gen() % 4);
  const std::vector<std::uint8_t> mask(32, 1);
  pr.build = [&](Tape& t, Var x, std::vector<Var>& p) {
    const Var h = relu(t, conv3x3(t, x, p[0], p[1]));
    const Var up = upconv2x2(t, maxpool2x2(t, h), p[2], p[3]);
    const Var cat = concat_channels(t, x, up);
    return masked_cross_entropy(t, softmax_channels(t, conv1x1(t, cat, p[4], p[5])), labels, mask);
  };
  CHECK(fd_check(pr) < 1e-6);
}

TEST_CASE("segmentation network loss passes a sampled finite-difference check") {
  CHECK(gradcheck::unet_check(2, 16, 4, 5) < 1e-6);
}

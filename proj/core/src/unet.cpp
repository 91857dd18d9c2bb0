#include "octfluid/unet.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace octfluid::unet {

using autograd::Mode;
using autograd::Parameter;
using autograd::Shape;
using autograd::Tape;
using autograd::Tensor;
using autograd::Var;

namespace {

constexpr char kMagic[4] = {'O', 'C', 'T', 'W'};
constexpr std::uint32_t kVersion = 1;
// The head starts small so the initial softmax is close to uniform.
constexpr double kHeadInitScale = 0.1;

Tensor he_init(Shape shape, int fan_in, double scale, Rng& rng) {
  Tensor t(shape);
  const double sd = scale * std::sqrt(2.0 / double(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = sd * rng.normal();
  return t;
}

int mirror(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

void NetConfig::validate() const {
  if (depth < 1 || depth > 6) throw ValidationError("net depth must be in [1, 6]");
  if (base_channels < 1) throw ValidationError("base_channels must be >= 1");
  if (in_channels < 1 || out_channels < 2) throw ValidationError("bad channel counts");
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw ValidationError("keep_prob must lie in (0, 1]");
}

Network Network::build(const NetConfig& config, std::uint64_t seed) {
  config.validate();
  Network net;
  net.config_ = config;
  Rng rng = derive_rng(seed, Stream::NetInit);
  auto& ps = net.params_;
  auto conv = [&](const std::string& name, int cin, int cout, int k, double scale = 1.0) {
    ps.emplace_back(name + ".w", he_init(Shape{cout, cin, k, k}, cin * k * k, scale, rng));
    ps.emplace_back(name + ".b", Tensor(Shape{1, cout, 1, 1}));
  };
  int cin = config.in_channels;
  for (int l = 0; l < config.depth; ++l) {
    const int c = config.base_channels << l;
    conv("enc" + std::to_string(l + 1) + ".conv1", cin, c, 3);
    conv("enc" + std::to_string(l + 1) + ".conv2", c, c, 3);
    cin = c;
  }
  const int cb = config.base_channels << config.depth;
  conv("bottleneck.conv1", cin, cb, 3);
  conv("bottleneck.conv2", cb, cb, 3);
  cin = cb;
  for (int l = config.depth - 1; l >= 0; --l) {
    const int c = config.base_channels << l;
    const std::string name = "dec" + std::to_string(l + 1);
    ps.emplace_back(name + ".up.w", he_init(Shape{cin, c, 2, 2}, cin, 1.0, rng));
    ps.emplace_back(name + ".up.b", Tensor(Shape{1, c, 1, 1}));
    conv(name + ".conv1", 2 * c, c, 3);
    conv(name + ".conv2", c, c, 3);
    cin = c;
  }
  conv("head", cin, config.out_channels, 1, kHeadInitScale);
  return net;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::vector<int> Network::channel_ladder() const {
  std::vector<int> out;
  for (int l = 0; l < config_.depth; ++l) out.push_back(config_.base_channels << l);
  return out;
}

void Network::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

Var Network::forward(Tape& tape, const Tensor& input, Mode mode, Rng& dropout_rng) {
  const Shape s = input.shape();
  if (s.h <= 0 || s.w <= 0 || s.n <= 0) throw ShapeError("network input has an empty dimension");
  if (s.c != config_.in_channels)
    throw ShapeError("network expects " + std::to_string(config_.in_channels) + " input channels, got " +
                     std::to_string(s.c));
  std::size_t next = 0;
  auto param = [&]() { return tape.parameter(params_[next++]); };
  auto conv_relu = [&](Var h) {
    const Var w = param();
    const Var b = param();
    return autograd::relu(tape, autograd::conv3x3(tape, h, w, b));
  };

  Var h = tape.input(reflect_pad(input, size_multiple()));
  std::vector<Var> skips;
  for (int l = 0; l < config_.depth; ++l) {
    h = conv_relu(conv_relu(h));
    skips.push_back(h);
    h = autograd::maxpool2x2(tape, h);
  }
  h = conv_relu(conv_relu(h));
  for (int l = config_.depth - 1; l >= 0; --l) {
    const Var w = param();
    const Var b = param();
    h = autograd::upconv2x2(tape, h, w, b);
    h = autograd::concat_channels(tape, skips[std::size_t(l)], h);
    h = conv_relu(conv_relu(h));
  }
  h = autograd::dropout(tape, h, config_.keep_prob, mode, dropout_rng);
  const Var hw = param();
  const Var hb = param();
  h = autograd::conv1x1(tape, h, hw, hb);
  h = autograd::crop(tape, h, s.h, s.w);
  return autograd::softmax_channels(tape, h);
}

Tensor Network::predict(const Tensor& input) {
  Tape tape;
  Rng unused(0);
  const Var p = forward(tape, input, Mode::Test, unused);
  return tape.value(p);
}

void Network::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path.string() + "'");
  auto u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  auto i32 = [&](std::int32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
  out.write(kMagic, 4);
  u32(kVersion);
  u32(std::uint32_t(config_.depth));
  u32(std::uint32_t(config_.base_channels));
  u32(std::uint32_t(config_.in_channels));
  u32(std::uint32_t(config_.out_channels));
  out.write(reinterpret_cast<const char*>(&config_.keep_prob), 8);
  u32(std::uint32_t(params_.size()));
  for (const auto& p : params_) {
    u32(std::uint32_t(p.name.size()));
    out.write(p.name.data(), std::streamsize(p.name.size()));
    const Shape s = p.value.shape();
    i32(s.n);
    i32(s.c);
    i32(s.h);
    i32(s.w);
    out.write(reinterpret_cast<const char*>(p.value.data()), std::streamsize(p.value.size() * 8));
  }
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

Network Network::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  auto read = [&](void* p, std::size_t n) {
    in.read(static_cast<char*>(p), std::streamsize(n));
    if (std::size_t(in.gcount()) != n) throw CheckpointError("truncated checkpoint '" + path.string() + "'");
  };
  auto u32 = [&] {
    std::uint32_t v;
    read(&v, 4);
    return v;
  };
  char magic[4];
  read(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw CheckpointError("'" + path.string() + "' is not a checkpoint");
  if (u32() != kVersion) throw CheckpointError("unsupported checkpoint version");
  NetConfig cfg;
  cfg.depth = int(u32());
  cfg.base_channels = int(u32());
  cfg.in_channels = int(u32());
  cfg.out_channels = int(u32());
  read(&cfg.keep_prob, 8);
  try {
    cfg.validate();
  } catch (const ValidationError& e) {
    throw CheckpointError(std::string("checkpoint config invalid: ") + e.what());
  }
  Network net = build(cfg, 0);
  if (u32() != net.params_.size()) throw CheckpointError("checkpoint parameter count mismatch");
  for (auto& p : net.params_) {
    const std::uint32_t len = u32();
    if (len > 256) throw CheckpointError("corrupt parameter name");
    std::string name(len, '\0');
    read(name.data(), len);
    if (name != p.name) throw CheckpointError("checkpoint parameter '" + name + "' where '" + p.name + "' expected");
    std::int32_t dims[4];
    read(dims, 16);
    if (!(Shape{dims[0], dims[1], dims[2], dims[3]} == p.value.shape()))
      throw CheckpointError("shape mismatch for parameter '" + name + "'");
    read(p.value.data(), p.value.size() * 8);
    for (std::size_t i = 0; i < p.value.size(); ++i)
      if (!std::isfinite(p.value[i])) throw CheckpointError("non-finite weight in '" + name + "'");
    p.zero_grad();
  }
  if (in.peek() != std::char_traits<char>::eof()) throw CheckpointError("trailing bytes in checkpoint");
  return net;
}

Network Network::load(const std::filesystem::path& path, const NetConfig& expected) {
  Network net = load(path);
  const NetConfig& c = net.config();
  if (c.depth != expected.depth || c.base_channels != expected.base_channels ||
      c.in_channels != expected.in_channels || c.out_channels != expected.out_channels)
    throw CheckpointError("checkpoint ladder (depth " + std::to_string(c.depth) + ", base " +
                          std::to_string(c.base_channels) + ") does not match the configured network (depth " +
                          std::to_string(expected.depth) + ", base " + std::to_string(expected.base_channels) + ")");
  return net;
}

std::vector<std::uint8_t> predict_labels(const Tensor& probabilities) {
  const Shape s = probabilities.shape();
  const std::size_t hw = s.plane();
  std::vector<std::uint8_t> out(std::size_t(s.n) * hw);
  for (int n = 0; n < s.n; ++n)
    for (std::size_t q = 0; q < hw; ++q) {
      const std::size_t base = std::size_t(n) * s.c * hw + q;
      int best = 0;
      for (int c = 1; c < s.c; ++c)
        if (probabilities[base + c * hw] > probabilities[base + std::size_t(best) * hw]) best = c;
      out[std::size_t(n) * hw + q] = static_cast<std::uint8_t>(best);
    }
  return out;
}

Tensor reflect_pad(const Tensor& input, int multiple) {
  const Shape s = input.shape();
  const int h = (s.h + multiple - 1) / multiple * multiple;
  const int w = (s.w + multiple - 1) / multiple * multiple;
  if (h == s.h && w == s.w) return input;
  Tensor out(Shape{s.n, s.c, h, w});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) out.at(n, c, y, x) = input.at(n, c, mirror(y, s.h), mirror(x, s.w));
  return out;
}

}  // namespace octfluid::unet

#include "octfluid/autograd.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace octfluid::autograd {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using CMapMat = Eigen::Map<const RowMat>;

// Probabilities are floored before the log so the loss stays finite.
constexpr double kFloor = 1e-300;

void require(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

// Unfolds one sample (C, H, W) into (C*9, H*W) patches for a 3x3 kernel with
// zero padding 1.
void im2col3x3(const double* in, int c, int h, int w, double* col) {
  const std::size_t hw = std::size_t(h) * w;
  for (int ci = 0; ci < c; ++ci) {
    const double* src = in + std::size_t(ci) * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        double* row = col + (std::size_t(ci) * 9 + ky * 3 + kx) * hw;
        const int dx = kx - 1;
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          double* dst = row + std::size_t(y) * w;
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) {
            std::fill(dst, dst + w, 0.0);
            continue;
          }
          const double* s = src + std::size_t(sy) * w;
          for (int x = 0; x < x0; ++x) dst[x] = 0.0;
          for (int x = x0; x < x1; ++x) dst[x] = s[x + dx];
          for (int x = x1; x < w; ++x) dst[x] = 0.0;
        }
      }
    }
  }
}

// Adjoint of im2col3x3: accumulates patch gradients back into (C, H, W).
void col2im3x3(const double* col, int c, int h, int w, double* out) {
  const std::size_t hw = std::size_t(h) * w;
  for (int ci = 0; ci < c; ++ci) {
    double* dst = out + std::size_t(ci) * hw;
    for (int ky = 0; ky < 3; ++ky) {
      for (int kx = 0; kx < 3; ++kx) {
        const double* row = col + (std::size_t(ci) * 9 + ky * 3 + kx) * hw;
        const int dx = kx - 1;
        const int x0 = std::max(0, -dx), x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= h) continue;
          const double* s = row + std::size_t(y) * w;
          double* d = dst + std::size_t(sy) * w;
          for (int x = x0; x < x1; ++x) d[x + dx] += s[x];
        }
      }
    }
  }
}

Var conv_impl(Tape& t, Var input, Var weights, Var bias, int k) {
  const Tensor& x = t.value(input);
  const Tensor& wt = t.value(weights);
  const Tensor& b = t.value(bias);
  const Shape xs = x.shape(), ws = wt.shape();
  require(ws.h == k && ws.w == k, "conv: kernel must be " + std::to_string(k) + "x" + std::to_string(k));
  require(ws.c == xs.c, "conv: weight expects " + std::to_string(ws.c) + " input channels, got " +
                            std::to_string(xs.c));
  require(b.size() == std::size_t(ws.n), "conv: bias length must equal output channels");
  const int cout = ws.n, cin = xs.c;
  const std::size_t hw = xs.plane();
  const std::size_t kdim = std::size_t(cin) * k * k;

  Tensor y = Tensor::uninitialized(Shape{xs.n, cout, xs.h, xs.w});
  // Patches of the whole batch, kept for the weight gradient.
  auto col = std::make_shared<Buffer>(k == 3 ? kdim * hw * std::size_t(xs.n) : 0);
  CMapMat wm(wt.data(), cout, Eigen::Index(kdim));
  for (int n = 0; n < xs.n; ++n) {
    const double* xin = x.data() + std::size_t(n) * cin * hw;
    const double* src = xin;
    if (k == 3) {
      double* patches = col->data() + std::size_t(n) * kdim * hw;
      im2col3x3(xin, cin, xs.h, xs.w, patches);
      src = patches;
    }
    MapMat out(y.data() + std::size_t(n) * cout * hw, cout, Eigen::Index(hw));
    out.noalias() = wm * CMapMat(src, Eigen::Index(kdim), Eigen::Index(hw));
    for (int co = 0; co < cout; ++co) out.row(co).array() += b[std::size_t(co)];
  }

  return t.push(std::move(y), {input, weights, bias}, [input, weights, bias, k, col](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& xv = tp.value(input);
    const Tensor& wv = tp.value(weights);
    const Shape s = xv.shape();
    const int co_n = wv.shape().n, ci_n = s.c;
    const std::size_t plane = s.plane();
    const std::size_t kd = std::size_t(ci_n) * k * k;
    Tensor* gx = tp.grad_sink(input);
    Tensor* gw = tp.grad_sink(weights);
    Tensor* gb = tp.grad_sink(bias);
    CMapMat wmat(wv.data(), co_n, Eigen::Index(kd));
    Buffer dcol(k == 3 && gx ? kd * plane : 0);
    for (int n = 0; n < s.n; ++n) {
      CMapMat gout(g.data() + std::size_t(n) * co_n * plane, co_n, Eigen::Index(plane));
      const double* xin = xv.data() + std::size_t(n) * ci_n * plane;
      if (gb)
        for (int co = 0; co < co_n; ++co) (*gb)[std::size_t(co)] += gout.row(co).sum();
      if (gw) {
        const double* src = k == 3 ? col->data() + std::size_t(n) * kd * plane : xin;
        MapMat gwm(gw->data(), co_n, Eigen::Index(kd));
        gwm.noalias() += gout * CMapMat(src, Eigen::Index(kd), Eigen::Index(plane)).transpose();
      }
      if (gx) {
        double* gxin = gx->data() + std::size_t(n) * ci_n * plane;
        if (k == 3) {
          MapMat dc(dcol.data(), Eigen::Index(kd), Eigen::Index(plane));
          dc.noalias() = wmat.transpose() * gout;
          col2im3x3(dcol.data(), ci_n, s.h, s.w, gxin);
        } else {
          MapMat gxm(gxin, ci_n, Eigen::Index(plane));
          gxm.noalias() += wmat.transpose() * gout;
        }
      }
    }
  });
}

}  // namespace

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) + "," +
         std::to_string(s.w) + ")";
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(shape), data_(data.begin(), data.end()) {
  if (data_.size() != shape_.size())
    throw ShapeError("tensor data length does not match shape " + to_string(shape_));
}

Tensor& Tensor::operator+=(const Tensor& o) {
  if (!(o.shape_ == shape_)) throw ShapeError("tensor += shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Var Tape::input(Tensor value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(Parameter& param) {
  Node n;
  n.value = param.value;
  n.requires_grad = true;
  n.param = &param;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::push(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (Var p : parents) n.requires_grad = n.requires_grad || nodes_[p.id].requires_grad;
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Tensor* Tape::grad_sink(Var v) {
  Node& n = nodes_[v.id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return &n.grad;
}

void Tape::backward(Var target) {
  if (nodes_[target.id].value.size() != 1)
    throw ShapeError("backward() target must be a scalar");
  for (auto& n : nodes_) n.grad = Tensor();
  if (!nodes_[target.id].requires_grad) return;
  nodes_[target.id].grad = Tensor(nodes_[target.id].value.shape(), 1.0);
  for (std::size_t i = target.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param) n.param->grad += n.grad;
  }
}

Var conv3x3(Tape& t, Var input, Var weights, Var bias) { return conv_impl(t, input, weights, bias, 3); }

Var conv1x1(Tape& t, Var input, Var weights, Var bias) { return conv_impl(t, input, weights, bias, 1); }

Var relu(Tape& t, Var input) {
  const Tensor& x = t.value(input);
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  return t.push(std::move(y), {input}, [input](Tape& tp, std::size_t self) {
    Tensor* gx = tp.grad_sink(input);
    if (!gx) return;
    const Tensor& g = tp.grad_of(self);
    const Tensor& xv = tp.value(input);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > 0.0) (*gx)[i] += g[i];
  });
}

Var maxpool2x2(Tape& t, Var input) {
  const Tensor& x = t.value(input);
  const Shape s = x.shape();
  require(s.h % 2 == 0 && s.w % 2 == 0, "maxpool2x2: spatial dims must be even, got " + to_string(s));
  const Shape os{s.n, s.c, s.h / 2, s.w / 2};
  Tensor y(os);
  auto argmax = std::make_shared<std::vector<std::size_t>>(os.size());
  std::size_t o = 0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < os.h; ++i)
        for (int j = 0; j < os.w; ++j, ++o) {
          const std::size_t base = ((std::size_t(n) * s.c + c) * s.h + 2 * i) * s.w + 2 * j;
          const std::size_t cand[4] = {base, base + 1, base + s.w, base + s.w + 1};
          std::size_t best = cand[0];
          for (int q = 1; q < 4; ++q)
            if (x[cand[q]] > x[best]) best = cand[q];
          y[o] = x[best];
          (*argmax)[o] = best;
        }
  return t.push(std::move(y), {input}, [input, argmax](Tape& tp, std::size_t self) {
    Tensor* gx = tp.grad_sink(input);
    if (!gx) return;
    const Tensor& g = tp.grad_of(self);
    for (std::size_t i = 0; i < g.size(); ++i) (*gx)[(*argmax)[i]] += g[i];
  });
}

Var upconv2x2(Tape& t, Var input, Var weights, Var bias) {
  const Tensor& x = t.value(input);
  const Tensor& wt = t.value(weights);
  const Tensor& b = t.value(bias);
  const Shape xs = x.shape(), ws = wt.shape();
  require(ws.h == 2 && ws.w == 2, "upconv2x2: kernel must be 2x2");
  require(ws.n == xs.c, "upconv2x2: weight expects " + std::to_string(ws.n) +
                            " input channels, got " + std::to_string(xs.c));
  require(b.size() == std::size_t(ws.c), "upconv2x2: bias length must equal output channels");
  const int cin = xs.c, cout = ws.c;
  const std::size_t hw = xs.plane();
  const Shape os{xs.n, cout, xs.h * 2, xs.w * 2};
  Tensor y(os);
  CMapMat wm(wt.data(), cin, Eigen::Index(cout) * 4);
  RowMat tmp(Eigen::Index(cout) * 4, Eigen::Index(hw));
  for (int n = 0; n < xs.n; ++n) {
    CMapMat xm(x.data() + std::size_t(n) * cin * hw, cin, Eigen::Index(hw));
    tmp.noalias() = wm.transpose() * xm;
    for (int co = 0; co < cout; ++co)
      for (int a = 0; a < 2; ++a)
        for (int bb = 0; bb < 2; ++bb) {
          const double* row = tmp.data() + (std::size_t(co) * 4 + a * 2 + bb) * hw;
          for (int i = 0; i < xs.h; ++i)
            for (int j = 0; j < xs.w; ++j)
              y.at(n, co, 2 * i + a, 2 * j + bb) = row[std::size_t(i) * xs.w + j] + b[std::size_t(co)];
        }
  }
  return t.push(std::move(y), {input, weights, bias}, [input, weights, bias](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& xv = tp.value(input);
    const Tensor& wv = tp.value(weights);
    const Shape s = xv.shape();
    const int ci_n = s.c, co_n = wv.shape().c;
    const std::size_t plane = s.plane();
    Tensor* gx = tp.grad_sink(input);
    Tensor* gw = tp.grad_sink(weights);
    Tensor* gb = tp.grad_sink(bias);
    CMapMat wmat(wv.data(), ci_n, Eigen::Index(co_n) * 4);
    RowMat gy(Eigen::Index(co_n) * 4, Eigen::Index(plane));
    for (int n = 0; n < s.n; ++n) {
      for (int co = 0; co < co_n; ++co)
        for (int a = 0; a < 2; ++a)
          for (int bb = 0; bb < 2; ++bb) {
            double* row = gy.data() + (std::size_t(co) * 4 + a * 2 + bb) * plane;
            for (int i = 0; i < s.h; ++i)
              for (int j = 0; j < s.w; ++j) row[std::size_t(i) * s.w + j] = g.at(n, co, 2 * i + a, 2 * j + bb);
          }
      if (gb)
        for (int co = 0; co < co_n; ++co)
          (*gb)[std::size_t(co)] += gy.middleRows(Eigen::Index(co) * 4, 4).sum();
      if (gw) {
        CMapMat xm(xv.data() + std::size_t(n) * ci_n * plane, ci_n, Eigen::Index(plane));
        MapMat(gw->data(), ci_n, Eigen::Index(co_n) * 4).noalias() += xm * gy.transpose();
      }
      if (gx) MapMat(gx->data() + std::size_t(n) * ci_n * plane, ci_n, Eigen::Index(plane)).noalias() += wmat * gy;
    }
  });
}

Var concat_channels(Tape& t, Var a, Var b) {
  const Tensor& av = t.value(a);
  const Tensor& bv = t.value(b);
  const Shape as = av.shape(), bs = bv.shape();
  require(as.n == bs.n && as.h == bs.h && as.w == bs.w,
          "concat_channels: mismatched shapes " + to_string(as) + " and " + to_string(bs));
  const std::size_t hw = as.plane();
  Tensor y(Shape{as.n, as.c + bs.c, as.h, as.w});
  for (int n = 0; n < as.n; ++n) {
    std::copy_n(av.data() + std::size_t(n) * as.c * hw, as.c * hw, y.data() + std::size_t(n) * (as.c + bs.c) * hw);
    std::copy_n(bv.data() + std::size_t(n) * bs.c * hw, bs.c * hw,
                y.data() + (std::size_t(n) * (as.c + bs.c) + as.c) * hw);
  }
  return t.push(std::move(y), {a, b}, [a, b, as, bs, hw](Tape& tp, std::size_t self) {
    const Tensor& g = tp.grad_of(self);
    Tensor* ga = tp.grad_sink(a);
    Tensor* gb = tp.grad_sink(b);
    for (int n = 0; n < as.n; ++n) {
      const double* src = g.data() + std::size_t(n) * (as.c + bs.c) * hw;
      if (ga) {
        double* d = ga->data() + std::size_t(n) * as.c * hw;
        for (std::size_t i = 0; i < as.c * hw; ++i) d[i] += src[i];
      }
      if (gb) {
        double* d = gb->data() + std::size_t(n) * bs.c * hw;
        const double* s2 = src + std::size_t(as.c) * hw;
        for (std::size_t i = 0; i < bs.c * hw; ++i) d[i] += s2[i];
      }
    }
  });
}

Var crop(Tape& t, Var input, int height, int width) {
  const Tensor& x = t.value(input);
  const Shape s = x.shape();
  require(height >= 1 && width >= 1 && height <= s.h && width <= s.w, "crop: window exceeds tensor");
  if (height == s.h && width == s.w) return input;
  Tensor y(Shape{s.n, s.c, height, width});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int i = 0; i < height; ++i)
        for (int j = 0; j < width; ++j) y.at(n, c, i, j) = x.at(n, c, i, j);
  return t.push(std::move(y), {input}, [input](Tape& tp, std::size_t self) {
    Tensor* gx = tp.grad_sink(input);
    if (!gx) return;
    const Tensor& g = tp.grad_of(self);
    const Shape gs = g.shape();
    for (int n = 0; n < gs.n; ++n)
      for (int c = 0; c < gs.c; ++c)
        for (int i = 0; i < gs.h; ++i)
          for (int j = 0; j < gs.w; ++j) gx->at(n, c, i, j) += g.at(n, c, i, j);
  });
}

Var dropout(Tape& t, Var input, double keep_prob, Mode mode, Rng& rng) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw ValidationError("keep_prob must lie in (0, 1]");
  if (mode == Mode::Test || keep_prob == 1.0) return input;
  const Tensor& x = t.value(input);
  auto scale = std::make_shared<std::vector<double>>(x.size());
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    (*scale)[i] = rng.uniform() < keep_prob ? 1.0 / keep_prob : 0.0;
    y[i] = x[i] * (*scale)[i];
  }
  return t.push(std::move(y), {input}, [input, scale](Tape& tp, std::size_t self) {
    Tensor* gx = tp.grad_sink(input);
    if (!gx) return;
    const Tensor& g = tp.grad_of(self);
    for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * (*scale)[i];
  });
}

Var softmax_channels(Tape& t, Var logits) {
  const Tensor& z = t.value(logits);
  const Shape s = z.shape();
  const std::size_t hw = s.plane();
  Tensor p(s);
  for (int n = 0; n < s.n; ++n) {
    const std::size_t base = std::size_t(n) * s.c * hw;
    for (std::size_t q = 0; q < hw; ++q) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int c = 0; c < s.c; ++c) mx = std::max(mx, z[base + c * hw + q]);
      double sum = 0.0;
      for (int c = 0; c < s.c; ++c) {
        const double e = std::exp(z[base + c * hw + q] - mx);
        p[base + c * hw + q] = e;
        sum += e;
      }
      for (int c = 0; c < s.c; ++c) p[base + c * hw + q] /= sum;
    }
  }
  return t.push(std::move(p), {logits}, [logits](Tape& tp, std::size_t self) {
    Tensor* gz = tp.grad_sink(logits);
    if (!gz) return;
    const Tensor& g = tp.grad_of(self);
    const Tensor& pv = tp.value_of(self);
    const Shape sh = pv.shape();
    const std::size_t plane = sh.plane();
    for (int n = 0; n < sh.n; ++n) {
      const std::size_t base = std::size_t(n) * sh.c * plane;
      for (std::size_t q = 0; q < plane; ++q) {
        double dot = 0.0;
        for (int c = 0; c < sh.c; ++c) dot += g[base + c * plane + q] * pv[base + c * plane + q];
        for (int c = 0; c < sh.c; ++c) {
          const std::size_t i = base + c * plane + q;
          (*gz)[i] += pv[i] * (g[i] - dot);
        }
      }
    }
  });
}

Var masked_cross_entropy(Tape& t, Var probabilities, std::span<const std::uint8_t> labels,
                         std::span<const std::uint8_t> pixel_mask) {
  const Tensor& p = t.value(probabilities);
  const Shape s = p.shape();
  const std::size_t hw = s.plane();
  const std::size_t npix = std::size_t(s.n) * hw;
  require(labels.size() == npix && pixel_mask.size() == npix,
          "masked_cross_entropy: labels/mask must have one entry per pixel");
  std::size_t count = 0;
  double loss = 0.0;
  for (std::size_t i = 0; i < npix; ++i) {
    if (!pixel_mask[i]) continue;
    if (labels[i] >= s.c) throw ValidationError("label outside the class range");
    const std::size_t n = i / hw, q = i % hw;
    loss -= std::log(std::max(kFloor, p[(n * s.c + labels[i]) * hw + q]));
    ++count;
  }
  if (count == 0) throw ContractError("masked_cross_entropy: pixel mask selects no pixels");
  loss /= double(count);
  std::vector<std::uint8_t> lab(labels.begin(), labels.end());
  std::vector<std::uint8_t> msk(pixel_mask.begin(), pixel_mask.end());
  return t.push(Tensor(Shape{1, 1, 1, 1}, loss), {probabilities},
                [probabilities, lab = std::move(lab), msk = std::move(msk), count](Tape& tp, std::size_t self) {
                  Tensor* gp = tp.grad_sink(probabilities);
                  if (!gp) return;
                  const double g = tp.grad_of(self)[0];
                  const Tensor& pv = tp.value(probabilities);
                  const Shape sh = pv.shape();
                  const std::size_t plane = sh.plane();
                  for (std::size_t i = 0; i < msk.size(); ++i) {
                    if (!msk[i]) continue;
                    const std::size_t idx = (i / plane * sh.c + lab[i]) * plane + i % plane;
                    (*gp)[idx] -= g / (double(count) * std::max(kFloor, pv[idx]));
                  }
                });
}

Var weighted_sum(Tape& t, Var input, const Tensor& weights) {
  const Tensor& x = t.value(input);
  require(x.shape() == weights.shape(), "weighted_sum: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * weights[i];
  return t.push(Tensor(Shape{1, 1, 1, 1}, s), {input}, [input, weights](Tape& tp, std::size_t self) {
    Tensor* gx = tp.grad_sink(input);
    if (!gx) return;
    const double g = tp.grad_of(self)[0];
    for (std::size_t i = 0; i < weights.size(); ++i) (*gx)[i] += g * weights[i];
  });
}

}  // namespace octfluid::autograd

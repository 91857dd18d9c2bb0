#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <new>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "octfluid/rng.hpp"
#include "octfluid/types.hpp"

// A small reverse-mode differentiation engine over dense NCHW tensors of
// doubles, with exactly the operators the segmentation network uses.
namespace octfluid::autograd {

struct Shape {
  int n = 1, c = 1, h = 1, w = 1;

  std::size_t size() const { return std::size_t(n) * c * h * w; }
  std::size_t plane() const { return std::size_t(h) * w; }
  bool operator==(const Shape&) const = default;
};

std::string to_string(const Shape& s);

/// Cache-line aligned storage. Vectorised reductions split their work by
/// pointer alignment, so a fixed alignment keeps results bit-reproducible.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}
  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) { ::operator delete(p, kAlign); }
  // Default-initialise: Buffer(n) leaves doubles unset instead of zeroing.
  template <class U>
  void construct(U* p) noexcept {
    ::new (static_cast<void*>(p)) U;
  }
  template <class U, class... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const { return true; }
};

using Buffer = std::vector<double, AlignedAllocator<double>>;

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0) : shape_(shape), data_(shape.size(), fill) {}
  Tensor(Shape shape, std::vector<double> data);
  /// Storage left unset; for outputs that are written in full.
  static Tensor uninitialized(Shape shape) {
    Tensor t;
    t.shape_ = shape;
    t.data_ = Buffer(shape.size());
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> span() { return data_; }
  std::span<const double> span() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(int n, int c, int y, int x) {
    return data_[((std::size_t(n) * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }
  double at(int n, int c, int y, int x) const {
    return data_[((std::size_t(n) * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
  Tensor& operator+=(const Tensor& o);

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  Buffer data_;
};

/// A trainable tensor with its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
  void zero_grad() { grad.fill(0.0); }
};

struct Var {
  std::size_t id = 0;
};

enum class Mode { Train, Test };

/// Records a computation for one forward pass; backward() walks it in
/// reverse. A tape is single-threaded; distinct tapes are independent.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Var input(Tensor value, bool requires_grad = false);
  /// Gradients reaching this leaf are added to param.grad on backward().
  Var parameter(Parameter& param);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  /// Gradient of the last backward() target w.r.t. v (empty when untracked).
  const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(target)/d(target) = 1; target must hold a single element.
  void backward(Var target);

  // Used by operator implementations.
  Var push(Tensor value, std::initializer_list<Var> parents, BackwardFn fn);
  const Tensor& grad_of(std::size_t id) const { return nodes_[id].grad; }
  const Tensor& value_of(std::size_t id) const { return nodes_[id].value; }
  /// Lazily zero-initialized gradient buffer; nullptr when v needs no gradient.
  Tensor* grad_sink(Var v);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };
  std::vector<Node> nodes_;
};

/// 3x3 cross-correlation, zero padding 1. weights (Cout, Cin, 3, 3), bias (1, Cout, 1, 1).
Var conv3x3(Tape& t, Var input, Var weights, Var bias);
/// 1x1 convolution. weights (Cout, Cin, 1, 1).
Var conv1x1(Tape& t, Var input, Var weights, Var bias);
Var relu(Tape& t, Var input);
/// 2x2 max pool, stride 2. Ties route to the first maximum in row-major order.
Var maxpool2x2(Tape& t, Var input);
/// Stride-2 transposed convolution. weights (Cin, Cout, 2, 2).
Var upconv2x2(Tape& t, Var input, Var weights, Var bias);
/// Channel concatenation, a's channels first.
Var concat_channels(Tape& t, Var a, Var b);
/// Keeps the top-left height x width window.
Var crop(Tape& t, Var input, int height, int width);
/// Inverted dropout: in Train mode each unit survives with keep_prob and is
/// scaled by 1/keep_prob; Test mode is the identity.
Var dropout(Tape& t, Var input, double keep_prob, Mode mode, Rng& rng);
/// Per-pixel softmax over channels (max-subtracted).
Var softmax_channels(Tape& t, Var logits);
/// -(1/N) * sum over selected pixels of log p[label]; labels and pixel_mask
/// are indexed (n, y, x). Throws ContractError if the mask selects nothing.
Var masked_cross_entropy(Tape& t, Var probabilities, std::span<const std::uint8_t> labels,
                         std::span<const std::uint8_t> pixel_mask);
/// sum(x * weights): a scalar probe used for gradient checks.
Var weighted_sum(Tape& t, Var input, const Tensor& weights);

}  // namespace octfluid::autograd

#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace inklab {

namespace detail {

struct Node {
  std::vector<int> shape;
  std::vector<float> value;
  std::vector<float> grad;  // allocated lazily by backward
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0f);
  }
};

}  // namespace detail

/// Handle to an n-dimensional f32 value. Copies share the underlying node;
/// intermediate nodes created while a Tape is active stay alive until the
/// tape is dropped, leaf tensors (parameters, inputs) for as long as a
/// handle exists.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, float v);
  static Tensor from_data(std::vector<int> shape, std::vector<float> data);
  static Tensor scalar(float v);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }

  std::vector<float>& data() { return node_->value; }
  const std::vector<float>& data() const { return node_->value; }
  float item() const;

  bool has_grad() const { return node_ && !node_->grad.empty(); }
  const std::vector<float>& grad() const { return node_->grad; }
  void clear_grad() { node_->grad.clear(); }

  bool requires_grad() const { return node_ && node_->requires_grad; }
  void set_requires_grad(bool v) { node_->requires_grad = v; }

  /// Deep copy of the value (new leaf, no grad, requires_grad off).
  Tensor clone_detached() const;

  std::shared_ptr<detail::Node> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_op_output(std::vector<int> shape, bool requires_grad);
};

std::string shape_str(const std::vector<int>& shape);

/// Internal: allocate a zeroed output node (used by the op kernels).
Tensor make_op_output(std::vector<int> shape, bool requires_grad);

/// Records the backward closures of one forward pass. Constructing a Tape
/// makes it current for the thread; destruction (or backward) releases the
/// recorded graph. One tape per forward/backward pair.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current();
  static bool active() { return current() != nullptr; }

  void record(std::function<void()> step) { steps_.push_back(std::move(step)); }
  size_t size() const { return steps_.size(); }

 private:
  std::vector<std::function<void()>> steps_;
  Tape* prev_;

  friend void backward(const Tensor& loss);
};

/// Temporarily disables tape recording (inference / detached forwards).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* saved_;
};

/// Reverse-mode sweep from a scalar loss produced on the current tape.
/// Every reachable tensor with requires_grad receives d(loss)/d(tensor);
/// the tape is consumed.
void backward(const Tensor& loss);

// ---- differentiable operations ------------------------------------------
// All kernels validate shapes (errors name the op and the shapes involved)
// and reject non-finite outputs.

/// Elementwise a+b. b may also be: a scalar, a [C] vector broadcast against
/// [N,C] or [N,C,H,W], or an [N,C] matrix broadcast against [N,C,H,W].
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise a*b (same shape, or scalar b).
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);

/// [m,k] x [k,n] -> [m,n].
Tensor matmul(const Tensor& a, const Tensor& b);

/// x: [N,Cin,H,W], w: [Cout,Cin,kh,kw], optional bias [Cout]; zero padding.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad);

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, float slope = 0.2f);
Tensor silu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);

Tensor reshape(const Tensor& x, std::vector<int> shape);
/// Concatenate along axis (only axis 1 of 4-d tensors is supported).
Tensor concat(const Tensor& a, const Tensor& b, int axis);
/// 2x2 average pooling, stride 2; H and W must be even.
Tensor avgpool2(const Tensor& x);
/// 2x nearest-neighbour upsampling.
Tensor nearest_upsample2(const Tensor& x);

/// Group normalization over [N,C,H,W] with per-channel affine parameters.
Tensor group_norm(const Tensor& x, int groups, const Tensor& gamma, const Tensor& beta,
                  float eps = 1e-5f);

/// Scalar mean((a-b)^2).
Tensor mse(const Tensor& a, const Tensor& b);
/// Scalar mean(|a-b|).
Tensor l1(const Tensor& a, const Tensor& b);
Tensor mean_all(const Tensor& x);
/// log(max(x, floor)); gradient is zero in the clamped region.
Tensor log_clamped(const Tensor& x, float floor = 1e-7f);

/// table: [V,D]; out[b] = mean of the rows listed in ids[b] (each nonempty).
Tensor embedding_mean(const Tensor& table, const std::vector<std::vector<int>>& ids);

}  // namespace inklab

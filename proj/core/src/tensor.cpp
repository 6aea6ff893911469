#include "inklab/tensor.hpp"

#include <numeric>
#include <sstream>
#include <stdexcept>

namespace inklab {

namespace {

int64_t shape_numel(const std::vector<int>& shape) {
  int64_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("tensor shape entries must be positive, got " + shape_str(shape));
    n *= d;
  }
  return n;
}

thread_local Tape* g_current_tape = nullptr;

}  // namespace

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor make_op_output(std::vector<int> shape, bool requires_grad) {
  auto n = std::make_shared<detail::Node>();
  n->value.assign(static_cast<size_t>(shape_numel(shape)), 0.0f);
  n->shape = std::move(shape);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(std::vector<int> shape) { return make_op_output(std::move(shape), false); }

Tensor Tensor::full(std::vector<int> shape, float v) {
  Tensor t = zeros(std::move(shape));
  for (auto& x : t.data()) x = v;
  return t;
}

Tensor Tensor::from_data(std::vector<int> shape, std::vector<float> data) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size()))
    throw std::invalid_argument("Tensor::from_data: shape " + shape_str(shape) + " does not match " +
                                std::to_string(data.size()) + " values");
  Tensor t = zeros(std::move(shape));
  t.data() = std::move(data);
  return t;
}

Tensor Tensor::scalar(float v) { return from_data({1}, {v}); }

float Tensor::item() const {
  if (numel() != 1) throw std::invalid_argument("Tensor::item on non-scalar " + shape_str(shape()));
  return node_->value[0];
}

Tensor Tensor::clone_detached() const {
  return Tensor::from_data(shape(), data());
}

Tape::Tape() : prev_(g_current_tape) { g_current_tape = this; }

Tape::~Tape() { g_current_tape = prev_; }

Tape* Tape::current() { return g_current_tape; }

NoGradGuard::NoGradGuard() : saved_(g_current_tape) { g_current_tape = nullptr; }

NoGradGuard::~NoGradGuard() { g_current_tape = saved_; }

void backward(const Tensor& loss) {
  Tape* tape = Tape::current();
  if (!tape) throw std::logic_error("backward: no active tape");
  if (!loss.defined() || loss.numel() != 1)
    throw std::invalid_argument("backward: loss must be a scalar, got " +
                                (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));

  auto loss_node = loss.node();
  loss_node->ensure_grad();
  loss_node->grad[0] = 1.0f;

  for (auto it = tape->steps_.rbegin(); it != tape->steps_.rend(); ++it) (*it)();
  tape->steps_.clear();
}

}  // namespace inklab
